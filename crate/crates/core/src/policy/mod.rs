//! Feature-linear softmax policy over a structured micro-action
//! vocabulary.
//!
//! The policy scores each vocabulary token `t` as a linear function of
//! shared context features, `score(t) = phi(ctx) . W[:, t]`, and samples
//! from the softmax over the context's legal tokens. This keeps every
//! quantity the trainer needs in closed form:
//!
//! * `log pi(t | ctx) = score(t) - logsumexp(scores over legal)`
//! * `d log pi(t) / dW = phi (x) (onehot(t) - p)`
//!
//! Decisions are structured picks: plan template slots, query-term and
//! relation picks, result/link picks, and answer-value picks, each slot
//! family owning a block of token ids. Candidate lists are built from
//! the query, the plan, and the observations seen so far (see
//! [`context`]); the token id selects a slot, the slot's candidate word
//! is what gets rendered into the trajectory.

pub mod context;
mod rollout;
mod vocab;

pub use rollout::{
    rollout, sequence_logprob, GenToken, Rollout, RolloutConfig, ROLLOUT_RESULTS_K,
};
pub use vocab::{TokenId, Vocabulary};

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("all tokens are illegal in this context; policy is stuck")]
    StuckState,
    #[error("token {0} is illegal in this context")]
    IllegalToken(TokenId),
    #[error("context features must be finite")]
    NonFiniteFeatures,
    #[error("parameter vector has wrong dimensions: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("recorded context does not match the trajectory at token {0}")]
    ContextMismatch(usize),
    #[error("io error on checkpoint: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Sparse context features plus the legality mask for one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextFeatures {
    /// `(feature index, value)` pairs; indices are unique and sorted.
    pub values: Vec<(usize, f64)>,
    /// Token ids that are legal in this state, ascending.
    pub legal: Vec<TokenId>,
}

impl ContextFeatures {
    pub fn new(mut values: Vec<(usize, f64)>, mut legal: Vec<TokenId>) -> Self {
        values.sort_by_key(|(i, _)| *i);
        legal.sort_unstable();
        legal.dedup();
        Self { values, legal }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|(_, v)| v.is_finite())
    }
}

/// Dense parameter matrix of the policy, stored row-major as
/// `weights[feature * vocab_size + token]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub feature_dim: usize,
    pub vocab_size: usize,
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    feature_dim: usize,
    vocab_size: usize,
    weights: Vec<f64>,
}

const CHECKPOINT_VERSION: u32 = 1;

impl PolicyParams {
    pub fn zeros() -> Self {
        Self {
            feature_dim: context::FEATURE_DIM,
            vocab_size: vocab::VOCAB_SIZE,
            weights: vec![0.0; context::FEATURE_DIM * vocab::VOCAB_SIZE],
        }
    }

    /// Small seeded random init.
    pub fn seeded(seed: u64, scale: f64) -> Self {
        let mut params = Self::zeros();
        let mut rng = rng::stream(seed, "params-init", &[]);
        for w in &mut params.weights {
            *w = scale * (rng.gen::<f64>() * 2.0 - 1.0);
        }
        params
    }

    /// Heuristic executor priors plus small seeded noise.
    ///
    /// Stands in for the pretrained base policy the trainer starts
    /// from: the executor already knows roughly how to use tools, while
    /// the plan decisions start uninformed and must be learned.
    pub fn guided(seed: u64) -> Self {
        let mut params = Self::seeded(seed, 0.01);
        context::apply_executor_priors(&mut params);
        params
    }

    #[inline]
    pub fn weight(&self, feature: usize, token: TokenId) -> f64 {
        self.weights[feature * self.vocab_size + token as usize]
    }

    #[inline]
    pub fn weight_mut(&mut self, feature: usize, token: TokenId) -> &mut f64 {
        &mut self.weights[feature * self.vocab_size + token as usize]
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), PolicyError> {
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            feature_dim: self.feature_dim,
            vocab_size: self.vocab_size,
            weights: self.weights.clone(),
        };
        std::fs::write(path, serde_json::to_string(&ckpt)?)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, PolicyError> {
        let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let params = Self {
            feature_dim: ckpt.feature_dim,
            vocab_size: ckpt.vocab_size,
            weights: ckpt.weights,
        };
        if params.weights.len() != params.feature_dim * params.vocab_size {
            return Err(PolicyError::DimensionMismatch {
                expected: params.feature_dim * params.vocab_size,
                got: params.weights.len(),
            });
        }
        Ok(params)
    }
}

/// Raw linear scores over the legal tokens, temperature-scaled.
fn legal_scores(params: &PolicyParams, ctx: &ContextFeatures, temperature: f64) -> Vec<f64> {
    ctx.legal
        .iter()
        .map(|&t| {
            let s: f64 = ctx
                .values
                .iter()
                .map(|&(f, v)| v * params.weight(f, t))
                .sum();
            s / temperature
        })
        .collect()
}

/// Softmax probabilities over `ctx.legal`, parallel to that list.
pub(crate) fn legal_probabilities(
    params: &PolicyParams,
    ctx: &ContextFeatures,
    temperature: f64,
) -> Result<Vec<f64>, PolicyError> {
    if ctx.legal.is_empty() {
        return Err(PolicyError::StuckState);
    }
    if !ctx.is_finite() {
        return Err(PolicyError::NonFiniteFeatures);
    }
    let scores = legal_scores(params, ctx, temperature);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Probability vector over the whole vocabulary: softmax of the linear
/// scores on legal tokens, exactly 0 elsewhere.
pub fn token_distribution(
    params: &PolicyParams,
    ctx: &ContextFeatures,
) -> Result<Vec<f64>, PolicyError> {
    let legal = legal_probabilities(params, ctx, 1.0)?;
    let mut dist = vec![0.0; params.vocab_size];
    for (&t, &p) in ctx.legal.iter().zip(&legal) {
        dist[t as usize] = p;
    }
    Ok(dist)
}

/// Log-probability of `token` and the analytic gradient
/// `phi (x) (onehot(token) - p)` as a dense matrix in the parameter
/// layout.
pub fn logprob_and_grad(
    params: &PolicyParams,
    ctx: &ContextFeatures,
    token: TokenId,
) -> Result<(f64, Vec<f64>), PolicyError> {
    let mut grad = vec![0.0; params.weights.len()];
    let logprob = accumulate_logprob_grad(params, ctx, token, 1.0, 1.0, &mut grad)?;
    Ok((logprob, grad))
}

/// Log-probability of `token` under `ctx` at the given temperature.
pub fn token_logprob(
    params: &PolicyParams,
    ctx: &ContextFeatures,
    token: TokenId,
    temperature: f64,
) -> Result<f64, PolicyError> {
    let probs = legal_probabilities(params, ctx, temperature)?;
    let idx = ctx
        .legal
        .iter()
        .position(|&t| t == token)
        .ok_or(PolicyError::IllegalToken(token))?;
    Ok(probs[idx].ln())
}

/// Adds `coeff * phi (x) (onehot(token) - p)` into `out` and returns
/// the log-probability. The sparse feature loop keeps this the hot path
/// of every policy update.
pub fn accumulate_logprob_grad(
    params: &PolicyParams,
    ctx: &ContextFeatures,
    token: TokenId,
    temperature: f64,
    coeff: f64,
    out: &mut [f64],
) -> Result<f64, PolicyError> {
    debug_assert_eq!(out.len(), params.weights.len());
    let probs = legal_probabilities(params, ctx, temperature)?;
    let idx = ctx
        .legal
        .iter()
        .position(|&t| t == token)
        .ok_or(PolicyError::IllegalToken(token))?;
    for &(f, v) in &ctx.values {
        let row = f * params.vocab_size;
        for (&t, &p) in ctx.legal.iter().zip(&probs) {
            let indicator = if t == token { 1.0 } else { 0.0 };
            out[row + t as usize] += coeff * v * (indicator - p) / temperature;
        }
    }
    Ok(probs[idx].ln())
}

/// Samples a legal token; returns `(token, logprob)`.
pub(crate) fn sample_token(
    params: &PolicyParams,
    ctx: &ContextFeatures,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<(TokenId, f64), PolicyError> {
    let probs = legal_probabilities(params, ctx, temperature)?;
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = ctx.legal.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            chosen = i;
            break;
        }
    }
    Ok((ctx.legal[chosen], probs[chosen].ln()))
}
