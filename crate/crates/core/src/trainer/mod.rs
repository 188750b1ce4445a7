//! Group-relative policy optimization with masked credit assignment.
//!
//! One epoch works on a batch of queries. For each query the trainer
//! samples a group of `G` rollouts from the behavior snapshot, scores
//! them (rubric-dense plan reward, sparse exact match, or the naive
//! plan heuristic), normalizes rewards within the group to advantages,
//! and accumulates the clipped token-level surrogate
//!
//! ```text
//! (1/B) sum_q (1/G) sum_i (1/n_i) sum_j min(r_ij * A_i,
//!                                   clip(r_ij, 1-eps_low, 1+eps_high) * A_i)
//! ```
//!
//! over the tokens credited by the stage's mask, where `n_i` is rollout
//! `i`'s credited-token count and `r_ij` the importance ratio against
//! the recorded behavior log-probs. Updates are plain gradient ascent
//! with a fixed learning rate, so every step is oracle-checkable.
//!
//! Two-stage schedule: Stage 1 optimizes the anchor plan (AnchorOnly
//! mask, rubric reward, generation stopped at the plan boundary);
//! Stage 2 optimizes execution at the trajectory level (FullTrajectory
//! mask, exact-match reward). Both stages move the same parameter
//! vector. Ablation schedules swap the mask or the reward.
//!
//! Rollout generation and scoring fan out per query on the worker
//! pool; per-query gradients are reduced in query order, so updates
//! are bit-identical across thread counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Corpus, EnvError, TaskInstance};
use crate::parallel;
use crate::policy::{
    accumulate_logprob_grad, rollout, token_logprob, PolicyError, PolicyParams, Rollout,
    RolloutConfig,
};
use crate::reward::{
    score_plan, trajectory_exec_reward, JudgeBackend, PlanFacts, RewardError, RubricSet,
};
use crate::rng;
use crate::trajectory::{MaskKind, Query};

pub const EPS_STD: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("group must have at least 2 rollouts, got {0}")]
    GroupTooSmall(usize),
    #[error("importance ratio must be finite and positive, got {0}")]
    BadRatio(f64),
    #[error("clip bounds must lie in (0, 1): eps_low={eps_low}, eps_high={eps_high}")]
    BadClip { eps_low: f64, eps_high: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Asymmetric clipping range for the importance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub eps_low: f64,
    pub eps_high: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            eps_low: 0.2,
            eps_high: 0.28,
        }
    }
}

impl ClipConfig {
    pub fn new(eps_low: f64, eps_high: f64) -> Result<Self, TrainError> {
        let cfg = Self { eps_low, eps_high };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.eps_low > 0.0 && self.eps_low < 1.0 && self.eps_high > 0.0 && self.eps_high < 1.0)
        {
            return Err(TrainError::BadClip {
                eps_low: self.eps_low,
                eps_high: self.eps_high,
            });
        }
        Ok(())
    }
}

/// Reward source for a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    RubricDense,
    TerminalExactMatch,
    NaivePlanReward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

/// Per-stage training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: Stage,
    pub mask: MaskKind,
    pub reward_kind: RewardKind,
    pub group_size: usize,
    pub learning_rate: f64,
    pub clip: ClipConfig,
    pub epochs: usize,
}

impl StageConfig {
    /// Stage-1 defaults: anchor-masked, rubric-dense.
    pub fn stage_one(epochs: usize) -> Self {
        Self {
            stage: Stage::One,
            mask: MaskKind::AnchorOnly,
            reward_kind: RewardKind::RubricDense,
            group_size: 8,
            learning_rate: 1.0,
            clip: ClipConfig::default(),
            epochs,
        }
    }

    /// Stage-2 defaults: full-trajectory, sparse exact match.
    pub fn stage_two(epochs: usize) -> Self {
        Self {
            stage: Stage::Two,
            mask: MaskKind::FullTrajectory,
            reward_kind: RewardKind::TerminalExactMatch,
            group_size: 8,
            learning_rate: 1.0,
            clip: ClipConfig::default(),
            epochs,
        }
    }
}

/// G rollouts for one query with group-normalized advantages.
pub struct Group {
    pub query: Query,
    pub rollouts: Vec<Rollout>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl Group {
    pub fn build(query: Query, rollouts: Vec<Rollout>, rewards: Vec<f64>) -> Result<Self, TrainError> {
        let advantages = group_normalize(&rewards)?;
        Ok(Self {
            query,
            rollouts,
            rewards,
            advantages,
        })
    }
}

/// Group normalization: `(r_i - mean) / max(std, eps)` with population
/// standard deviation; degenerate groups (std below `EPS_STD`) get
/// exactly zero advantages.
pub fn group_normalize(rewards: &[f64]) -> Result<Vec<f64>, TrainError> {
    let g = rewards.len();
    if g < 2 {
        return Err(TrainError::GroupTooSmall(g));
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let variance = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let std = variance.sqrt();
    if std < EPS_STD {
        return Ok(vec![0.0; g]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// One term of the clipped surrogate:
/// `min(ratio * A, clip(ratio, 1-eps_low, 1+eps_high) * A)`.
pub fn clipped_token_objective(
    ratio: f64,
    advantage: f64,
    clip: &ClipConfig,
) -> Result<f64, TrainError> {
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(TrainError::BadRatio(ratio));
    }
    clip.validate()?;
    let clipped = ratio.clamp(1.0 - clip.eps_low, 1.0 + clip.eps_high);
    Ok((ratio * advantage).min(clipped * advantage))
}

/// Resolves the stage mask for one rollout: random-step masks get a
/// per-rollout seed so the choice is reproducible per batch position.
fn effective_mask(kind: MaskKind, seed: u64, epoch: usize, query_idx: usize, member: usize) -> MaskKind {
    match kind {
        MaskKind::RandomStep { seed: base } => MaskKind::RandomStep {
            seed: rng::derive_seed(base ^ seed, "random-step", &[epoch as u64, query_idx as u64, member as u64]),
        },
        other => other,
    }
}

/// Accumulates one group's masked clipped-surrogate gradient into
/// `grad`, scaled by `1 / (batch * G * n_i)`; returns the group's
/// objective value at the current parameters.
///
/// Tokens with mask weight 0 are skipped before any evaluation, so the
/// update is exactly invariant to their contents.
pub fn accumulate_group_gradient(
    params: &PolicyParams,
    group: &Group,
    mask: MaskKind,
    clip: &ClipConfig,
    kl_coeff: f64,
    batch_scale: usize,
    grad: &mut [f64],
) -> Result<f64, TrainError> {
    clip.validate()?;
    let g = group.rollouts.len() as f64;
    let mut objective = 0.0;
    for (rollout, &advantage) in group.rollouts.iter().zip(&group.advantages) {
        let mask_weights = rollout.trajectory.credit_mask(mask).map_err(|_| {
            TrainError::InvalidConfig("empty trajectory in group".to_string())
        })?;
        let positions = rollout.trajectory.generated_positions();
        let credited: f64 = positions.iter().map(|&p| mask_weights[p]).sum();
        if credited == 0.0 {
            continue;
        }
        let scale = 1.0 / (batch_scale as f64 * g * credited);
        for (token, &pos) in rollout.tokens.iter().zip(&positions) {
            if mask_weights[pos] == 0.0 {
                continue;
            }
            let new_lp = token_logprob(params, &token.ctx, token.token, rollout.temperature)?;
            let ratio = (new_lp - token.logprob).exp();
            if !ratio.is_finite() || ratio <= 0.0 {
                return Err(TrainError::BadRatio(ratio));
            }
            let unclipped = ratio * advantage;
            let clipped = ratio.clamp(1.0 - clip.eps_low, 1.0 + clip.eps_high) * advantage;
            objective += scale * unclipped.min(clipped);
            if unclipped <= clipped {
                accumulate_logprob_grad(
                    params,
                    &token.ctx,
                    token.token,
                    rollout.temperature,
                    scale * advantage * ratio,
                    grad,
                )?;
            }
            if kl_coeff > 0.0 {
                // k3 estimator: exp(old-new) - 1 - (old-new); penalty
                // gradient is -(1 - exp(old-new)) * grad(new_lp)
                let delta = token.logprob - new_lp;
                objective -= scale * kl_coeff * (delta.exp() - 1.0 - delta);
                accumulate_logprob_grad(
                    params,
                    &token.ctx,
                    token.token,
                    rollout.temperature,
                    -scale * kl_coeff * (1.0 - delta.exp()),
                    grad,
                )?;
            }
        }
    }
    Ok(objective)
}

/// Naive scalar plan reward: constraint overlap with the query, banded
/// by plan length. Single-number stand-in for the rubric vector.
pub fn naive_plan_reward(query_text: &str, plan: &str) -> f64 {
    let facts = PlanFacts::extract(query_text, plan);
    facts.coverage() * facts.length_band()
}

/// Per-epoch training metrics; one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_tool_calls: f64,
    pub pass_at_1_train: f64,
}

/// Training algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    AnchorGrpo,
    Grpo,
    FirstStepGrpo,
    LastStepGrpo,
    RandomStepGrpo,
    NaivePlanGrpo,
}

impl Algo {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "anchor-grpo" => Some(Self::AnchorGrpo),
            "grpo" => Some(Self::Grpo),
            "first-step-grpo" => Some(Self::FirstStepGrpo),
            "last-step-grpo" => Some(Self::LastStepGrpo),
            "random-step-grpo" => Some(Self::RandomStepGrpo),
            "naive-plan-grpo" => Some(Self::NaivePlanGrpo),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::AnchorGrpo => "anchor-grpo",
            Self::Grpo => "grpo",
            Self::FirstStepGrpo => "first-step-grpo",
            Self::LastStepGrpo => "last-step-grpo",
            Self::RandomStepGrpo => "random-step-grpo",
            Self::NaivePlanGrpo => "naive-plan-grpo",
        }
    }
}

/// What one epoch does: which mask, which reward, and whether rollouts
/// stop at the plan boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EpochSpec {
    mask: MaskKind,
    reward: RewardKind,
    plan_only: bool,
}

fn epoch_spec(algo: Algo, epoch: usize, stage1_epochs: usize, seed: u64) -> EpochSpec {
    let stage2 = EpochSpec {
        mask: MaskKind::FullTrajectory,
        reward: RewardKind::TerminalExactMatch,
        plan_only: false,
    };
    if epoch >= stage1_epochs {
        return stage2;
    }
    match algo {
        // full-trajectory GRPO has no stage switch at all
        Algo::Grpo => stage2,
        Algo::AnchorGrpo => EpochSpec {
            mask: MaskKind::AnchorOnly,
            reward: RewardKind::RubricDense,
            plan_only: true,
        },
        Algo::FirstStepGrpo => EpochSpec {
            mask: MaskKind::AnchorOnly,
            reward: RewardKind::TerminalExactMatch,
            plan_only: false,
        },
        Algo::LastStepGrpo => EpochSpec {
            mask: MaskKind::LastStepOnly,
            reward: RewardKind::TerminalExactMatch,
            plan_only: false,
        },
        Algo::RandomStepGrpo => EpochSpec {
            mask: MaskKind::RandomStep { seed },
            reward: RewardKind::TerminalExactMatch,
            plan_only: false,
        },
        Algo::NaivePlanGrpo => EpochSpec {
            mask: MaskKind::AnchorOnly,
            reward: RewardKind::NaivePlanReward,
            plan_only: true,
        },
    }
}

/// Shared training inputs.
pub struct TrainSetup<'a> {
    pub corpus: &'a Corpus,
    pub tasks: &'a [TaskInstance],
    pub rubrics: &'a RubricSet,
    pub judge: &'a JudgeBackend,
}

/// Scalar knobs of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    pub seed: u64,
    pub group_size: usize,
    pub learning_rate: f64,
    pub clip: ClipConfig,
    pub max_steps: usize,
    pub temperature: f64,
    /// Queries per epoch; 0 means the whole task list.
    pub batch_size: usize,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    /// Optional KL penalty against the behavior snapshot; off at 0.
    pub kl_coeff: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            group_size: 8,
            learning_rate: 4.0,
            clip: ClipConfig::default(),
            max_steps: 8,
            temperature: 1.0,
            batch_size: 32,
            stage1_epochs: 100,
            stage2_epochs: 100,
            kl_coeff: 0.0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.group_size < 2 {
            return Err(TrainError::InvalidConfig(format!(
                "group_size must be >= 2, got {}",
                self.group_size
            )));
        }
        if self.max_steps < 1 {
            return Err(TrainError::InvalidConfig("max_steps must be >= 1".to_string()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".to_string()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(TrainError::InvalidConfig("temperature must be positive".to_string()));
        }
        self.clip.validate()
    }

    pub fn total_epochs(&self) -> usize {
        self.stage1_epochs + self.stage2_epochs
    }
}

fn batch_indices(opts: &TrainOptions, epoch: usize, n_tasks: usize) -> Vec<usize> {
    if opts.batch_size == 0 || opts.batch_size >= n_tasks {
        return (0..n_tasks).collect();
    }
    let start = (epoch * opts.batch_size) % n_tasks;
    (0..opts.batch_size).map(|i| (start + i) % n_tasks).collect()
}

struct QueryOutcome {
    grad: Vec<f64>,
    reward_sum: f64,
    tool_calls: usize,
    rollouts: usize,
}

/// Runs one epoch: sample groups, score, normalize, accumulate, apply.
/// Any judge failure aborts the whole batch before the parameters are
/// touched.
fn epoch_update(
    params: &mut PolicyParams,
    setup: &TrainSetup,
    opts: &TrainOptions,
    spec: EpochSpec,
    epoch: usize,
) -> Result<EpochMetrics, TrainError> {
    let indices = batch_indices(opts, epoch, setup.tasks.len());
    let snapshot: &PolicyParams = params;

    let outcomes: Vec<Result<QueryOutcome, TrainError>> =
        parallel::indexed_map(indices.len(), |qi| {
            let task = &setup.tasks[indices[qi]];
            let mut cfg = RolloutConfig::new(opts.max_steps).with_temperature(opts.temperature);
            if spec.plan_only {
                cfg = cfg.plan_only();
            }
            let mut rollouts = Vec::with_capacity(opts.group_size);
            let mut rewards = Vec::with_capacity(opts.group_size);
            for member in 0..opts.group_size {
                let mut stream = rng::stream(
                    opts.seed,
                    "train-rollout",
                    &[epoch as u64, indices[qi] as u64, member as u64],
                );
                let r = rollout(snapshot, setup.corpus, &task.query, &cfg, &mut stream)?;
                let reward = match spec.reward {
                    RewardKind::RubricDense => {
                        score_plan(setup.rubrics, &task.query.text, &r.trajectory.anchor_plan, setup.judge)?
                            .total
                    }
                    RewardKind::TerminalExactMatch => trajectory_exec_reward(&r.trajectory),
                    RewardKind::NaivePlanReward => {
                        naive_plan_reward(&task.query.text, &r.trajectory.anchor_plan)
                    }
                };
                rollouts.push(r);
                rewards.push(reward);
            }
            let tool_calls = rollouts.iter().map(|r| r.trajectory.tool_calls()).sum();
            let reward_sum = rewards.iter().sum();
            let group = Group::build(task.query.clone(), rollouts, rewards)?;
            let mut grad = vec![0.0; snapshot.weights.len()];
            // masks that need per-rollout seeds are resolved one rollout
            // at a time to keep the choice reproducible per batch slot
            match spec.mask {
                MaskKind::RandomStep { .. } => {
                    for member in 0..group.rollouts.len() {
                        let single = Group {
                            query: group.query.clone(),
                            rollouts: vec![group.rollouts[member].clone()],
                            rewards: vec![group.rewards[member]],
                            advantages: vec![group.advantages[member]],
                        };
                        let mask =
                            effective_mask(spec.mask, opts.seed, epoch, indices[qi], member);
                        // scale by the true group size, not the singleton
                        let mut partial = vec![0.0; snapshot.weights.len()];
                        accumulate_group_gradient(
                            snapshot,
                            &single,
                            mask,
                            &opts.clip,
                            opts.kl_coeff,
                            indices.len(),
                            &mut partial,
                        )?;
                        let rescale = 1.0 / group.rollouts.len() as f64;
                        for (g, p) in grad.iter_mut().zip(&partial) {
                            *g += p * rescale;
                        }
                    }
                }
                mask => {
                    accumulate_group_gradient(
                        snapshot,
                        &group,
                        mask,
                        &opts.clip,
                        opts.kl_coeff,
                        indices.len(),
                        &mut grad,
                    )?;
                }
            }
            Ok(QueryOutcome {
                grad,
                reward_sum,
                tool_calls,
                rollouts: group.rollouts.len(),
            })
        });

    // join in query order; the first error aborts with no update
    let mut total_grad = vec![0.0; params.weights.len()];
    let mut reward_sum = 0.0;
    let mut tool_sum = 0usize;
    let mut rollout_count = 0usize;
    for outcome in outcomes {
        let o = outcome?;
        for (t, g) in total_grad.iter_mut().zip(&o.grad) {
            *t += g;
        }
        reward_sum += o.reward_sum;
        tool_sum += o.tool_calls;
        rollout_count += o.rollouts;
    }
    for (w, g) in params.weights.iter_mut().zip(&total_grad) {
        *w += opts.learning_rate * g;
    }

    // post-update probe: one rollout per task for the training curve
    let snapshot: &PolicyParams = params;
    let probe_cfg = RolloutConfig::new(opts.max_steps).with_temperature(opts.temperature);
    let correct: Vec<f64> = parallel::indexed_map(setup.tasks.len(), |ti| {
        let mut stream = rng::stream(opts.seed, "probe", &[epoch as u64, ti as u64]);
        match rollout(snapshot, setup.corpus, &setup.tasks[ti].query, &probe_cfg, &mut stream) {
            Ok(r) => trajectory_exec_reward(&r.trajectory),
            Err(_) => 0.0,
        }
    });
    let pass_at_1_train = correct.iter().sum::<f64>() / setup.tasks.len().max(1) as f64;

    Ok(EpochMetrics {
        epoch,
        mean_reward: reward_sum / rollout_count.max(1) as f64,
        mean_tool_calls: tool_sum as f64 / rollout_count.max(1) as f64,
        pass_at_1_train,
    })
}

/// Runs epochs `[start_epoch, total)` of `algo`'s schedule, mutating
/// `params` in place and invoking `on_epoch` after each epoch. Starting
/// past 0 resumes an interrupted run: per-epoch seeds depend only on
/// (seed, epoch), so a resumed run is bit-identical to an uninterrupted
/// one.
pub fn run_epochs(
    params: &mut PolicyParams,
    algo: Algo,
    setup: &TrainSetup,
    opts: &TrainOptions,
    start_epoch: usize,
    mut on_epoch: impl FnMut(&EpochMetrics, &PolicyParams),
) -> Result<Vec<EpochMetrics>, TrainError> {
    opts.validate()?;
    if setup.tasks.is_empty() {
        return Err(TrainError::InvalidConfig("task list is empty".to_string()));
    }
    let mut history = Vec::new();
    for epoch in start_epoch..opts.total_epochs() {
        let spec = epoch_spec(algo, epoch, opts.stage1_epochs, opts.seed);
        let metrics = epoch_update(params, setup, opts, spec, epoch)?;
        on_epoch(&metrics, params);
        history.push(metrics);
    }
    Ok(history)
}

/// Full two-stage Anchor-GRPO schedule from epoch 0.
pub fn train_anchor_grpo(
    params: &mut PolicyParams,
    setup: &TrainSetup,
    opts: &TrainOptions,
) -> Result<Vec<EpochMetrics>, TrainError> {
    run_epochs(params, Algo::AnchorGrpo, setup, opts, 0, |_, _| {})
}

/// Ablation schedules (full GRPO, first/last/random-step, naive plan
/// reward) under the same epoch budget.
pub fn train_ablation(
    params: &mut PolicyParams,
    algo: Algo,
    setup: &TrainSetup,
    opts: &TrainOptions,
) -> Result<Vec<EpochMetrics>, TrainError> {
    run_epochs(params, algo, setup, opts, 0, |_, _| {})
}
