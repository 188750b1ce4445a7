//! Plan and executor rewards.
//!
//! Stage 1 scores an anchor plan against a versioned rubric set: a
//! judge assigns each dimension an integer in `[0, max_score]` and the
//! plan reward is the normalized sum `total = sum(phi_j) / Z` with
//! `Z = sum(max_score_j)`, so totals live in `[0, 1]`. Stage 2 pays a
//! sparse `{0, 1}` exact-match reward on the final answer only.
//!
//! Judges are pluggable: [`JudgeBackend::Feature`] is a deterministic
//! rule table over measurable plan features (used in training and CI);
//! [`JudgeBackend::External`] posts the rubric prompt to an LLM
//! endpoint and parses its JSON verdict.

mod client;
mod feature_judge;

pub use client::{ClientError, HttpLlmClient, LlmClient, ScriptedClient};
pub use feature_judge::{FeatureJudgeConfig, PlanFacts};

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("plan must be non-empty")]
    EmptyPlan,
    #[error("dimension {0} not present in the rubric set")]
    UnknownDimension(String),
    #[error("judge endpoint unreachable: {0}")]
    JudgeUnavailable(String),
    #[error("judge returned a non-integer score for {dimension}: {raw}")]
    FractionalScore { dimension: String, raw: String },
    #[error("judge payload not parseable: {detail}; raw: {raw}")]
    BadPayload { detail: String, raw: String },
    #[error("rubric set invalid: {0}")]
    InvalidRubrics(String),
    #[error("io error on rubric file: {0}")]
    Io(#[from] std::io::Error),
    #[error("rubric file parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One scoring dimension with its criteria and score ceiling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricDimension {
    pub name: String,
    pub criteria: Vec<String>,
    pub max_score: i64,
}

/// Versioned list of scoring dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricSet {
    pub version: u64,
    pub dimensions: Vec<RubricDimension>,
}

impl RubricSet {
    /// The six seeded dimensions, each scored 0-5 (`Z = 30`).
    pub fn seeded() -> Self {
        let dim = |name: &str, criteria: &[&str]| RubricDimension {
            name: name.to_string(),
            criteria: criteria.iter().map(|c| c.to_string()).collect(),
            max_score: 5,
        };
        Self {
            version: 0,
            dimensions: vec![
                dim(
                    "Goal Alignment",
                    &[
                        "names the quantity the query actually asks for",
                        "every named constraint can be traced back to the query",
                    ],
                ),
                dim(
                    "Subgoal Coverage",
                    &[
                        "breaks the task into one sub-goal per hop",
                        "no query constraint is left without a sub-goal",
                    ],
                ),
                dim(
                    "Tool Appropriateness",
                    &[
                        "each sub-goal nominates a real tool",
                        "lookup sub-goals nominate search or visit, not answer",
                    ],
                ),
                dim(
                    "Logical Ordering",
                    &[
                        "sub-goals appear in the order they must be resolved",
                        "no sub-goal depends on a later one",
                    ],
                ),
                dim(
                    "Actionability",
                    &[
                        "sub-goals are imperative and executable as written",
                        "no vague placeholders",
                    ],
                ),
                dim(
                    "Clarity and Conciseness",
                    &[
                        "plan length is proportional to the task",
                        "nothing missing, nothing extra",
                    ],
                ),
            ],
        }
    }

    /// Normalization constant `Z`.
    pub fn normalizer(&self) -> i64 {
        self.dimensions.iter().map(|d| d.max_score).sum()
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.dimensions.is_empty() {
            return Err(RewardError::InvalidRubrics("no dimensions".to_string()));
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &self.dimensions {
            if d.name.trim().is_empty() {
                return Err(RewardError::InvalidRubrics("empty dimension name".to_string()));
            }
            if d.max_score < 1 {
                return Err(RewardError::InvalidRubrics(format!(
                    "dimension {} has max_score {} < 1",
                    d.name, d.max_score
                )));
            }
            if !names.insert(d.name.clone()) {
                return Err(RewardError::InvalidRubrics(format!(
                    "duplicate dimension name {}",
                    d.name
                )));
            }
        }
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), RewardError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, RewardError> {
        let set: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        set.validate()?;
        Ok(set)
    }
}

/// Per-dimension judge verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub dimension: String,
    pub score: i64,
    pub comment: String,
}

/// A fully judged plan: integer dimension scores plus the normalized
/// total in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanScore {
    pub per_dimension: Vec<DimensionScore>,
    pub total: f64,
    /// Non-fatal anomalies: clamped scores, remote total mismatches.
    pub warnings: Vec<String>,
}

/// Pluggable judge.
pub enum JudgeBackend {
    /// Deterministic rule table over measurable plan features.
    Feature(FeatureJudgeConfig),
    /// Remote LLM judge reached through an [`LlmClient`].
    External(Arc<dyn LlmClient>),
}

impl JudgeBackend {
    pub fn feature() -> Self {
        Self::Feature(FeatureJudgeConfig::default())
    }
}

/// Scores one dimension of a plan. Feature judging is pure; external
/// judging issues one request per call.
pub fn judge_dimension(
    judge: &JudgeBackend,
    query_text: &str,
    plan: &str,
    dimension: &RubricDimension,
) -> Result<(i64, String), RewardError> {
    match judge {
        JudgeBackend::Feature(cfg) => Ok(feature_judge::judge(cfg, query_text, plan, dimension)),
        JudgeBackend::External(client) => {
            // per-dimension external calls reuse the one-shot plan
            // scorer and project out the dimension
            let single = RubricSet {
                version: 0,
                dimensions: vec![dimension.clone()],
            };
            let score = score_plan(&single, query_text, plan, judge)?;
            let _ = client;
            let d = &score.per_dimension[0];
            Ok((d.score, d.comment.clone()))
        }
    }
}

/// Scores a plan across every rubric dimension and normalizes by `Z`.
///
/// Out-of-range integer scores are clamped and flagged in
/// `warnings`; judge transport failures are errors, never zero scores.
pub fn score_plan(
    rubrics: &RubricSet,
    query_text: &str,
    plan: &str,
    judge: &JudgeBackend,
) -> Result<PlanScore, RewardError> {
    if plan.trim().is_empty() {
        return Err(RewardError::EmptyPlan);
    }
    rubrics.validate()?;
    let mut warnings = Vec::new();
    let raw: Vec<(i64, String)> = match judge {
        JudgeBackend::Feature(cfg) => rubrics
            .dimensions
            .iter()
            .map(|d| feature_judge::judge(cfg, query_text, plan, d))
            .collect(),
        JudgeBackend::External(client) => {
            client::judge_remote(client.as_ref(), rubrics, query_text, plan, &mut warnings)?
        }
    };
    let mut per_dimension = Vec::with_capacity(rubrics.dimensions.len());
    let mut sum = 0i64;
    for (d, (score, comment)) in rubrics.dimensions.iter().zip(raw) {
        let clamped = score.clamp(0, d.max_score);
        if clamped != score {
            warnings.push(format!(
                "dimension {} score {} clamped to {}",
                d.name, score, clamped
            ));
        }
        sum += clamped;
        per_dimension.push(DimensionScore {
            dimension: d.name.clone(),
            score: clamped,
            comment,
        });
    }
    Ok(PlanScore {
        per_dimension,
        total: sum as f64 / rubrics.normalizer() as f64,
        warnings,
    })
}

/// Canonical answer form: lowercase, trimmed, internal whitespace
/// collapsed, terminal punctuation stripped. Idempotent.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let mut joined = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    while joined.ends_with(['.', '!', '?', ',', ';', ':']) {
        joined.pop();
    }
    joined.trim_end().to_string()
}

/// Sparse executor reward: 1 iff the normalized answers match.
pub fn exec_reward(final_answer: &str, gold_answer: &str) -> u8 {
    debug_assert!(!gold_answer.trim().is_empty(), "gold answer must be non-empty");
    u8::from(normalize_answer(final_answer) == normalize_answer(gold_answer))
}

/// Trajectory-level executor reward; truncated rollouts score 0.
pub fn trajectory_exec_reward(trajectory: &Trajectory) -> f64 {
    if trajectory.truncated {
        return 0.0;
    }
    f64::from(exec_reward(
        &trajectory.final_answer,
        &trajectory.query.gold_answer,
    ))
}
