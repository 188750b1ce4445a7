//! Desk-scale laboratory for two-stage plan-anchored GRPO.
//!
//! The crate trains a compact feature-linear softmax policy to solve
//! multi-hop lookup tasks in a deterministic synthetic wiki, using
//! group-relative policy optimization with masked credit assignment:
//!
//! 1. **Stage 1** samples groups of anchor plans, scores them with a
//!    rubric judge (dense reward in `[0,1]`), and updates only the
//!    plan-span tokens.
//! 2. **Stage 2** samples full tool-use rollouts, scores them with a
//!    sparse exact-match reward, and updates all generated tokens.
//!
//! Both stages share the same parameter vector. Ablation trainers cover
//! full-trajectory GRPO, sparse first-step GRPO, last/random-step
//! masking, and a naive scalar plan reward.
//!
//! Batch work (rollout generation, judge scoring, evaluation) runs on a
//! rayon pool when the default `parallel` feature is enabled and falls
//! back to a sequential path otherwise; reductions are ordered by index
//! in both lanes, so results are bit-identical across lanes and thread
//! counts.

pub mod env;
pub mod evaluation;
pub mod parallel;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod rubric;
pub mod trainer;
pub mod trajectory;

pub use env::{Corpus, SearchResult, TaskInstance, WikiPage};
pub use policy::{ContextFeatures, PolicyParams, Rollout, Vocabulary};
pub use reward::{JudgeBackend, PlanScore, RubricDimension, RubricSet};
pub use trainer::{ClipConfig, Group, StageConfig};
pub use trajectory::{Action, ActionKind, MaskKind, Query, Step, Trajectory};
