//! ReAct trajectory data model, token serialization, and credit masks.
//!
//! A trajectory is a query, an anchor plan, an ordered list of
//! thought/action/observation steps, and a final answer. Serialization
//! flattens it to a whitespace token sequence with one half-open span
//! per segment, in this fixed order:
//!
//! ```text
//! [plan] [thought_0] [action_0] [observation_0] ... [answer]
//! ```
//!
//! The plan span starts at token 0 and is wrapped in explicit
//! `<plan>`/`</plan>` markers. Credit masks are `{0,1}` weight vectors
//! over the serialized tokens; observation tokens are produced by the
//! environment, never by the policy, and carry weight 0 under every
//! mask.

mod log;

pub use log::{read_log, write_log, LogError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marker token opening the plan span.
pub const PLAN_BEGIN: &str = "<plan>";
/// Marker token closing the plan span.
pub const PLAN_END: &str = "</plan>";

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("query text must be non-empty")]
    EmptyQueryText,
    #[error("gold answer must be non-empty")]
    EmptyGoldAnswer,
    #[error("step {0}: action payload must be non-empty")]
    EmptyPayload(usize),
    #[error("step {0}: observation must be filled iff the action is Search or Visit")]
    ObservationMismatch(usize),
    #[error("step {0}: Answer terminates a trajectory but later steps exist")]
    AnswerNotTerminal(usize),
    #[error("trajectory is not truncated but its last action is not Answer")]
    MissingAnswer,
    #[error("trajectory serializes to zero tokens; malformed rollout")]
    EmptyTrajectory,
}

/// A task query with its canonical answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub gold_answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Search,
    Visit,
    Answer,
}

/// A tool invocation or final answer emitted by the policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub payload: String,
}

/// One thought/action/observation triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub thought: String,
    pub action: Action,
    pub observation: String,
}

/// Segment labels for token spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Plan,
    Thought,
    Action,
    Observation,
    Answer,
}

/// Half-open token range of one segment of the serialized rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub segment: SegmentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Which token spans receive credit during a policy update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MaskKind {
    /// Weight 1 exactly on the anchor plan span.
    AnchorOnly,
    /// Weight 1 on every generated span (plan, thoughts, actions,
    /// answer); observations stay 0.
    FullTrajectory,
    /// Weight 1 only on the final generated step.
    LastStepOnly,
    /// Weight 1 on one uniformly chosen generated step.
    RandomStep { seed: u64 },
}

/// A full ReAct rollout with token-span bookkeeping.
///
/// Immutable after construction; [`Trajectory::new`] validates the
/// invariants and records the token spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "log::LogRecord", into = "log::LogRecord")]
pub struct Trajectory {
    pub query: Query,
    pub anchor_plan: String,
    pub steps: Vec<Step>,
    pub final_answer: String,
    pub truncated: bool,
    pub token_spans: Vec<TokenSpan>,
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Rendered action words: the payload is part of the action span for
/// tool calls, while an Answer's payload is rendered in the answer span.
fn action_text(action: &Action) -> String {
    match action.kind {
        ActionKind::Search => format!("search {}", action.payload),
        ActionKind::Visit => format!("visit {}", action.payload),
        ActionKind::Answer => "answer".to_string(),
    }
}

impl Trajectory {
    pub fn new(
        query: Query,
        anchor_plan: String,
        steps: Vec<Step>,
        final_answer: String,
        truncated: bool,
    ) -> Result<Self, TrajectoryError> {
        if query.text.trim().is_empty() {
            return Err(TrajectoryError::EmptyQueryText);
        }
        if query.gold_answer.trim().is_empty() {
            return Err(TrajectoryError::EmptyGoldAnswer);
        }
        for (i, step) in steps.iter().enumerate() {
            if step.action.payload.trim().is_empty() {
                return Err(TrajectoryError::EmptyPayload(i));
            }
            let wants_observation = matches!(step.action.kind, ActionKind::Search | ActionKind::Visit);
            if wants_observation == step.observation.trim().is_empty() {
                return Err(TrajectoryError::ObservationMismatch(i));
            }
            if step.action.kind == ActionKind::Answer && i + 1 != steps.len() {
                return Err(TrajectoryError::AnswerNotTerminal(i));
            }
        }
        if !truncated {
            if let Some(last) = steps.last() {
                if last.action.kind != ActionKind::Answer {
                    return Err(TrajectoryError::MissingAnswer);
                }
            }
        }
        let mut trajectory = Self {
            query,
            anchor_plan,
            steps,
            final_answer,
            truncated,
            token_spans: Vec::new(),
        };
        trajectory.token_spans = trajectory.compute_spans();
        Ok(trajectory)
    }

    fn compute_spans(&self) -> Vec<TokenSpan> {
        let mut spans = Vec::with_capacity(2 + 3 * self.steps.len());
        let mut cursor = 0usize;
        let mut push = |segment, step, len: usize, cursor: &mut usize| {
            spans.push(TokenSpan {
                segment,
                step,
                start: *cursor,
                end: *cursor + len,
            });
            *cursor += len;
        };
        // plan markers belong to the plan span
        push(SegmentKind::Plan, None, word_count(&self.anchor_plan) + 2, &mut cursor);
        for (i, step) in self.steps.iter().enumerate() {
            push(SegmentKind::Thought, Some(i), word_count(&step.thought), &mut cursor);
            push(SegmentKind::Action, Some(i), word_count(&action_text(&step.action)), &mut cursor);
            push(SegmentKind::Observation, Some(i), word_count(&step.observation), &mut cursor);
        }
        push(SegmentKind::Answer, None, word_count(&self.final_answer), &mut cursor);
        spans
    }

    /// Flatten to the whitespace token sequence the spans index into.
    /// Deterministic: an unchanged trajectory always serializes to the
    /// same sequence.
    pub fn serialize_tokens(&self) -> Vec<String> {
        let mut tokens = Vec::with_capacity(self.token_count());
        tokens.push(PLAN_BEGIN.to_string());
        tokens.extend(self.anchor_plan.split_whitespace().map(str::to_string));
        tokens.push(PLAN_END.to_string());
        for step in &self.steps {
            tokens.extend(step.thought.split_whitespace().map(str::to_string));
            tokens.extend(action_text(&step.action).split_whitespace().map(str::to_string));
            tokens.extend(step.observation.split_whitespace().map(str::to_string));
        }
        tokens.extend(self.final_answer.split_whitespace().map(str::to_string));
        tokens
    }

    /// Total serialized token count (== every mask's length).
    pub fn token_count(&self) -> usize {
        self.token_spans.last().map_or(0, |s| s.end)
    }

    fn span(&self, segment: SegmentKind, step: Option<usize>) -> Option<&TokenSpan> {
        self.token_spans
            .iter()
            .find(|s| s.segment == segment && s.step == step)
    }

    /// Serialized positions of policy-generated tokens, in generation
    /// order: plan, then each step's thought and action, then the
    /// answer. Observation tokens are environment-produced and excluded.
    pub fn generated_positions(&self) -> Vec<usize> {
        let mut positions = Vec::new();
        for span in &self.token_spans {
            if span.segment != SegmentKind::Observation {
                positions.extend(span.start..span.end);
            }
        }
        positions
    }

    /// Per-token `{0,1}` credit weights for `kind`.
    ///
    /// The mask always has length [`Self::token_count`]; observation
    /// spans receive weight 0 under every kind.
    pub fn credit_mask(&self, kind: MaskKind) -> Result<Vec<f64>, TrajectoryError> {
        let n = self.token_count();
        if n == 0 {
            return Err(TrajectoryError::EmptyTrajectory);
        }
        let mut mask = vec![0.0; n];
        let mut fill = |span: &TokenSpan| {
            for w in &mut mask[span.start..span.end] {
                *w = 1.0;
            }
        };
        match kind {
            MaskKind::AnchorOnly => {
                if let Some(span) = self.span(SegmentKind::Plan, None) {
                    fill(span);
                }
            }
            MaskKind::FullTrajectory => {
                for span in &self.token_spans {
                    if span.segment != SegmentKind::Observation {
                        fill(span);
                    }
                }
            }
            MaskKind::LastStepOnly => {
                if !self.steps.is_empty() {
                    self.fill_step_mask(self.steps.len() - 1, &mut fill);
                }
            }
            MaskKind::RandomStep { seed } => {
                if !self.steps.is_empty() {
                    use rand::Rng;
                    let mut rng = crate::rng::stream(seed, "random-step-mask", &[]);
                    let chosen = rng.gen_range(0..self.steps.len());
                    self.fill_step_mask(chosen, &mut fill);
                }
            }
        }
        Ok(mask)
    }

    /// Credits step `i`'s thought and action spans; when `i` is the
    /// final step and it answered, the answer span belongs to it too.
    fn fill_step_mask(&self, i: usize, fill: &mut impl FnMut(&TokenSpan)) {
        if let Some(span) = self.span(SegmentKind::Thought, Some(i)) {
            fill(span);
        }
        if let Some(span) = self.span(SegmentKind::Action, Some(i)) {
            fill(span);
        }
        if i + 1 == self.steps.len() && self.steps[i].action.kind == ActionKind::Answer {
            if let Some(span) = self.span(SegmentKind::Answer, None) {
                fill(span);
            }
        }
    }

    /// Search + Visit actions in this rollout; Answer is not a tool.
    pub fn tool_calls(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s.action.kind, ActionKind::Search | ActionKind::Visit))
            .count()
    }
}
