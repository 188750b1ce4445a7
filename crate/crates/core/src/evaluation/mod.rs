//! Evaluation: Pass@k, tool-call statistics, and the pinned-first-step
//! ablation.
//!
//! The ablation protocol: per task, sample a base group of rollouts,
//! keep tasks that are neither all wrong nor all correct, pin one
//! correct-outcome and one incorrect-outcome first step (anchor plan
//! plus the first action) as forced prefixes, sample fresh
//! continuations under each, and compare mean Pass@8 between the two
//! conditions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Corpus, TaskInstance};
use crate::parallel;
use crate::policy::{rollout, PolicyParams, Rollout, RolloutConfig, TokenId};
use crate::reward::{score_plan, trajectory_exec_reward, JudgeBackend, RewardError, RubricSet};
use crate::rng;
use crate::trajectory::{ActionKind, SegmentKind, Trajectory};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("k must be >= 1")]
    KZero,
    #[error("task {task_id} has {have} rollouts, need {need}")]
    TooFewRollouts {
        task_id: String,
        have: usize,
        need: usize,
    },
    #[error("no task has both correct and incorrect rollouts to pin")]
    NoQualifyingTasks,
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// All scored rollouts of one task.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub task_id: String,
    pub rollouts: Vec<(Trajectory, f64)>,
    pub seeds: Vec<u64>,
}

/// Samples `n_rollouts` per task with per-rollout seed streams and
/// scores them with the exact-match reward.
pub fn evaluate(
    params: &PolicyParams,
    corpus: &Corpus,
    tasks: &[TaskInstance],
    n_rollouts: usize,
    max_steps: usize,
    seed: u64,
) -> Vec<EvalRun> {
    let cfg = RolloutConfig::new(max_steps);
    let flat: Vec<(usize, usize)> = (0..tasks.len())
        .flat_map(|t| (0..n_rollouts).map(move |r| (t, r)))
        .collect();
    let rollouts: Vec<(Trajectory, f64, u64)> = parallel::indexed_map(flat.len(), |i| {
        let (t, r) = flat[i];
        let stream_seed = rng::derive_seed(seed, "eval", &[t as u64, r as u64]);
        let mut stream = rng::stream(seed, "eval", &[t as u64, r as u64]);
        let rollout = rollout(params, corpus, &tasks[t].query, &cfg, &mut stream)
            .expect("evaluation rollouts cannot fail");
        let reward = trajectory_exec_reward(&rollout.trajectory);
        (rollout.trajectory, reward, stream_seed)
    });
    let mut runs: Vec<EvalRun> = tasks
        .iter()
        .map(|t| EvalRun {
            task_id: t.query.id.clone(),
            rollouts: Vec::with_capacity(n_rollouts),
            seeds: Vec::with_capacity(n_rollouts),
        })
        .collect();
    for ((t, _), (trajectory, reward, stream_seed)) in flat.into_iter().zip(rollouts) {
        runs[t].rollouts.push((trajectory, reward));
        runs[t].seeds.push(stream_seed);
    }
    runs
}

/// Fraction of tasks with at least one correct rollout among their
/// first `k`. Monotone non-decreasing in `k`.
pub fn pass_at_k(runs: &[EvalRun], k: usize) -> Result<f64, EvalError> {
    if k < 1 {
        return Err(EvalError::KZero);
    }
    for run in runs {
        if run.rollouts.len() < k {
            return Err(EvalError::TooFewRollouts {
                task_id: run.task_id.clone(),
                have: run.rollouts.len(),
                need: k,
            });
        }
    }
    let solved = runs
        .iter()
        .filter(|r| r.rollouts[..k].iter().any(|(_, reward)| *reward == 1.0))
        .count();
    Ok(solved as f64 / runs.len().max(1) as f64)
}

/// Pass@1 averaged over three independent single-rollout runs (the
/// first three rollouts of each task).
pub fn pass_at_1_averaged(runs: &[EvalRun]) -> Result<f64, EvalError> {
    for run in runs {
        if run.rollouts.len() < 3 {
            return Err(EvalError::TooFewRollouts {
                task_id: run.task_id.clone(),
                have: run.rollouts.len(),
                need: 3,
            });
        }
    }
    let mut total = 0.0;
    for r in 0..3 {
        let solved = runs.iter().filter(|run| run.rollouts[r].1 == 1.0).count();
        total += solved as f64 / runs.len().max(1) as f64;
    }
    Ok(total / 3.0)
}

/// Tool usage over a batch of runs; Answer actions are not tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallStats {
    pub mean: f64,
    pub searches: usize,
    pub visits: usize,
    pub trajectories: usize,
}

pub fn tool_call_stats(runs: &[EvalRun]) -> ToolCallStats {
    let mut searches = 0;
    let mut visits = 0;
    let mut trajectories = 0;
    for run in runs {
        for (trajectory, _) in &run.rollouts {
            trajectories += 1;
            for step in &trajectory.steps {
                match step.action.kind {
                    ActionKind::Search => searches += 1,
                    ActionKind::Visit => visits += 1,
                    ActionKind::Answer => {}
                }
            }
        }
    }
    ToolCallStats {
        mean: (searches + visits) as f64 / trajectories.max(1) as f64,
        searches,
        visits,
        trajectories,
    }
}

/// Which outcome the pinned first step came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStepKind {
    Correct,
    Incorrect,
}

/// One (task, condition) row of the ablation results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorAblationRecord {
    pub task_id: String,
    pub condition: FirstStepKind,
    pub pass_at_8: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub records: Vec<AnchorAblationRecord>,
    pub correct_mean_pass_at_8: f64,
    pub incorrect_mean_pass_at_8: f64,
    /// correct-condition mean minus incorrect-condition mean.
    pub gap: f64,
    pub qualifying_tasks: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AblationConfig {
    /// Base rollouts per task used to harvest first steps.
    pub base_rollouts: usize,
    /// Continuations per pinned condition.
    pub continuations: usize,
    pub max_steps: usize,
    /// Sampling temperature shared by base rollouts and continuations.
    pub temperature: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            base_rollouts: 8,
            continuations: 8,
            max_steps: 8,
            temperature: 1.0,
        }
    }
}

/// Generated-token prefix covering the anchor plan plus the first
/// step's thought and action.
pub fn first_step_prefix(r: &Rollout) -> Vec<TokenId> {
    let action_end = r
        .trajectory
        .token_spans
        .iter()
        .find(|s| s.segment == SegmentKind::Action && s.step == Some(0))
        .map(|s| s.end)
        .unwrap_or_else(|| r.trajectory.token_spans[0].end);
    let positions = r.trajectory.generated_positions();
    r.tokens
        .iter()
        .zip(&positions)
        .filter(|(_, p)| **p < action_end)
        .map(|(t, _)| t.token)
        .collect()
}

/// Runs the pinned-first-step ablation on the given policy.
pub fn anchor_ablation(
    params: &PolicyParams,
    corpus: &Corpus,
    tasks: &[TaskInstance],
    cfg: &AblationConfig,
    seed: u64,
) -> Result<AblationSummary, EvalError> {
    let base_cfg = RolloutConfig::new(cfg.max_steps).with_temperature(cfg.temperature);
    // harvest base groups
    let bases: Vec<Vec<Rollout>> = parallel::indexed_map(tasks.len(), |t| {
        (0..cfg.base_rollouts)
            .map(|i| {
                let mut stream = rng::stream(seed, "ablation-base", &[t as u64, i as u64]);
                rollout(params, corpus, &tasks[t].query, &base_cfg, &mut stream)
                    .expect("ablation base rollouts cannot fail")
            })
            .collect()
    });

    struct Pinned {
        task_index: usize,
        condition: FirstStepKind,
        prefix: Vec<TokenId>,
    }
    let mut pinned = Vec::new();
    for (t, group) in bases.iter().enumerate() {
        let correct = group
            .iter()
            .find(|r| trajectory_exec_reward(&r.trajectory) == 1.0);
        let incorrect = group
            .iter()
            .find(|r| trajectory_exec_reward(&r.trajectory) == 0.0);
        if let (Some(c), Some(w)) = (correct, incorrect) {
            pinned.push(Pinned {
                task_index: t,
                condition: FirstStepKind::Correct,
                prefix: first_step_prefix(c),
            });
            pinned.push(Pinned {
                task_index: t,
                condition: FirstStepKind::Incorrect,
                prefix: first_step_prefix(w),
            });
        }
    }
    if pinned.is_empty() {
        return Err(EvalError::NoQualifyingTasks);
    }

    let records: Vec<AnchorAblationRecord> = parallel::indexed_map(pinned.len(), |i| {
        let p = &pinned[i];
        let cond_tag = match p.condition {
            FirstStepKind::Correct => 0u64,
            FirstStepKind::Incorrect => 1u64,
        };
        let any_correct = (0..cfg.continuations).any(|j| {
            let cont_cfg = RolloutConfig::new(cfg.max_steps)
                .with_temperature(cfg.temperature)
                .with_prefix(p.prefix.clone());
            let mut stream = rng::stream(
                seed,
                "ablation-cont",
                &[p.task_index as u64, cond_tag, j as u64],
            );
            match rollout(params, corpus, &tasks[p.task_index].query, &cont_cfg, &mut stream) {
                Ok(r) => trajectory_exec_reward(&r.trajectory) == 1.0,
                Err(_) => false,
            }
        });
        AnchorAblationRecord {
            task_id: tasks[p.task_index].query.id.clone(),
            condition: p.condition,
            pass_at_8: f64::from(u8::from(any_correct)),
        }
    });

    let mean = |kind: FirstStepKind| {
        let xs: Vec<f64> = records
            .iter()
            .filter(|r| r.condition == kind)
            .map(|r| r.pass_at_8)
            .collect();
        xs.iter().sum::<f64>() / xs.len().max(1) as f64
    };
    let correct_mean = mean(FirstStepKind::Correct);
    let incorrect_mean = mean(FirstStepKind::Incorrect);
    Ok(AblationSummary {
        qualifying_tasks: records.len() / 2,
        records,
        correct_mean_pass_at_8: correct_mean,
        incorrect_mean_pass_at_8: incorrect_mean,
        gap: correct_mean - incorrect_mean,
    })
}

/// Summary JSON emitted by the eval command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub pass_at_1: f64,
    pub pass_at_3: f64,
    pub mean_tool_calls: f64,
    pub ablation_gap: Option<f64>,
}

/// Mean per-dimension rubric score of the policy's plans; input for
/// the radar chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionMean {
    pub name: String,
    pub mean_score: f64,
    pub max_score: i64,
}

pub fn score_policy_plans(
    params: &PolicyParams,
    corpus: &Corpus,
    tasks: &[TaskInstance],
    rubrics: &RubricSet,
    judge: &JudgeBackend,
    seed: u64,
) -> Result<Vec<DimensionMean>, EvalError> {
    let cfg = RolloutConfig::new(4).plan_only();
    let plans: Vec<String> = parallel::indexed_map(tasks.len(), |t| {
        let mut stream = rng::stream(seed, "plan-score", &[t as u64]);
        rollout(params, corpus, &tasks[t].query, &cfg, &mut stream)
            .map(|r| r.trajectory.anchor_plan)
            .unwrap_or_default()
    });
    let mut sums: Vec<f64> = vec![0.0; rubrics.dimensions.len()];
    for (task, plan) in tasks.iter().zip(&plans) {
        let score = score_plan(rubrics, &task.query.text, plan, judge)?;
        for (s, d) in sums.iter_mut().zip(&score.per_dimension) {
            *s += d.score as f64;
        }
    }
    Ok(rubrics
        .dimensions
        .iter()
        .zip(&sums)
        .map(|(d, s)| DimensionMean {
            name: d.name.clone(),
            mean_score: s / tasks.len().max(1) as f64,
            max_score: d.max_score,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_corpus, generate_task, GenParams};
    use crate::trajectory::{Action, Query, Step};

    fn run_with(task_id: &str, outcomes: &[f64]) -> EvalRun {
        let rollouts = outcomes
            .iter()
            .map(|&reward| {
                let t = Trajectory::new(
                    Query {
                        id: task_id.into(),
                        text: "Starting from A , follow hue . What do you reach ?".into(),
                        gold_answer: "v".into(),
                    },
                    "p".into(),
                    vec![Step {
                        thought: String::new(),
                        action: Action {
                            kind: ActionKind::Answer,
                            payload: if reward == 1.0 { "v".into() } else { "x".into() },
                        },
                        observation: String::new(),
                    }],
                    if reward == 1.0 { "v" } else { "x" }.into(),
                    false,
                )
                .unwrap();
                (t, reward)
            })
            .collect();
        EvalRun {
            task_id: task_id.into(),
            rollouts,
            seeds: vec![0; outcomes.len()],
        }
    }

    #[test]
    fn all_correct_saturates_every_k() {
        let runs = vec![run_with("a", &[1.0, 1.0, 1.0]), run_with("b", &[1.0, 1.0, 1.0])];
        for k in 1..=3 {
            assert_eq!(pass_at_k(&runs, k).unwrap(), 1.0);
        }
    }

    #[test]
    fn one_correct_of_three_saturates_pass_at_3() {
        let runs = vec![run_with("a", &[0.0, 1.0, 0.0])];
        assert_eq!(pass_at_k(&runs, 3).unwrap(), 1.0);
        assert_eq!(pass_at_1_averaged(&runs).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn counting_oracle_ten_tasks() {
        let mut runs = Vec::new();
        for i in 0..10 {
            let outcomes = if i < 4 { [0.0, 1.0, 0.0] } else { [0.0, 0.0, 0.0] };
            runs.push(run_with(&format!("t{i}"), &outcomes));
        }
        assert_eq!(pass_at_k(&runs, 3).unwrap(), 0.4);
    }

    #[test]
    fn pass_at_k_is_monotone_in_k() {
        let mut rng = crate::rng::stream(4, "mono", &[]);
        use rand::Rng;
        let runs: Vec<EvalRun> = (0..12)
            .map(|i| {
                let outcomes: Vec<f64> = (0..6).map(|_| f64::from(rng.gen::<bool>())).collect();
                run_with(&format!("t{i}"), &outcomes)
            })
            .collect();
        let mut prev = 0.0;
        for k in 1..=6 {
            let p = pass_at_k(&runs, k).unwrap();
            assert!(p >= prev);
            assert!((0.0..=1.0).contains(&p));
            prev = p;
        }
        // k == rollout count equals the any-correct rate
        let any = runs
            .iter()
            .filter(|r| r.rollouts.iter().any(|(_, x)| *x == 1.0))
            .count() as f64
            / runs.len() as f64;
        assert_eq!(pass_at_k(&runs, 6).unwrap(), any);
    }

    #[test]
    fn insufficient_rollouts_is_an_error() {
        let runs = vec![run_with("a", &[1.0])];
        assert!(matches!(
            pass_at_k(&runs, 2),
            Err(EvalError::TooFewRollouts { .. })
        ));
        assert!(matches!(pass_at_k(&runs, 0), Err(EvalError::KZero)));
    }

    #[test]
    fn tool_stats_count_searches_and_visits_only() {
        let corpus = generate_corpus(7, &GenParams::new(30, 8, 2)).unwrap();
        let task = generate_task(&corpus, 2, 3).unwrap();
        let params = crate::policy::PolicyParams::guided(3);
        let runs = evaluate(&params, &corpus, &[task], 4, 8, 11);
        let stats = tool_call_stats(&runs);
        // recount oracle
        let mut total = 0;
        let mut count = 0;
        for run in &runs {
            for (t, _) in &run.rollouts {
                total += t.tool_calls();
                count += 1;
            }
        }
        assert_eq!(stats.mean, total as f64 / count as f64);
        assert_eq!(stats.searches + stats.visits, total);
    }

    #[test]
    fn immediate_answers_have_zero_mean_tool_calls() {
        let runs = vec![run_with("a", &[1.0, 0.0])];
        assert_eq!(tool_call_stats(&runs).mean, 0.0);
    }

    #[test]
    fn evaluation_is_seed_deterministic() {
        let corpus = generate_corpus(7, &GenParams::new(30, 8, 2)).unwrap();
        let task = generate_task(&corpus, 2, 3).unwrap();
        let params = crate::policy::PolicyParams::guided(3);
        let a = evaluate(&params, &corpus, std::slice::from_ref(&task), 3, 8, 5);
        let b = evaluate(&params, &corpus, std::slice::from_ref(&task), 3, 8, 5);
        assert_eq!(a[0].rollouts, b[0].rollouts);
        assert_eq!(a[0].seeds, b[0].seeds);
    }

    #[test]
    fn history_blind_policy_shows_no_anchor_gap() {
        // zero weights ignore every feature: pinning a first step must
        // not separate the conditions beyond sampling noise
        let corpus = generate_corpus(9, &GenParams::new(30, 8, 2)).unwrap();
        let tasks: Vec<_> = (0..10)
            .map(|i| generate_task(&corpus, 1, 40 + i as u64).unwrap())
            .collect();
        let params = crate::policy::PolicyParams::zeros();
        match anchor_ablation(&params, &corpus, &tasks, &AblationConfig::default(), 3) {
            Ok(summary) => assert!(summary.gap.abs() <= 0.34, "gap {}", summary.gap),
            Err(EvalError::NoQualifyingTasks) => {} // uniformly failing policy
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn ablation_errors_without_mixed_outcomes() {
        let corpus = generate_corpus(9, &GenParams::new(30, 8, 2)).unwrap();
        let tasks: Vec<_> = (0..3)
            .map(|i| generate_task(&corpus, 2, 60 + i as u64).unwrap())
            .collect();
        // a policy that always answers immediately is always wrong
        let mut params = crate::policy::PolicyParams::zeros();
        *params.weight_mut(crate::policy::context::F_BIAS, 22) = 20.0;
        let err = anchor_ablation(&params, &corpus, &tasks, &AblationConfig::default(), 3);
        assert!(matches!(err, Err(EvalError::NoQualifyingTasks)));
    }
}
