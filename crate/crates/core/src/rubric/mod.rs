//! Plan rubrics learner.
//!
//! Distills insights from logged trajectories (successes, failures,
//! and success/failure pairs for the same query), then iteratively
//! rewrites the rubric set through an update backend, gating acceptance
//! on AUC and Cohen's kappa against human plan labels. Each loop
//! iteration validates first and stops on a pass; otherwise pending
//! human patch files are applied, a balanced insight batch is sampled,
//! and the backend proposes the next rubric version. Every proposal is
//! schema-checked: the loop can fail, but it never emits an invalid
//! rubric set.

mod metrics;

pub use metrics::{compute_auc, compute_kappa, Kappa};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::{score_plan, JudgeBackend, LlmClient, RewardError, RubricSet};
use crate::rng;
use crate::trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum RubricError {
    #[error("score and label lists differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("both label classes must be present")]
    SingleClass,
    #[error("need at least 2 labels, got {0}")]
    TooFewLabels(usize),
    #[error("insight category {category} has {have} members, need {need}")]
    InsufficientInsights {
        category: &'static str,
        have: usize,
        need: usize,
    },
    #[error("trajectory outcome does not match its exec reward")]
    OutcomeMismatch,
    #[error("paired trajectories must share a query id")]
    QueryMismatch,
    #[error("backend returned an empty insight")]
    EmptyInsight,
    #[error("insight backend failure: {0}")]
    BackendFailure(String),
    #[error("rubric update payload rejected: {detail}; raw: {raw}")]
    BadUpdatePayload { detail: String, raw: String },
    #[error("patch targets rubric version {expected}, current version is {got}")]
    StalePatch { expected: u64, got: u64 },
    #[error("patch edit failed: {0}")]
    PatchTarget(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {source}")]
    ParseLine {
        line: usize,
        source: serde_json::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Where an insight came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Success,
    Failure,
    Paired {
        correct_plan: String,
        incorrect_plan: String,
    },
}

/// A distilled planning principle tied to the plan it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insight {
    pub query_id: String,
    pub plan: String,
    pub insight_text: String,
    pub provenance: Provenance,
}

/// Balanced sample across the three provenance categories.
#[derive(Debug, Clone, PartialEq)]
pub struct InsightBatch {
    pub success: Vec<Insight>,
    pub failure: Vec<Insight>,
    pub paired: Vec<Insight>,
}

impl InsightBatch {
    pub fn len(&self) -> usize {
        self.success.len() + self.failure.len() + self.paired.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn iter(&self) -> impl Iterator<Item = &Insight> {
        self.success.iter().chain(&self.failure).chain(&self.paired)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanLabel {
    Correct,
    Incorrect,
}

/// A human-labeled plan for rubric validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPlan {
    pub query_id: String,
    /// Query text for the judge; falls back to `query_id` when absent
    /// (labels files may omit it and rely on a task lookup).
    #[serde(default)]
    pub query_text: String,
    pub plan: String,
    pub human_label: HumanLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension_scores: Option<BTreeMap<String, i64>>,
}

impl LabeledPlan {
    fn query_text_or_id(&self) -> &str {
        if self.query_text.is_empty() {
            &self.query_id
        } else {
            &self.query_text
        }
    }
}

/// Acceptance thresholds for the validation gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub auc: f64,
    pub kappa: f64,
    /// Judge totals at or above this are counted as Correct.
    pub judge_label: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            auc: 0.8,
            kappa: 0.75,
            judge_label: 0.5,
        }
    }
}

/// One validation pass of a rubric version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub auc: f64,
    pub kappa: f64,
    pub passed: bool,
    pub judge_totals: Vec<f64>,
    pub kappa_degenerate: bool,
}

/// Prompt templates for the insight and update backends. Editable
/// configuration; the defaults ship with the crate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub single_insight: String,
    pub paired_insight: String,
    pub rubric_update: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            single_insight: "You review research plans. The plan below is known to be \
{correctness}.\n\nQuery: {query}\nPlan: {plan}\n\nList, as short bullets, the concrete \
properties of this plan that explain the outcome. Bullets only."
                .to_string(),
            paired_insight: "You review research plans. For the query below, the first plan \
succeeded and the second failed.\n\nQuery: {query}\nWorking plan: {correct_plan}\nFailing \
plan: {incorrect_plan}\n\nList, as short bullets, the concrete differences that decide the \
outcome. Bullets only."
                .to_string(),
            rubric_update: "You maintain a rubric for scoring research plans. Rewrite it so it \
reflects the insights below: sharpen criteria, add missing ones, drop dead weight. Keep it \
JSON with the shape {\"dimensions\":[{\"name\",\"criteria\":[],\"max_score\"}]}. Respond with \
JSON only.\n\nCurrent rubrics:\n{rubrics}\n\nInsights:\n{insights}\n"
                .to_string(),
        }
    }
}

impl PromptTemplates {
    /// Loads `single_insight.txt`, `paired_insight.txt`, and
    /// `rubric_update.txt` from a directory, keeping defaults for any
    /// missing file.
    pub fn load_dir<P: AsRef<Path>>(dir: P) -> Self {
        let mut t = Self::default();
        let read = |name: &str| std::fs::read_to_string(dir.as_ref().join(name)).ok();
        if let Some(s) = read("single_insight.txt") {
            t.single_insight = s;
        }
        if let Some(s) = read("paired_insight.txt") {
            t.paired_insight = s;
        }
        if let Some(s) = read("rubric_update.txt") {
            t.rubric_update = s;
        }
        t
    }
}

/// Trajectory outcome as judged by its exec reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
}

fn trajectory_succeeded(t: &Trajectory) -> bool {
    crate::reward::trajectory_exec_reward(t) == 1.0
}

/// Extracts one insight from a single trajectory.
pub fn extract_insight(
    trajectory: &Trajectory,
    outcome: Outcome,
    backend: &dyn LlmClient,
    templates: &PromptTemplates,
) -> Result<Insight, RubricError> {
    let succeeded = trajectory_succeeded(trajectory);
    if (outcome == Outcome::Success) != succeeded {
        return Err(RubricError::OutcomeMismatch);
    }
    let correctness = match outcome {
        Outcome::Success => "correct",
        Outcome::Failure => "incorrect",
    };
    let prompt = templates
        .single_insight
        .replace("{query}", &trajectory.query.text)
        .replace("{plan}", &trajectory.anchor_plan)
        .replace("{correctness}", correctness);
    let text = backend
        .complete(&prompt)
        .map_err(|e| RubricError::BackendFailure(e.to_string()))?;
    if text.trim().is_empty() {
        return Err(RubricError::EmptyInsight);
    }
    Ok(Insight {
        query_id: trajectory.query.id.clone(),
        plan: trajectory.anchor_plan.clone(),
        insight_text: text.trim().to_string(),
        provenance: match outcome {
            Outcome::Success => Provenance::Success,
            Outcome::Failure => Provenance::Failure,
        },
    })
}

/// Extracts one insight from a success/failure pair on the same query.
pub fn extract_paired_insight(
    correct: &Trajectory,
    incorrect: &Trajectory,
    backend: &dyn LlmClient,
    templates: &PromptTemplates,
) -> Result<Insight, RubricError> {
    if correct.query.id != incorrect.query.id {
        return Err(RubricError::QueryMismatch);
    }
    if !trajectory_succeeded(correct) || trajectory_succeeded(incorrect) {
        return Err(RubricError::OutcomeMismatch);
    }
    let prompt = templates
        .paired_insight
        .replace("{query}", &correct.query.text)
        .replace("{correct_plan}", &correct.anchor_plan)
        .replace("{incorrect_plan}", &incorrect.anchor_plan);
    let text = backend
        .complete(&prompt)
        .map_err(|e| RubricError::BackendFailure(e.to_string()))?;
    if text.trim().is_empty() {
        return Err(RubricError::EmptyInsight);
    }
    Ok(Insight {
        query_id: correct.query.id.clone(),
        plan: correct.anchor_plan.clone(),
        insight_text: text.trim().to_string(),
        provenance: Provenance::Paired {
            correct_plan: correct.anchor_plan.clone(),
            incorrect_plan: incorrect.anchor_plan.clone(),
        },
    })
}

/// All (correct, incorrect) index pairs sharing a query id; the raw
/// material for paired insight extraction.
pub fn paired_indices(trajectories: &[Trajectory]) -> Vec<(usize, usize)> {
    let mut by_query: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, t) in trajectories.iter().enumerate() {
        let entry = by_query.entry(t.query.id.as_str()).or_default();
        if trajectory_succeeded(t) {
            entry.0.push(i);
        } else {
            entry.1.push(i);
        }
    }
    let mut pairs = Vec::new();
    for (_, (correct, incorrect)) in by_query {
        for &c in &correct {
            for &w in &incorrect {
                pairs.push((c, w));
            }
        }
    }
    pairs
}

/// Samples exact per-category counts without replacement.
pub fn sample_balanced_batch(
    insights: &[Insight],
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<InsightBatch, RubricError> {
    use rand::seq::SliceRandom;
    let mut rng = rng::stream(seed, "insight-batch", &[]);
    let mut take = |category: &'static str, want: usize, filter: &dyn Fn(&Insight) -> bool| {
        let pool: Vec<&Insight> = insights.iter().filter(|i| filter(i)).collect();
        if pool.len() < want {
            return Err(RubricError::InsufficientInsights {
                category,
                have: pool.len(),
                need: want,
            });
        }
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        indices.shuffle(&mut rng);
        Ok(indices[..want].iter().map(|&i| pool[i].clone()).collect::<Vec<_>>())
    };
    Ok(InsightBatch {
        success: take("success", sizes.0, &|i| i.provenance == Provenance::Success)?,
        failure: take("failure", sizes.1, &|i| i.provenance == Provenance::Failure)?,
        paired: take("paired", sizes.2, &|i| {
            matches!(i.provenance, Provenance::Paired { .. })
        })?,
    })
}

#[derive(Deserialize)]
struct UpdateProposal {
    dimensions: Vec<crate::reward::RubricDimension>,
}

/// Asks the backend to rewrite the rubric set from a batch of insights.
/// The proposal must be schema-valid or the update is rejected with the
/// raw payload attached; rubrics never silently degrade.
pub fn update_rubrics(
    rubrics: &RubricSet,
    batch: &InsightBatch,
    backend: &dyn LlmClient,
    templates: &PromptTemplates,
) -> Result<RubricSet, RubricError> {
    let insights_text: String = batch
        .iter()
        .map(|i| format!("- [{}] {}\n", provenance_tag(&i.provenance), i.insight_text))
        .collect();
    let prompt = templates
        .rubric_update
        .replace("{rubrics}", &serde_json::to_string_pretty(rubrics)?)
        .replace("{insights}", &insights_text);
    let text = backend
        .complete(&prompt)
        .map_err(|e| RubricError::BackendFailure(e.to_string()))?;
    let start = text.find('{').ok_or_else(|| RubricError::BadUpdatePayload {
        detail: "no JSON object in response".to_string(),
        raw: text.clone(),
    })?;
    let proposal: UpdateProposal =
        serde_json::from_str(&text[start..]).map_err(|e| RubricError::BadUpdatePayload {
            detail: e.to_string(),
            raw: text.clone(),
        })?;
    let next = RubricSet {
        version: rubrics.version + 1,
        dimensions: proposal.dimensions,
    };
    next.validate().map_err(|e| RubricError::BadUpdatePayload {
        detail: e.to_string(),
        raw: text,
    })?;
    Ok(next)
}

fn provenance_tag(p: &Provenance) -> &'static str {
    match p {
        Provenance::Success => "success",
        Provenance::Failure => "failure",
        Provenance::Paired { .. } => "paired",
    }
}

/// Scores every labeled plan and gates on AUC and kappa.
pub fn validate_rubrics(
    rubrics: &RubricSet,
    labeled: &[LabeledPlan],
    judge: &JudgeBackend,
    thresholds: &Thresholds,
) -> Result<ValidationReport, RubricError> {
    let totals: Vec<f64> = labeled
        .iter()
        .map(|p| score_plan(rubrics, p.query_text_or_id(), &p.plan, judge).map(|s| s.total))
        .collect::<Result<_, _>>()?;
    let labels: Vec<bool> = labeled
        .iter()
        .map(|p| p.human_label == HumanLabel::Correct)
        .collect();
    let auc = compute_auc(&totals, &labels)?;
    let judge_labels: Vec<bool> = totals.iter().map(|t| *t >= thresholds.judge_label).collect();
    let kappa = compute_kappa(&judge_labels, &labels)?;
    Ok(ValidationReport {
        auc,
        kappa: kappa.value,
        passed: auc >= thresholds.auc && kappa.value >= thresholds.kappa,
        judge_totals: totals,
        kappa_degenerate: kappa.degenerate_agreement,
    })
}

/// One annotation patch: dimension edits keyed by the rubric version
/// they were written against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricPatch {
    pub base_version: u64,
    pub edits: Vec<PatchEdit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum PatchEdit {
    AddCriterion { dimension: String, text: String },
    ReplaceCriterion { dimension: String, index: usize, text: String },
    RemoveCriterion { dimension: String, index: usize },
    SetMaxScore { dimension: String, max_score: i64 },
}

/// Applies a patch to the current rubrics. Stale patches (wrong base
/// version) are rejected; a successful application bumps the version.
pub fn apply_patch(rubrics: &RubricSet, patch: &RubricPatch) -> Result<RubricSet, RubricError> {
    if patch.base_version != rubrics.version {
        return Err(RubricError::StalePatch {
            expected: patch.base_version,
            got: rubrics.version,
        });
    }
    fn find<'a>(
        next: &'a mut RubricSet,
        name: &str,
    ) -> Result<&'a mut crate::reward::RubricDimension, RubricError> {
        next.dimensions
            .iter_mut()
            .find(|d| d.name == name)
            .ok_or_else(|| RubricError::PatchTarget(format!("unknown dimension {name}")))
    }
    let mut next = rubrics.clone();
    for edit in &patch.edits {
        match edit {
            PatchEdit::AddCriterion { dimension, text } => {
                find(&mut next, dimension)?.criteria.push(text.clone());
            }
            PatchEdit::ReplaceCriterion { dimension, index, text } => {
                let d = find(&mut next, dimension)?;
                let c = d.criteria.get_mut(*index).ok_or_else(|| {
                    RubricError::PatchTarget(format!("criterion {index} out of range in {dimension}"))
                })?;
                *c = text.clone();
            }
            PatchEdit::RemoveCriterion { dimension, index } => {
                let d = find(&mut next, dimension)?;
                if *index >= d.criteria.len() {
                    return Err(RubricError::PatchTarget(format!(
                        "criterion {index} out of range in {dimension}"
                    )));
                }
                d.criteria.remove(*index);
            }
            PatchEdit::SetMaxScore { dimension, max_score } => {
                find(&mut next, dimension)?.max_score = *max_score;
            }
        }
    }
    next.version += 1;
    next.validate().map_err(|e| RubricError::PatchTarget(e.to_string()))?;
    Ok(next)
}

/// Loop configuration for [`learn_rubrics`].
#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub max_iterations: usize,
    pub thresholds: Thresholds,
    pub batch_sizes: (usize, usize, usize),
    pub seed: u64,
    /// Directory watched for `*.json` annotation patches.
    pub patch_dir: Option<PathBuf>,
    /// JSONL iteration log, written as the loop runs.
    pub log_path: Option<PathBuf>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            thresholds: Thresholds::default(),
            batch_sizes: (8, 8, 8),
            seed: 0,
            patch_dir: None,
            log_path: None,
        }
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub version: u64,
    pub auc: f64,
    pub kappa: f64,
    pub passed: bool,
    pub action: String,
}

fn append_log(path: &Option<PathBuf>, record: &IterationRecord) -> Result<(), RubricError> {
    if let Some(path) = path {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{}", serde_json::to_string(record)?)?;
    }
    Ok(())
}

/// Applies every pending patch file in version-guard order. Applied
/// patches are renamed `*.applied`, stale ones `*.stale`, so a patch is
/// consumed exactly once.
fn apply_pending_patches(
    rubrics: RubricSet,
    dir: &Path,
    actions: &mut Vec<String>,
) -> Result<RubricSet, RubricError> {
    let mut current = rubrics;
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "json").unwrap_or(false))
        .collect();
    names.sort();
    for path in names {
        let patch: RubricPatch = serde_json::from_str(&std::fs::read_to_string(&path)?)
            .map_err(|e| RubricError::ParseLine { line: 0, source: e })?;
        match apply_patch(&current, &patch) {
            Ok(next) => {
                current = next;
                std::fs::rename(&path, path.with_extension("json.applied"))?;
                actions.push(format!("patched:{}", path.display()));
            }
            Err(RubricError::StalePatch { .. }) => {
                std::fs::rename(&path, path.with_extension("json.stale"))?;
                actions.push(format!("stale-patch:{}", path.display()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(current)
}

/// The full learn loop: validate, stop on pass, otherwise patch +
/// sample + update, up to `max_iterations` validations.
pub fn learn_rubrics(
    initial: RubricSet,
    insights: &[Insight],
    labeled: &[LabeledPlan],
    judge: &JudgeBackend,
    update_backend: &dyn LlmClient,
    templates: &PromptTemplates,
    cfg: &LoopConfig,
) -> Result<(RubricSet, Vec<IterationRecord>), RubricError> {
    assert!(cfg.max_iterations >= 1, "max_iterations must be >= 1");
    let mut current = initial;
    let mut log = Vec::new();
    for iteration in 1..=cfg.max_iterations {
        let report = validate_rubrics(&current, labeled, judge, &cfg.thresholds)?;
        let mut record = IterationRecord {
            iteration,
            version: current.version,
            auc: report.auc,
            kappa: report.kappa,
            passed: report.passed,
            action: "validated".to_string(),
        };
        if report.passed {
            append_log(&cfg.log_path, &record)?;
            log.push(record);
            break;
        }
        let mut actions = vec!["validated".to_string()];
        if let Some(dir) = &cfg.patch_dir {
            current = apply_pending_patches(current, dir, &mut actions)?;
        }
        let batch = sample_balanced_batch(
            insights,
            cfg.batch_sizes,
            rng::derive_seed(cfg.seed, "learn-iter", &[iteration as u64]),
        )?;
        current = update_rubrics(&current, &batch, update_backend, templates)?;
        actions.push(format!("updated->v{}", current.version));
        record.action = actions.join(",");
        append_log(&cfg.log_path, &record)?;
        log.push(record);
    }
    Ok((current, log))
}

// ---- insight and label stores ---------------------------------------------

/// Appends insights to a JSONL store (the set grows across runs).
pub fn append_insights<P: AsRef<Path>>(path: P, insights: &[Insight]) -> Result<(), RubricError> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    for i in insights {
        writeln!(f, "{}", serde_json::to_string(i)?)?;
    }
    Ok(())
}

pub fn read_insights<P: AsRef<Path>>(path: P) -> Result<Vec<Insight>, RubricError> {
    read_jsonl(path)
}

pub fn read_labeled_plans<P: AsRef<Path>>(path: P) -> Result<Vec<LabeledPlan>, RubricError> {
    read_jsonl(path)
}

pub fn write_labeled_plans<P: AsRef<Path>>(
    path: P,
    plans: &[LabeledPlan],
) -> Result<(), RubricError> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    for p in plans {
        writeln!(f, "{}", serde_json::to_string(p)?)?;
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned, P: AsRef<Path>>(path: P) -> Result<Vec<T>, RubricError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(line).map_err(|e| RubricError::ParseLine {
                line: i + 1,
                source: e,
            })?,
        );
    }
    Ok(out)
}
