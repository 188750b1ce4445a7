//! Command-line driver: environment generation, training, rubric
//! learning, evaluation, ablations, and plotting.
//!
//! Every command takes a single `--seed`; all internal randomness is
//! derived from it, so reruns with identical flags produce byte-
//! identical artifacts. Exit codes: 0 success, 1 runtime failure,
//! 2 usage error.

mod commands;
mod plot;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anchorlab", version, about = "Plan-anchored GRPO laboratory")]
struct Cli {
    /// Worker threads for batch work (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic wiki corpus with planted multi-hop tasks.
    GenEnv(GenEnvArgs),
    /// Train a policy with anchor-GRPO or an ablation schedule.
    Train(TrainArgs),
    /// Run the rubric learner loop against human labels.
    LearnRubrics(LearnRubricsArgs),
    /// Evaluate a checkpoint: Pass@k, tool calls, optional plan scores.
    Eval(EvalArgs),
    /// Pinned-first-step ablation on a trained checkpoint.
    Ablate(AblateArgs),
    /// Render metrics curves or a rubric radar chart to SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenEnvArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    pages: usize,
    /// Hop count of the planted tasks.
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long, default_value_t = 100)]
    tasks: usize,
    #[arg(long, default_value_t = 8)]
    relations: usize,
    #[arg(long, default_value_t = 2)]
    branching: usize,
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus file produced by gen-env.
    #[arg(long)]
    corpus: std::path::PathBuf,
    /// anchor-grpo, grpo, first-step-grpo, last-step-grpo,
    /// random-step-grpo, or naive-plan-grpo.
    #[arg(long, default_value = "anchor-grpo")]
    algo: String,
    /// Run directory for config, metrics, and checkpoints.
    #[arg(long)]
    out: std::path::PathBuf,
    /// Optional JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stage1_epochs: Option<usize>,
    #[arg(long)]
    stage2_epochs: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    eps_low: Option<f64>,
    #[arg(long)]
    eps_high: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    kl_coeff: Option<f64>,
    /// Checkpoint every N epochs (0 = final only).
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Resume from the run directory's last checkpoint.
    #[arg(long, default_value_t = false)]
    resume: bool,
    /// Initial parameters: guided, zeros, or a checkpoint path.
    #[arg(long, default_value = "guided")]
    init: String,
    /// Judge backend for rubric rewards: feature or external.
    #[arg(long)]
    judge: Option<String>,
}

#[derive(Args)]
struct LearnRubricsArgs {
    /// Insight store (JSONL).
    #[arg(long)]
    insights: std::path::PathBuf,
    /// Human-labeled plans (JSONL).
    #[arg(long)]
    labels: std::path::PathBuf,
    /// Initial rubric set (JSON).
    #[arg(long)]
    rubrics: std::path::PathBuf,
    #[arg(long, default_value_t = 10)]
    max_iters: usize,
    /// Optional corpus for resolving query texts by id.
    #[arg(long)]
    tasks: Option<std::path::PathBuf>,
    /// Directory watched for annotation patch files.
    #[arg(long)]
    patch_dir: Option<std::path::PathBuf>,
    /// Output rubric file (defaults to overwriting --rubrics).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Iteration log (JSONL).
    #[arg(long)]
    log: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    batch_success: usize,
    #[arg(long, default_value_t = 8)]
    batch_failure: usize,
    #[arg(long, default_value_t = 8)]
    batch_paired: usize,
    #[arg(long, default_value_t = 0.8)]
    auc_threshold: f64,
    #[arg(long, default_value_t = 0.75)]
    kappa_threshold: f64,
    /// Judge backend: feature or external.
    #[arg(long, default_value = "feature")]
    judge: String,
    /// Prompt template directory (single_insight.txt, ...).
    #[arg(long)]
    prompts: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: std::path::PathBuf,
    #[arg(long)]
    tasks: std::path::PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Rollouts per task (must cover both k and the 3-run Pass@1).
    #[arg(long, default_value_t = 3)]
    rollouts: usize,
    #[arg(long, default_value_t = 8)]
    max_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Summary JSON output.
    #[arg(long)]
    out: std::path::PathBuf,
    /// Also run the anchor ablation and fill ablation_gap.
    #[arg(long, default_value_t = false)]
    with_ablation: bool,
    /// Score plans against these rubrics and emit per-dimension means.
    #[arg(long)]
    rubrics: Option<std::path::PathBuf>,
    /// Output path for the per-dimension plan scores.
    #[arg(long)]
    plan_scores: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Ablation kind; only `anchor` is defined.
    #[arg(long, default_value = "anchor")]
    kind: String,
    #[arg(long)]
    checkpoint: std::path::PathBuf,
    #[arg(long)]
    tasks: std::path::PathBuf,
    /// Results CSV {task_id, condition, pass_at_8}.
    #[arg(long)]
    out: std::path::PathBuf,
    /// Optional summary JSON with per-condition means and the gap.
    #[arg(long)]
    summary: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    base_rollouts: usize,
    #[arg(long, default_value_t = 8)]
    continuations: usize,
    #[arg(long, default_value_t = 8)]
    max_steps: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

#[derive(Args)]
struct PlotArgs {
    /// Metrics CSV from train; renders reward/tool-call/pass curves.
    #[arg(long)]
    metrics: Option<std::path::PathBuf>,
    /// Plan-score JSON from eval; renders the rubric radar chart.
    #[arg(long)]
    radar: Option<std::path::PathBuf>,
    #[arg(long)]
    out: std::path::PathBuf,
}

fn main() {
    let cli = Cli::parse();
    anchorlab::parallel::configure_jobs(cli.jobs);
    let result = match cli.command {
        Command::GenEnv(args) => commands::gen_env(args),
        Command::Train(args) => commands::train(args),
        Command::LearnRubrics(args) => commands::learn_rubrics(args),
        Command::Eval(args) => commands::eval(args),
        Command::Ablate(args) => commands::ablate(args),
        Command::Plot(args) => commands::plot(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
