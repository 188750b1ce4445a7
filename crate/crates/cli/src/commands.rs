use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use anchorlab::env::{generate_corpus, generate_task, CorpusFile, GenParams};
use anchorlab::evaluation::{
    anchor_ablation, evaluate, pass_at_1_averaged, pass_at_k, score_policy_plans, tool_call_stats,
    AblationConfig, EvalSummary, FirstStepKind,
};
use anchorlab::policy::PolicyParams;
use anchorlab::reward::{HttpLlmClient, JudgeBackend, RubricSet};
use anchorlab::rubric::{
    learn_rubrics as run_learn_rubrics, read_insights, read_labeled_plans, LoopConfig,
    PromptTemplates, Thresholds,
};
use anchorlab::trainer::{run_epochs, Algo, ClipConfig, EpochMetrics, TrainOptions, TrainSetup};

use crate::{AblateArgs, EvalArgs, GenEnvArgs, LearnRubricsArgs, PlotArgs, TrainArgs};

pub fn gen_env(args: GenEnvArgs) -> Result<()> {
    let params = GenParams::new(args.pages, args.relations, args.branching);
    let corpus = generate_corpus(args.seed, &params)?;
    let tasks = (0..args.tasks)
        .map(|i| {
            generate_task(
                &corpus,
                args.hops,
                anchorlab::rng::derive_seed(args.seed, "task-batch", &[i as u64]),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    CorpusFile::new(&corpus, tasks).save(&args.out)?;
    println!(
        "wrote corpus with {} pages and {} tasks to {}",
        args.pages,
        args.tasks,
        args.out.display()
    );
    Ok(())
}

/// Resolved training configuration; a copy is written into the run
/// directory before the run starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedTrainConfig {
    pub algo: String,
    pub judge: String,
    pub init: String,
    #[serde(flatten)]
    pub options: TrainOptions,
    pub checkpoint_every: usize,
}

/// Optional config-file fields; flags take precedence, then env, then
/// the file, then built-in defaults.
#[derive(Debug, Default, Deserialize)]
struct TrainConfigFile {
    algo: Option<String>,
    judge: Option<String>,
    seed: Option<u64>,
    group_size: Option<usize>,
    learning_rate: Option<f64>,
    eps_low: Option<f64>,
    eps_high: Option<f64>,
    max_steps: Option<usize>,
    temperature: Option<f64>,
    batch_size: Option<usize>,
    stage1_epochs: Option<usize>,
    stage2_epochs: Option<usize>,
    kl_coeff: Option<f64>,
    checkpoint_every: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct TrainCheckpoint {
    version: u32,
    epoch_next: usize,
    params: PolicyParams,
}

fn judge_from_name(name: &str) -> Result<JudgeBackend> {
    match name {
        "feature" => Ok(JudgeBackend::feature()),
        "external" => {
            let client = HttpLlmClient::from_env()
                .context("external judge needs JUDGE_ENDPOINT and JUDGE_MODEL")?;
            Ok(JudgeBackend::External(Arc::new(client)))
        }
        other => bail!("unknown judge backend {other:?} (feature|external)"),
    }
}

fn load_params(init: &str, seed: u64) -> Result<PolicyParams> {
    match init {
        "guided" => Ok(PolicyParams::guided(seed)),
        "zeros" => Ok(PolicyParams::zeros()),
        path => PolicyParams::load(path)
            .with_context(|| format!("loading initial parameters from {path}")),
    }
}

fn write_metrics_row(file: &mut std::fs::File, m: &EpochMetrics) -> Result<()> {
    writeln!(
        file,
        "{},{:.6},{:.6},{:.6}",
        m.epoch, m.mean_reward, m.mean_tool_calls, m.pass_at_1_train
    )?;
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let file_cfg: TrainConfigFile = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
            .with_context(|| format!("parsing config file {}", path.display()))?,
        None => TrainConfigFile::default(),
    };
    // precedence: flags > env (judge only) > config file > defaults
    let env_judge = std::env::var("JUDGE_ENDPOINT").ok().map(|_| "external".to_string());
    let defaults = TrainOptions::default();
    let options = TrainOptions {
        seed: args.seed.or(file_cfg.seed).unwrap_or(defaults.seed),
        group_size: args
            .group_size
            .or(file_cfg.group_size)
            .unwrap_or(defaults.group_size),
        learning_rate: args
            .learning_rate
            .or(file_cfg.learning_rate)
            .unwrap_or(defaults.learning_rate),
        clip: ClipConfig {
            eps_low: args
                .eps_low
                .or(file_cfg.eps_low)
                .unwrap_or(defaults.clip.eps_low),
            eps_high: args
                .eps_high
                .or(file_cfg.eps_high)
                .unwrap_or(defaults.clip.eps_high),
        },
        max_steps: args
            .max_steps
            .or(file_cfg.max_steps)
            .unwrap_or(defaults.max_steps),
        temperature: args
            .temperature
            .or(file_cfg.temperature)
            .unwrap_or(defaults.temperature),
        batch_size: args
            .batch_size
            .or(file_cfg.batch_size)
            .unwrap_or(defaults.batch_size),
        stage1_epochs: args
            .stage1_epochs
            .or(file_cfg.stage1_epochs)
            .unwrap_or(defaults.stage1_epochs),
        stage2_epochs: args
            .stage2_epochs
            .or(file_cfg.stage2_epochs)
            .unwrap_or(defaults.stage2_epochs),
        kl_coeff: args.kl_coeff.or(file_cfg.kl_coeff).unwrap_or(defaults.kl_coeff),
    };
    let algo_name = if args.algo != "anchor-grpo" {
        args.algo.clone()
    } else {
        file_cfg.algo.unwrap_or_else(|| args.algo.clone())
    };
    let algo = Algo::parse(&algo_name)
        .with_context(|| format!("unknown --algo {algo_name:?}"))?;
    let judge_name = args
        .judge
        .or(env_judge)
        .or(file_cfg.judge)
        .unwrap_or_else(|| "feature".to_string());
    let judge = judge_from_name(&judge_name)?;
    let checkpoint_every = args
        .checkpoint_every
        .or(file_cfg.checkpoint_every)
        .unwrap_or(0);

    std::fs::create_dir_all(&args.out)?;
    let resolved = ResolvedTrainConfig {
        algo: algo.name().to_string(),
        judge: judge_name,
        init: args.init.clone(),
        options: options.clone(),
        checkpoint_every,
    };
    std::fs::write(
        args.out.join("resolved_config.json"),
        serde_json::to_string_pretty(&resolved)?,
    )?;

    let corpus_file = CorpusFile::load(&args.corpus)?;
    let corpus = corpus_file.corpus();
    let rubrics = RubricSet::seeded();
    let setup = TrainSetup {
        corpus: &corpus,
        tasks: &corpus_file.tasks,
        rubrics: &rubrics,
        judge: &judge,
    };

    let metrics_path = args.out.join("metrics.csv");
    let ckpt_path = args.out.join("checkpoint.json");
    let (mut params, start_epoch, mut kept_rows) = if args.resume && ckpt_path.exists() {
        let ckpt: TrainCheckpoint =
            serde_json::from_str(&std::fs::read_to_string(&ckpt_path)?)?;
        // keep only metric rows from before the checkpoint epoch
        let kept: Vec<String> = if metrics_path.exists() {
            std::fs::read_to_string(&metrics_path)?
                .lines()
                .skip(1)
                .filter(|l| {
                    l.split(',')
                        .next()
                        .and_then(|e| e.parse::<usize>().ok())
                        .map(|e| e < ckpt.epoch_next)
                        .unwrap_or(false)
                })
                .map(str::to_string)
                .collect()
        } else {
            Vec::new()
        };
        (ckpt.params, ckpt.epoch_next, kept)
    } else {
        (load_params(&args.init, options.seed)?, 0, Vec::new())
    };

    let mut metrics_file = std::fs::File::create(&metrics_path)?;
    writeln!(metrics_file, "epoch,mean_reward,mean_tool_calls,pass_at_1_train")?;
    for row in kept_rows.drain(..) {
        writeln!(metrics_file, "{row}")?;
    }

    let out_dir = args.out.clone();
    let history = run_epochs(
        &mut params,
        algo,
        &setup,
        &options,
        start_epoch,
        |m, p| {
            let _ = write_metrics_row(&mut metrics_file, m);
            let _ = metrics_file.flush();
            if checkpoint_every > 0 && (m.epoch + 1) % checkpoint_every == 0 {
                let ckpt = TrainCheckpoint {
                    version: 1,
                    epoch_next: m.epoch + 1,
                    params: p.clone(),
                };
                if let Ok(json) = serde_json::to_string(&ckpt) {
                    let _ = std::fs::write(out_dir.join("checkpoint.json"), json);
                }
            }
        },
    )?;

    let ckpt = TrainCheckpoint {
        version: 1,
        epoch_next: options.total_epochs(),
        params: params.clone(),
    };
    std::fs::write(&ckpt_path, serde_json::to_string(&ckpt)?)?;
    params.save(args.out.join("params.json"))?;
    if let Some(last) = history.last() {
        println!(
            "trained {} for {} epochs: train pass@1 {:.3}",
            algo.name(),
            options.total_epochs() - start_epoch,
            last.pass_at_1_train
        );
    }
    Ok(())
}

pub fn learn_rubrics(args: LearnRubricsArgs) -> Result<()> {
    let insights = read_insights(&args.insights)?;
    let mut labels = read_labeled_plans(&args.labels)?;
    if let Some(tasks_path) = &args.tasks {
        let corpus_file = CorpusFile::load(tasks_path)?;
        for label in &mut labels {
            if label.query_text.is_empty() {
                if let Some(task) = corpus_file.tasks.iter().find(|t| t.query.id == label.query_id)
                {
                    label.query_text = task.query.text.clone();
                }
            }
        }
    }
    let rubrics = RubricSet::load(&args.rubrics)?;
    let judge = judge_from_name(&args.judge)?;
    let backend = HttpLlmClient::from_env()
        .context("rubric updates need JUDGE_ENDPOINT and JUDGE_MODEL")
        .map(Arc::new);
    let templates = match &args.prompts {
        Some(dir) => PromptTemplates::load_dir(dir),
        None => PromptTemplates::default(),
    };
    let cfg = LoopConfig {
        max_iterations: args.max_iters,
        thresholds: Thresholds {
            auc: args.auc_threshold,
            kappa: args.kappa_threshold,
            judge_label: 0.5,
        },
        batch_sizes: (args.batch_success, args.batch_failure, args.batch_paired),
        seed: args.seed,
        patch_dir: args.patch_dir.clone(),
        log_path: args.log.clone(),
    };
    // validation alone needs no backend; defer the error until the
    // loop actually has to call one
    let (final_rubrics, log) = match backend {
        Ok(client) => run_learn_rubrics(
            rubrics,
            &insights,
            &labels,
            &judge,
            client.as_ref(),
            &templates,
            &cfg,
        )?,
        Err(e) => {
            let probe = anchorlab::rubric::validate_rubrics(
                &rubrics,
                &labels,
                &judge,
                &cfg.thresholds,
            )?;
            if !probe.passed {
                return Err(e);
            }
            run_learn_rubrics(
                rubrics,
                &insights,
                &labels,
                &judge,
                &anchorlab::reward::ScriptedClient::unreachable(),
                &templates,
                &cfg,
            )?
        }
    };
    let out = args.out.unwrap_or(args.rubrics);
    final_rubrics.save(&out)?;
    let last = log.last().expect("at least one iteration");
    println!(
        "rubrics v{} after {} iteration(s): auc {:.3} kappa {:.3} passed {}",
        final_rubrics.version,
        log.len(),
        last.auc,
        last.kappa,
        last.passed
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let corpus_file = CorpusFile::load(&args.tasks)?;
    let corpus = corpus_file.corpus();
    let params = PolicyParams::load(&args.checkpoint)?;
    let rollouts = args.rollouts.max(args.k).max(3);
    let runs = evaluate(
        &params,
        &corpus,
        &corpus_file.tasks,
        rollouts,
        args.max_steps,
        args.seed,
    );
    let stats = tool_call_stats(&runs);
    let ablation_gap = if args.with_ablation {
        let summary = anchor_ablation(
            &params,
            &corpus,
            &corpus_file.tasks,
            &AblationConfig::default(),
            anchorlab::rng::derive_seed(args.seed, "eval-ablation", &[]),
        )?;
        Some(summary.gap)
    } else {
        None
    };
    let summary = EvalSummary {
        pass_at_1: pass_at_1_averaged(&runs)?,
        pass_at_3: pass_at_k(&runs, args.k.min(rollouts))?,
        mean_tool_calls: stats.mean,
        ablation_gap,
    };
    std::fs::write(&args.out, serde_json::to_string_pretty(&summary)?)?;

    if let Some(rubrics_path) = &args.rubrics {
        let rubrics = RubricSet::load(rubrics_path)?;
        let means = score_policy_plans(
            &params,
            &corpus,
            &corpus_file.tasks,
            &rubrics,
            &JudgeBackend::feature(),
            args.seed,
        )?;
        let path = args
            .plan_scores
            .unwrap_or_else(|| args.out.with_file_name("plan_scores.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&means)?)?;
    }
    println!(
        "pass@1 {:.3} pass@{} {:.3} mean tool calls {:.2}",
        summary.pass_at_1, args.k, summary.pass_at_3, summary.mean_tool_calls
    );
    Ok(())
}

pub fn ablate(args: AblateArgs) -> Result<()> {
    if args.kind != "anchor" {
        bail!("unknown ablation kind {:?} (only `anchor` exists)", args.kind);
    }
    let corpus_file = CorpusFile::load(&args.tasks)?;
    let corpus = corpus_file.corpus();
    let params = PolicyParams::load(&args.checkpoint)?;
    let cfg = AblationConfig {
        base_rollouts: args.base_rollouts,
        continuations: args.continuations,
        max_steps: args.max_steps,
        temperature: args.temperature,
    };
    let summary = anchor_ablation(&params, &corpus, &corpus_file.tasks, &cfg, args.seed)?;
    let mut csv = String::from("task_id,condition,pass_at_8\n");
    for r in &summary.records {
        let condition = match r.condition {
            FirstStepKind::Correct => "correct",
            FirstStepKind::Incorrect => "incorrect",
        };
        csv.push_str(&format!("{},{},{:.6}\n", r.task_id, condition, r.pass_at_8));
    }
    std::fs::write(&args.out, csv)?;
    if let Some(path) = &args.summary {
        std::fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    }
    println!(
        "anchor ablation over {} tasks: correct {:.3} incorrect {:.3} gap {:.3}",
        summary.qualifying_tasks,
        summary.correct_mean_pass_at_8,
        summary.incorrect_mean_pass_at_8,
        summary.gap
    );
    Ok(())
}

pub fn plot(args: PlotArgs) -> Result<()> {
    match (&args.metrics, &args.radar) {
        (Some(metrics), None) => {
            let svg = crate::plot::curves_svg(&std::fs::read_to_string(metrics)?)?;
            std::fs::write(&args.out, svg)?;
        }
        (None, Some(radar)) => {
            let svg = crate::plot::radar_svg(&std::fs::read_to_string(radar)?)?;
            std::fs::write(&args.out, svg)?;
        }
        _ => bail!("pass exactly one of --metrics or --radar"),
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Shared helper for tests: deterministic artifact bytes.
#[allow(dead_code)]
pub fn file_bytes(path: &Path) -> Result<Vec<u8>> {
    Ok(std::fs::read(path)?)
}
