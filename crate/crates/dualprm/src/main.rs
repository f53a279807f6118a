//! Multi-command pipeline front end.
//!
//! `synth` materializes a synthetic corpus, `label` rebuilds dual labels
//! for its trajectories, `train` fits the two-head step reward model,
//! `eval` benchmarks scoring strategies on fresh candidates, and
//! `report` prints the resulting numbers as a table. All commands read
//! one JSON config (see `config::RunConfig`); a handful of flags
//! override specific config fields. Every command is deterministic given
//! the same config and seed: output files are byte-identical across
//! reruns.
//!
//! Exit codes: 0 success · 2 config/validation · 3 I/O or data ·
//! 4 labeling failure · 5 training divergence · 6 missing scores.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dualprm::backend::{BackendClient, BackendCompleter};
use dualprm::config::{CompleterKind, ConfigError, RunConfig, ScorerKind};
use dualprm::corpus::{
    problem_map, read_jsonl, read_problems_jsonl, write_atomic, write_jsonl,
    write_problems_jsonl, AnswerComparator, Trajectory,
};
use dualprm::evaluation::{
    export_reward_scatter, run_benchmark, CandidateSet, EvalError, EvalParams, EvalReport,
    ScoredCandidate,
};
use dualprm::fusion::{Aggregation, FusionStrategy};
use dualprm::labeling::{build_dataset, Completer, StepScorer};
use dualprm::rewardnet::{
    batch_loss, holdout_split, train, Checkpoint, ModelStepScorer, ScoreHead, TrainError,
    TrainExample, TrainMode,
};
use dualprm::synthworld::{
    LatentCorrectnessScorer, PosteriorCorrectnessScorer, SynthCompleter, World,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_LABELING: u8 = 4;
const EXIT_DIVERGED: u8 = 5;
const EXIT_MISSING_SCORES: u8 = 6;

#[derive(Debug)]
enum CliError {
    /// Bad config or flag values (exit 2).
    Config(String),
    /// Unreadable/unwritable files or malformed data files (exit 3).
    Io(String),
    /// A record could not be labeled (exit 4).
    Labeling(String),
    /// Training left the finite parameter band (exit 5).
    Diverged(String),
    /// A requested scorer has no scores to give, e.g. no checkpoint (exit 6).
    MissingScores(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Labeling(_) => EXIT_LABELING,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::MissingScores(_) => EXIT_MISSING_SCORES,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m)
            | CliError::Io(m)
            | CliError::Labeling(m)
            | CliError::Diverged(m)
            | CliError::MissingScores(m) => f.write_str(m),
        }
    }
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn io_err(e: impl fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn from_config_error(e: ConfigError) -> CliError {
    match e {
        ConfigError::Io { .. } => io_err(e),
        ConfigError::Parse { .. } | ConfigError::Invalid { .. } => config_err(e),
    }
}

fn from_train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
        // The collapse rejection is a validation outcome, not a crash.
        TrainError::HardLabelCollapse | TrainError::InvalidConfig { .. } => config_err(e),
        TrainError::EmptyDataset | TrainError::BadExample(_) => io_err(e),
    }
}

fn from_eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::UnscoredCandidate { .. } => CliError::MissingScores(e.to_string()),
        other => io_err(other),
    }
}

#[derive(Parser)]
#[command(
    name = "dualprm",
    version,
    about = "Dual-reward process supervision: synthesize corpora, label steps, \
             train step reward models, and benchmark reranking strategies.",
    after_help = "Flag-to-config mapping: --seed=global_seed, \
                  --jobs=backend.max_concurrency, --mode=train.mode, \
                  --strategy=eval.strategies, --aggregation=eval.aggregation, \
                  --emit-scatter=eval.emit_scatter, --replay=backend.replay."
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, default_value = "config.json", value_name = "PATH")]
    config: PathBuf,
    /// Override global_seed (re-derives every component seed).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Cap concurrent backend requests (overrides backend.max_concurrency).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Training mode: multi_head | single_head_product | correctness_only | potential_only.
    #[arg(long, global = true, value_name = "MODE")]
    mode: Option<String>,
    /// Comma-separated strategies: correctness_only,potential_only,compound,product_label_model.
    #[arg(long, global = true, value_name = "CSV")]
    strategy: Option<String>,
    /// Step aggregation: min_step | product_steps | last_step | mean_step.
    #[arg(long, global = true, value_name = "AGG")]
    aggregation: Option<String>,
    /// Also write per-candidate reward pairs to scatter CSV during eval.
    #[arg(long, global = true)]
    emit_scatter: bool,
    /// Answer backend requests from the audit log; zero network traffic.
    #[arg(long, global = true)]
    replay: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus: problems plus oracle-labeled trajectories.
    Synth,
    /// Rebuild labels for the corpus trajectories (Monte-Carlo potential +
    /// correctness pseudo-labels) into the dataset file.
    Label,
    /// Fit the step reward model on the labeled dataset; writes a
    /// checkpoint and a per-epoch loss CSV.
    Train,
    /// Sample fresh candidates, score them, and benchmark the configured
    /// strategies into the report file.
    Eval,
    /// Print the evaluation report as a table.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Label => cmd_label(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Eval => cmd_eval(&cfg),
        Command::Report => cmd_report(&cfg),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&cli.config).map_err(from_config_error)?;
    apply_overrides(cli, &mut cfg)?;
    cfg.finalize().map_err(from_config_error)?;
    Ok(cfg)
}

fn apply_overrides(cli: &Cli, cfg: &mut RunConfig) -> Result<(), CliError> {
    if let Some(seed) = cli.seed {
        cfg.global_seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        if let Some(backend) = &mut cfg.backend {
            backend.max_concurrency = jobs;
        }
    }
    if let Some(mode) = &cli.mode {
        cfg.train.mode = TrainMode::from_id(mode).ok_or_else(|| {
            config_err(format!(
                "invalid config: train.mode: unknown mode {mode:?} (expected multi_head, \
                 single_head_product, correctness_only, or potential_only)"
            ))
        })?;
    }
    if let Some(csv) = &cli.strategy {
        let mut strategies = Vec::new();
        for part in csv.split(',') {
            let id = part.trim();
            if id.is_empty() {
                continue;
            }
            let strategy = FusionStrategy::from_id(id).ok_or_else(|| {
                config_err(format!(
                    "invalid config: eval.strategies: unknown strategy {id:?} (expected \
                     correctness_only, potential_only, compound, or product_label_model)"
                ))
            })?;
            if !strategies.contains(&strategy) {
                strategies.push(strategy);
            }
        }
        cfg.eval.strategies = strategies;
    }
    if let Some(agg) = &cli.aggregation {
        cfg.eval.aggregation = Aggregation::from_id(agg).ok_or_else(|| {
            config_err(format!(
                "invalid config: eval.aggregation: unknown aggregation {agg:?} (expected \
                 min_step, product_steps, last_step, or mean_step)"
            ))
        })?;
    }
    if cli.emit_scatter {
        cfg.eval.emit_scatter = true;
    }
    if cli.replay {
        match &mut cfg.backend {
            Some(backend) => backend.replay = true,
            None => {
                return Err(config_err(
                    "invalid config: backend: --replay requires a backend section",
                ))
            }
        }
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| io_err(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    Ok(())
}

fn build_world(cfg: &RunConfig) -> Result<World, CliError> {
    World::new(cfg.world.clone()).map_err(config_err)
}

// ---------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------

fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let world = build_world(cfg)?;
    let problems = world.problems().map_err(io_err)?;
    let problems_path = cfg.problems_path();
    ensure_parent(&problems_path)?;
    write_problems_jsonl(&problems, &problems_path).map_err(io_err)?;

    let per_problem = cfg.eval.n_candidates as u64;
    let mut records = Vec::with_capacity(problems.len() * cfg.eval.n_candidates);
    for index in 0..problems.len() {
        for sample in 0..per_problem {
            records.push(world.sample_labeled(index, "train", sample).map_err(io_err)?);
        }
    }
    let trajectories_path = cfg.trajectories_path();
    ensure_parent(&trajectories_path)?;
    write_jsonl(&records, &trajectories_path).map_err(io_err)?;

    println!(
        "synth: wrote {} problems to {}",
        problems.len(),
        problems_path.display()
    );
    println!(
        "synth: wrote {} oracle-labeled trajectories to {}",
        records.len(),
        trajectories_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// label
// ---------------------------------------------------------------------

fn cmd_label(cfg: &RunConfig) -> Result<(), CliError> {
    let world = build_world(cfg)?;
    let problems = read_problems_jsonl(&cfg.problems_path()).map_err(io_err)?;
    let problems = problem_map(&problems).map_err(io_err)?;
    let trajectories: Vec<Trajectory> = read_jsonl(&cfg.trajectories_path())
        .map_err(io_err)?
        .into_iter()
        .map(|r| r.trajectory)
        .collect();

    // The checkpoint and backend client must outlive the trait objects
    // borrowing them.
    let checkpoint = match cfg.mc.scorer {
        ScorerKind::Model => Some(
            Checkpoint::load(&cfg.checkpoint_path())
                .map_err(|e| CliError::MissingScores(e.to_string()))?,
        ),
        _ => None,
    };
    let client = match cfg.mc.completer {
        CompleterKind::Backend => Some(
            BackendClient::new(cfg.backend.clone().expect("validated: backend section present"))
                .map_err(|e| CliError::Labeling(e.to_string()))?,
        ),
        CompleterKind::Synthetic => None,
    };
    let features = world.feature_fn();
    let scorer: Box<dyn StepScorer + '_> = match cfg.mc.scorer {
        ScorerKind::OraclePosterior => Box::new(PosteriorCorrectnessScorer { world: &world }),
        ScorerKind::OracleLatent => Box::new(LatentCorrectnessScorer { world: &world }),
        ScorerKind::Model => Box::new(ModelStepScorer::new(
            &checkpoint.as_ref().expect("loaded above").params,
            &features,
            ScoreHead::Correctness,
        )),
    };
    let completer: Box<dyn Completer + '_> = match cfg.mc.completer {
        CompleterKind::Synthetic => Box::new(SynthCompleter::new(&world, cfg.mc_seed())),
        CompleterKind::Backend => Box::new(BackendCompleter {
            client: client.as_ref().expect("constructed above"),
            problems: &problems,
        }),
    };

    eprintln!(
        "label: relabeling {} trajectories ({} rollouts per step, {} completer)",
        trajectories.len(),
        cfg.mc.num_rollouts,
        match cfg.mc.completer {
            CompleterKind::Synthetic => "synthetic",
            CompleterKind::Backend => "backend",
        }
    );
    let labeled = build_dataset(
        &problems,
        &trajectories,
        &*completer,
        &*scorer,
        cfg.mc.num_rollouts,
        AnswerComparator::default(),
        cfg.mc.hard_potential,
    )
    .map_err(|e| CliError::Labeling(e.to_string()))?;

    let steps: usize = labeled.iter().map(|r| r.labels.len()).sum();
    eprintln!("label: {} trajectories labeled, {steps} steps", labeled.len());

    let dataset_path = cfg.dataset_path();
    ensure_parent(&dataset_path)?;
    // write_jsonl is atomic (temp file + rename), so a failed run never
    // leaves a partial dataset behind.
    write_jsonl(&labeled, &dataset_path).map_err(io_err)?;
    println!(
        "label: wrote {} labeled trajectories to {}",
        labeled.len(),
        dataset_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let world = build_world(cfg)?;
    let records = read_jsonl(&cfg.dataset_path()).map_err(io_err)?;
    let features = world.feature_fn();
    let examples: Vec<TrainExample> = records
        .iter()
        .map(|r| TrainExample::from_labeled(r, &features))
        .collect::<Result<_, _>>()
        .map_err(from_train_error)?;

    let outcome = train(&examples, &cfg.train).map_err(from_train_error)?;

    let checkpoint_path = cfg.checkpoint_path();
    ensure_parent(&checkpoint_path)?;
    Checkpoint::new(outcome.mode, cfg.train.seed, outcome.params.clone())
        .save(&checkpoint_path)
        .map_err(io_err)?;

    let mut csv = String::from("epoch,train_loss\n");
    for (epoch, loss) in outcome.loss_history.iter().enumerate() {
        csv.push_str(&format!("{epoch},{loss}\n"));
    }
    let loss_path = cfg.loss_history_path();
    ensure_parent(&loss_path)?;
    write_atomic(&loss_path, csv.as_bytes()).map_err(io_err)?;

    println!("train: {}", train_summary(&examples, cfg, &outcome));
    println!(
        "train: wrote checkpoint to {} and loss history to {}",
        checkpoint_path.display(),
        loss_path.display()
    );
    Ok(())
}

/// One-line summary with final train/holdout loss broken out per head.
fn train_summary(
    examples: &[TrainExample],
    cfg: &RunConfig,
    outcome: &dualprm::rewardnet::TrainOutcome,
) -> String {
    let (holdout_idx, train_idx) =
        holdout_split(examples.len(), cfg.train.seed, cfg.train.holdout_frac);
    let pick = |idx: &[usize]| -> Vec<TrainExample> {
        idx.iter().map(|&i| examples[i].clone()).collect()
    };
    let train_set = pick(&train_idx);
    let holdout_set = pick(&holdout_idx);
    // Per-head readout: scoring a split under a single-head mode yields
    // exactly that head's loss.
    let head_modes: &[(&str, TrainMode)] = match outcome.mode {
        TrainMode::MultiHead => &[
            ("correctness", TrainMode::CorrectnessOnly),
            ("potential", TrainMode::PotentialOnly),
        ],
        TrainMode::CorrectnessOnly => &[("correctness", TrainMode::CorrectnessOnly)],
        TrainMode::PotentialOnly => &[("potential", TrainMode::PotentialOnly)],
        TrainMode::SingleHeadProduct => &[("product", TrainMode::SingleHeadProduct)],
    };
    let describe = |set: &[TrainExample]| -> String {
        head_modes
            .iter()
            .map(|&(name, mode)| format!("{name}={:.6}", batch_loss(&outcome.params, set, mode)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut line = format!(
        "mode={} epochs={} examples={} (train={}, holdout={}) train[{}]",
        outcome.mode,
        outcome.loss_history.len(),
        examples.len(),
        outcome.train_count,
        outcome.holdout_count,
        describe(&train_set),
    );
    if holdout_set.is_empty() {
        line.push_str(" holdout[none]");
    } else {
        line.push_str(&format!(" holdout[{}]", describe(&holdout_set)));
    }
    line
}

// ---------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------

fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let world = build_world(cfg)?;
    let checkpoint = match cfg.eval.scorer {
        ScorerKind::Model => Some(
            Checkpoint::load(&cfg.checkpoint_path())
                .map_err(|e| CliError::MissingScores(e.to_string()))?,
        ),
        _ => None,
    };
    let features = world.feature_fn();
    let model = checkpoint
        .as_ref()
        .map(|c| ModelStepScorer::new(&c.params, &features, ScoreHead::Compound));

    let mut sets = Vec::with_capacity(cfg.world.num_problems);
    for index in 0..cfg.world.num_problems {
        let problem = world.problem(index).map_err(io_err)?;
        let mut candidates = Vec::with_capacity(cfg.eval.n_candidates);
        for sample in 0..cfg.eval.n_candidates as u64 {
            // Fresh candidates from the "eval" stream, disjoint from the
            // "train" stream the labeled corpus came from.
            let labeled = world.sample_labeled(index, "eval", sample).map_err(io_err)?;
            let rewards = match cfg.eval.scorer {
                ScorerKind::Model => model
                    .as_ref()
                    .expect("loaded above")
                    .rewards(&labeled.trajectory)
                    .map_err(|e| CliError::MissingScores(e.to_string()))?,
                ScorerKind::OraclePosterior => {
                    world.posterior_rewards(&labeled.trajectory).map_err(io_err)?
                }
                ScorerKind::OracleLatent => {
                    world.latent_rewards(&labeled.trajectory).map_err(io_err)?
                }
            };
            candidates.push(
                ScoredCandidate::new(labeled.trajectory, rewards, Some(labeled.labels))
                    .map_err(from_eval_error)?,
            );
        }
        sets.push(CandidateSet::new(problem, candidates).map_err(from_eval_error)?);
    }

    let params = EvalParams {
        aggregation: cfg.eval.aggregation,
        order: cfg.eval.fusion_order,
        comparator: AnswerComparator::default(),
    };
    let reports = run_benchmark(&sets, &cfg.eval.strategies, &params).map_err(from_eval_error)?;

    let report_path = cfg.report_path();
    ensure_parent(&report_path)?;
    let mut body = serde_json::to_string_pretty(&reports).map_err(io_err)?;
    body.push('\n');
    write_atomic(&report_path, body.as_bytes()).map_err(io_err)?;

    for report in &reports {
        println!(
            "eval: {} best_of_n={:.4} maj@k={:.4} pass@1={:.4} pass@k={:.4}",
            report.strategy,
            report.best_of_n_accuracy,
            report.maj_at_k,
            report.pass_at_1,
            report.pass_at_k
        );
    }
    println!("eval: wrote {} reports to {}", reports.len(), report_path.display());

    if cfg.eval.emit_scatter {
        // The scatter's `chosen` column follows the compound strategy
        // when it is benchmarked, else the first configured strategy.
        let strategy = if cfg.eval.strategies.contains(&FusionStrategy::Compound) {
            FusionStrategy::Compound
        } else {
            cfg.eval.strategies[0]
        };
        let scatter_path = cfg.scatter_path();
        ensure_parent(&scatter_path)?;
        let rows =
            export_reward_scatter(&sets, strategy, &params, &scatter_path).map_err(from_eval_error)?;
        println!(
            "eval: wrote {rows} scatter rows ({}) to {}",
            strategy.id(),
            scatter_path.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn cmd_report(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg.report_path();
    let raw = std::fs::read_to_string(&path)
        .map_err(|e| io_err(format!("cannot read report {}: {e}", path.display())))?;
    let reports: Vec<EvalReport> = serde_json::from_str(&raw)
        .map_err(|e| io_err(format!("report {} is not valid: {e}", path.display())))?;
    if reports.is_empty() {
        println!("report: no strategies evaluated");
        return Ok(());
    }
    let n = &reports[0];
    println!(
        "report: {} problems x {} candidates, aggregation={}, order={}",
        n.n_problems, n.n_candidates, n.aggregation, n.fusion_order
    );
    println!(
        "{:<20} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "strategy", "best_of_n", "maj@k", "pass@1", "pass@k", "f1", "pear_all", "pear_corr"
    );
    for r in &reports {
        println!(
            "{:<20} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9} {:>9} {:>9}",
            r.strategy,
            r.best_of_n_accuracy,
            r.maj_at_k,
            r.pass_at_1,
            r.pass_at_k,
            fmt_opt(r.f1_overall),
            fmt_opt(r.pearson_all),
            fmt_opt(r.pearson_correct),
        );
    }
    Ok(())
}
