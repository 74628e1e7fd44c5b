use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use expdesign_core::agents::{AgentKind, FeedbackMode};
use expdesign_core::data::{load_pool, LoadOptions, Metric};
use expdesign_core::harness::{self, ExperimentConfig, LlmBackendKind, RunInputs, RunResult};
use expdesign_core::llm::{HttpBackend, LlmBackend, ScriptedBackend};

#[derive(Parser)]
#[command(name = "expdesign", version, about = "Closed-loop batched experiment design over a candidate pool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded experiments and write a report.
    Run(RunArgs),
    /// Load a dataset and report ingestion problems.
    Validate(ValidateArgs),
    /// Re-aggregate a previous report directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        include_incomplete: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FeedbackArg {
    True,
    Randomized,
    /// True and randomized runs over the same seeds.
    Paired,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    centers: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    feedback: Option<FeedbackArg>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = Metric::default())]
    metric: Metric,
    #[arg(long)]
    expected_dim: Option<usize>,
}

/// Exit 1: bad config or dataset. Exit 2: a run failed or ended early.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
        Command::Report {
            input,
            include_incomplete,
        } => report(&input, include_incomplete),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn apply_overrides(config: &mut ExperimentConfig, args: &RunArgs) {
    if let Some(v) = args.agent {
        config.agent = v;
    }
    if let Some(v) = args.rounds {
        config.rounds = v;
    }
    if let Some(v) = args.batch {
        config.batch_size = v;
    }
    if let Some(v) = args.centers {
        config.num_centers = v;
    }
    if let Some(v) = args.runs {
        config.runs = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    match args.feedback {
        Some(FeedbackArg::True) | Some(FeedbackArg::Paired) => config.feedback = FeedbackMode::True,
        Some(FeedbackArg::Randomized) => config.feedback = FeedbackMode::Randomized,
        None => {}
    }
    if let Some(v) = &args.dataset {
        config.dataset.measurements = v.clone();
    }
    if let Some(v) = &args.embeddings {
        config.dataset.embeddings = v.clone();
    }
    if let Some(v) = args.metric {
        config.dataset.metric = v;
    }
    if let Some(v) = &args.fixtures {
        config.llm.backend = LlmBackendKind::Scripted;
        config.llm.fixtures = Some(v.clone());
    }
}

fn backend(config: &ExperimentConfig) -> anyhow::Result<Option<Box<dyn LlmBackend>>> {
    if !config.agent.uses_llm() {
        return Ok(None);
    }
    let llm = &config.llm;
    Ok(Some(match llm.backend {
        LlmBackendKind::Scripted => {
            let dir = llm.fixtures.as_deref().context("llm.fixtures is not set")?;
            Box::new(ScriptedBackend::from_dir(dir)?)
        }
        LlmBackendKind::Http => {
            let endpoint = llm.endpoint.clone().context("llm.endpoint is not set")?;
            Box::new(HttpBackend::from_env(
                endpoint,
                llm.model.clone(),
                Duration::from_secs(llm.timeout_secs),
            ))
        }
    }))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut config = ExperimentConfig::from_file(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))
        .map_err(Failure::Config)?;
    apply_overrides(&mut config, &args);
    let paired = matches!(args.feedback, Some(FeedbackArg::Paired));

    let mut modes = vec![config.feedback];
    if paired {
        modes.push(FeedbackMode::Randomized);
    }
    for &mode in &modes {
        let c = ExperimentConfig {
            feedback: mode,
            ..config.clone()
        };
        c.validate().map_err(|e| Failure::Config(e.into()))?;
    }
    let pool = config
        .dataset
        .load()
        .context("loading dataset")
        .map_err(Failure::Config)?;
    let llm = backend(&config).map_err(Failure::Config)?;
    log::info!(
        "pool of {} candidates, {} hits, dim {}",
        pool.len(),
        pool.hit_policy().hit_count(),
        pool.dim()
    );

    let mut inputs = RunInputs::new(&pool);
    if let Some(b) = llm.as_deref() {
        inputs = inputs.with_llm(b);
    }
    let mut groups: Vec<Vec<RunResult>> = Vec::new();
    for mode in modes {
        let c = ExperimentConfig {
            feedback: mode,
            ..config.clone()
        };
        let runs = harness::run_all(&c, inputs).map_err(|e| Failure::Run(e.into()))?;
        groups.push(runs);
    }
    let report = harness::write_report(&args.out, &groups, config.include_incomplete)
        .context("writing report")
        .map_err(Failure::Run)?;

    for s in &report.summaries {
        println!(
            "{} {} feedback={}: mean {:.2} std {:.2} over {} runs ({} incomplete excluded)",
            s.agent, s.dataset, s.feedback, s.mean_final, s.std_final, s.runs, s.excluded_incomplete
        );
    }
    if let Some(p) = &report.paired {
        println!(
            "paired over {} seeds: true {:.2} randomized {:.2} difference {:.2} (std {:.2})",
            p.pairs, p.mean_true, p.mean_randomized, p.mean_difference, p.std_difference
        );
    }
    let failed: Vec<String> = groups
        .iter()
        .flatten()
        .filter(|r| !r.complete)
        .map(|r| format!("run {} ({}): {}", r.run, r.feedback, r.error.as_deref().unwrap_or("incomplete")))
        .collect();
    if !failed.is_empty() {
        return Err(Failure::Run(anyhow::anyhow!("{} run(s) incomplete: {}", failed.len(), failed.join("; "))));
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let opts = LoadOptions {
        expected_dim: args.expected_dim,
        metric: args.metric,
        ..LoadOptions::default()
    };
    let pool = load_pool(&args.dataset, &args.embeddings, &opts)
        .context("dataset failed validation")
        .map_err(Failure::Config)?;
    println!(
        "ok: {} candidates, dim {}, {} hits, metric {}",
        pool.len(),
        pool.dim(),
        pool.hit_policy().hit_count(),
        pool.metric()
    );
    Ok(())
}

fn report(dir: &Path, include_incomplete: bool) -> Result<(), Failure> {
    let groups = harness::read_runs(dir)
        .context("reading runs.json")
        .map_err(Failure::Config)?;
    let summaries = groups
        .iter()
        .map(|g| harness::aggregate_runs(g, include_incomplete))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Config(e.into()))?;
    for s in &summaries {
        println!("{}", serde_json::to_string(s).expect("summary serializes"));
    }
    Ok(())
}
