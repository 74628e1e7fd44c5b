//! The N-round experiment loop, multi-run aggregation and report files.

mod config;
mod report;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    DatasetConfig, ExperimentConfig, LlmBackendKind, LlmConfig, Persistence, PromptConfig, RandomizationConfig,
};
pub use report::{
    aggregate_runs, compare_paired, read_runs, write_report, PairedComparison, Report, Summary, SCHEMA_VERSION,
};

use crate::agents::{
    randomize_feedback, select_batch, AgentKind, AgentSettings, Embedder, Feedback, FeedbackMode, FeedbackRecord,
    SelectionContext,
};
use crate::data::CandidatePool;
use crate::error::Result;
use crate::llm::LlmBackend;
use crate::memory::CandidateMemory;
use crate::trace::{Trace, TraceEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub selected: Vec<String>,
    pub hits: Vec<String>,
    pub cumulative_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub agent: AgentKind,
    pub dataset: String,
    pub feedback: FeedbackMode,
    pub run: usize,
    pub seed: u64,
    pub rounds_planned: usize,
    pub batch_size: usize,
    pub rounds: Vec<RoundRecord>,
    pub complete: bool,
    pub error: Option<String>,
    pub warnings: Vec<String>,
    pub trace_path: Option<PathBuf>,
    #[serde(skip)]
    pub trace: Trace,
}

impl RunResult {
    pub fn final_hits(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.cumulative_hits)
    }

    pub fn trajectory(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.cumulative_hits).collect()
    }

    pub fn selected_count(&self) -> usize {
        self.rounds.iter().map(|r| r.selected.len()).sum()
    }
}

/// Per-run random streams. Stream 0 of the run seed drives the agent;
/// stream `r` drives feedback randomization for round `r`.
pub fn run_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn feedback_rng(seed: u64, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng
}

/// Everything a run needs besides the config.
#[derive(Clone, Copy)]
pub struct RunInputs<'a> {
    pub pool: &'a CandidatePool,
    pub llm: Option<&'a dyn LlmBackend>,
    pub embedder: Option<&'a dyn Embedder>,
}

impl<'a> RunInputs<'a> {
    pub fn new(pool: &'a CandidatePool) -> Self {
        Self {
            pool,
            llm: None,
            embedder: None,
        }
    }

    pub fn with_llm(mut self, llm: &'a dyn LlmBackend) -> Self {
        self.llm = Some(llm);
        self
    }
}

/// Randomizes `truth` for `round` under `cfg`. `shown` holds what earlier
/// rounds displayed and is only consulted in sticky mode.
fn randomized_view(
    truth: &Feedback,
    shown: &mut Feedback,
    cfg: &RandomizationConfig,
    seed: u64,
    round: usize,
) -> Feedback {
    let mut rng = feedback_rng(seed, round);
    match cfg.persistence {
        Persistence::Fresh => randomize_feedback(truth, cfg.level1, cfg.level2, cfg.labels, &mut rng),
        Persistence::Sticky => {
            let fresh = Feedback::new(truth.records[shown.len()..].to_vec());
            let fresh = randomize_feedback(&fresh, cfg.level1, cfg.level2, cfg.labels, &mut rng);
            shown.records.extend(fresh.records);
            shown.clone()
        }
    }
}

/// Runs one seeded experiment. LLM failures end the run early with
/// `complete == false`; other errors propagate.
pub fn run_experiment(config: &ExperimentConfig, inputs: RunInputs<'_>, run: usize) -> Result<RunResult> {
    let settings = config.agent_settings(inputs.pool)?;
    run_with_settings(config, &settings, inputs, run)
}

pub fn run_with_settings(
    config: &ExperimentConfig,
    settings: &AgentSettings,
    inputs: RunInputs<'_>,
    run: usize,
) -> Result<RunResult> {
    let pool = inputs.pool;
    let seed = config.seed.wrapping_add(run as u64);
    let mut rng = run_rng(seed);
    let mut memory = CandidateMemory::new(pool);
    let mut trace = Trace::default();
    let mut truth = Feedback::default();
    let mut shown = Feedback::default();
    let mut rounds = Vec::with_capacity(config.rounds);
    let mut warnings = Vec::new();
    let mut cumulative = 0;
    let mut error = None;

    if config.rounds * config.batch_size > pool.len() {
        let msg = format!(
            "budget {}x{} exceeds pool of {} candidates",
            config.rounds,
            config.batch_size,
            pool.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    for round in 1..=config.rounds {
        let randomize = round > 1 && config.feedback == FeedbackMode::Randomized;
        let history = if round == 1 {
            None
        } else if randomize {
            Some(randomized_view(&truth, &mut shown, &config.randomization, seed, round))
        } else {
            Some(truth.clone())
        };
        trace.push(TraceEvent::RoundStart {
            round,
            feedback: history
                .as_ref()
                .map(|h| h.records.iter().map(|r| r.name.clone()).collect())
                .unwrap_or_default(),
            randomized: randomize,
        });

        if memory.unexplored_count() == 0 {
            let msg = format!("round {round}: pool exhausted, nothing selected");
            trace.push(TraceEvent::Warning {
                round,
                message: msg.clone(),
            });
            warnings.push(msg);
            rounds.push(RoundRecord {
                round,
                selected: Vec::new(),
                hits: Vec::new(),
                cumulative_hits: cumulative,
            });
            continue;
        }

        let mut ctx = SelectionContext {
            round,
            history: history.as_ref(),
            rng: &mut rng,
            llm: inputs.llm,
            embedder: inputs.embedder,
            trace: &mut trace,
        };
        let picked = match select_batch(settings, &mut memory, &mut ctx) {
            Ok(p) => p,
            Err(crate::error::Error::Llm(e)) => {
                trace.push(TraceEvent::Abort {
                    round,
                    error: e.to_string(),
                });
                error = Some(format!("round {round}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        if picked.len() < config.batch_size {
            let msg = format!("round {round}: selected {} of {}", picked.len(), config.batch_size);
            trace.push(TraceEvent::Warning {
                round,
                message: msg.clone(),
            });
            warnings.push(msg);
        }

        let selected = pool.names(&picked);
        let hits: Vec<String> = picked
            .iter()
            .filter(|&&i| pool.is_hit_index(i))
            .map(|&i| pool.name(i).to_string())
            .collect();
        cumulative += hits.len();
        for &i in &picked {
            truth.push(FeedbackRecord {
                name: pool.name(i).to_string(),
                score: pool.score(i),
                hit: pool.is_hit_index(i),
            });
        }
        trace.push(TraceEvent::Selection {
            round,
            names: selected.clone(),
            hits: hits.clone(),
        });
        rounds.push(RoundRecord {
            round,
            selected,
            hits,
            cumulative_hits: cumulative,
        });
    }

    Ok(RunResult {
        agent: config.agent,
        dataset: config.dataset.name.clone(),
        feedback: config.feedback,
        run,
        seed,
        rounds_planned: config.rounds,
        batch_size: config.batch_size,
        complete: error.is_none(),
        rounds,
        error,
        warnings,
        trace_path: None,
        trace,
    })
}

/// Runs `config.runs` seeded runs concurrently and returns them in run order.
pub fn run_all(config: &ExperimentConfig, inputs: RunInputs<'_>) -> Result<Vec<RunResult>> {
    let settings = config.agent_settings(inputs.pool)?;
    let results: Vec<Result<RunResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.runs)
            .map(|run| {
                let settings = &settings;
                s.spawn(move || run_with_settings(config, settings, inputs, run))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

/// Checks that the feedback each round saw is exactly the union of earlier
/// selections, reading both from the trace.
pub fn feedback_matches_history(trace: &Trace) -> bool {
    let mut selected: Vec<String> = Vec::new();
    for event in &trace.events {
        match event {
            TraceEvent::RoundStart { feedback, .. } => {
                if feedback != &selected {
                    return false;
                }
            }
            TraceEvent::Selection { names, .. } => selected.extend(names.iter().cloned()),
            _ => {}
        }
    }
    true
}
