//! Selection policies. Every agent turns the current memory and history into
//! the round's batch and marks that batch explored.

mod coreset;
mod feedback;

use rand::seq::index::sample;
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use coreset::coreset_select;
pub use feedback::{fisher_yates, randomize_feedback, Feedback, FeedbackRecord, LabelShuffle};

use crate::error::{Error, Result};
use crate::llm::{
    chat_validated, parse_solution, render_prompt, Descriptor, Domain, LlmBackend, LlmError, PromptSpec,
    PromptVariant, RetryPolicy, SamplingParams,
};
use crate::memory::CandidateMemory;
use crate::surrogate::{median_heuristic, select_top_b, standardize, GpState, LinUcbState, RbfKernel, SurrogateParams};
use crate::trace::{Trace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Random,
    Coreset,
    Linucb,
    Gp,
    Bda,
    Llmnn,
    LlmnnNoexp,
    RandomCentroids,
}

impl AgentKind {
    pub const ALL: [AgentKind; 8] = [
        AgentKind::Random,
        AgentKind::Coreset,
        AgentKind::Linucb,
        AgentKind::Gp,
        AgentKind::Bda,
        AgentKind::Llmnn,
        AgentKind::LlmnnNoexp,
        AgentKind::RandomCentroids,
    ];

    pub fn uses_llm(self) -> bool {
        matches!(self, AgentKind::Bda | AgentKind::Llmnn | AgentKind::LlmnnNoexp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Random => "random",
            AgentKind::Coreset => "coreset",
            AgentKind::Linucb => "linucb",
            AgentKind::Gp => "gp",
            AgentKind::Bda => "bda",
            AgentKind::Llmnn => "llmnn",
            AgentKind::LlmnnNoexp => "llmnn-noexp",
            AgentKind::RandomCentroids => "random-centroids",
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    #[default]
    True,
    Randomized,
}

impl std::str::FromStr for FeedbackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" => Ok(FeedbackMode::True),
            "randomized" => Ok(FeedbackMode::Randomized),
            other => Err(Error::Config(format!("unknown feedback mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for FeedbackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeedbackMode::True => "true",
            FeedbackMode::Randomized => "randomized",
        })
    }
}

/// What the surrogates regress on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reward {
    #[default]
    Score,
    AbsScore,
}

impl Reward {
    fn apply(self, score: f64) -> f64 {
        match self {
            Reward::Score => score,
            Reward::AbsScore => score.abs(),
        }
    }
}

/// Maps proposed strings that are not in the pool (e.g. novel SMILES) into
/// the pool's embedding space.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Option<Vec<f64>>;
}

#[derive(Debug, Clone)]
pub struct AgentSettings {
    pub kind: AgentKind,
    pub batch_size: usize,
    pub num_centers: usize,
    pub surrogate: SurrogateParams,
    pub reward: Reward,
    pub descriptor: Descriptor,
    pub sampling: SamplingParams,
    pub retry: RetryPolicy,
    /// Re-prompts per round before BDA falls back to random top-up.
    pub bda_max_reprompts: usize,
}

impl AgentSettings {
    pub fn new(kind: AgentKind, batch_size: usize, num_centers: usize, descriptor: Descriptor) -> Self {
        Self {
            kind,
            batch_size,
            num_centers,
            surrogate: SurrogateParams::default(),
            reward: Reward::default(),
            descriptor,
            sampling: SamplingParams::default(),
            retry: RetryPolicy::default(),
            bda_max_reprompts: 5,
        }
    }
}

pub struct SelectionContext<'a> {
    pub round: usize,
    /// Feedback shown to the agent; `None` in round 1.
    pub history: Option<&'a Feedback>,
    pub rng: &'a mut dyn RngCore,
    pub llm: Option<&'a dyn LlmBackend>,
    pub embedder: Option<&'a dyn Embedder>,
    pub trace: &'a mut Trace,
}

/// Uniform sample of up to `k` unexplored candidates, in draw order. Does not
/// mark them.
pub fn random_unexplored(memory: &CandidateMemory<'_>, k: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let pool: Vec<usize> = memory.unexplored().collect();
    let k = k.min(pool.len());
    sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect()
}

/// Produces the round's batch and marks it explored.
pub fn select_batch(
    settings: &AgentSettings,
    memory: &mut CandidateMemory<'_>,
    ctx: &mut SelectionContext<'_>,
) -> Result<Vec<usize>> {
    if memory.unexplored_count() == 0 {
        return Err(Error::EmptyPool);
    }
    if settings.batch_size == 0 {
        return Err(Error::ZeroBatch);
    }
    let b = settings.batch_size;
    match settings.kind {
        AgentKind::Random => {
            let picked = random_unexplored(memory, b, ctx.rng);
            memory.mark_indices(&picked);
            Ok(picked)
        }
        AgentKind::Coreset => coreset_select(memory, b),
        AgentKind::Linucb => linucb_select(settings, memory, ctx),
        AgentKind::Gp => gp_select(settings, memory, ctx),
        AgentKind::RandomCentroids => {
            let centers = random_unexplored(memory, settings.num_centers.max(1), ctx.rng);
            let vectors: Vec<Vec<f64>> = centers.iter().map(|&i| memory.pool().embedding(i).to_vec()).collect();
            let mut picked = memory.allocate_batch(&vectors, b)?.selected();
            top_up(memory, &mut picked, b, ctx);
            Ok(picked)
        }
        AgentKind::Llmnn | AgentKind::LlmnnNoexp => llmnn_select(settings, memory, ctx),
        AgentKind::Bda => bda_select(settings, memory, ctx),
    }
}

fn top_up(memory: &mut CandidateMemory<'_>, picked: &mut Vec<usize>, batch: usize, ctx: &mut SelectionContext<'_>) {
    if picked.len() >= batch || memory.unexplored_count() == 0 {
        return;
    }
    let extra = random_unexplored(memory, batch - picked.len(), ctx.rng);
    memory.mark_indices(&extra);
    ctx.trace.push(TraceEvent::TopUp {
        round: ctx.round,
        names: memory.pool().names(&extra),
    });
    picked.extend(extra);
}

/// Observed (embedding, reward) pairs from the history.
fn observations(
    settings: &AgentSettings,
    memory: &CandidateMemory<'_>,
    history: Option<&Feedback>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let pool = memory.pool();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in history.map(|h| h.records.as_slice()).unwrap_or_default() {
        let i = pool
            .index_of(&r.name)
            .ok_or_else(|| Error::UnknownCandidate(r.name.clone()))?;
        xs.push(pool.embedding(i).to_vec());
        ys.push(settings.reward.apply(r.score));
    }
    if settings.surrogate.standardize {
        ys = standardize(&ys).0;
    }
    Ok((xs, ys))
}

fn scores_for_unexplored(memory: &CandidateMemory<'_>, f: impl FnOnce(&[&[f64]]) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    let pool = memory.pool();
    let open: Vec<usize> = memory.unexplored().collect();
    let rows: Vec<&[f64]> = open.iter().map(|&i| pool.embedding(i)).collect();
    let values = f(&rows)?;
    let mut scores = vec![f64::NEG_INFINITY; pool.len()];
    for (i, v) in open.into_iter().zip(values) {
        scores[i] = v;
    }
    Ok(scores)
}

fn linucb_select(
    settings: &AgentSettings,
    memory: &mut CandidateMemory<'_>,
    ctx: &mut SelectionContext<'_>,
) -> Result<Vec<usize>> {
    let p = &settings.surrogate;
    let (xs, ys) = observations(settings, memory, ctx.history)?;
    let mut state = LinUcbState::new(memory.pool().dim(), p.linucb_lambda, p.linucb_alpha)?;
    for (x, y) in xs.iter().zip(ys) {
        state.update(x, y)?;
    }
    let scores = scores_for_unexplored(memory, |rows| state.score_rows(rows.iter().copied()))?;
    select_top_b(&scores, memory, settings.batch_size)
}

fn gp_select(
    settings: &AgentSettings,
    memory: &mut CandidateMemory<'_>,
    ctx: &mut SelectionContext<'_>,
) -> Result<Vec<usize>> {
    let (xs, ys) = observations(settings, memory, ctx.history)?;
    if xs.is_empty() {
        // A flat prior would just take the first rows of the file.
        let picked = random_unexplored(memory, settings.batch_size, ctx.rng);
        memory.mark_indices(&picked);
        return Ok(picked);
    }
    let p = &settings.surrogate;
    let pool = memory.pool();
    let length_scale = match p.gp_length_scale {
        Some(l) => l,
        None => {
            let rows: Vec<&[f64]> = pool.embeddings().rows().collect();
            median_heuristic(&rows, 512)
        }
    };
    let signal_variance = p.gp_signal_variance.unwrap_or_else(|| {
        let (_, _, std) = standardize(&ys);
        let var = std * std;
        if ys.len() > 1 && var > 0.0 {
            var
        } else {
            1.0
        }
    });
    let kernel = RbfKernel {
        length_scale,
        signal_variance,
    };
    let mut gp = GpState::new(kernel, p.gp_noise_ratio * signal_variance, p.gp_beta)?;
    gp.fit(xs, ys)?;
    let scores = scores_for_unexplored(memory, |rows| gp.acquisition_rows(rows))?;
    select_top_b(&scores, memory, settings.batch_size)
}

fn llm_backend<'a>(ctx: &SelectionContext<'a>) -> Result<&'a dyn LlmBackend> {
    ctx.llm
        .ok_or_else(|| Error::Config("this agent needs an LLM backend".into()))
}

fn ask(
    settings: &AgentSettings,
    ctx: &mut SelectionContext<'_>,
    spec: &PromptSpec<'_>,
    expected: usize,
) -> Result<Vec<String>> {
    let backend = llm_backend(ctx)?;
    let prompt = render_prompt(spec)?;
    let round = ctx.round;
    ctx.trace.push(TraceEvent::Prompt {
        round,
        system: prompt.system.clone(),
        user: prompt.user.clone(),
    });
    let trace = &mut *ctx.trace;
    let (_, parsed) = chat_validated(
        backend,
        &prompt.system,
        &prompt.user,
        &settings.sampling,
        &settings.retry,
        |text| parse_solution(text, expected),
        |attempt, text| {
            trace.push(TraceEvent::Response {
                round,
                attempt,
                text: text.to_string(),
            })
        },
    )?;
    ctx.trace.push(TraceEvent::Parsed {
        round,
        names: parsed.solution.clone(),
        truncated: parsed.truncated,
        short: parsed.short,
    });
    Ok(parsed.solution)
}

fn llmnn_select(
    settings: &AgentSettings,
    memory: &mut CandidateMemory<'_>,
    ctx: &mut SelectionContext<'_>,
) -> Result<Vec<usize>> {
    let variant = if settings.kind == AgentKind::LlmnnNoexp {
        PromptVariant::LlmnnNoexp
    } else {
        PromptVariant::Llmnn
    };
    let n_c = settings.num_centers.max(1);
    let spec = PromptSpec {
        descriptor: &settings.descriptor,
        variant,
        round: ctx.round,
        batch_len: settings.batch_size,
        num_centers: n_c,
        feedback: ctx.history,
        followup: None,
    };
    let names = ask(settings, ctx, &spec, n_c)?;

    let pool = memory.pool();
    let mut centers = Vec::with_capacity(names.len());
    for name in &names {
        if let Some(i) = pool.index_of(name) {
            centers.push(pool.embedding(i).to_vec());
            continue;
        }
        let embedded = match (settings.descriptor.domain, ctx.embedder) {
            (Domain::Molecules, Some(e)) => e.embed(name).filter(|v| v.len() == pool.dim()),
            _ => None,
        };
        if let Some(v) = embedded {
            centers.push(v);
            continue;
        }
        let replacement = random_unexplored(memory, 1, ctx.rng);
        ctx.trace.push(TraceEvent::Substitution {
            round: ctx.round,
            proposed: name.clone(),
            replacement: replacement.first().map(|&i| pool.name(i).to_string()),
            reason: "not in pool".into(),
        });
        if let Some(&i) = replacement.first() {
            centers.push(pool.embedding(i).to_vec());
        }
    }
    let mut picked = memory.allocate_batch(&centers, settings.batch_size)?.selected();
    top_up(memory, &mut picked, settings.batch_size, ctx);
    Ok(picked)
}

fn bda_select(
    settings: &AgentSettings,
    memory: &mut CandidateMemory<'_>,
    ctx: &mut SelectionContext<'_>,
) -> Result<Vec<usize>> {
    let pool = memory.pool();
    let wanted = settings.batch_size.min(memory.unexplored_count());
    let label = match settings.descriptor.domain {
        Domain::Genes => "genes",
        Domain::Molecules => "molecules",
    };
    let mut picked: Vec<usize> = Vec::with_capacity(wanted);
    let mut rejected: Vec<String> = Vec::new();
    for attempt in 0..=settings.bda_max_reprompts {
        let followup = (attempt > 0).then(|| {
            format!(
                "Your previous answer contained {} names that are not in the library or were already tested: {}. Keep your valid picks and propose {} additional {label}, without repeating any of the names above.",
                rejected.len(),
                rejected.join(", "),
                wanted - picked.len()
            )
        });
        let spec = PromptSpec {
            descriptor: &settings.descriptor,
            variant: PromptVariant::Bda,
            round: ctx.round,
            batch_len: settings.batch_size,
            num_centers: settings.num_centers,
            feedback: ctx.history,
            followup,
        };
        let names = match ask(settings, ctx, &spec, settings.batch_size) {
            Ok(names) => names,
            Err(Error::Llm(LlmError::Exhausted { .. })) if attempt > 0 => break,
            Err(e) => return Err(e),
        };
        for name in names {
            if picked.len() == wanted {
                break;
            }
            let reason = match pool.index_of(&name) {
                None => "not in pool",
                Some(i) if memory.is_explored(i) && !picked.contains(&i) => "already explored",
                Some(i) if picked.contains(&i) => continue,
                Some(i) => {
                    picked.push(i);
                    memory.mark_indices(&[i]);
                    continue;
                }
            };
            ctx.trace.push(TraceEvent::Substitution {
                round: ctx.round,
                proposed: name.clone(),
                replacement: None,
                reason: reason.into(),
            });
            if !rejected.contains(&name) {
                rejected.push(name);
            }
        }
        if picked.len() == wanted {
            break;
        }
    }
    top_up(memory, &mut picked, settings.batch_size, ctx);
    Ok(picked)
}
