use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentKind, AgentSettings, FeedbackMode, LabelShuffle, Reward};
use crate::data::{load_pool, CandidatePool, HitRule, LoadOptions, Metric};
use crate::error::{Error, Result};
use crate::llm::{Descriptor, Domain, RetryPolicy, SamplingParams};
use crate::surrogate::SurrogateParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Label used in reports and for prompt-descriptor lookup.
    pub name: String,
    pub measurements: PathBuf,
    pub embeddings: PathBuf,
    pub domain: Option<Domain>,
    pub metric: Metric,
    pub expected_dim: Option<usize>,
    /// Defaults to the `hit` column when present, else top-10% by score.
    pub hit: Option<HitRule>,
    pub element_filter: Option<Vec<String>>,
    pub score_range: Option<[f64; 2]>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: "dataset".into(),
            measurements: PathBuf::new(),
            embeddings: PathBuf::new(),
            domain: None,
            metric: Metric::default(),
            expected_dim: None,
            hit: None,
            element_filter: None,
            score_range: None,
        }
    }
}

impl DatasetConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            expected_dim: self.expected_dim,
            element_filter: self
                .element_filter
                .as_ref()
                .map(|v| v.iter().cloned().collect()),
            score_range: self.score_range.map(|[lo, hi]| (lo, hi)),
            hit_rule: self.hit.clone(),
            metric: self.metric,
        }
    }

    pub fn load(&self) -> Result<CandidatePool> {
        if self.measurements.as_os_str().is_empty() || self.embeddings.as_os_str().is_empty() {
            return Err(Error::Config("dataset.measurements and dataset.embeddings are required".into()));
        }
        load_pool(&self.measurements, &self.embeddings, &self.load_options())
    }
}

/// Prompt wording; unset fields fall back to the preset named by `preset`
/// or, failing that, by `dataset.name`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub preset: Option<String>,
    pub func_desc: Option<String>,
    pub score_desc: Option<String>,
    pub candidate_space_info: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlmBackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: LlmBackendKind,
    /// Directory of `round-<i>.txt` files for the scripted backend.
    pub fixtures: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_attempts: usize,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let sampling = SamplingParams::default();
        let retry = RetryPolicy::default();
        Self {
            backend: LlmBackendKind::default(),
            fixtures: None,
            endpoint: None,
            model: String::new(),
            temperature: sampling.temperature,
            max_tokens: sampling.max_tokens,
            max_attempts: retry.max_attempts,
            initial_backoff_ms: retry.initial_backoff_ms,
            timeout_secs: 120,
        }
    }
}

/// Whether randomized pairs are redrawn every round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Persistence {
    /// Reshuffle the whole cumulative history each round.
    #[default]
    Fresh,
    /// Shuffle each round's new records among themselves once; earlier
    /// randomized records keep the values they were first shown with.
    Sticky,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub level1: bool,
    pub level2: bool,
    pub persistence: Persistence,
    pub labels: LabelShuffle,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            level1: true,
            level2: true,
            persistence: Persistence::default(),
            labels: LabelShuffle::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rounds: usize,
    pub batch_size: usize,
    pub num_centers: usize,
    pub runs: usize,
    /// Run `k` uses seed `seed + k`.
    pub seed: u64,
    pub agent: AgentKind,
    pub feedback: FeedbackMode,
    pub dataset: DatasetConfig,
    pub prompt: PromptConfig,
    pub surrogate: SurrogateParams,
    /// Defaults to `abs-score` for absolute-percentile hit rules.
    pub reward: Option<Reward>,
    pub llm: LlmConfig,
    pub randomization: RandomizationConfig,
    pub bda_max_reprompts: usize,
    /// Aggregate runs that aborted part-way as well.
    pub include_incomplete: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            batch_size: 128,
            num_centers: 5,
            runs: 5,
            seed: 0,
            agent: AgentKind::Random,
            feedback: FeedbackMode::True,
            dataset: DatasetConfig::default(),
            prompt: PromptConfig::default(),
            surrogate: SurrogateParams::default(),
            reward: None,
            llm: LlmConfig::default(),
            randomization: RandomizationConfig::default(),
            bda_max_reprompts: 5,
            include_incomplete: false,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Reads a JSON config. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut config.dataset.measurements);
        resolve(base, &mut config.dataset.embeddings);
        if let Some(f) = config.llm.fixtures.as_mut() {
            resolve(base, f);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (value, name) in [
            (self.rounds, "rounds"),
            (self.batch_size, "batch_size"),
            (self.num_centers, "num_centers"),
            (self.runs, "runs"),
        ] {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.feedback == FeedbackMode::Randomized && !self.agent.uses_llm() {
            return Err(Error::Config(format!(
                "randomized feedback only applies to LLM agents, not {}",
                self.agent
            )));
        }
        if self.agent.uses_llm() {
            match self.llm.backend {
                LlmBackendKind::Scripted if self.llm.fixtures.is_none() => {
                    return Err(Error::Config("scripted LLM backend needs llm.fixtures".into()))
                }
                LlmBackendKind::Http if self.llm.endpoint.is_none() => {
                    return Err(Error::Config("http LLM backend needs llm.endpoint".into()))
                }
                _ => {}
            }
            if self.llm.max_attempts == 0 {
                return Err(Error::Config("llm.max_attempts must be at least 1".into()));
            }
            self.descriptor()?;
        }
        Ok(())
    }

    pub fn descriptor(&self) -> Result<Descriptor> {
        let preset_name = self.prompt.preset.as_deref().unwrap_or(&self.dataset.name);
        let preset = Descriptor::preset(preset_name);
        let domain = self
            .dataset
            .domain
            .or(preset.as_ref().map(|d| d.domain))
            .unwrap_or_default();
        let base = preset.unwrap_or(Descriptor {
            domain,
            func_desc: String::new(),
            score_desc: String::new(),
            candidate_space_info: String::new(),
        });
        let d = Descriptor {
            domain,
            func_desc: self.prompt.func_desc.clone().unwrap_or(base.func_desc),
            score_desc: self.prompt.score_desc.clone().unwrap_or(base.score_desc),
            candidate_space_info: self
                .prompt
                .candidate_space_info
                .clone()
                .unwrap_or(base.candidate_space_info),
        };
        if d.func_desc.is_empty() {
            return Err(Error::Config(format!(
                "no prompt descriptor for dataset {:?}; set prompt.preset or prompt.func_desc",
                self.dataset.name
            )));
        }
        Ok(d)
    }

    pub fn agent_settings(&self, pool: &CandidatePool) -> Result<AgentSettings> {
        let descriptor = if self.agent.uses_llm() {
            self.descriptor()?
        } else {
            self.descriptor().unwrap_or(Descriptor::genes("", ""))
        };
        let reward = self.reward.unwrap_or(match pool.hit_policy().rule {
            HitRule::AbsTopPercentile { .. } => Reward::AbsScore,
            _ => Reward::Score,
        });
        Ok(AgentSettings {
            kind: self.agent,
            batch_size: self.batch_size,
            num_centers: self.num_centers,
            surrogate: self.surrogate,
            reward,
            descriptor,
            sampling: SamplingParams {
                temperature: self.llm.temperature,
                max_tokens: self.llm.max_tokens,
            },
            retry: RetryPolicy {
                max_attempts: self.llm.max_attempts,
                initial_backoff_ms: self.llm.initial_backoff_ms,
                ..RetryPolicy::default()
            },
            bda_max_reprompts: self.bda_max_reprompts,
        })
    }
}
