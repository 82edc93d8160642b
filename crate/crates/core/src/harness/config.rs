//! TOML experiment configuration. Every section and key is optional; unknown keys are errors.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, MfHyper, RewardModelKind, SeqHyper};
use crate::error::{Error, Result};
use crate::oracle::{PromptSpec, RemoteEndpoint};
use crate::training::{ExplorationStrategy, TrainConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub env: EnvSection,
    pub agent: AgentSection,
    pub train: TrainConfig,
    pub oracle: OracleSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub id: String,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            id: "ialp".into(),
            out_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub source: DataSource,
    /// Item catalog CSV (`files` source).
    pub catalog: Option<PathBuf>,
    /// Interaction CSV (`files` source).
    pub interactions: Option<PathBuf>,
    pub num_users: usize,
    pub num_items: usize,
    pub seq_len: usize,
    pub d_lat: usize,
    pub noise: f64,
    /// Share of user sequences seeding the training environment; the rest seed the test environment.
    pub train_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::Synthetic,
            catalog: None,
            interactions: None,
            num_users: 300,
            num_items: 50,
            seq_len: 6,
            d_lat: 8,
            noise: crate::data::DEFAULT_SYNTHETIC_NOISE,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    /// Fit the reward model on the interaction log.
    Fitted,
    /// Build it from the synthetic generator's latents.
    GroundTruth,
    /// Load a saved reward-model checkpoint.
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub kind: RewardModelKind,
    pub reward_source: RewardSource,
    /// Reward-model checkpoint for `reward_source = "checkpoint"`.
    pub model_path: Option<PathBuf>,
    /// Ground-truth reward scale.
    pub scale: f64,
    /// Ground-truth reward offset.
    pub offset: f64,
    pub max_steps: usize,
    pub quit_threshold: f64,
    pub r_max: f64,
    pub mf: MfHyper,
    pub seq: SeqHyper,
}

impl Default for EnvSection {
    fn default() -> Self {
        let env = EnvConfig::default();
        EnvSection {
            kind: RewardModelKind::Sequential,
            reward_source: RewardSource::GroundTruth,
            model_path: None,
            scale: 0.2,
            offset: 1.0,
            max_steps: env.max_steps,
            quit_threshold: env.quit_threshold,
            r_max: env.r_max,
            mf: MfHyper::default(),
            seq: SeqHyper::default(),
        }
    }
}

impl EnvSection {
    pub fn env_config(&self, seed: u64) -> EnvConfig {
        EnvConfig {
            max_steps: self.max_steps,
            quit_threshold: self.quit_threshold,
            r_max: self.r_max,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub embed_dim: usize,
    pub max_seq_len: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            embed_dim: 64,
            max_seq_len: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Synthetic,
    Llm,
}

impl std::str::FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(OracleKind::Synthetic),
            "llm" => Ok(OracleKind::Llm),
            other => Err(Error::invalid(format!(
                "unknown oracle `{other}` (synthetic|llm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub kind: OracleKind,
    /// Minimum latent affinity for the synthetic judge to pick a candidate.
    pub threshold: f64,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub concurrency: usize,
    /// Append every LLM exchange to this JSONL fixture.
    pub record: Option<PathBuf>,
    /// Answer from this JSONL fixture instead of the network.
    pub replay: Option<PathBuf>,
    pub scenario: String,
    pub item_noun: String,
    pub behavior: String,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            kind: OracleKind::Synthetic,
            threshold: 2.0,
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "mistral-7b-instruct".into(),
            api_key_env: crate::oracle::http::API_KEY_ENV.into(),
            timeout_secs: 30.0,
            max_retries: 3,
            concurrency: 4,
            record: None,
            replay: None,
            scenario: "music streaming".into(),
            item_noun: "track".into(),
            behavior: "listening".into(),
        }
    }
}

impl OracleSection {
    pub fn endpoint(&self) -> RemoteEndpoint {
        let mut ep = RemoteEndpoint::new(&self.base_url, &self.model);
        ep.api_key_env = self.api_key_env.clone();
        ep.timeout = Duration::from_secs_f64(self.timeout_secs);
        ep.max_retries = self.max_retries;
        ep
    }

    pub fn prompt_spec(&self, attribute_names: Vec<String>, k: usize) -> PromptSpec {
        PromptSpec {
            scenario: self.scenario.clone(),
            item_noun: self.item_noun.clone(),
            behavior: self.behavior.clone(),
            attribute_names,
            k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Greedy test episodes per evaluation.
    pub episodes: usize,
    /// One epoch is `max_steps * episodes_per_epoch` environment steps.
    pub episodes_per_epoch: usize,
    /// Exploration during online training.
    pub strategy: String,
    pub epsilon: f64,
    /// Epochs at which R@e is reported.
    pub report_epochs: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            episodes: 100,
            episodes_per_epoch: 50,
            strategy: "egreedy".into(),
            epsilon: crate::training::explore::DEFAULT_EPSILON,
            report_epochs: vec![0, 1, 2],
        }
    }
}

impl EvalSection {
    pub fn exploration(&self) -> Result<ExplorationStrategy> {
        ExplorationStrategy::parse(&self.strategy, self.epsilon)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(one_line(&e.to_string())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "data.train_fraction {} outside (0, 1)",
                d.train_fraction
            )));
        }
        if d.source == DataSource::Files && (d.catalog.is_none() || d.interactions.is_none()) {
            return Err(Error::Config(
                "data.source = \"files\" needs data.catalog and data.interactions".into(),
            ));
        }
        if d.source == DataSource::Files && self.env.reward_source == RewardSource::GroundTruth {
            return Err(Error::Config(
                "env.reward_source = \"ground_truth\" needs synthetic data".into(),
            ));
        }
        if d.source == DataSource::Files && self.oracle.kind == OracleKind::Synthetic {
            return Err(Error::Config(
                "the synthetic oracle needs synthetic data".into(),
            ));
        }
        if self.env.reward_source == RewardSource::Checkpoint && self.env.model_path.is_none() {
            return Err(Error::Config(
                "env.reward_source = \"checkpoint\" needs env.model_path".into(),
            ));
        }
        self.env_config()
            .validate()
            .map_err(|e| Error::Config(format!("env: {e}")))?;
        self.train
            .validate()
            .map_err(|e| Error::Config(format!("train: {e}")))?;
        self.eval
            .exploration()
            .map_err(|e| Error::Config(format!("eval: {e}")))?;
        if self.eval.episodes == 0 || self.eval.episodes_per_epoch == 0 {
            return Err(Error::Config(
                "eval.episodes and eval.episodes_per_epoch must be >= 1".into(),
            ));
        }
        if self.agent.embed_dim == 0 || self.agent.max_seq_len == 0 {
            return Err(Error::Config(
                "agent.embed_dim and agent.max_seq_len must be >= 1".into(),
            ));
        }
        if self.oracle.concurrency == 0 {
            return Err(Error::Config("oracle.concurrency must be >= 1".into()));
        }
        if !(self.oracle.timeout_secs > 0.0 && self.oracle.timeout_secs.is_finite()) {
            return Err(Error::Config("oracle.timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        self.env.env_config(self.train.seed)
    }

    /// Environment steps in one evaluation epoch.
    pub fn epoch_steps(&self) -> usize {
        self.env.max_steps * self.eval.episodes_per_epoch
    }

    /// Fully expanded configuration, defaults included.
    pub fn to_full_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    /// `<out_dir>/<id>-seed<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.run
            .out_dir
            .join(format!("{}-seed{}", self.run.id, self.train.seed))
    }
}

fn one_line(msg: &str) -> String {
    msg.split('\n')
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.chars().all(|c| c == '|' || c == '^' || c == ' '))
        .collect::<Vec<_>>()
        .join(" ")
}
