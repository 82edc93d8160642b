//! Pre-training against a preference judge, online adaptation, and baselines.

pub mod baselines;
pub mod buffer;
pub mod explore;
pub mod mix;
pub mod online;
pub mod pretrain;
pub mod runner;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Sgd;
use crate::oracle::CandidateSampling;

pub use baselines::{run_baseline, BaselineKind, BaselineModel};
pub use buffer::ReplayBuffer;
pub use explore::{choose_action, decide, ExplorationStrategy};
pub use mix::{alpha_at, mix_distributions, MixPolicy};
pub use online::{online_phase, Adapted, Scheme};
pub use pretrain::{pretrain_ialp, PretrainEpoch, PretrainState};
pub use runner::{run_online, Learner};

/// How the learnable agent of the adaptive scheme starts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApInit {
    /// Copy of the pre-trained parameters.
    #[default]
    Theta,
    /// Fresh random parameters.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    /// Steps per pre-training episode.
    pub pretrain_horizon: usize,
    pub online_steps: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub gamma: f64,
    pub lr: f64,
    /// Heavy-ball momentum; 0 disables it.
    pub momentum: f64,
    /// Candidates shown to the judge.
    pub k: usize,
    pub candidate_sampling: CandidateSampling,
    pub alpha_init: f64,
    pub alpha_anneal_steps: usize,
    pub ap_init: ApInit,
    /// Bootstrap from a periodically synced copy of the agent.
    pub target_network: bool,
    pub target_sync_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_epochs: 100,
            pretrain_horizon: 20,
            online_steps: 50_000,
            batch_size: 64,
            buffer_capacity: 10_000,
            gamma: 0.9,
            lr: 1e-3,
            momentum: 0.0,
            k: 10,
            candidate_sampling: CandidateSampling::Topk,
            alpha_init: 0.2,
            alpha_anneal_steps: 20_000,
            ap_init: ApInit::Theta,
            target_network: false,
            target_sync_interval: 1_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pretrain_horizon", self.pretrain_horizon),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("k", self.k),
            ("target_sync_interval", self.target_sync_interval),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be positive")));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::Config(
                "`batch_size` exceeds `buffer_capacity`".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "`gamma` = {} outside [0, 1]",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_init) {
            return Err(Error::Config(format!(
                "`alpha_init` = {} outside [0, 1]",
                self.alpha_init
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "`lr` = {} must be finite and >= 0",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "`momentum` = {} outside [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> Sgd {
        if self.momentum > 0.0 {
            Sgd::with_momentum(self.lr, self.momentum)
        } else {
            Sgd::new(self.lr)
        }
    }
}
