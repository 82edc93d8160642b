use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agent::{ActorObjective, AgentBundle, Transition};
use crate::data::ItemId;
use crate::error::{Error, Result};
use crate::nn::Sgd;
use crate::oracle::{distill, sample_candidates, PreferenceJudge};
use crate::rng::{stream_rng, streams, RngState};

use super::buffer::ReplayBuffer;
use super::TrainConfig;

/// Per-epoch summary of pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub mean_actor_loss: f64,
    pub mean_critic_loss: f64,
    pub mean_reward: f64,
    pub updates: usize,
}

/// Everything besides the agent needed to continue an interrupted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainState {
    pub epochs_done: usize,
    pub buffer: ReplayBuffer,
    pub optimizer: Sgd,
    pub start_rng: RngState,
    pub candidate_rng: RngState,
    pub oracle_rng: RngState,
    pub replay_rng: RngState,
    pub log: Vec<PretrainEpoch>,
}

impl PretrainState {
    pub fn fresh(config: &TrainConfig) -> Result<Self> {
        let seed = config.seed;
        Ok(PretrainState {
            epochs_done: 0,
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            optimizer: config.optimizer(),
            start_rng: RngState::capture(&stream_rng(seed, streams::ENV)),
            candidate_rng: RngState::capture(&stream_rng(seed, streams::CANDIDATES)),
            oracle_rng: RngState::capture(&stream_rng(seed, streams::ORACLE)),
            replay_rng: RngState::capture(&stream_rng(seed, streams::REPLAY)),
            log: Vec::new(),
        })
    }
}

/// Train `agent` purely on judge preferences.
///
/// Each epoch is one episode of `pretrain_horizon` steps starting from an item
/// drawn from `initial_items` (or uniformly when empty). Every step shows the
/// judge `k` candidates from the actor, stores the distilled transition, and
/// updates on a minibatch once the buffer holds one. `on_epoch` sees the state
/// after every epoch, e.g. to checkpoint it; pass `resume` to continue.
pub fn pretrain_ialp(
    mut agent: AgentBundle,
    judge: &dyn PreferenceJudge,
    config: &TrainConfig,
    initial_items: &[ItemId],
    resume: Option<PretrainState>,
    on_epoch: &mut dyn FnMut(&AgentBundle, &PretrainState) -> Result<()>,
) -> Result<(AgentBundle, PretrainState)> {
    config.validate()?;
    let n = agent.num_items();
    if config.k > n {
        return Err(Error::Config(format!(
            "k = {} exceeds the catalog size {n}",
            config.k
        )));
    }
    if let Some(&bad) = initial_items.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("initial item {bad} out of range")));
    }
    let mut state = match resume {
        Some(s) => s,
        None => PretrainState::fresh(config)?,
    };
    let mut start_rng = state.start_rng.restore();
    let mut candidate_rng = state.candidate_rng.restore();
    let mut oracle_rng = state.oracle_rng.restore();
    let mut replay_rng = state.replay_rng.restore();

    for epoch in state.epochs_done..config.pretrain_epochs {
        let mut history = vec![if initial_items.is_empty() {
            start_rng.random_range(0..n)
        } else {
            initial_items[start_rng.random_range(0..initial_items.len())]
        }];
        let mut summary = PretrainEpoch {
            epoch,
            mean_actor_loss: 0.0,
            mean_critic_loss: 0.0,
            mean_reward: 0.0,
            updates: 0,
        };
        for t in 1..=config.pretrain_horizon {
            let dist = agent.policy(&history)?;
            let candidates = sample_candidates(
                &dist,
                config.k,
                config.candidate_sampling,
                &mut candidate_rng,
            )?;
            let choice = judge.judge(&history, &candidates)?;
            let outcome = distill(&choice, &candidates, &mut oracle_rng)?;
            let done = t == config.pretrain_horizon;
            let tr = Transition::extend(&history, outcome.action, outcome.reward, done);
            history = tr.next_state_items.clone();
            state.buffer.push(tr);
            summary.mean_reward += outcome.reward;
            if state.buffer.len() >= config.batch_size {
                let batch = state.buffer.sample(config.batch_size, &mut replay_rng)?;
                let stats = agent
                    .update_with(
                        &batch,
                        ActorObjective::AdvantageWeighted,
                        true,
                        None,
                        &mut state.optimizer,
                    )
                    .map_err(|e| match e {
                        Error::NonFinite(w) => {
                            Error::NonFinite(format!("{w} in pre-training epoch {epoch}, step {t}"))
                        }
                        other => other,
                    })?;
                summary.mean_actor_loss += stats.actor_loss;
                summary.mean_critic_loss += stats.critic_loss;
                summary.updates += 1;
            }
        }
        summary.mean_reward /= config.pretrain_horizon as f64;
        if summary.updates > 0 {
            summary.mean_actor_loss /= summary.updates as f64;
            summary.mean_critic_loss /= summary.updates as f64;
        }
        log::debug!(
            "pretrain epoch {epoch}: reward {:.3}, actor {:.4}, critic {:.4}",
            summary.mean_reward,
            summary.mean_actor_loss,
            summary.mean_critic_loss
        );
        state.log.push(summary);
        state.epochs_done = epoch + 1;
        state.start_rng = RngState::capture(&start_rng);
        state.candidate_rng = RngState::capture(&candidate_rng);
        state.oracle_rng = RngState::capture(&oracle_rng);
        state.replay_rng = RngState::capture(&replay_rng);
        on_epoch(&agent, &state)?;
    }
    Ok((agent, state))
}
