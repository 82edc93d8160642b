use serde::{Deserialize, Serialize};

use crate::agent::{ActorObjective, AgentBundle, Transition};
use crate::data::ItemId;
use crate::encoder::EncoderConfig;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::harness::metrics::{EpisodeRecord, ScoringPolicy};
use crate::nn::Sgd;
use crate::oracle::PreferenceJudge;
use crate::rng::{stream_rng, streams, Rng};

use super::explore::{choose_action, decide_on_scores, ExplorationStrategy};
use super::online::{check_env, ActorCriticLearner, Guide};
use super::runner::{run_online, Learner, Replay, StepHook};
use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Dqn,
    Pg,
    A2c,
    LlmOnline,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Dqn => "dqn",
            BaselineKind::Pg => "pg",
            BaselineKind::A2c => "a2c",
            BaselineKind::LlmOnline => "llm_online",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(BaselineKind::Dqn),
            "pg" => Ok(BaselineKind::Pg),
            "a2c" => Ok(BaselineKind::A2c),
            "llm_online" | "llmonline" => Ok(BaselineKind::LlmOnline),
            other => Err(Error::invalid(format!("unknown baseline `{other}`"))),
        }
    }
}

/// Critic-only agent acting on its Q-values.
pub(crate) struct DqnLearner {
    pub agent: AgentBundle,
    replay: Replay,
    optimizer: Sgd,
    strategy: ExplorationStrategy,
}

impl ScoringPolicy for DqnLearner {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        self.agent.q_for_history(history)
    }
}

impl Learner for DqnLearner {
    fn act(&mut self, history: &[ItemId], _step: usize, rng: &mut Rng) -> Result<ItemId> {
        let q = self.agent.q_for_history(history)?;
        Ok(decide_on_scores(&q, self.strategy, rng)?.action)
    }

    fn observe(&mut self, tr: Transition, step: usize) -> Result<()> {
        if let Some(batch) = self.replay.push_and_sample(tr)? {
            let stats = self.agent.update_with(
                &batch,
                ActorObjective::Disabled,
                true,
                self.replay.target(),
                &mut self.optimizer,
            )?;
            self.replay.last_stats = Some(stats);
        }
        self.replay.maybe_sync(step, &self.agent);
        Ok(())
    }
}

/// REINFORCE: one actor update per finished episode with discounted return-to-go weights.
pub(crate) struct PgLearner {
    pub agent: AgentBundle,
    optimizer: Sgd,
    strategy: ExplorationStrategy,
    episode: Vec<(Vec<ItemId>, ItemId, f64)>,
}

impl PgLearner {
    pub fn new(agent: AgentBundle, config: &TrainConfig, strategy: ExplorationStrategy) -> Self {
        PgLearner {
            agent,
            optimizer: config.optimizer(),
            strategy,
            episode: Vec::new(),
        }
    }
}

/// `G_t = r_t + gamma * G_{t+1}`.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

impl ScoringPolicy for PgLearner {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        self.agent.policy(history)
    }
}

impl Learner for PgLearner {
    fn act(&mut self, history: &[ItemId], _step: usize, rng: &mut Rng) -> Result<ItemId> {
        choose_action(&self.agent.policy(history)?, self.strategy, rng)
    }

    fn observe(&mut self, tr: Transition, _step: usize) -> Result<()> {
        self.episode.push((tr.state_items, tr.action, tr.reward));
        if tr.done {
            let rewards: Vec<f64> = self.episode.iter().map(|s| s.2).collect();
            let g = returns_to_go(&rewards, self.agent.gamma);
            let steps: Vec<(Vec<ItemId>, ItemId, f64)> = self
                .episode
                .drain(..)
                .zip(g)
                .map(|((h, a, _), g)| (h, a, g))
                .collect();
            self.agent.accumulate_weighted_log_prob(&steps)?;
            self.optimizer.step(&mut self.agent.params)?;
        }
        Ok(())
    }
}

/// Trained baseline agent and how it scores actions.
#[derive(Debug, Clone)]
pub enum BaselineModel {
    /// Greedy over Q-values.
    Dqn(AgentBundle),
    /// Greedy over the actor distribution.
    Actor(AgentBundle),
}

impl BaselineModel {
    pub fn agent(&self) -> &AgentBundle {
        match self {
            BaselineModel::Dqn(a) | BaselineModel::Actor(a) => a,
        }
    }
}

impl ScoringPolicy for BaselineModel {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        match self {
            BaselineModel::Dqn(a) => a.q_for_history(history),
            BaselineModel::Actor(a) => a.policy(history),
        }
    }
}

/// Freshly initialised agent for a scratch baseline.
pub fn scratch_agent(encoder: &EncoderConfig, config: &TrainConfig) -> Result<AgentBundle> {
    AgentBundle::new(
        *encoder,
        config.gamma,
        &mut stream_rng(config.seed, streams::INIT),
    )
}

/// Train a baseline from scratch on `env`. `llm_online` needs a judge.
#[allow(clippy::too_many_arguments)]
pub fn run_baseline(
    kind: BaselineKind,
    env: &Environment,
    encoder: &EncoderConfig,
    config: &TrainConfig,
    strategy: ExplorationStrategy,
    judge: Option<&dyn PreferenceJudge>,
    hook_every: Option<usize>,
    hook: &mut StepHook<'_>,
) -> Result<(BaselineModel, Vec<EpisodeRecord>)> {
    config.validate()?;
    strategy.validate()?;
    let agent = scratch_agent(encoder, config)?;
    check_env(&agent, env)?;
    let seed = config.seed;
    let steps = config.online_steps;
    match kind {
        BaselineKind::Dqn => {
            let replay = Replay::new(
                config.buffer_capacity,
                config.batch_size,
                stream_rng(seed, streams::REPLAY),
                config.target_network,
                config.target_sync_interval,
                &agent,
            )?;
            let mut learner = DqnLearner {
                agent,
                replay,
                optimizer: config.optimizer(),
                strategy,
            };
            let curve = run_online(&mut learner, env, steps, seed, hook_every, hook)?;
            Ok((BaselineModel::Dqn(learner.agent), curve))
        }
        BaselineKind::Pg => {
            let mut learner = PgLearner::new(agent, config, strategy);
            let curve = run_online(&mut learner, env, steps, seed, hook_every, hook)?;
            Ok((BaselineModel::Actor(learner.agent), curve))
        }
        BaselineKind::A2c => {
            let mut learner = ActorCriticLearner::new(agent, config, strategy, seed)?;
            let curve = run_online(&mut learner, env, steps, seed, hook_every, hook)?;
            Ok((BaselineModel::Actor(learner.agent), curve))
        }
        BaselineKind::LlmOnline => {
            let judge = judge.ok_or_else(|| Error::invalid("llm_online needs an oracle"))?;
            if config.k > env.num_items() {
                return Err(Error::Config(format!(
                    "k = {} exceeds the catalog size {}",
                    config.k,
                    env.num_items()
                )));
            }
            let guide = Guide {
                judge,
                k: config.k,
                sampling: config.candidate_sampling,
                candidate_rng: stream_rng(seed, streams::CANDIDATES),
                oracle_rng: stream_rng(seed, streams::ORACLE),
            };
            let mut learner =
                ActorCriticLearner::new(agent, config, strategy, seed)?.with_guide(guide);
            let curve = run_online(&mut learner, env, steps, seed, hook_every, hook)?;
            Ok((BaselineModel::Actor(learner.agent), curve))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_returns() {
        let g = returns_to_go(&[1.0, 0.0, 2.0], 0.5);
        assert_eq!(g, vec![1.5, 1.0, 2.0]);
        assert!(returns_to_go(&[], 0.9).is_empty());
    }
}
