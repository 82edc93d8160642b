use serde::{Deserialize, Serialize};

use crate::agent::{ActorObjective, AgentBundle, Transition};
use crate::data::ItemId;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::harness::metrics::{EpisodeRecord, ScoringPolicy};
use crate::nn::Sgd;
use crate::oracle::{distill, sample_candidates, CandidateSampling, PreferenceJudge};
use crate::rng::{stream_rng, streams, Rng};

use super::explore::{choose_action, ExplorationStrategy};
use super::mix::{alpha_at, MixPolicy};
use super::runner::{run_online, Learner, Replay, StepHook};
use super::{ApInit, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Fine-tune the pre-trained agent directly.
    Ft,
    /// Freeze it and learn a second agent through a mixture policy.
    Ap,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ft" => Ok(Scheme::Ft),
            "ap" => Ok(Scheme::Ap),
            other => Err(Error::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

/// The judge choosing among actor-proposed candidates at every step.
pub(crate) struct Guide<'j> {
    pub judge: &'j dyn PreferenceJudge,
    pub k: usize,
    pub sampling: CandidateSampling,
    pub candidate_rng: Rng,
    pub oracle_rng: Rng,
}

/// One actor-critic agent trained on environment reward.
pub(crate) struct ActorCriticLearner<'j> {
    pub agent: AgentBundle,
    replay: Replay,
    optimizer: Sgd,
    strategy: ExplorationStrategy,
    guide: Option<Guide<'j>>,
}

impl<'j> ActorCriticLearner<'j> {
    pub fn new(
        agent: AgentBundle,
        config: &TrainConfig,
        strategy: ExplorationStrategy,
        seed: u64,
    ) -> Result<Self> {
        let replay = Replay::new(
            config.buffer_capacity,
            config.batch_size,
            stream_rng(seed, streams::REPLAY),
            config.target_network,
            config.target_sync_interval,
            &agent,
        )?;
        Ok(ActorCriticLearner {
            agent,
            replay,
            optimizer: config.optimizer(),
            strategy,
            guide: None,
        })
    }

    pub fn with_guide(mut self, guide: Guide<'j>) -> Self {
        self.guide = Some(guide);
        self
    }
}

impl ScoringPolicy for ActorCriticLearner<'_> {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        self.agent.policy(history)
    }
}

impl Learner for ActorCriticLearner<'_> {
    fn act(&mut self, history: &[ItemId], _step: usize, rng: &mut Rng) -> Result<ItemId> {
        let dist = self.agent.policy(history)?;
        match self.guide.as_mut() {
            None => choose_action(&dist, self.strategy, rng),
            Some(g) => {
                let candidates = sample_candidates(&dist, g.k, g.sampling, &mut g.candidate_rng)?;
                let choice = g.judge.judge(history, &candidates)?;
                Ok(distill(&choice, &candidates, &mut g.oracle_rng)?.action)
            }
        }
    }

    fn observe(&mut self, tr: Transition, step: usize) -> Result<()> {
        if let Some(batch) = self.replay.push_and_sample(tr)? {
            let stats = self.agent.update_with(
                &batch,
                ActorObjective::AdvantageWeighted,
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

/// Mixture of a frozen and a learnable agent with an annealed weight.
pub(crate) struct MixLearner {
    pub mix: MixPolicy,
    replay: Replay,
    optimizer: Sgd,
    strategy: ExplorationStrategy,
    alpha_init: f64,
    anneal: usize,
}

impl ScoringPolicy for MixLearner {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        self.mix.mix_action_distribution(history)
    }
}

impl Learner for MixLearner {
    fn act(&mut self, history: &[ItemId], step: usize, rng: &mut Rng) -> Result<ItemId> {
        self.mix
            .advance_alpha(alpha_at(step, self.alpha_init, self.anneal))?;
        let dist = self.mix.mix_action_distribution(history)?;
        choose_action(&dist, self.strategy, rng)
    }

    fn observe(&mut self, tr: Transition, step: usize) -> Result<()> {
        if let Some(batch) = self.replay.push_and_sample(tr)? {
            let stats =
                self.mix
                    .update_learnable(&batch, self.replay.target(), &mut self.optimizer)?;
            self.replay.last_stats = Some(stats);
        }
        self.replay.maybe_sync(step, &self.mix.learnable);
        Ok(())
    }
}

/// Result of online adaptation.
#[derive(Debug, Clone)]
pub enum Adapted {
    Ft(AgentBundle),
    Ap(MixPolicy),
}

impl ScoringPolicy for Adapted {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        match self {
            Adapted::Ft(a) => a.policy(history),
            Adapted::Ap(m) => m.mix_action_distribution(history),
        }
    }
}

/// Adapt a pre-trained agent by interacting with `env` for `config.online_steps` steps.
pub fn online_phase(
    scheme: Scheme,
    pretrained: AgentBundle,
    env: &Environment,
    config: &TrainConfig,
    strategy: ExplorationStrategy,
    hook_every: Option<usize>,
    hook: &mut StepHook<'_>,
) -> Result<(Adapted, Vec<EpisodeRecord>)> {
    config.validate()?;
    strategy.validate()?;
    check_env(&pretrained, env)?;
    let seed = config.seed;
    match scheme {
        Scheme::Ft => {
            let mut learner = ActorCriticLearner::new(pretrained, config, strategy, seed)?;
            let curve = run_online(
                &mut learner,
                env,
                config.online_steps,
                seed,
                hook_every,
                hook,
            )?;
            Ok((Adapted::Ft(learner.agent), curve))
        }
        Scheme::Ap => {
            let learnable = match config.ap_init {
                ApInit::Theta => pretrained.clone(),
                ApInit::Random => AgentBundle::new(
                    pretrained.config,
                    pretrained.gamma,
                    &mut stream_rng(seed, streams::INIT_BETA),
                )?,
            };
            let alpha0 = alpha_at(0, config.alpha_init, config.alpha_anneal_steps);
            let mix = MixPolicy::new(pretrained, learnable, alpha0)?;
            let replay = Replay::new(
                config.buffer_capacity,
                config.batch_size,
                stream_rng(seed, streams::REPLAY),
                config.target_network,
                config.target_sync_interval,
                &mix.learnable,
            )?;
            let mut learner = MixLearner {
                mix,
                replay,
                optimizer: config.optimizer(),
                strategy,
                alpha_init: config.alpha_init,
                anneal: config.alpha_anneal_steps,
            };
            let curve = run_online(
                &mut learner,
                env,
                config.online_steps,
                seed,
                hook_every,
                hook,
            )?;
            Ok((Adapted::Ap(learner.mix), curve))
        }
    }
}

pub(crate) fn check_env(agent: &AgentBundle, env: &Environment) -> Result<()> {
    if agent.num_items() != env.num_items() {
        return Err(Error::invalid(format!(
            "agent has {} items but the environment has {}",
            agent.num_items(),
            env.num_items()
        )));
    }
    Ok(())
}
