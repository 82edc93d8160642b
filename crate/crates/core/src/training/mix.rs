use crate::agent::{ActorObjective, AgentBundle, Transition, UpdateStats};
use crate::data::ItemId;
use crate::error::{Error, Result};
use crate::harness::metrics::ScoringPolicy;
use crate::nn::Sgd;

/// `(1 - alpha) * frozen + alpha * learnable`, element-wise.
pub fn mix_distributions(frozen: &[f64], learnable: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if frozen.len() != learnable.len() {
        return Err(Error::invalid("mixed distributions differ in length"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(frozen
        .iter()
        .zip(learnable)
        .map(|(f, l)| (1.0 - alpha) * f + alpha * l)
        .collect())
}

/// Linear ramp from `alpha_init` to 1 over `anneal_steps`, then 1.
pub fn alpha_at(step: usize, alpha_init: f64, anneal_steps: usize) -> f64 {
    if anneal_steps == 0 || step >= anneal_steps {
        return 1.0;
    }
    alpha_init + (1.0 - alpha_init) * step as f64 / anneal_steps as f64
}

/// A frozen pre-trained policy blended with a learnable one.
#[derive(Debug, Clone)]
pub struct MixPolicy {
    frozen: AgentBundle,
    pub learnable: AgentBundle,
    alpha: f64,
}

impl MixPolicy {
    pub fn new(frozen: AgentBundle, learnable: AgentBundle, alpha: f64) -> Result<Self> {
        if frozen.config != learnable.config {
            return Err(Error::invalid(
                "frozen and learnable agents have different shapes",
            ));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(MixPolicy {
            frozen,
            learnable,
            alpha,
        })
    }

    pub fn frozen(&self) -> &AgentBundle {
        &self.frozen
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Raise alpha; it never decreases.
    pub fn advance_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        self.alpha = self.alpha.max(alpha);
        Ok(())
    }

    pub fn into_parts(self) -> (AgentBundle, AgentBundle, f64) {
        (self.frozen, self.learnable, self.alpha)
    }

    /// One step on the learnable agent against the mixture actor loss; the frozen
    /// agent is only read.
    pub fn update_learnable(
        &mut self,
        batch: &[Transition],
        target: Option<&AgentBundle>,
        optimizer: &mut Sgd,
    ) -> Result<UpdateStats> {
        let objective = ActorObjective::Mixture {
            frozen: &self.frozen,
            alpha: self.alpha,
        };
        self.learnable
            .update_with(batch, objective, true, target, optimizer)
    }

    pub fn mix_action_distribution(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        let learnable = self.learnable.policy(history)?;
        if self.alpha >= 1.0 {
            return Ok(learnable);
        }
        let frozen = self.frozen.policy(history)?;
        if self.alpha <= 0.0 {
            return Ok(frozen);
        }
        mix_distributions(&frozen, &learnable, self.alpha)
    }
}

impl ScoringPolicy for MixPolicy {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        self.mix_action_distribution(history)
    }
}
