//! Actor-critic recommendation agent sharing one state encoder.
//!
//! The actor maps a state to logits over every item; the critic maps the same
//! state to one Q-value per item. Training minimises
//! `-log pi(a|s) * A + (r + gamma * max Q(s', .) - Q(s, a))^2` where the
//! advantage `A` and the TD target are held constant during differentiation.

use serde::{Deserialize, Serialize};

use crate::data::ItemId;
use crate::encoder::{self, EncoderConfig, StateVector};
use crate::error::{Error, Result};
use crate::nn::{self, add_outer, axpy, matvec, matvec_t, ParamSet, Sgd, Tensor};
use crate::rng::Rng;

pub const ACTOR_W: &str = "actor.weight";
pub const ACTOR_B: &str = "actor.bias";
pub const CRITIC_W: &str = "critic.weight";
pub const CRITIC_B: &str = "critic.bias";

/// Floor applied to `log pi(a|s)`; below it the actor term carries no gradient.
pub const LOG_PROB_FLOOR: f64 = -30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state_items: Vec<ItemId>,
    pub action: ItemId,
    pub reward: f64,
    pub next_state_items: Vec<ItemId>,
    pub done: bool,
}

impl Transition {
    /// Build `(history, action, reward, history + [action], done)`.
    pub fn extend(history: &[ItemId], action: ItemId, reward: f64, done: bool) -> Self {
        let mut next = history.to_vec();
        next.push(action);
        Transition {
            state_items: history.to_vec(),
            action,
            reward,
            next_state_items: next,
            done,
        }
    }
}

/// Which actor loss an update optimises.
#[derive(Debug, Clone, Copy)]
pub enum ActorObjective<'a> {
    /// `-log pi(a|s) * A`.
    AdvantageWeighted,
    /// `-log[(1 - alpha) pi_frozen(a|s) + alpha pi(a|s)] * A`; only `pi` receives gradient.
    Mixture { frozen: &'a AgentBundle, alpha: f64 },
    /// Critic-only training.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_advantage: f64,
}

/// Encoder, actor head, critic head and discount.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBundle {
    pub config: EncoderConfig,
    pub gamma: f64,
    pub params: ParamSet,
}

impl AgentBundle {
    pub fn new(config: EncoderConfig, gamma: f64, rng: &mut Rng) -> Result<Self> {
        let mut params = ParamSet::new();
        encoder::init_encoder_params(&mut params, &config, rng)?;
        let (n, d) = (config.num_items, config.embed_dim);
        params.insert(ACTOR_W, Tensor::uniform(&[n, d], -0.1, 0.1, rng))?;
        params.insert(ACTOR_B, Tensor::zeros(&[n]))?;
        params.insert(CRITIC_W, Tensor::uniform(&[n, d], -0.1, 0.1, rng))?;
        params.insert(CRITIC_B, Tensor::zeros(&[n]))?;
        AgentBundle::from_params(config, gamma, params)
    }

    /// Wrap existing tensors after checking every expected name and shape.
    pub fn from_params(config: EncoderConfig, gamma: f64, params: ParamSet) -> Result<Self> {
        config.validate()?;
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma {gamma} outside [0, 1]")));
        }
        let (n, d, l) = (config.num_items, config.embed_dim, config.max_seq_len);
        let expected: [(&str, Vec<usize>); 9] = [
            (encoder::ITEM_EMB, vec![n, d]),
            (encoder::POS_EMB, vec![l, d]),
            (encoder::W_Q, vec![d, d]),
            (encoder::W_K, vec![d, d]),
            (encoder::W_V, vec![d, d]),
            (ACTOR_W, vec![n, d]),
            (ACTOR_B, vec![n]),
            (CRITIC_W, vec![n, d]),
            (CRITIC_B, vec![n]),
        ];
        for (name, shape) in &expected {
            match params.values().try_get(name) {
                None => return Err(Error::invalid(format!("missing parameter `{name}`"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::invalid(format!(
                        "parameter `{name}` has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        if params.values().len() != expected.len() {
            return Err(Error::invalid("unexpected extra parameters in agent"));
        }
        Ok(AgentBundle {
            config,
            gamma,
            params,
        })
    }

    pub fn num_items(&self) -> usize {
        self.config.num_items
    }

    pub fn state(&self, history: &[ItemId]) -> Result<StateVector> {
        encoder::encode(history, &self.params, &self.config)
    }

    fn head(&self, weight: &str, bias: &str, state: &[f64]) -> Vec<f64> {
        let mut out = matvec(self.params.get(weight), state);
        axpy(1.0, self.params.get(bias).data(), &mut out);
        out
    }

    pub fn actor_logits(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let logits = self.head(ACTOR_W, ACTOR_B, &state.0);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("actor logits".into()));
        }
        Ok(logits)
    }

    /// `softmax(Actor[s])` over all items.
    pub fn action_distribution(&self, state: &StateVector) -> Result<Vec<f64>> {
        nn::softmax(&self.actor_logits(state)?)
    }

    /// Raw per-item critic outputs `Critic[s]`.
    pub fn q_values(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let q = self.head(CRITIC_W, CRITIC_B, &state.0);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("critic output".into()));
        }
        Ok(q)
    }

    /// Encode `history` and return the action distribution.
    pub fn policy(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        self.action_distribution(&self.state(history)?)
    }

    pub fn q_for_history(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        self.q_values(&self.state(history)?)
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.0.len() != self.config.embed_dim {
            return Err(Error::invalid(format!(
                "state has {} dims, agent expects {}",
                state.0.len(),
                self.config.embed_dim
            )));
        }
        Ok(())
    }

    fn check_transition(&self, tr: &Transition) -> Result<()> {
        if tr.action >= self.num_items() {
            return Err(Error::invalid(format!("action {} out of range", tr.action)));
        }
        if !tr.reward.is_finite() {
            return Err(Error::NonFinite("transition reward".into()));
        }
        Ok(())
    }

    /// `r + gamma * max_a' Q(s', a')`, with no bootstrap on terminal transitions.
    /// `target` supplies the bootstrap critic when a frozen copy is in use.
    pub fn td_target(&self, tr: &Transition, target: Option<&AgentBundle>) -> Result<f64> {
        self.check_transition(tr)?;
        if tr.done {
            return Ok(tr.reward);
        }
        let critic = target.unwrap_or(self);
        let next_q = critic.q_for_history(&tr.next_state_items)?;
        let max_next = next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(tr.reward + self.gamma * max_next)
    }

    /// One-step TD error, treated as a constant by the actor.
    pub fn advantage(&self, tr: &Transition) -> Result<f64> {
        let y = self.td_target(tr, None)?;
        let q = self.q_for_history(&tr.state_items)?;
        Ok(y - q[tr.action])
    }

    pub fn critic_loss(&self, tr: &Transition) -> Result<f64> {
        Ok(self.advantage(tr)?.powi(2))
    }

    /// `max(log pi(a|s), -30)`.
    pub fn log_prob(&self, history: &[ItemId], action: ItemId) -> Result<f64> {
        let p = self.policy(history)?;
        Ok(clamped_ln(p[action]))
    }

    /// `-log pi(a|s) * A`.
    pub fn actor_loss(&self, tr: &Transition) -> Result<f64> {
        let a = self.advantage(tr)?;
        let lp = self.log_prob(&tr.state_items, tr.action)?;
        if lp <= LOG_PROB_FLOOR {
            log::warn!(
                "action {} has vanishing probability; log clamped",
                tr.action
            );
        }
        Ok(-lp * a)
    }

    /// Mean actor + critic loss over `batch`, one plain SGD step at `lr`.
    pub fn update(&mut self, batch: &[Transition], lr: f64) -> Result<UpdateStats> {
        let stats =
            self.accumulate_gradients(batch, ActorObjective::AdvantageWeighted, true, None)?;
        nn::optimizer_step(&mut self.params, lr)?;
        Ok(stats)
    }

    /// Like [`update`](Self::update) with an explicit objective, optimiser and bootstrap critic.
    pub fn update_with(
        &mut self,
        batch: &[Transition],
        objective: ActorObjective<'_>,
        train_critic: bool,
        target: Option<&AgentBundle>,
        optimizer: &mut Sgd,
    ) -> Result<UpdateStats> {
        let stats = self.accumulate_gradients(batch, objective, train_critic, target)?;
        optimizer.step(&mut self.params)?;
        Ok(stats)
    }

    /// Add the batch-mean loss gradient to the accumulators without stepping.
    pub fn accumulate_gradients(
        &mut self,
        batch: &[Transition],
        objective: ActorObjective<'_>,
        train_critic: bool,
        target: Option<&AgentBundle>,
    ) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::invalid("empty training batch"));
        }
        let inv_b = 1.0 / batch.len() as f64;
        let mut stats = UpdateStats::default();
        for tr in batch {
            let y = self.td_target(tr, target)?;
            let trace =
                encoder::forward_traced(&tr.state_items, self.params.values(), &self.config)?;
            let state = &trace.output;
            let q = self.head(CRITIC_W, CRITIC_B, state);
            let advantage = y - q[tr.action];
            stats.mean_advantage += advantage * inv_b;

            let mut d_q = None;
            if train_critic {
                stats.critic_loss += advantage * advantage * inv_b;
                let mut g = vec![0.0; q.len()];
                g[tr.action] = -2.0 * advantage * inv_b;
                d_q = Some(g);
            }

            let d_logits = match objective {
                ActorObjective::Disabled => None,
                ActorObjective::AdvantageWeighted => {
                    let p = nn::softmax(&self.head(ACTOR_W, ACTOR_B, state))?;
                    let lp = p[tr.action].ln();
                    stats.actor_loss += -lp.max(LOG_PROB_FLOOR) * advantage * inv_b;
                    (lp > LOG_PROB_FLOOR).then(|| {
                        let w = advantage * inv_b;
                        softmax_ce_grad(&p, tr.action, w)
                    })
                }
                ActorObjective::Mixture { frozen, alpha } => {
                    let p = nn::softmax(&self.head(ACTOR_W, ACTOR_B, state))?;
                    let p_frozen = frozen.policy(&tr.state_items)?[tr.action];
                    let mixed = (1.0 - alpha) * p_frozen + alpha * p[tr.action];
                    let lp = mixed.ln();
                    stats.actor_loss += -lp.max(LOG_PROB_FLOOR) * advantage * inv_b;
                    (lp > LOG_PROB_FLOOR && alpha > 0.0).then(|| {
                        // d(-log m)/dz = (alpha p_a / m) (p - e_a)
                        let w = advantage * inv_b * alpha * p[tr.action] / mixed;
                        softmax_ce_grad(&p, tr.action, w)
                    })
                }
            };
            self.backprop_heads(&trace, d_logits.as_deref(), d_q.as_deref());
        }
        if !stats.actor_loss.is_finite() || !stats.critic_loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        Ok(stats)
    }

    /// Mean of `-log pi(a_t|s_t) * weight_t` (REINFORCE-style), gradients only.
    pub fn accumulate_weighted_log_prob(
        &mut self,
        steps: &[(Vec<ItemId>, ItemId, f64)],
    ) -> Result<f64> {
        if steps.is_empty() {
            return Err(Error::invalid("empty policy-gradient batch"));
        }
        let inv_b = 1.0 / steps.len() as f64;
        let mut loss = 0.0;
        for (history, action, weight) in steps {
            let trace = encoder::forward_traced(history, self.params.values(), &self.config)?;
            let p = nn::softmax(&self.head(ACTOR_W, ACTOR_B, &trace.output))?;
            let lp = p[*action].ln();
            loss += -lp.max(LOG_PROB_FLOOR) * weight * inv_b;
            if lp > LOG_PROB_FLOOR {
                let g = softmax_ce_grad(&p, *action, weight * inv_b);
                self.backprop_heads(&trace, Some(&g), None);
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("policy-gradient loss".into()));
        }
        Ok(loss)
    }

    fn backprop_heads(
        &mut self,
        trace: &encoder::EncoderTrace,
        d_logits: Option<&[f64]>,
        d_q: Option<&[f64]>,
    ) {
        let state = &trace.output;
        let (values, grads) = self.params.split_mut();
        let mut d_state = vec![0.0; state.len()];
        for (g, w, b) in [(d_logits, ACTOR_W, ACTOR_B), (d_q, CRITIC_W, CRITIC_B)] {
            if let Some(g) = g {
                add_outer(grads.get_mut(w), g, state);
                axpy(1.0, g, grads.get_mut(b).data_mut());
                axpy(1.0, &matvec_t(values.get(w), g), &mut d_state);
            }
        }
        if d_logits.is_some() || d_q.is_some() {
            encoder::backward(trace, &d_state, values, grads);
        }
    }
}

/// Gradient of `-w * log softmax(z)[a]` w.r.t. `z`: `w * (p - e_a)`.
fn softmax_ce_grad(p: &[f64], action: ItemId, w: f64) -> Vec<f64> {
    let mut g: Vec<f64> = p.iter().map(|pi| w * pi).collect();
    g[action] -= w;
    g
}

fn clamped_ln(p: f64) -> f64 {
    p.ln().max(LOG_PROB_FLOOR)
}
