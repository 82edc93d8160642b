use crate::agent::{AgentBundle, Transition, UpdateStats};
use crate::data::ItemId;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::harness::metrics::{EpisodeRecord, ScoringPolicy};
use crate::rng::{stream_rng, streams, Rng};

use super::buffer::ReplayBuffer;

/// An agent being trained by environment interaction.
pub trait Learner: ScoringPolicy {
    fn act(&mut self, history: &[ItemId], global_step: usize, rng: &mut Rng) -> Result<ItemId>;

    fn observe(&mut self, transition: Transition, global_step: usize) -> Result<()>;
}

/// Called with the number of steps taken so far and the current policy.
pub type StepHook<'a> = dyn FnMut(usize, &dyn ScoringPolicy) -> Result<()> + 'a;

/// Interact for `steps` environment steps, recording every finished episode.
///
/// `hook` runs before the first step and after every `hook_every` steps. An
/// episode cut off by the step budget is not recorded.
pub fn run_online<L: Learner>(
    learner: &mut L,
    env: &Environment,
    steps: usize,
    seed: u64,
    hook_every: Option<usize>,
    hook: &mut StepHook<'_>,
) -> Result<Vec<EpisodeRecord>> {
    let mut env_rng = stream_rng(seed, streams::ENV);
    let mut action_rng = stream_rng(seed, streams::ACTION);
    let mut curve = Vec::new();
    hook(0, &*learner)?;
    let mut state = env.reset(&mut env_rng);
    let mut ret = 0.0;
    for step in 0..steps {
        let action = learner
            .act(&state.history, step, &mut action_rng)
            .map_err(|e| at_step(e, step))?;
        let history = state.history.clone();
        let out = env.step(&mut state, action)?;
        learner
            .observe(
                Transition::extend(&history, action, out.reward, out.done),
                step,
            )
            .map_err(|e| at_step(e, step))?;
        ret += out.reward;
        if out.done {
            curve.push(EpisodeRecord::new(
                ret,
                state.steps_taken,
                curve.len(),
                step + 1,
            )?);
            state = env.reset(&mut env_rng);
            ret = 0.0;
        }
        if hook_every.is_some_and(|n| n > 0 && (step + 1) % n == 0) {
            hook(step + 1, &*learner)?;
        }
    }
    Ok(curve)
}

fn at_step(err: Error, step: usize) -> Error {
    match err {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} at step {step}")),
        other => other,
    }
}

/// Replay plus an optional periodically synced bootstrap copy.
#[derive(Debug, Clone)]
pub(crate) struct Replay {
    pub buffer: ReplayBuffer,
    pub batch_size: usize,
    pub rng: Rng,
    target: Option<AgentBundle>,
    sync_interval: usize,
    pub last_stats: Option<UpdateStats>,
}

impl Replay {
    pub fn new(
        capacity: usize,
        batch_size: usize,
        rng: Rng,
        target_network: bool,
        sync_interval: usize,
        initial: &AgentBundle,
    ) -> Result<Self> {
        Ok(Replay {
            buffer: ReplayBuffer::new(capacity)?,
            batch_size,
            rng,
            target: target_network.then(|| initial.clone()),
            sync_interval: sync_interval.max(1),
            last_stats: None,
        })
    }

    /// Store and, when enough data is buffered, return a minibatch.
    pub fn push_and_sample(&mut self, tr: Transition) -> Result<Option<Vec<Transition>>> {
        self.buffer.push(tr);
        if self.buffer.len() < self.batch_size {
            return Ok(None);
        }
        self.buffer.sample(self.batch_size, &mut self.rng).map(Some)
    }

    pub fn target(&self) -> Option<&AgentBundle> {
        self.target.as_ref()
    }

    pub fn maybe_sync(&mut self, step: usize, agent: &AgentBundle) {
        if let Some(t) = self.target.as_mut() {
            if (step + 1).is_multiple_of(self.sync_interval) {
                t.clone_from(agent);
            }
        }
    }
}
