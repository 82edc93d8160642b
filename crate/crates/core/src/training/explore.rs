use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::ItemId;
use crate::error::{Error, Result};
use crate::nn::{argmax, sample_categorical, softmax, validate_distribution};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplorationStrategy {
    Greedy,
    EpsilonGreedy { epsilon: f64 },
    Categorical,
}

pub const DEFAULT_EPSILON: f64 = 0.1;

impl ExplorationStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ExplorationStrategy::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Parse `greedy`, `egreedy` / `epsilon_greedy` (with `epsilon`), or `categorical`.
    pub fn parse(name: &str, epsilon: f64) -> Result<Self> {
        let s = match name {
            "greedy" => ExplorationStrategy::Greedy,
            "egreedy" | "epsilon_greedy" => ExplorationStrategy::EpsilonGreedy { epsilon },
            "categorical" => ExplorationStrategy::Categorical,
            other => return Err(Error::invalid(format!("unknown strategy `{other}`"))),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExplorationStrategy::Greedy => "greedy",
            ExplorationStrategy::EpsilonGreedy { .. } => "egreedy",
            ExplorationStrategy::Categorical => "categorical",
        }
    }
}

/// An action plus whether it came from the uniform random branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: ItemId,
    pub explored: bool,
}

pub fn decide(dist: &[f64], strategy: ExplorationStrategy, rng: &mut Rng) -> Result<Decision> {
    validate_distribution(dist)?;
    Ok(match strategy {
        ExplorationStrategy::Greedy => Decision {
            action: argmax(dist),
            explored: false,
        },
        ExplorationStrategy::Categorical => Decision {
            action: sample_categorical(dist, rng)?,
            explored: false,
        },
        ExplorationStrategy::EpsilonGreedy { epsilon } => {
            if rng.random::<f64>() < epsilon {
                Decision {
                    action: rng.random_range(0..dist.len()),
                    explored: true,
                }
            } else {
                Decision {
                    action: argmax(dist),
                    explored: false,
                }
            }
        }
    })
}

/// Like [`decide`] over unnormalised scores (e.g. Q-values); categorical samples
/// from their softmax.
pub fn decide_on_scores(
    scores: &[f64],
    strategy: ExplorationStrategy,
    rng: &mut Rng,
) -> Result<Decision> {
    if scores.is_empty() || scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("action scores".into()));
    }
    match strategy {
        ExplorationStrategy::Categorical => decide(&softmax(scores)?, strategy, rng),
        ExplorationStrategy::Greedy => Ok(Decision {
            action: argmax(scores),
            explored: false,
        }),
        ExplorationStrategy::EpsilonGreedy { epsilon } => Ok(if rng.random::<f64>() < epsilon {
            Decision {
                action: rng.random_range(0..scores.len()),
                explored: true,
            }
        } else {
            Decision {
                action: argmax(scores),
                explored: false,
            }
        }),
    }
}

pub fn choose_action(dist: &[f64], strategy: ExplorationStrategy, rng: &mut Rng) -> Result<ItemId> {
    Ok(decide(dist, strategy, rng)?.action)
}
