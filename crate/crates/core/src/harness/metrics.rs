use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::ItemId;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::rng::{stream_rng, streams};

/// One finished episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    #[serde(rename = "return_R")]
    pub return_r: f64,
    #[serde(rename = "length_Len")]
    pub length_len: usize,
    pub avg_reward: f64,
    pub episode_index: usize,
    /// Environment steps taken in the run when this episode ended.
    pub global_step: usize,
}

impl EpisodeRecord {
    pub fn new(
        return_r: f64,
        length_len: usize,
        episode_index: usize,
        global_step: usize,
    ) -> Result<Self> {
        if length_len == 0 {
            return Err(Error::invalid("episode length must be >= 1"));
        }
        Ok(EpisodeRecord {
            return_r,
            length_len,
            avg_reward: return_r / length_len as f64,
            episode_index,
            global_step,
        })
    }
}

/// Mean Return, mean Len and mean per-episode average reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r: f64,
    pub len: f64,
    pub r_avg: f64,
}

pub fn compute_metrics(episodes: &[EpisodeRecord]) -> Result<Metrics> {
    if episodes.is_empty() {
        return Err(Error::invalid("no episodes to summarise"));
    }
    let n = episodes.len() as f64;
    Ok(Metrics {
        r: episodes.iter().map(|e| e.return_r).sum::<f64>() / n,
        len: episodes.iter().map(|e| e.length_len as f64).sum::<f64>() / n,
        r_avg: episodes
            .iter()
            .map(|e| e.return_r / e.length_len as f64)
            .sum::<f64>()
            / n,
    })
}

/// Trailing mean over the last `window` episodes, one point per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub global_step: usize,
    pub episode_index: usize,
    pub return_r: f64,
    pub length_len: f64,
}

pub const SMOOTHING_WINDOW: usize = 20;

pub fn smooth(curve: &[EpisodeRecord], window: usize) -> Vec<CurvePoint> {
    let window = window.max(1);
    (0..curve.len())
        .map(|i| {
            let tail = &curve[(i + 1).saturating_sub(window)..=i];
            let n = tail.len() as f64;
            CurvePoint {
                global_step: curve[i].global_step,
                episode_index: curve[i].episode_index,
                return_r: tail.iter().map(|e| e.return_r).sum::<f64>() / n,
                length_len: tail.iter().map(|e| e.length_len as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

/// First step at which the smoothed Return reaches `fraction` of its final value.
pub fn steps_to_fraction(smoothed: &[CurvePoint], fraction: f64) -> Option<usize> {
    let last = smoothed.last()?.return_r;
    smoothed
        .iter()
        .find(|p| p.return_r >= fraction * last)
        .map(|p| p.global_step)
}

/// Anything that can rank items for a history; the greedy action is the top score.
pub trait ScoringPolicy {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>>;

    fn greedy_action(&self, history: &[ItemId]) -> Result<ItemId> {
        Ok(argmax(&self.action_scores(history)?))
    }
}

impl<P: ScoringPolicy + ?Sized> ScoringPolicy for &P {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        (**self).action_scores(history)
    }
}

impl ScoringPolicy for crate::agent::AgentBundle {
    fn action_scores(&self, history: &[ItemId]) -> Result<Vec<f64>> {
        self.policy(history)
    }
}

/// Seeded permutation of the environment's start states; evaluation cycles through it.
fn start_order(env: &Environment, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..env.num_starts()).collect();
    order.shuffle(&mut stream_rng(seed, streams::EVAL));
    order
}

/// Greedy rollouts of a frozen policy on `env`, visiting every start state before repeating one.
pub fn evaluate<P: ScoringPolicy + ?Sized>(
    policy: &P,
    env: &Environment,
    num_episodes: usize,
    seed: u64,
) -> Result<(Metrics, Vec<EpisodeRecord>)> {
    if num_episodes == 0 {
        return Err(Error::invalid("evaluation needs at least one episode"));
    }
    let starts = start_order(env, seed);
    let mut records = Vec::with_capacity(num_episodes);
    let mut steps = 0;
    for index in 0..num_episodes {
        let mut state = env.reset_at(starts[index % starts.len()]);
        let mut ret = 0.0;
        while !state.done {
            let action = policy.greedy_action(&state.history)?;
            ret += env.step(&mut state, action)?.reward;
            steps += 1;
        }
        records.push(EpisodeRecord::new(ret, state.steps_taken, index, steps)?);
    }
    Ok((compute_metrics(&records)?, records))
}

/// Return of the one-step-lookahead greedy policy, an upper reference for any agent
/// that cannot see the user.
pub fn lookahead_bound(env: &Environment, num_episodes: usize, seed: u64) -> Result<Metrics> {
    if num_episodes == 0 {
        return Err(Error::invalid("evaluation needs at least one episode"));
    }
    let starts = start_order(env, seed);
    let mut records = Vec::with_capacity(num_episodes);
    let mut steps = 0;
    for index in 0..num_episodes {
        let mut state = env.reset_at(starts[index % starts.len()]);
        let mut ret = 0.0;
        while !state.done {
            let scores = (0..env.num_items())
                .map(|a| env.score(&state, a))
                .collect::<Result<Vec<_>>>()?;
            ret += env.step(&mut state, argmax(&scores))?.reward;
            steps += 1;
        }
        records.push(EpisodeRecord::new(ret, state.steps_taken, index, steps)?);
    }
    compute_metrics(&records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(r: f64, len: usize) -> EpisodeRecord {
        EpisodeRecord::new(r, len, 0, 0).unwrap()
    }

    #[test]
    fn identical_episodes() {
        let m = compute_metrics(&[rec(2.0, 4), rec(2.0, 4)]).unwrap();
        assert_eq!((m.r, m.len, m.r_avg), (2.0, 4.0, 0.5));
        assert!(compute_metrics(&[]).is_err());
        assert!(EpisodeRecord::new(1.0, 0, 0, 0).is_err());
    }

    #[test]
    fn constructed_episode_ratio() {
        let m = compute_metrics(&[rec(4.92, 6)]).unwrap();
        assert!((m.r_avg - 0.82).abs() < 0.01);
        assert!((5.11_f64 / 6.21 - 0.82).abs() < 0.01);
    }

    #[test]
    fn smoothing_window() {
        let curve: Vec<EpisodeRecord> = (0..5)
            .map(|i| EpisodeRecord::new(i as f64, 1, i, i + 1).unwrap())
            .collect();
        let s = smooth(&curve, 2);
        let r: Vec<f64> = s.iter().map(|p| p.return_r).collect();
        assert_eq!(r, vec![0.0, 0.5, 1.5, 2.5, 3.5]);
        assert_eq!(steps_to_fraction(&s, 0.9), Some(5));
        assert_eq!(steps_to_fraction(&s, 0.4), Some(3));
    }
}
