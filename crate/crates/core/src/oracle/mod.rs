//! Preference judges: prompt rendering, response parsing, remote and synthetic choices,
//! and distillation of a choice into an action plus binary reward.

pub mod http;
pub mod parse;
pub mod prompt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{ItemCatalog, ItemId, ItemRecord, SyntheticGroundTruth};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub use http::{
    complete_all, llm_choice, ChatBackend, RecordingBackend, RemoteEndpoint, ReplayBackend,
};
pub use parse::{parse_response, OracleChoice};
pub use prompt::{build_prompt, PromptSpec, MAX_CANDIDATES};

/// Action and reward produced by one judgement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub action: ItemId,
    pub reward: f64,
    pub was_none: bool,
}

/// How the k candidates shown to the judge are drawn from the actor's distribution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSampling {
    #[default]
    Topk,
    Categorical,
}

impl std::str::FromStr for CandidateSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(CandidateSampling::Topk),
            "categorical" => Ok(CandidateSampling::Categorical),
            other => Err(Error::invalid(format!(
                "unknown candidate sampling `{other}`"
            ))),
        }
    }
}

/// Pick `k` distinct items. Top-k orders by probability (ties to the lower id);
/// categorical draws without replacement proportionally to the remaining mass.
pub fn sample_candidates(
    probs: &[f64],
    k: usize,
    mode: CandidateSampling,
    rng: &mut Rng,
) -> Result<Vec<ItemId>> {
    if k == 0 || k > probs.len() {
        return Err(Error::invalid(format!(
            "cannot draw {k} candidates from {} items",
            probs.len()
        )));
    }
    match mode {
        CandidateSampling::Topk => {
            let mut order: Vec<ItemId> = (0..probs.len()).collect();
            order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
            order.truncate(k);
            Ok(order)
        }
        CandidateSampling::Categorical => {
            let mut weights = probs.to_vec();
            let mut out = Vec::with_capacity(k);
            for _ in 0..k {
                let mass: f64 = weights.iter().sum();
                let pick = if mass > 0.0 {
                    let u = rng.random::<f64>() * mass;
                    let mut acc = 0.0;
                    let mut chosen = None;
                    for (i, &w) in weights.iter().enumerate() {
                        if w <= 0.0 {
                            continue;
                        }
                        acc += w;
                        if u < acc {
                            chosen = Some(i);
                            break;
                        }
                    }
                    // rounding can leave u at the very top of the mass
                    chosen.unwrap_or_else(|| {
                        weights
                            .iter()
                            .rposition(|&w| w > 0.0)
                            .expect("positive mass")
                    })
                } else {
                    let left: Vec<ItemId> =
                        (0..weights.len()).filter(|i| !out.contains(i)).collect();
                    left[rng.random_range(0..left.len())]
                };
                weights[pick] = 0.0;
                out.push(pick);
            }
            Ok(out)
        }
    }
}

/// Deterministic stand-in judge over ground-truth latents.
pub fn synthetic_choice(
    history: &[ItemId],
    candidates: &[ItemId],
    truth: &SyntheticGroundTruth,
    threshold: f64,
) -> OracleChoice {
    if candidates.is_empty() || history.is_empty() {
        return OracleChoice {
            label_index: None,
            raw_response: format!("{}None", prompt::RESPONSE_STEM),
        };
    }
    let dim = truth.dim();
    let mut mean = vec![0.0; dim];
    for &h in history {
        for (m, x) in mean.iter_mut().zip(&truth.item_latents[h]) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= history.len() as f64);
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (pos, &c) in candidates.iter().enumerate() {
        let score: f64 = mean
            .iter()
            .zip(&truth.item_latents[c])
            .map(|(a, b)| a * b)
            .sum();
        if score > best_score {
            best = pos;
            best_score = score;
        }
    }
    let label_index = (best_score >= threshold).then_some(best);
    let raw_response = match label_index {
        Some(i) => format!("{}{}", prompt::RESPONSE_STEM, prompt::label(i)),
        None => format!("{}None", prompt::RESPONSE_STEM),
    };
    OracleChoice {
        label_index,
        raw_response,
    }
}

/// Turn a choice into an action: a label yields its candidate with reward 1,
/// "None" yields a uniformly drawn candidate with reward 0.
pub fn distill(
    choice: &OracleChoice,
    candidates: &[ItemId],
    rng: &mut Rng,
) -> Result<OracleOutcome> {
    if candidates.is_empty() {
        return Err(Error::invalid("distill needs at least one candidate"));
    }
    match choice.label_index {
        Some(i) if i < candidates.len() => Ok(OracleOutcome {
            action: candidates[i],
            reward: 1.0,
            was_none: false,
        }),
        Some(i) => Err(Error::invalid(format!(
            "label index {i} out of range for {} candidates",
            candidates.len()
        ))),
        None => Ok(OracleOutcome {
            action: candidates[rng.random_range(0..candidates.len())],
            reward: 0.0,
            was_none: true,
        }),
    }
}

/// Something that can judge a batch of (history, candidates) queries.
pub trait PreferenceJudge {
    fn judge_batch(&self, queries: &[(Vec<ItemId>, Vec<ItemId>)]) -> Result<Vec<OracleChoice>>;

    fn judge(&self, history: &[ItemId], candidates: &[ItemId]) -> Result<OracleChoice> {
        let mut out = self.judge_batch(&[(history.to_vec(), candidates.to_vec())])?;
        Ok(out.pop().expect("one query, one answer"))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticJudge {
    pub truth: SyntheticGroundTruth,
    pub threshold: f64,
}

impl PreferenceJudge for SyntheticJudge {
    fn judge_batch(&self, queries: &[(Vec<ItemId>, Vec<ItemId>)]) -> Result<Vec<OracleChoice>> {
        Ok(queries
            .iter()
            .map(|(h, c)| synthetic_choice(h, c, &self.truth, self.threshold))
            .collect())
    }
}

/// Judge backed by a chat endpoint (remote, recorded, or replayed).
pub struct LlmJudge {
    pub backend: Box<dyn ChatBackend>,
    pub catalog: ItemCatalog,
    pub spec: PromptSpec,
    pub concurrency: usize,
}

impl LlmJudge {
    fn records(&self, ids: &[ItemId]) -> Result<Vec<ItemRecord>> {
        ids.iter()
            .map(|&id| {
                self.catalog
                    .item(id)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("item {id} not in catalog")))
            })
            .collect()
    }

    pub fn prompt_for(&self, history: &[ItemId], candidates: &[ItemId]) -> Result<String> {
        build_prompt(
            &self.records(history)?,
            &self.records(candidates)?,
            &self.spec,
        )
    }
}

impl PreferenceJudge for LlmJudge {
    fn judge_batch(&self, queries: &[(Vec<ItemId>, Vec<ItemId>)]) -> Result<Vec<OracleChoice>> {
        let prompts = queries
            .iter()
            .map(|(h, c)| self.prompt_for(h, c))
            .collect::<Result<Vec<_>>>()?;
        complete_all(self.backend.as_ref(), &prompts, self.concurrency)
            .into_iter()
            .map(|r| Ok(parse_response(&r?, self.spec.k)))
            .collect()
    }
}
