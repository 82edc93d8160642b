//! Simulated users: a reward model plus an episode lifecycle with a quit rule.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{InteractionLog, ItemId, SyntheticGroundTruth, UserId};
use crate::encoder::{self, EncoderConfig, ITEM_EMB};
use crate::error::{Error, Result};
use crate::nn::{add_outer, dot, matvec, matvec_t, softmax, ParamSet, Sgd, Tensor, TensorMap};
use crate::rng::{stream_rng, streams, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardModelKind {
    #[serde(alias = "mf")]
    MatrixFactorization,
    Sequential,
}

impl std::str::FromStr for RewardModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" | "matrix_factorization" => Ok(RewardModelKind::MatrixFactorization),
            "sequential" => Ok(RewardModelKind::Sequential),
            other => Err(Error::invalid(format!(
                "unknown reward model kind `{other}`"
            ))),
        }
    }
}

/// Biased matrix factorisation: `p_u . q_i + b_u + b_i + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    users: BTreeMap<UserId, usize>,
    pub user_factors: Tensor,
    pub item_factors: Tensor,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub global_bias: f64,
}

impl MfModel {
    pub fn new(
        user_ids: &[UserId],
        user_factors: Tensor,
        item_factors: Tensor,
        user_bias: Vec<f64>,
        item_bias: Vec<f64>,
        global_bias: f64,
    ) -> Result<Self> {
        let (nu, nd) = (user_factors.shape()[0], user_factors.shape()[1]);
        let ni = item_factors.shape()[0];
        if item_factors.shape()[1] != nd
            || user_ids.len() != nu
            || user_bias.len() != nu
            || item_bias.len() != ni
        {
            return Err(Error::invalid("inconsistent matrix factorisation shapes"));
        }
        let users: BTreeMap<UserId, usize> =
            user_ids.iter().enumerate().map(|(r, &u)| (u, r)).collect();
        if users.len() != nu {
            return Err(Error::invalid(
                "duplicate user id in matrix factorisation model",
            ));
        }
        let finite = user_factors.is_finite()
            && item_factors.is_finite()
            && user_bias.iter().chain(&item_bias).all(|v| v.is_finite())
            && global_bias.is_finite();
        if !finite {
            return Err(Error::NonFinite("matrix factorisation parameters".into()));
        }
        Ok(MfModel {
            users,
            user_factors,
            item_factors,
            user_bias,
            item_bias,
            global_bias,
        })
    }

    pub fn user_ids(&self) -> Vec<UserId> {
        let mut ids = vec![0; self.users.len()];
        for (&u, &r) in &self.users {
            ids[r] = u;
        }
        ids
    }

    pub fn has_user(&self, user: UserId) -> bool {
        self.users.contains_key(&user)
    }

    pub fn raw_score(&self, user: UserId, item: ItemId) -> Result<f64> {
        let &r = self
            .users
            .get(&user)
            .ok_or_else(|| Error::Environment(format!("unknown user {user}")))?;
        Ok(dot(self.user_factors.row(r), self.item_factors.row(item))
            + self.user_bias[r]
            + self.item_bias[item]
            + self.global_bias)
    }
}

/// Frozen next-item encoder scored by `scale * (h . e_a) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialModel {
    pub config: EncoderConfig,
    pub params: ParamSet,
    pub scale: f64,
    pub offset: f64,
}

impl SequentialModel {
    fn logit(&self, history: &[ItemId], item: ItemId) -> Result<f64> {
        let h = encoder::encode(history, &self.params, &self.config)?;
        Ok(dot(h.as_slice(), self.params.get(ITEM_EMB).row(item)))
    }

    pub fn raw_score(&self, history: &[ItemId], item: ItemId) -> Result<f64> {
        Ok(self.scale * self.logit(history, item)? + self.offset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardModel {
    MatrixFactorization(MfModel),
    Sequential(SequentialModel),
}

/// What the reward model conditions on.
#[derive(Debug, Clone, Copy)]
pub struct ScoreContext<'a> {
    pub user: Option<UserId>,
    pub history: &'a [ItemId],
}

/// Serializable description of a reward model beyond its tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModelMeta {
    pub kind: RewardModelKind,
    pub num_items: usize,
    #[serde(default)]
    pub users: Vec<UserId>,
    #[serde(default)]
    pub global_bias: f64,
    #[serde(default)]
    pub embed_dim: usize,
    #[serde(default)]
    pub max_seq_len: usize,
    #[serde(default)]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
}

const MF_USER: &str = "mf.user_factors";
const MF_ITEM: &str = "mf.item_factors";
const MF_USER_BIAS: &str = "mf.user_bias";
const MF_ITEM_BIAS: &str = "mf.item_bias";

impl RewardModel {
    pub fn kind(&self) -> RewardModelKind {
        match self {
            RewardModel::MatrixFactorization(_) => RewardModelKind::MatrixFactorization,
            RewardModel::Sequential(_) => RewardModelKind::Sequential,
        }
    }

    pub fn num_items(&self) -> usize {
        match self {
            RewardModel::MatrixFactorization(m) => m.item_factors.shape()[0],
            RewardModel::Sequential(s) => s.config.num_items,
        }
    }

    /// MF model whose scores are `scale * (u . v_i) + offset` under the generating latents.
    pub fn from_ground_truth(
        truth: &SyntheticGroundTruth,
        scale: f64,
        offset: f64,
    ) -> Result<Self> {
        let d = truth.dim();
        let nu = truth.user_latents.len();
        let ni = truth.item_latents.len();
        let users = Tensor::from_vec(&[nu, d], truth.user_latents.concat())?;
        let items = Tensor::from_vec(
            &[ni, d],
            truth
                .item_latents
                .iter()
                .flatten()
                .map(|v| v * scale)
                .collect(),
        )?;
        let ids: Vec<UserId> = (0..nu as UserId).collect();
        Ok(RewardModel::MatrixFactorization(MfModel::new(
            &ids,
            users,
            items,
            vec![0.0; nu],
            vec![0.0; ni],
            offset,
        )?))
    }

    /// Sequential model scoring `scale * (v_last + mean(v_window)) . v_a + offset` under the
    /// generating item latents: uniform attention, identity values, no positions.
    pub fn sequential_from_ground_truth(
        truth: &SyntheticGroundTruth,
        max_seq_len: usize,
        scale: f64,
        offset: f64,
    ) -> Result<Self> {
        let d = truth.dim();
        let n = truth.item_latents.len();
        let config = EncoderConfig::new(d, max_seq_len, n)?;
        let mut identity = Tensor::zeros(&[d, d]);
        for i in 0..d {
            identity.row_mut(i)[i] = 1.0;
        }
        let mut params = ParamSet::new();
        params.insert(
            ITEM_EMB,
            Tensor::from_vec(&[n, d], truth.item_latents.concat())?,
        )?;
        params.insert(encoder::POS_EMB, Tensor::zeros(&[max_seq_len, d]))?;
        params.insert(encoder::W_Q, Tensor::zeros(&[d, d]))?;
        params.insert(encoder::W_K, Tensor::zeros(&[d, d]))?;
        params.insert(encoder::W_V, identity)?;
        Ok(RewardModel::Sequential(SequentialModel {
            config,
            params,
            scale,
            offset,
        }))
    }

    /// Unclipped model output.
    pub fn raw_score(&self, ctx: ScoreContext<'_>, action: ItemId) -> Result<f64> {
        if action >= self.num_items() {
            return Err(Error::invalid(format!(
                "action {action} out of range (num_items = {})",
                self.num_items()
            )));
        }
        match self {
            RewardModel::MatrixFactorization(m) => {
                let user = ctx.user.ok_or_else(|| {
                    Error::Environment("matrix factorisation score needs a user".into())
                })?;
                m.raw_score(user, action)
            }
            RewardModel::Sequential(s) => s.raw_score(ctx.history, action),
        }
    }

    /// Reward for `action` in `ctx`, clipped to `[0, r_max]`.
    pub fn score(&self, ctx: ScoreContext<'_>, action: ItemId, r_max: f64) -> Result<f64> {
        Ok(self.raw_score(ctx, action)?.clamp(0.0, r_max))
    }

    pub fn to_parts(&self) -> (RewardModelMeta, TensorMap) {
        let mut tensors = ParamSet::new();
        let meta = match self {
            RewardModel::MatrixFactorization(m) => {
                let put = |t: &mut ParamSet, name: &str, v: Tensor| {
                    t.insert(name, v).expect("fresh name")
                };
                put(&mut tensors, MF_USER, m.user_factors.clone());
                put(&mut tensors, MF_ITEM, m.item_factors.clone());
                put(
                    &mut tensors,
                    MF_USER_BIAS,
                    Tensor::from_vec(&[m.user_bias.len()], m.user_bias.clone()).expect("shape"),
                );
                put(
                    &mut tensors,
                    MF_ITEM_BIAS,
                    Tensor::from_vec(&[m.item_bias.len()], m.item_bias.clone()).expect("shape"),
                );
                RewardModelMeta {
                    kind: RewardModelKind::MatrixFactorization,
                    num_items: m.item_factors.shape()[0],
                    users: m.user_ids(),
                    global_bias: m.global_bias,
                    embed_dim: m.item_factors.shape()[1],
                    max_seq_len: 0,
                    scale: 0.0,
                    offset: 0.0,
                }
            }
            RewardModel::Sequential(s) => {
                for (name, t) in s.params.values().iter() {
                    tensors.insert(name.clone(), t.clone()).expect("fresh name");
                }
                RewardModelMeta {
                    kind: RewardModelKind::Sequential,
                    num_items: s.config.num_items,
                    users: Vec::new(),
                    global_bias: 0.0,
                    embed_dim: s.config.embed_dim,
                    max_seq_len: s.config.max_seq_len,
                    scale: s.scale,
                    offset: s.offset,
                }
            }
        };
        (meta, tensors.values().clone())
    }

    pub fn from_parts(meta: &RewardModelMeta, tensors: &TensorMap) -> Result<Self> {
        let need = |name: &str| {
            tensors
                .try_get(name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
        };
        match meta.kind {
            RewardModelKind::MatrixFactorization => {
                Ok(RewardModel::MatrixFactorization(MfModel::new(
                    &meta.users,
                    need(MF_USER)?,
                    need(MF_ITEM)?,
                    need(MF_USER_BIAS)?.data().to_vec(),
                    need(MF_ITEM_BIAS)?.data().to_vec(),
                    meta.global_bias,
                )?))
            }
            RewardModelKind::Sequential => {
                let config = EncoderConfig::new(meta.embed_dim, meta.max_seq_len, meta.num_items)?;
                let mut params = ParamSet::new();
                for name in [
                    encoder::ITEM_EMB,
                    encoder::POS_EMB,
                    encoder::W_Q,
                    encoder::W_K,
                    encoder::W_V,
                ] {
                    params.insert(name, need(name)?)?;
                }
                let d = config.embed_dim;
                let expect = [
                    (encoder::ITEM_EMB, vec![config.num_items, d]),
                    (encoder::POS_EMB, vec![config.max_seq_len, d]),
                    (encoder::W_Q, vec![d, d]),
                    (encoder::W_K, vec![d, d]),
                    (encoder::W_V, vec![d, d]),
                ];
                for (name, shape) in expect {
                    if params.get(name).shape() != shape.as_slice() {
                        return Err(Error::Checkpoint(format!(
                            "tensor `{name}` has wrong shape"
                        )));
                    }
                }
                Ok(RewardModel::Sequential(SequentialModel {
                    config,
                    params,
                    scale: meta.scale,
                    offset: meta.offset,
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfHyper {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub reg: f64,
    /// Sampled unobserved items per observed interaction.
    pub negatives: usize,
    pub init_std: f64,
    /// Target drop from the first to the last logged position, as a fraction of r_max.
    pub position_decay: f64,
}

impl Default for MfHyper {
    fn default() -> Self {
        MfHyper {
            dim: 16,
            epochs: 60,
            lr: 0.02,
            reg: 0.01,
            negatives: 4,
            init_std: 0.1,
            position_decay: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeqHyper {
    pub embed_dim: usize,
    pub max_seq_len: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Mean calibrated reward of a logged next item.
    pub positive_level: f64,
}

impl Default for SeqHyper {
    fn default() -> Self {
        SeqHyper {
            embed_dim: 32,
            max_seq_len: 10,
            epochs: 5,
            lr: 0.05,
            positive_level: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitSpec {
    Mf(MfHyper),
    Sequential(SeqHyper),
}

/// Mean training loss after each epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epoch_losses: Vec<f64>,
}

impl FitReport {
    /// No epoch loss exceeds its predecessor by more than `tol` (relative).
    pub fn is_monotone_within(&self, tol: f64) -> bool {
        self.epoch_losses
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + tol))
    }
}

/// Fit a reward model on a training log.
pub fn fit_reward_model(
    log: &InteractionLog,
    num_items: usize,
    spec: &FitSpec,
    r_max: f64,
    seed: u64,
) -> Result<(RewardModel, FitReport)> {
    if log.num_interactions() == 0 {
        return Err(Error::Environment(
            "cannot fit a reward model on an empty log".into(),
        ));
    }
    log.validate_items(num_items)?;
    match spec {
        FitSpec::Mf(h) => fit_mf(log, num_items, h, r_max, seed),
        FitSpec::Sequential(h) => fit_sequential(log, num_items, h, r_max, seed),
    }
}

fn fit_mf(
    log: &InteractionLog,
    num_items: usize,
    h: &MfHyper,
    r_max: f64,
    seed: u64,
) -> Result<(RewardModel, FitReport)> {
    if h.dim == 0 || !(h.lr > 0.0) || h.reg < 0.0 || !(0.0..=1.0).contains(&h.position_decay) {
        return Err(Error::invalid(
            "matrix factorisation needs dim > 0, lr > 0, reg >= 0, position_decay in [0, 1]",
        ));
    }
    let mut rng = stream_rng(seed, streams::FIT);
    let user_ids: Vec<UserId> = log
        .sequences
        .iter()
        .map(|s| s.user_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let row: BTreeMap<UserId, usize> = user_ids.iter().enumerate().map(|(r, &u)| (u, r)).collect();

    // (user row, item, target); negatives are drawn once so the objective is fixed
    let mut samples: Vec<(usize, ItemId, f64)> = Vec::new();
    let mut seen: Vec<BTreeSet<ItemId>> = vec![BTreeSet::new(); user_ids.len()];
    for seq in &log.sequences {
        seen[row[&seq.user_id]].extend(seq.items.iter().copied());
    }
    for seq in &log.sequences {
        let r = row[&seq.user_id];
        let len = seq.items.len() as f64;
        for (pos, &item) in seq.items.iter().enumerate() {
            samples.push((r, item, r_max * (1.0 - h.position_decay * pos as f64 / len)));
            if seen[r].len() >= num_items {
                continue;
            }
            for _ in 0..h.negatives {
                let neg = loop {
                    let cand = rng.random_range(0..num_items);
                    if !seen[r].contains(&cand) {
                        break cand;
                    }
                };
                samples.push((r, neg, 0.0));
            }
        }
    }

    let normal = Normal::new(0.0, h.init_std).map_err(|e| Error::invalid(e.to_string()))?;
    let gauss =
        |n: usize, rng: &mut Rng| -> Vec<f64> { (0..n).map(|_| normal.sample(rng)).collect() };
    let mut p = Tensor::from_vec(
        &[user_ids.len(), h.dim],
        gauss(user_ids.len() * h.dim, &mut rng),
    )?;
    let mut q = Tensor::from_vec(&[num_items, h.dim], gauss(num_items * h.dim, &mut rng))?;
    let mut bu = vec![0.0; user_ids.len()];
    let mut bi = vec![0.0; num_items];
    let g = samples.iter().map(|s| s.2).sum::<f64>() / samples.len() as f64;

    let objective = |p: &Tensor, q: &Tensor, bu: &[f64], bi: &[f64]| -> f64 {
        samples
            .iter()
            .map(|&(u, i, t)| {
                let e = dot(p.row(u), q.row(i)) + bu[u] + bi[i] + g - t;
                e * e + h.reg * (dot(p.row(u), p.row(u)) + dot(q.row(i), q.row(i)))
            })
            .sum::<f64>()
            / samples.len() as f64
    };

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = FitReport::default();
    for epoch in 0..h.epochs {
        order.shuffle(&mut rng);
        for &s in &order {
            let (u, i, t) = samples[s];
            let e = dot(p.row(u), q.row(i)) + bu[u] + bi[i] + g - t;
            let pu = p.row(u).to_vec();
            let qi = q.row(i).to_vec();
            for (k, v) in p.row_mut(u).iter_mut().enumerate() {
                *v -= h.lr * (e * qi[k] + h.reg * pu[k]);
            }
            for (k, v) in q.row_mut(i).iter_mut().enumerate() {
                *v -= h.lr * (e * pu[k] + h.reg * qi[k]);
            }
            bu[u] -= h.lr * e;
            bi[i] -= h.lr * e;
        }
        let loss = objective(&p, &q, &bu, &bi);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "reward model loss at epoch {epoch}"
            )));
        }
        log::debug!("mf epoch {epoch}: loss {loss:.5}");
        report.epoch_losses.push(loss);
    }
    let model = MfModel::new(&user_ids, p, q, bu, bi, g)?;
    Ok((RewardModel::MatrixFactorization(model), report))
}

fn fit_sequential(
    log: &InteractionLog,
    num_items: usize,
    h: &SeqHyper,
    r_max: f64,
    seed: u64,
) -> Result<(RewardModel, FitReport)> {
    let config = EncoderConfig::new(h.embed_dim, h.max_seq_len, num_items)?;
    let mut init_rng = stream_rng(seed, streams::INIT);
    let mut params = ParamSet::new();
    encoder::init_encoder_params(&mut params, &config, &mut init_rng)?;
    let mut rng = stream_rng(seed, streams::FIT);

    // (sequence index, prefix end) with target items[end]
    let pairs: Vec<(usize, usize)> = log
        .sequences
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| (1..seq.items.len()).map(move |t| (s, t)))
        .collect();
    let mut sgd = Sgd::new(h.lr);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut report = FitReport::default();
    for epoch in 0..h.epochs {
        if pairs.is_empty() {
            break;
        }
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &o in &order {
            let (s, t) = pairs[o];
            let items = &log.sequences[s].items;
            let target = items[t];
            let trace = encoder::forward_traced(&items[..t], params.values(), &config)?;
            let logits = matvec(params.get(ITEM_EMB), &trace.output);
            let mut probs = softmax(&logits)?;
            total -= probs[target].max(1e-300).ln();
            probs[target] -= 1.0;
            let dh = matvec_t(params.get(ITEM_EMB), &probs);
            let (values, grads) = params.split_mut();
            add_outer(grads.get_mut(ITEM_EMB), &probs, &trace.output);
            encoder::backward(&trace, &dh, values, grads);
            sgd.step(&mut params)?;
        }
        let loss = total / pairs.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "reward model loss at epoch {epoch}"
            )));
        }
        log::debug!("sequential epoch {epoch}: cross-entropy {loss:.5}");
        report.epoch_losses.push(loss);
    }

    let mut model = SequentialModel {
        config,
        params,
        scale: 1.0,
        offset: 0.0,
    };
    // affine calibration: mean negative logit -> 0, mean positive logit -> positive_level * r_max
    let (mut pos, mut neg) = (0.0, 0.0);
    for &(s, t) in &pairs {
        let items = &log.sequences[s].items;
        pos += model.logit(&items[..t], items[t])?;
        neg += model.logit(&items[..t], rng.random_range(0..num_items))?;
    }
    if !pairs.is_empty() {
        pos /= pairs.len() as f64;
        neg /= pairs.len() as f64;
    }
    if pos - neg > 1e-9 {
        model.scale = h.positive_level * r_max / (pos - neg);
        model.offset = -model.scale * neg;
    } else {
        log::warn!(
            "sequential reward model did not separate logged from random items; using raw logits"
        );
    }
    Ok((RewardModel::Sequential(model), report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub max_steps: usize,
    pub quit_threshold: f64,
    pub r_max: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_steps: 30,
            quit_threshold: 0.75,
            r_max: 5.0,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be >= 1"));
        }
        if !(0.0 <= self.quit_threshold && self.quit_threshold < self.r_max) {
            return Err(Error::invalid(format!(
                "need 0 <= quit_threshold ({}) < r_max ({})",
                self.quit_threshold, self.r_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub history: Vec<ItemId>,
    pub user_id: Option<UserId>,
    pub steps_taken: usize,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Start {
    User { user: UserId, first: ItemId },
    Item(ItemId),
}

/// A reward model bound to the log whose users or items seed episodes. Immutable once built.
#[derive(Debug, Clone)]
pub struct Environment {
    model: RewardModel,
    starts: Vec<Start>,
    config: EnvConfig,
}

impl Environment {
    pub fn new(model: RewardModel, log: &InteractionLog, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        log.validate_items(model.num_items())?;
        let starts: Vec<Start> = match &model {
            RewardModel::MatrixFactorization(m) => log
                .sequences
                .iter()
                .filter(|s| !s.items.is_empty())
                .map(|s| {
                    if m.has_user(s.user_id) {
                        Ok(Start::User {
                            user: s.user_id,
                            first: s.items[0],
                        })
                    } else {
                        Err(Error::Environment(format!("unknown user {}", s.user_id)))
                    }
                })
                .collect::<Result<_>>()?,
            RewardModel::Sequential(_) => log
                .sequences
                .iter()
                .filter_map(|s| s.items.first().map(|&i| Start::Item(i)))
                .collect(),
        };
        if starts.is_empty() {
            return Err(Error::Environment(
                "log has no sequences to start episodes from".into(),
            ));
        }
        Ok(Environment {
            model,
            starts,
            config,
        })
    }

    pub fn model(&self) -> &RewardModel {
        &self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn num_items(&self) -> usize {
        self.model.num_items()
    }

    pub fn num_starts(&self) -> usize {
        self.starts.len()
    }

    fn state_from(&self, start: Start) -> EnvState {
        let (user_id, first) = match start {
            Start::User { user, first } => (Some(user), first),
            Start::Item(i) => (None, i),
        };
        EnvState {
            history: vec![first],
            user_id,
            steps_taken: 0,
            done: false,
        }
    }

    /// Start an episode from a uniformly drawn user (MF) or logged first item (sequential).
    pub fn reset(&self, rng: &mut Rng) -> EnvState {
        self.state_from(self.starts[rng.random_range(0..self.starts.len())])
    }

    /// Start an episode from the `index`-th start (wrapping), for exhaustive evaluation.
    pub fn reset_at(&self, index: usize) -> EnvState {
        self.state_from(self.starts[index % self.starts.len()])
    }

    pub fn score(&self, state: &EnvState, action: ItemId) -> Result<f64> {
        let ctx = ScoreContext {
            user: state.user_id,
            history: &state.history,
        };
        self.model.score(ctx, action, self.config.r_max)
    }

    pub fn step(&self, state: &mut EnvState, action: ItemId) -> Result<StepOutcome> {
        if state.done {
            return Err(Error::Environment(
                "step called on a finished episode".into(),
            ));
        }
        let reward = self.score(state, action)?;
        state.history.push(action);
        state.steps_taken += 1;
        state.done =
            reward < self.config.quit_threshold || state.steps_taken >= self.config.max_steps;
        Ok(StepOutcome {
            reward,
            done: state.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, UserSequence};

    fn seq(user: UserId, items: Vec<ItemId>) -> UserSequence {
        let n = items.len() as i64;
        UserSequence {
            user_id: user,
            items,
            timestamps: (0..n).collect(),
        }
    }

    fn fixed_mf(scores: &[f64]) -> RewardModel {
        // one user, one latent dim: score(item) = 1 * scores[item]
        let n = scores.len();
        RewardModel::MatrixFactorization(
            MfModel::new(
                &[0],
                Tensor::from_vec(&[1, 1], vec![1.0]).unwrap(),
                Tensor::from_vec(&[n, 1], scores.to_vec()).unwrap(),
                vec![0.0],
                vec![0.0; n],
                0.0,
            )
            .unwrap(),
        )
    }

    #[test]
    fn zero_and_orthogonal_factors() {
        let m = RewardModel::MatrixFactorization(
            MfModel::new(
                &[7],
                Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap(),
                Tensor::from_vec(&[2, 2], vec![0.0, 0.0, 0.0, 3.0]).unwrap(),
                vec![0.0],
                vec![0.0, 0.0],
                0.0,
            )
            .unwrap(),
        );
        let ctx = ScoreContext {
            user: Some(7),
            history: &[0],
        };
        assert_eq!(m.score(ctx, 0, 5.0).unwrap(), 0.0);
        assert_eq!(m.raw_score(ctx, 1).unwrap(), 0.0);
        let unknown = ScoreContext {
            user: Some(8),
            history: &[0],
        };
        assert!(m.score(unknown, 0, 5.0).is_err());
    }

    #[test]
    fn hand_simulated_rollout() {
        // rewards [1, 1, 1, 0.1] then quit
        let m = fixed_mf(&[1.0, 0.1, 9.0]);
        let log = InteractionLog::from_sequences(vec![seq(0, vec![2, 0])]);
        let env = Environment::new(
            m,
            &log,
            EnvConfig {
                max_steps: 30,
                quit_threshold: 0.2,
                r_max: 5.0,
                seed: 0,
            },
        )
        .unwrap();
        let mut s = env.reset(&mut stream_rng(0, streams::ENV));
        assert_eq!((s.history.clone(), s.user_id), (vec![2], Some(0)));
        let mut ret = 0.0;
        let mut len = 0;
        for a in [0, 0, 0, 1] {
            let o = env.step(&mut s, a).unwrap();
            ret += o.reward;
            len += 1;
            if o.done {
                break;
            }
        }
        assert!((ret - 3.1_f64).abs() < 1e-12);
        assert_eq!(len, 4);
        assert!(s.done);
        assert!(env.step(&mut s, 0).is_err());
        assert_eq!(s.history, vec![2, 0, 0, 0, 1]);
        // clipping
        let mut s = env.reset_at(0);
        assert_eq!(env.step(&mut s, 2).unwrap().reward, 5.0);
    }

    #[test]
    fn horizon_of_one() {
        let env = Environment::new(
            fixed_mf(&[3.0, 3.0]),
            &InteractionLog::from_sequences(vec![seq(0, vec![0, 1])]),
            EnvConfig {
                max_steps: 1,
                ..EnvConfig::default()
            },
        )
        .unwrap();
        let mut s = env.reset_at(0);
        assert!(env.step(&mut s, 1).unwrap().done);
    }

    #[test]
    fn config_validation() {
        let bad = EnvConfig {
            quit_threshold: 5.0,
            ..EnvConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(EnvConfig {
            max_steps: 0,
            ..EnvConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn mf_prefers_the_observed_item() {
        let log = InteractionLog::from_sequences(vec![
            seq(0, vec![3]),
            seq(1, vec![1, 2]),
            seq(2, vec![0, 4]),
        ]);
        let spec = FitSpec::Mf(MfHyper {
            dim: 4,
            epochs: 200,
            ..MfHyper::default()
        });
        let (model, report) = fit_reward_model(&log, 6, &spec, 5.0, 1).unwrap();
        assert!(report.is_monotone_within(0.05), "{:?}", report.epoch_losses);
        let ctx = ScoreContext {
            user: Some(0),
            history: &[3],
        };
        let hit = model.raw_score(ctx, 3).unwrap();
        for other in [0, 1, 2, 4, 5] {
            assert!(hit > model.raw_score(ctx, other).unwrap(), "item {other}");
        }
    }

    #[test]
    fn degenerate_logs() {
        let one = InteractionLog::from_sequences(vec![seq(0, vec![1])]);
        let (m, _) = fit_reward_model(&one, 3, &FitSpec::Mf(MfHyper::default()), 5.0, 0).unwrap();
        let ctx = ScoreContext {
            user: Some(0),
            history: &[1],
        };
        assert!((0..3).all(|i| m.raw_score(ctx, i).unwrap().is_finite()));
        let (s, _) =
            fit_reward_model(&one, 3, &FitSpec::Sequential(SeqHyper::default()), 5.0, 0).unwrap();
        assert!((0..3).all(|i| s.raw_score(ctx, i).unwrap().is_finite()));
        let empty = InteractionLog::from_sequences(vec![]);
        assert!(fit_reward_model(&empty, 3, &FitSpec::Mf(MfHyper::default()), 5.0, 0).is_err());
    }

    #[test]
    fn ground_truth_model_matches_dense_dot() {
        let (_, _, truth) = generate_synthetic(5, 12, 3, 4, 9).unwrap();
        let m = RewardModel::from_ground_truth(&truth, 0.6, 1.0).unwrap();
        for u in 0..5u64 {
            for i in 0..12 {
                let ctx = ScoreContext {
                    user: Some(u),
                    history: &[0],
                };
                let want = 0.6 * truth.affinity(u as usize, i) + 1.0;
                assert!((m.raw_score(ctx, i).unwrap() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sequential_learns_a_fixed_successor() {
        // item i is always followed by i + 1 (mod 8)
        let seqs = (0..40)
            .map(|u| seq(u, (0..6).map(|t| (u as usize + t) % 8).collect()))
            .collect();
        let log = InteractionLog::from_sequences(seqs);
        let spec = FitSpec::Sequential(SeqHyper {
            embed_dim: 8,
            max_seq_len: 4,
            epochs: 15,
            lr: 0.1,
            positive_level: 0.8,
        });
        let (m, report) = fit_reward_model(&log, 8, &spec, 5.0, 3).unwrap();
        assert!(report.is_monotone_within(0.05), "{:?}", report.epoch_losses);
        assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
        let ctx = ScoreContext {
            user: None,
            history: &[2, 3],
        };
        let next = m.raw_score(ctx, 4).unwrap();
        for other in (0..8).filter(|&i| i != 4) {
            assert!(next > m.raw_score(ctx, other).unwrap());
        }
    }

    #[test]
    fn parts_round_trip() {
        let (_, log, truth) = generate_synthetic(4, 10, 3, 3, 2).unwrap();
        let m = RewardModel::from_ground_truth(&truth, 1.0, 0.5).unwrap();
        let (meta, tensors) = m.to_parts();
        assert_eq!(RewardModel::from_parts(&meta, &tensors).unwrap(), m);
        let (s, _) = fit_reward_model(
            &log,
            10,
            &FitSpec::Sequential(SeqHyper {
                embed_dim: 4,
                epochs: 1,
                ..SeqHyper::default()
            }),
            5.0,
            0,
        )
        .unwrap();
        let (meta, tensors) = s.to_parts();
        assert_eq!(RewardModel::from_parts(&meta, &tensors).unwrap(), s);
    }

    #[test]
    fn reset_is_seeded() {
        let (_, log, truth) = generate_synthetic(20, 10, 3, 3, 2).unwrap();
        let env = Environment::new(
            RewardModel::from_ground_truth(&truth, 1.0, 0.5).unwrap(),
            &log,
            EnvConfig::default(),
        )
        .unwrap();
        let a: Vec<_> = (0..5)
            .map(|_| ())
            .scan(stream_rng(4, streams::ENV), |r, _| Some(env.reset(r)))
            .collect();
        let b: Vec<_> = (0..5)
            .map(|_| ())
            .scan(stream_rng(4, streams::ENV), |r, _| Some(env.reset(r)))
            .collect();
        assert_eq!(a, b);
        assert!(a
            .iter()
            .all(|s| s.history.len() == 1 && s.user_id.is_some()));
    }
}
