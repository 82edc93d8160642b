//! Small differentiable numeric substrate.
//!
//! Parameters live in named [`Tensor`]s inside a [`ParamSet`] together with
//! gradient accumulators of identical shape. Every model in this crate writes
//! its own analytic backward pass; [`finite_diff_grad`] is the reference those
//! passes are checked against.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::invalid(format!(
                "tensor shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], low: f64, high: f64, rng: &mut R) -> Self {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(low..high)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Square identity matrix plus uniform noise of the given half-width.
    pub fn identity_plus_noise<R: Rng + ?Sized>(dim: usize, noise: f64, rng: &mut R) -> Self {
        let mut t = Tensor::uniform(&[dim, dim], -noise, noise, rng);
        for i in 0..dim {
            t.data[i * dim + i] += 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Name-keyed tensor collection with deterministic (sorted) iteration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorMap(BTreeMap<String, Tensor>);

impl TensorMap {
    /// Panics when `name` is absent; model code only asks for names it registered.
    pub fn get(&self, name: &str) -> &Tensor {
        self.0
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.0
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.0.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Learnable tensors plus their gradient accumulators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    values: TensorMap,
    grads: TensorMap,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.values.0.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        self.grads
            .0
            .insert(name.clone(), Tensor::zeros(value.shape()));
        self.values.0.insert(name, value);
        Ok(())
    }

    pub fn values(&self) -> &TensorMap {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut TensorMap {
        &mut self.values
    }

    pub fn grads(&self) -> &TensorMap {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut TensorMap {
        &mut self.grads
    }

    /// Read parameters while writing gradients.
    pub fn split_mut(&mut self) -> (&TensorMap, &mut TensorMap) {
        (&self.values, &mut self.grads)
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.values.get(name)
    }

    pub fn zero_grad(&mut self) {
        for (_, g) in self.grads.iter_mut() {
            g.fill(0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|(_, t)| t.len()).sum()
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

pub(crate) fn validate_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid(
            "probability vector has negative or non-finite entries",
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Inverse-CDF draw over `probs` in the given order.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    validate_distribution(probs)?;
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return Ok(i);
        }
    }
    // Rounding left the total a hair under 1; fall back to the last non-zero entry.
    Ok(probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Plain gradient descent `p <- p - lr * g`, zeroing gradients afterwards.
pub fn optimizer_step(params: &mut ParamSet, lr: f64) -> Result<()> {
    Sgd::new(lr).step(params)
}

/// Gradient descent with optional heavy-ball momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: Option<f64>,
    velocity: BTreeMap<String, Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd {
            lr,
            momentum: None,
            velocity: BTreeMap::new(),
        }
    }

    pub fn with_momentum(lr: f64, momentum: f64) -> Self {
        Sgd {
            lr,
            momentum: Some(momentum),
            velocity: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for (name, g) in params.grads.iter() {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
        let ParamSet { values, grads } = params;
        for (name, value) in values.iter_mut() {
            let grad = grads.get_mut(name);
            match self.momentum {
                None => {
                    for (p, g) in value.data_mut().iter_mut().zip(grad.data()) {
                        *p -= self.lr * g;
                    }
                }
                Some(mu) => {
                    let vel = self
                        .velocity
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; grad.len()]);
                    for ((p, g), v) in value.data_mut().iter_mut().zip(grad.data()).zip(vel) {
                        *v = mu * *v + g;
                        *p -= self.lr * *v;
                    }
                }
            }
            grad.fill(0.0);
        }
        Ok(())
    }
}

/// Central-difference gradient of `loss_fn` at `params`, one scalar at a time.
pub fn finite_diff_grad<F>(mut loss_fn: F, params: &ParamSet, eps: f64) -> Result<TensorMap>
where
    F: FnMut(&ParamSet) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::invalid("finite-difference eps must be positive"));
    }
    let mut probe = params.clone();
    let mut out = TensorMap::default();
    let names: Vec<String> = params.values.names().map(str::to_owned).collect();
    for name in names {
        let len = params.get(&name).len();
        let mut grad = Tensor::zeros(params.get(&name).shape());
        for i in 0..len {
            let original = probe.values.get(&name).data()[i];
            probe.values.get_mut(&name).data_mut()[i] = original + eps;
            let plus = loss_fn(&probe);
            probe.values.get_mut(&name).data_mut()[i] = original - eps;
            let minus = loss_fn(&probe);
            probe.values.get_mut(&name).data_mut()[i] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while perturbing `{name}`[{i}]"
                )));
            }
            grad.data_mut()[i] = (plus - minus) / (2.0 * eps);
        }
        out.0.insert(name, grad);
    }
    Ok(out)
}

/// Worst elementwise mismatch between an analytic and a numeric gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMismatch {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Elementwise relative error `|a - n| / max(|a|, |n|, abs_floor)`; returns the worst entry.
pub fn max_relative_error(
    analytic: &TensorMap,
    numeric: &TensorMap,
    abs_floor: f64,
) -> GradMismatch {
    let mut worst = GradMismatch {
        name: String::new(),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        rel_error: 0.0,
    };
    for (name, n) in numeric.iter() {
        let a = analytic.get(name);
        for (i, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let denom = av.abs().max(nv.abs()).max(abs_floor);
            let rel = (av - nv).abs() / denom;
            if rel > worst.rel_error || !rel.is_finite() {
                worst = GradMismatch {
                    name: name.clone(),
                    index: i,
                    analytic: av,
                    numeric: nv,
                    rel_error: rel,
                };
            }
        }
    }
    worst
}

/// `out[r] = sum_c w[r, c] * x[c]` for a `[rows, cols]` matrix.
pub(crate) fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = w.shape()[1];
    debug_assert_eq!(cols, x.len());
    w.data().chunks_exact(cols).map(|row| dot(row, x)).collect()
}

/// `out[c] = sum_r w[r, c] * y[r]`.
pub(crate) fn matvec_t(w: &Tensor, y: &[f64]) -> Vec<f64> {
    let cols = w.shape()[1];
    let mut out = vec![0.0; cols];
    for (row, &yr) in w.data().chunks_exact(cols).zip(y) {
        if yr != 0.0 {
            axpy(yr, row, &mut out);
        }
    }
    out
}

/// `g[r, c] += y[r] * x[c]`.
pub(crate) fn add_outer(g: &mut Tensor, y: &[f64], x: &[f64]) {
    let cols = g.shape()[1];
    for (row, &yr) in g.data_mut().chunks_exact_mut(cols).zip(y) {
        if yr != 0.0 {
            axpy(yr, x, row);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
