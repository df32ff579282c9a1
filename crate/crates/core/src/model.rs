//! Small deterministic classifiers: softmax regression and a one-hidden-layer MLP.
//!
//! Parameters are stored as `f32`. Forward passes, losses and gradient
//! reductions run in `f64`, summing over samples in index order, so results
//! are reproducible bit for bit on every platform.
//!
//! Parameter layout (row-major):
//! - softmax regression: `W[class_count × input_dim]`, `b[class_count]`
//! - MLP: `W1[hidden × input]`, `b1[hidden]`, `W2[class × hidden]`, `b2[class]`

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArchitecture {
    pub input_dim: usize,
    /// Hidden units; zero means plain softmax regression.
    pub hidden_dim: usize,
    pub class_count: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelArchitecture {
    pub fn softmax(input_dim: usize, class_count: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: 0,
            class_count,
            activation: Activation::Tanh,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, class_count: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            class_count,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        if self.class_count < 2 {
            return Err(Error::InvalidConfig("class_count must be >= 2".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.class_count);
        if h == 0 {
            c * d + c
        } else {
            h * d + h + c * h + c
        }
    }

    /// Seeded uniform initialization in [-0.05, 0.05].
    pub fn init(&self, seed: u64) -> ParameterVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ParameterVector(
            (0..self.param_count())
                .map(|_| rng.random_range(-0.05f32..=0.05))
                .collect(),
        )
    }

    pub fn zeros(&self) -> ParameterVector {
        ParameterVector(vec![0.0; self.param_count()])
    }

    pub fn check(&self, params: &ParameterVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_data(&self, data: &LabeledDataset) -> Result<()> {
        if data.input_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: data.input_dim(),
            });
        }
        if let Some(&bad) = data.labels().iter().find(|&&l| l >= self.class_count) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} out of range for {} classes in dataset {}",
                self.class_count,
                data.id()
            )));
        }
        Ok(())
    }
}

/// Flat model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(Vec<f32>);

impl ParameterVector {
    pub fn new(data: Vec<f32>) -> Self {
        Self(data)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    /// Bitwise equality (distinguishes -0.0 from 0.0).
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

/// Gradient update: `local - base`, element-wise.
pub fn gradient_update(local: &ParameterVector, base: &ParameterVector) -> Result<ParameterVector> {
    if local.len() != base.len() {
        return Err(Error::DimensionMismatch {
            expected: base.len(),
            got: local.len(),
        });
    }
    Ok(ParameterVector(
        local.0.iter().zip(&base.0).map(|(l, b)| l - b).collect(),
    ))
}

/// Feature rows with class labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    id: String,
    input_dim: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(
        id: impl Into<String>,
        input_dim: usize,
        features: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        if features.len() != labels.len() * input_dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * input_dim,
                got: features.len(),
            });
        }
        Ok(Self {
            id: id.into(),
            input_dim,
            features,
            labels,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f32] {
        &mut self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [usize] {
        &mut self.labels
    }

    /// Rows `indices` in the given order.
    pub fn select(&self, id: impl Into<String>, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            id: id.into(),
            input_dim: self.input_dim,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Row-wise concatenation in argument order.
    pub fn concat<'a>(
        id: impl Into<String>,
        parts: impl IntoIterator<Item = &'a LabeledDataset>,
    ) -> Result<Self> {
        let mut out: Option<Self> = None;
        for part in parts {
            match out.as_mut() {
                None => {
                    let mut first = part.clone();
                    first.id = String::new();
                    out = Some(first);
                }
                Some(acc) => {
                    if acc.input_dim != part.input_dim {
                        return Err(Error::DimensionMismatch {
                            expected: acc.input_dim,
                            got: part.input_dim,
                        });
                    }
                    acc.features.extend_from_slice(&part.features);
                    acc.labels.extend_from_slice(&part.labels);
                }
            }
        }
        let mut out = out.ok_or_else(|| Error::EmptyDataset("nothing to concatenate".into()))?;
        out.id = id.into();
        Ok(out)
    }

    /// Number of rows per class, for classes `0..class_count`.
    pub fn class_histogram(&self, class_count: usize) -> Vec<usize> {
        let mut hist = vec![0; class_count];
        for &l in &self.labels {
            if l < class_count {
                hist[l] += 1;
            }
        }
        hist
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            local_epochs: 1,
            batch_size: 16,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 {
            return Err(Error::InvalidConfig("local_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Writes the logits for `x` into `logits`, and the hidden activations into
/// `hidden` for MLPs.
fn forward(arch: &ModelArchitecture, params: &[f64], x: &[f32], hidden: &mut [f64], logits: &mut [f64]) {
    let (d, h, c) = (arch.input_dim, arch.hidden_dim, arch.class_count);
    if h == 0 {
        let (w, b) = params.split_at(c * d);
        for k in 0..c {
            let row = &w[k * d..(k + 1) * d];
            logits[k] = b[k] + row.iter().zip(x).map(|(w, &x)| w * x as f64).sum::<f64>();
        }
    } else {
        let (w1, rest) = params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(c * h);
        for u in 0..h {
            let row = &w1[u * d..(u + 1) * d];
            let a = b1[u] + row.iter().zip(x).map(|(w, &x)| w * x as f64).sum::<f64>();
            hidden[u] = a.tanh();
        }
        for k in 0..c {
            let row = &w2[k * h..(k + 1) * h];
            logits[k] = b2[k] + row.iter().zip(hidden.iter()).map(|(w, a)| w * a).sum::<f64>();
        }
    }
}

/// Turns logits into probabilities in place; returns log-sum-exp.
fn softmax_in_place(logits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    for z in logits.iter_mut() {
        *z = (*z - lse).exp();
    }
    lse
}

/// Adds the cross-entropy gradient of one sample to `grad`; returns the sample loss.
fn accumulate_sample(
    arch: &ModelArchitecture,
    params: &[f64],
    x: &[f32],
    label: usize,
    scratch: &mut Scratch,
    grad: &mut [f64],
) -> f64 {
    let (d, h, c) = (arch.input_dim, arch.hidden_dim, arch.class_count);
    forward(arch, params, x, &mut scratch.hidden, &mut scratch.logits);
    let z_label = scratch.logits[label];
    let lse = softmax_in_place(&mut scratch.logits);
    let probs = &mut scratch.logits;
    probs[label] -= 1.0;
    let delta = probs;

    if h == 0 {
        let (gw, gb) = grad.split_at_mut(c * d);
        for k in 0..c {
            let row = &mut gw[k * d..(k + 1) * d];
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += delta[k] * xi as f64;
            }
            gb[k] += delta[k];
        }
    } else {
        let w2 = &params[h * d + h..h * d + h + c * h];
        let (gw1, rest) = grad.split_at_mut(h * d);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(c * h);
        for u in 0..h {
            let mut back = 0.0;
            for k in 0..c {
                back += w2[k * h + u] * delta[k];
            }
            scratch.hidden_grad[u] = back * (1.0 - scratch.hidden[u] * scratch.hidden[u]);
        }
        for k in 0..c {
            let row = &mut gw2[k * h..(k + 1) * h];
            for (g, a) in row.iter_mut().zip(&scratch.hidden) {
                *g += delta[k] * a;
            }
            gb2[k] += delta[k];
        }
        for u in 0..h {
            let ga = scratch.hidden_grad[u];
            let row = &mut gw1[u * d..(u + 1) * d];
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += ga * xi as f64;
            }
            gb1[u] += ga;
        }
    }
    lse - z_label
}

struct Scratch {
    hidden: Vec<f64>,
    hidden_grad: Vec<f64>,
    logits: Vec<f64>,
}

impl Scratch {
    fn new(arch: &ModelArchitecture) -> Self {
        Self {
            hidden: vec![0.0; arch.hidden_dim],
            hidden_grad: vec![0.0; arch.hidden_dim],
            logits: vec![0.0; arch.class_count],
        }
    }
}

fn mean_loss_and_gradient(
    arch: &ModelArchitecture,
    params: &[f64],
    data: &LabeledDataset,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let mut scratch = Scratch::new(arch);
    let mut loss = 0.0;
    for i in 0..data.len() {
        loss += accumulate_sample(arch, params, data.row(i), data.labels()[i], &mut scratch, &mut grad);
    }
    let scale = 1.0 / data.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (loss * scale, grad)
}

fn mean_loss(arch: &ModelArchitecture, params: &[f64], data: &LabeledDataset) -> f64 {
    let mut scratch = Scratch::new(arch);
    let mut loss = 0.0;
    for i in 0..data.len() {
        forward(arch, params, data.row(i), &mut scratch.hidden, &mut scratch.logits);
        let z = scratch.logits[data.labels()[i]];
        loss += softmax_in_place(&mut scratch.logits) - z;
    }
    loss / data.len() as f64
}

fn check_inputs(arch: &ModelArchitecture, params: &ParameterVector, data: &LabeledDataset) -> Result<()> {
    arch.validate()?;
    arch.check(params)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset(format!("dataset {}", data.id())));
    }
    arch.check_data(data)
}

/// Mean cross-entropy loss and its analytic gradient.
pub fn loss_and_gradient(
    arch: &ModelArchitecture,
    params: &ParameterVector,
    data: &LabeledDataset,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(arch, params, data)?;
    Ok(mean_loss_and_gradient(arch, &params.to_f64(), data))
}

/// Mini-batch SGD on `data` starting from `base`.
///
/// Each epoch reshuffles the row order with a generator seeded from
/// `cfg.seed`; batch gradients are means over the batch.
pub fn train_local(
    arch: &ModelArchitecture,
    base: &ParameterVector,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<ParameterVector> {
    cfg.validate()?;
    check_inputs(arch, base, data)?;

    let mut params = base.to_f64();
    let mut grad = vec![0.0; params.len()];
    let mut scratch = Scratch::new(arch);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                accumulate_sample(arch, &params, data.row(i), data.labels()[i], &mut scratch, &mut grad);
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= step * g;
            }
        }
    }

    let out = ParameterVector(params.into_iter().map(|p| p as f32).collect());
    if !out.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "training on {} diverged (non-finite parameters); lower the learning rate",
            data.id()
        )));
    }
    Ok(out)
}

/// Predicted class per row; ties go to the lowest class index.
pub fn predict(arch: &ModelArchitecture, model: &ParameterVector, data: &LabeledDataset) -> Result<Vec<usize>> {
    arch.check(model)?;
    if data.input_dim() != arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim,
            got: data.input_dim(),
        });
    }
    let params = model.to_f64();
    let mut scratch = Scratch::new(arch);
    Ok((0..data.len())
        .map(|i| {
            forward(arch, &params, data.row(i), &mut scratch.hidden, &mut scratch.logits);
            let mut best = 0;
            for k in 1..arch.class_count {
                if scratch.logits[k] > scratch.logits[best] {
                    best = k;
                }
            }
            best
        })
        .collect())
}

/// Top-1 accuracy on `test`, in [0, 1].
pub fn evaluate(arch: &ModelArchitecture, model: &ParameterVector, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset(format!("test set {}", test.id())));
    }
    let predictions = predict(arch, model, test)?;
    let correct = predictions
        .iter()
        .zip(test.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Largest relative error between the analytic loss gradient and central
/// finite differences with step `epsilon`.
///
/// The relative error of a coordinate is `|a - f| / max(|a|, |f|, 1e-4)`,
/// so coordinates with near-zero gradients are compared absolutely.
pub fn finite_difference_check(
    arch: &ModelArchitecture,
    model: &ParameterVector,
    data: &LabeledDataset,
    epsilon: f64,
) -> Result<f64> {
    check_inputs(arch, model, data)?;
    let mut params = model.to_f64();
    let (_, analytic) = mean_loss_and_gradient(arch, &params, data);
    let mut worst: f64 = 0.0;
    for j in 0..params.len() {
        let orig = params[j];
        params[j] = orig + epsilon;
        let up = mean_loss(arch, &params, data);
        params[j] = orig - epsilon;
        let down = mean_loss(arch, &params, data);
        params[j] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = analytic[j].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((analytic[j] - numeric).abs() / denom);
    }
    Ok(worst)
}
