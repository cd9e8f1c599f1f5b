//! Synthetic problems: sparse-feature binary logistic regression and a
//! badly conditioned low-rank multiclass problem.
//!
//! Every random quantity comes from a ChaCha stream keyed by the seed and
//! an index (batch, example or the model stream), so any batch or example
//! can be regenerated on its own.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::omd::round_rng;

/// Stream index reserved for ground-truth weights and transforms.
const MODEL_STREAM: usize = usize::MAX;

/// Binary logistic problem with 0/1 power-law features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitProblemSpec {
    pub dim: usize,
    /// Fraction of exactly-zero ground-truth weights.
    pub sparsity: f64,
    pub flip_prob: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for LogitProblemSpec {
    fn default() -> Self {
        Self { dim: 500, sparsity: 0.0, flip_prob: 0.1, batch: 10, seed: 0 }
    }
}

impl LogitProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.batch == 0 {
            return Err(Error::Parameter("dimension and batch size must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.flip_prob) {
            return Err(Error::Parameter(format!("flip probability must be in [0, 0.5), got {}", self.flip_prob)));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::Parameter(format!("sparsity must be in [0, 1], got {}", self.sparsity)));
        }
        Ok(())
    }
}

/// `Pr[x_i = 1] = 1 / (5 sqrt(i))` for 1-based `i`.
pub fn feature_probability(i: usize) -> f64 {
    1.0 / (5.0 * (i as f64).sqrt())
}

/// One binary example: indices of the coordinates equal to 1 and a label in
/// `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitExample {
    pub active: Vec<usize>,
    pub label: f64,
    /// Whether the label was flipped away from the noiseless one.
    pub flipped: bool,
}

impl LogitExample {
    pub fn margin(&self, w: &[f64]) -> f64 {
        self.active.iter().map(|&i| w[i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitProblem {
    pub spec: LogitProblemSpec,
    pub w_star: Vec<f64>,
    probs: Vec<f64>,
}

impl LogitProblem {
    pub fn new(spec: LogitProblemSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim;
        let mut rng = round_rng(spec.seed, MODEL_STREAM);
        let mut w_star: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let zeros = (spec.sparsity * d as f64).round() as usize;
        if zeros > 0 {
            let mut idx: Vec<usize> = (0..d).collect();
            idx.shuffle(&mut rng);
            for &i in &idx[..zeros] {
                w_star[i] = 0.0;
            }
        }
        let probs = (1..=d).map(feature_probability).collect();
        Ok(Self { spec, w_star, probs })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// `||w*||_1 / d`.
    pub fn beta_eg(&self) -> f64 {
        self.w_star.iter().map(|v| v.abs()).sum::<f64>() / self.spec.dim as f64
    }

    /// Batch `t` of the stream.
    pub fn batch(&self, t: usize) -> Vec<LogitExample> {
        let mut rng = round_rng(self.spec.seed, t);
        (0..self.spec.batch).map(|_| self.draw(&mut rng)).collect()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> LogitExample {
        let active: Vec<usize> = self
            .probs
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| (rng.random::<f64>() < p).then_some(i))
            .collect();
        let margin: f64 = active.iter().map(|&i| self.w_star[i]).sum();
        let clean = if margin >= 0.0 { 1.0 } else { -1.0 };
        let flipped = rng.random::<f64>() < self.spec.flip_prob;
        LogitExample { active, label: if flipped { -clean } else { clean }, flipped }
    }

    /// The first `n` examples of the stream, batch by batch.
    pub fn examples(&self, n: usize) -> Vec<LogitExample> {
        let b = self.spec.batch;
        (0..n.div_ceil(b)).flat_map(|t| self.batch(t)).take(n).collect()
    }

    /// Writes `n` examples as CSV: `#` metadata lines, header
    /// `x1..xd,label`, one example per line.
    pub fn write_csv<W: Write>(&self, n: usize, out: &mut W) -> io::Result<()> {
        let s = &self.spec;
        writeln!(out, "# problem=logit")?;
        writeln!(out, "# dim={}", s.dim)?;
        writeln!(out, "# sparsity={}", s.sparsity)?;
        writeln!(out, "# flip_prob={}", s.flip_prob)?;
        writeln!(out, "# batch={}", s.batch)?;
        writeln!(out, "# seed={}", s.seed)?;
        writeln!(out, "# examples={n}")?;
        write_header(out, s.dim)?;
        let mut row = vec![b'0'; 2 * s.dim];
        for ex in self.examples(n) {
            for (i, c) in row.iter_mut().enumerate() {
                *c = if i % 2 == 1 { b',' } else { b'0' };
            }
            for &i in &ex.active {
                row[2 * i] = b'1';
            }
            out.write_all(&row)?;
            writeln!(out, "{}", ex.label as i64)?;
        }
        Ok(())
    }
}

fn write_header<W: Write>(out: &mut W, d: usize) -> io::Result<()> {
    for i in 1..=d {
        write!(out, "x{i},")?;
    }
    writeln!(out, "label")
}

/// Numerically stable `log(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean log-loss `log(1 + exp(-y <w, x>))` over the batch and its gradient.
pub fn logloss_grad(w: &[f64], batch: &[LogitExample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let mut grad = vec![0.0; w.len()];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        if let Some(&i) = ex.active.iter().find(|&&i| i >= w.len()) {
            return Err(Error::Shape { expected: format!("index < {}", w.len()), found: i.to_string() });
        }
        let z = ex.label * ex.margin(w);
        loss += softplus(-z);
        let c = -ex.label * sigmoid(-z) * scale;
        for &i in &ex.active {
            grad[i] += c;
        }
    }
    Ok((loss * scale, grad))
}

/// Fraction of the batch whose label matches `sign(<w, x>)` (ties count as +1).
pub fn logit_accuracy(w: &[f64], batch: &[LogitExample]) -> f64 {
    let hits = batch.iter().filter(|ex| (if ex.margin(w) >= 0.0 { 1.0 } else { -1.0 }) == ex.label).count();
    hits as f64 / batch.len().max(1) as f64
}

/// Low-rank multiclass problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassProblemSpec {
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    pub rank: usize,
    pub flip_prob: f64,
    pub noise_std: f64,
    /// Coordinate `i` is scaled by `s_i` proportional to `i^(-scale_exponent)`.
    pub scale_exponent: f64,
    pub seed: u64,
}

impl Default for MulticlassProblemSpec {
    fn default() -> Self {
        Self { n: 200_000, dim: 25, classes: 15, rank: 5, flip_prob: 0.05, noise_std: 0.05, scale_exponent: 1.1, seed: 0 }
    }
}

impl MulticlassProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim == 0 || self.classes < 2 {
            return Err(Error::Parameter("need n > 0, dim > 0 and at least two classes".into()));
        }
        if self.rank == 0 || self.rank > self.classes.min(self.dim) {
            return Err(Error::Parameter(format!(
                "rank must be in 1..=min(classes, dim), got {}",
                self.rank
            )));
        }
        if !(0.0..0.5).contains(&self.flip_prob) {
            return Err(Error::Parameter(format!("flip probability must be in [0, 0.5), got {}", self.flip_prob)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Parameter(format!("noise std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }
}

/// Dataset in column form: `x = Q S x0`, `W = W0 S^-1 Q^T`, so that
/// `W x = W0 x0` on noiseless data.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassDataset {
    pub spec: MulticlassProblemSpec,
    /// `n x d`, one example per row.
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub flipped: Vec<bool>,
    /// Ground truth after the transform, `k x d`.
    pub w_true: DMatrix<f64>,
    /// Ground truth before the transform, rank `r`.
    pub w0: DMatrix<f64>,
    pub scales: Vec<f64>,
    pub rotation: DMatrix<f64>,
}

/// `s_i = i^-a / sum_j j^-a`.
pub fn scale_weights(d: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=d).map(|i| (i as f64).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` moved into `Q`.
pub fn random_rotation<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn gen_multiclass(spec: &MulticlassProblemSpec) -> Result<MulticlassDataset> {
    spec.validate()?;
    let (n, d, k, r) = (spec.n, spec.dim, spec.classes, spec.rank);
    let mut model = round_rng(spec.seed, MODEL_STREAM);
    let w0 = DMatrix::<f64>::from_fn(k, d, |_, j| if j < r { model.sample(StandardNormal) } else { 0.0 });
    let rotation = random_rotation(&mut model, d);
    let scales = scale_weights(d, spec.scale_exponent);
    let s = DVector::from_vec(scales.clone());
    let s_inv = DVector::from_iterator(d, scales.iter().map(|v| 1.0 / v));
    let w_true = &w0 * DMatrix::from_diagonal(&s_inv) * rotation.transpose();
    let transform = &rotation * DMatrix::from_diagonal(&s);

    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut features = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let mut flipped = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = round_rng(spec.seed, i);
        let mut x0 = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let clean = argmax(&(&w0 * &x0));
        let flip = rng.random::<f64>() < spec.flip_prob;
        let label = if flip {
            let other = rng.random_range(0..k - 1);
            if other >= clean { other + 1 } else { other }
        } else {
            clean
        };
        if spec.noise_std > 0.0 {
            for v in x0.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
        let x = &transform * x0;
        features.row_mut(i).copy_from(&x.transpose());
        labels.push(label);
        flipped.push(flip);
    }
    Ok(MulticlassDataset { spec: spec.clone(), features, labels, flipped, w_true, w0, scales, rotation })
}

/// First index of the largest entry.
pub fn argmax(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

impl MulticlassDataset {
    pub fn example(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    /// Fraction of examples misclassified by `argmax W x`.
    pub fn error_rate(&self, w: &DMatrix<f64>) -> f64 {
        let scores = &self.features * w.transpose();
        let wrong = (0..self.features.nrows())
            .filter(|&i| argmax(&scores.row(i).transpose()) != self.labels[i])
            .count();
        wrong as f64 / self.features.nrows() as f64
    }

    /// Mean softmax cross-entropy over the dataset.
    pub fn mean_loss(&self, w: &DMatrix<f64>) -> f64 {
        let scores = &self.features * w.transpose();
        let total: f64 = (0..self.features.nrows())
            .map(|i| {
                let row = scores.row(i);
                log_sum_exp(row.iter().copied()) - row[self.labels[i]]
            })
            .sum();
        total / self.features.nrows() as f64
    }

    /// Example order for epoch `epoch`, a fresh permutation per epoch.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut rng = round_rng(self.spec.seed ^ 0x005e_ed0f_e90c, epoch);
        let mut order: Vec<usize> = (0..self.features.nrows()).collect();
        order.shuffle(&mut rng);
        order
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let s = &self.spec;
        writeln!(out, "# problem=multiclass")?;
        writeln!(out, "# n={}", s.n)?;
        writeln!(out, "# dim={}", s.dim)?;
        writeln!(out, "# classes={}", s.classes)?;
        writeln!(out, "# rank={}", s.rank)?;
        writeln!(out, "# flip_prob={}", s.flip_prob)?;
        writeln!(out, "# noise_std={}", s.noise_std)?;
        writeln!(out, "# scale_exponent={}", s.scale_exponent)?;
        writeln!(out, "# seed={}", s.seed)?;
        write_header(out, s.dim)?;
        let mut line = String::new();
        for i in 0..self.features.nrows() {
            line.clear();
            for v in self.features.row(i).iter() {
                line.push_str(&format!("{v:.16e},"));
            }
            line.push_str(&self.labels[i].to_string());
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax cross-entropy `logsumexp(W x) - (W x)_y` and its gradient
/// `(p - e_y) x^T`.
pub fn multiclass_logloss_grad(w: &DMatrix<f64>, x: &DVector<f64>, label: usize) -> Result<(f64, DMatrix<f64>)> {
    check_len(w.ncols(), x.len())?;
    if label >= w.nrows() {
        return Err(Error::Parameter(format!("label {label} out of range for {} classes", w.nrows())));
    }
    let scores = w * x;
    let lse = log_sum_exp(scores.iter().copied());
    let mut p = scores.map(|s| (s - lse).exp());
    let loss = lse - scores[label];
    p[label] -= 1.0;
    Ok((loss, p * x.transpose()))
}

/// Mean of [`multiclass_logloss_grad`] over the listed examples.
pub fn multiclass_batch_grad(w: &DMatrix<f64>, data: &MulticlassDataset, idx: &[usize]) -> Result<(f64, DMatrix<f64>)> {
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(w.nrows(), w.ncols());
    for &i in idx {
        let (l, g) = multiclass_logloss_grad(w, &data.example(i), data.labels[i])?;
        loss += l;
        grad += g;
    }
    let scale = 1.0 / idx.len().max(1) as f64;
    Ok((loss * scale, grad * scale))
}
