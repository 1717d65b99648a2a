//! Max-margin classifiers.
//!
//! [`train_linear`] runs Pegasos-style stochastic subgradient descent on the
//! primal `lambda * |m|^2 + mean(max(0, 1 - y (m.x + b)))` with step
//! `1 / (lambda * t)`, projecting onto the ball of radius `1 / sqrt(lambda)`
//! and averaging the iterates of the final epoch. The bias rides along as an
//! extra weight on a constant feature, so it shares the shrinkage.
//!
//! [`train_poly`] solves the soft-margin dual with the polynomial kernel
//! `(gamma <x, z> + coef0)^degree` by SMO: maximal-violating first index,
//! second-order choice of the partner, and LIBSVM's box-clipped pair update.
//! The box constant is `C = 1 / (lambda * n)`, which makes both trainers
//! target the same regularized objective.
//!
//! Labels are +1 (Useful) and -1 (NotUseful). A score of exactly zero
//! predicts -1.

use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Training-set size limit for the kernel solver.
pub const MAX_KERNEL_TRAINING_POINTS: usize = 20_000;

/// Dual coefficients at or below this magnitude are not support vectors.
const SUPPORT_THRESHOLD: f64 = 1e-12;
const TAU: f64 = 1e-12;
const KERNEL_CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// KKT violation tolerance of the dual solver.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-4,
            epochs: 20,
            seed: 0,
            tolerance: 1e-3,
            max_iterations: 10_000_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    /// Hyperplane normal `m`.
    pub weights: Vec<f64>,
    /// Intercept `b`.
    pub bias: f64,
    pub lambda: f64,
    pub epochs_trained: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyKernel {
    pub degree: u32,
    pub gamma: f64,
    pub coef0: f64,
}

impl PolyKernel {
    /// Degree 3, `gamma = 1 / dim`, `coef0 = 1`.
    pub fn default_for_dim(dim: usize) -> Self {
        PolyKernel {
            degree: 3,
            gamma: 1.0 / dim.max(1) as f64,
            coef0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::Config("kernel degree must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) || !self.coef0.is_finite() {
            return Err(Error::Config("kernel gamma must be positive and coef0 finite".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: &FeatureVector, z: &FeatureVector) -> Result<f64> {
        Ok((self.gamma * x.dot(z)? + self.coef0).powi(self.degree as i32))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSvmModel {
    pub support_vectors: Vec<FeatureVector>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub kernel: PolyKernel,
}

fn label_of(score: f64) -> Label {
    if score > 0.0 {
        Label::Useful
    } else {
        Label::NotUseful
    }
}

fn check_data(xs: &[FeatureVector], ys: &[f64]) -> Result<usize> {
    if xs.is_empty() {
        return Err(Error::Training("no training data".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    let dim = xs[0].dim();
    if let Some(x) = xs.iter().find(|x| x.dim() != dim) {
        return Err(Error::Shape {
            expected: dim,
            found: x.dim(),
        });
    }
    if let Some(y) = ys.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::Training(format!("labels must be +1 or -1, got {y}")));
    }
    if !(ys.contains(&1.0) && ys.contains(&-1.0)) {
        return Err(Error::Training("training data contains a single class".into()));
    }
    Ok(dim)
}

/// Trains the primal linear SVM. Deterministic given data order and seed.
pub fn train_linear(xs: &[FeatureVector], ys: &[f64], config: &TrainConfig) -> Result<LinearSvmModel> {
    config.validate()?;
    let dim = check_data(xs, ys)?;
    let n = xs.len();
    let lambda = config.lambda;
    let radius = 1.0 / lambda.sqrt();

    // w = scale * v, with v[dim] the bias weight on a constant feature 1.
    let mut v = vec![0.0; dim + 1];
    let mut scale = 1.0;
    let mut v_norm_sq = 0.0;
    let mut average = vec![0.0; dim + 1];

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut t: u64 = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let last_epoch = epoch + 1 == config.epochs;
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = &xs[i];
            let y = ys[i];
            let vx = x.entries().iter().map(|&(k, val)| val * v[k as usize]).sum::<f64>() + v[dim];
            let margin = y * scale * vx;

            let shrink = 1.0 - eta * lambda;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                scale = 1.0;
                v_norm_sq = 0.0;
            } else {
                scale *= shrink;
            }

            if margin < 1.0 {
                let step = eta * y / scale;
                let vx_now = if shrink <= 0.0 { 0.0 } else { vx };
                for &(k, val) in x.entries() {
                    v[k as usize] += step * val;
                }
                v[dim] += step;
                v_norm_sq += 2.0 * step * vx_now + step * step * (x.norm_squared() + 1.0);
            }

            let w_norm = scale * v_norm_sq.max(0.0).sqrt();
            if w_norm > radius {
                scale *= radius / w_norm;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
                v_norm_sq = v.iter().map(|w| w * w).sum();
            }

            if last_epoch {
                for (acc, &w) in average.iter_mut().zip(&v) {
                    *acc += scale * w;
                }
            }
        }
    }
    let inv = 1.0 / n as f64;
    let bias = average[dim] * inv;
    average.truncate(dim);
    average.iter_mut().for_each(|w| *w *= inv);
    Ok(LinearSvmModel {
        weights: average,
        bias,
        lambda,
        epochs_trained: config.epochs,
    })
}

impl LinearSvmModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `M = 2 / |m|`.
    pub fn margin(&self) -> Result<f64> {
        let norm = self.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::UndefinedMargin);
        }
        Ok(2.0 / norm)
    }

    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        Ok(x.dot_dense(&self.weights)? + self.bias)
    }

    /// `(label, m.x + b)`; a zero score predicts NotUseful.
    pub fn predict(&self, x: &FeatureVector) -> Result<(Label, f64)> {
        let score = self.score(x)?;
        Ok((label_of(score), score))
    }

    /// `lambda |m|^2 + mean hinge loss` on the given data.
    pub fn objective(&self, xs: &[FeatureVector], ys: &[f64]) -> Result<f64> {
        hinge_objective(&self.weights, self.bias, self.lambda, xs, ys)
    }
}

pub fn hinge_objective(weights: &[f64], bias: f64, lambda: f64, xs: &[FeatureVector], ys: &[f64]) -> Result<f64> {
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        loss += (1.0 - y * (x.dot_dense(weights)? + bias)).max(0.0);
    }
    let reg: f64 = weights.iter().map(|w| w * w).sum();
    Ok(lambda * reg + loss / xs.len().max(1) as f64)
}

/// Lazily computed rows of `Q_ij = y_i y_j K(x_i, x_j)` with FIFO eviction.
struct KernelRows<'a> {
    xs: &'a [FeatureVector],
    ys: &'a [f64],
    kernel: PolyKernel,
    rows: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(xs: &'a [FeatureVector], ys: &'a [f64], kernel: PolyKernel) -> Self {
        let capacity = (KERNEL_CACHE_BYTES / (xs.len() * 8).max(1)).max(2);
        KernelRows {
            xs,
            ys,
            kernel,
            rows: HashMap::new(),
            order: VecDeque::new(),
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows.remove(&old);
                }
            }
            let (xs, ys, kernel) = (self.xs, self.ys, self.kernel);
            let row: Vec<f64> = (0..xs.len())
                .into_par_iter()
                .map(|t| {
                    let k = kernel.eval(&xs[i], &xs[t]).expect("dimensions checked");
                    ys[i] * ys[t] * k
                })
                .collect();
            self.rows.insert(i, row);
            self.order.push_back(i);
        }
        &self.rows[&i]
    }
}

/// Trains the polynomial-kernel SVM in dual form.
pub fn train_poly(xs: &[FeatureVector], ys: &[f64], config: &TrainConfig, kernel: PolyKernel) -> Result<KernelSvmModel> {
    config.validate()?;
    kernel.validate()?;
    check_data(xs, ys)?;
    let n = xs.len();
    if n > MAX_KERNEL_TRAINING_POINTS {
        return Err(Error::Training(format!(
            "kernel training is capped at {MAX_KERNEL_TRAINING_POINTS} points, got {n}"
        )));
    }
    let c = 1.0 / (config.lambda * n as f64);
    let diag: Vec<f64> = xs.iter().map(|x| kernel.eval(x, x).expect("same vector")).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut rows = KernelRows::new(xs, ys, kernel);

    let in_up = |t: usize, a: &[f64]| (ys[t] > 0.0 && a[t] < c) || (ys[t] < 0.0 && a[t] > 0.0);
    let in_low = |t: usize, a: &[f64]| (ys[t] > 0.0 && a[t] > 0.0) || (ys[t] < 0.0 && a[t] < c);

    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(t, &alpha) && -ys[t] * grad[t] >= gmax {
                gmax = -ys[t] * grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break;
        }
        let q_i = rows.row(i).to_vec();
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(t, &alpha) {
                continue;
            }
            let yg = ys[t] * grad[t];
            gmax2 = gmax2.max(yg);
            let b = gmax + yg;
            if b > 0.0 {
                let mut a = diag[i] + diag[t] - 2.0 * ys[i] * ys[t] * q_i[t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < config.tolerance || j == usize::MAX {
            break;
        }
        let q_j = rows.row(j).to_vec();

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if ys[i] != ys[j] {
            let quad = (diag[i] + diag[j] + 2.0 * q_i[j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else {
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * q_i[j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (d_i, d_j) = (alpha[i] - old_i, alpha[j] - old_j);
        for k in 0..n {
            grad[k] += q_i[k] * d_i + q_j[k] * d_j;
        }
    }
    if iterations >= config.max_iterations {
        log::warn!("SMO stopped at the iteration cap ({iterations})");
    }

    // Intercept from free multipliers, or the midpoint of the feasible interval.
    let (mut free, mut free_sum) = (0usize, 0.0);
    let (mut upper, mut lower) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (upper + lower) / 2.0
    };

    let (support_vectors, dual_coefs) = (0..n)
        .filter(|&t| alpha[t].abs() > SUPPORT_THRESHOLD)
        .map(|t| (xs[t].clone(), alpha[t] * ys[t]))
        .unzip();
    Ok(KernelSvmModel {
        support_vectors,
        dual_coefs,
        bias: -rho,
        kernel,
    })
}

impl KernelSvmModel {
    pub fn dim(&self) -> Option<usize> {
        self.support_vectors.first().map(FeatureVector::dim)
    }

    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        if self.support_vectors.is_empty() {
            return Err(Error::Training("kernel model has no support vectors".into()));
        }
        let mut score = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefs) {
            score += coef * self.kernel.eval(sv, x)?;
        }
        Ok(score)
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<(Label, f64)> {
        let score = self.score(x)?;
        Ok((label_of(score), score))
    }
}
