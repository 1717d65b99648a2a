//! Multilayer perceptron with a logistic output unit, trained by mini-batch
//! gradient descent with momentum on binary cross-entropy.
//!
//! Each neuron computes `Z = w . x + b` and passes it through its layer's
//! activation. Hidden layers share one [`Activation`]; the output layer is
//! always a single logistic unit producing `p(Useful)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside the loss.
pub const P_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Logistic,
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Logistic,
        Activation::Relu,
        Activation::Tanh,
        Activation::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Logistic => "logistic",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Logistic => logistic(z),
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// `f'(z)`; the ReLU derivative at exactly 0 is 0.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Logistic => {
                let s = logistic(z);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// `1 / (1 + e^-z)`, evaluated on the side that cannot overflow.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Checked activation: rejects non-finite input.
pub fn activate(activation: Activation, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(z));
    }
    Ok(activation.apply(z))
}

/// Weights are held input-major, `weights[k * outputs + j]` connects input
/// `k` to unit `j`, so a sparse input touches contiguous runs. Serialized
/// form is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LayerRecord", from = "LayerRecord")]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

fn transpose(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    if values.len() != rows * cols {
        // Left for MlpModel::new to reject.
        return values.to_vec();
    }
    let mut out = vec![0.0; values.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = values[r * cols + c];
        }
    }
    out
}

impl From<DenseLayer> for LayerRecord {
    fn from(l: DenseLayer) -> Self {
        LayerRecord {
            weights: transpose(&l.weights, l.inputs, l.outputs),
            inputs: l.inputs,
            outputs: l.outputs,
            biases: l.biases,
            activation: l.activation,
        }
    }
}

impl From<LayerRecord> for DenseLayer {
    fn from(r: LayerRecord) -> Self {
        DenseLayer {
            weights: transpose(&r.weights, r.outputs, r.inputs),
            inputs: r.inputs,
            outputs: r.outputs,
            biases: r.biases,
            activation: r.activation,
        }
    }
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            activation,
        }
    }

    /// Builds a layer from row-major `outputs x inputs` weights.
    pub fn from_rows(inputs: usize, outputs: usize, rows: &[f64], biases: Vec<f64>, activation: Activation) -> Self {
        DenseLayer::from(LayerRecord {
            inputs,
            outputs,
            weights: rows.to_vec(),
            biases,
            activation,
        })
    }

    /// Weight from input `k` to unit `j`.
    pub fn weight(&self, j: usize, k: usize) -> f64 {
        self.weights[k * self.outputs + j]
    }

    fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        DenseLayer {
            inputs,
            outputs,
            weights,
            biases: vec![0.0; outputs],
            activation,
        }
    }

    fn affine(&self, input: Input<'_>) -> Vec<f64> {
        let mut z = self.biases.clone();
        match input {
            Input::Sparse(entries) => {
                for &(k, v) in entries {
                    self.add_column(&mut z, k as usize, v);
                }
            }
            Input::Dense(values) => {
                for (k, &v) in values.iter().enumerate() {
                    self.add_column(&mut z, k, v);
                }
            }
        }
        z
    }

    fn add_column(&self, z: &mut [f64], k: usize, v: f64) {
        let col = &self.weights[k * self.outputs..(k + 1) * self.outputs];
        for (zj, w) in z.iter_mut().zip(col) {
            *zj += w * v;
        }
    }
}

#[derive(Clone, Copy)]
enum Input<'a> {
    Sparse(&'a [(u32, f64)]),
    Dense(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer weighted sums and outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub p_useful: f64,
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Validates layer chaining and the single logistic output unit.
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::Config("a network needs at least one layer".into()));
        };
        if last.outputs != 1 || last.activation != Activation::Logistic {
            return Err(Error::Config("the output layer must be one logistic unit".into()));
        }
        for layer in &layers {
            if layer.inputs == 0
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.biases.len() != layer.outputs
            {
                return Err(Error::Config("layer parameter sizes are inconsistent".into()));
            }
        }
        for pair in layers.windows(2) {
            if pair[1].inputs != pair[0].outputs {
                return Err(Error::Shape {
                    expected: pair[0].outputs,
                    found: pair[1].inputs,
                });
            }
        }
        Ok(MlpModel { layers })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden_sizes.len() + 1);
        let mut inputs = input_dim;
        for &size in hidden_sizes {
            layers.push(DenseLayer::glorot(inputs, size, activation, &mut rng));
            inputs = size;
        }
        layers.push(DenseLayer::glorot(inputs, 1, Activation::Logistic, &mut rng));
        MlpModel::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn forward(&self, x: &FeatureVector) -> Result<ForwardPass> {
        if x.dim() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                found: x.dim(),
            });
        }
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 {
                Input::Sparse(x.entries())
            } else {
                Input::Dense(&activations[l - 1])
            };
            let z = layer.affine(input);
            let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre_activations.push(z);
            activations.push(a);
        }
        let p_useful = activations.last().expect("non-empty")[0];
        Ok(ForwardPass {
            p_useful,
            pre_activations,
            activations,
        })
    }

    /// Useful iff `p > 0.5`.
    pub fn predict(&self, x: &FeatureVector) -> Result<(Label, f64)> {
        let p = self.forward(x)?.p_useful;
        let label = if p > 0.5 {
            Label::Useful
        } else {
            Label::NotUseful
        };
        Ok((label, p))
    }

    /// Mean clamped binary cross-entropy.
    pub fn loss(&self, xs: &[FeatureVector], ys: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            total += cross_entropy(self.forward(x)?.p_useful, y);
        }
        Ok(total / xs.len().max(1) as f64)
    }

    /// Mean loss gradient over the batch, by backpropagation.
    pub fn gradients(&self, xs: &[FeatureVector], ys: &[f64]) -> Result<Vec<DenseLayer>> {
        let mut grads = self.zero_grads();
        let mut touched = Vec::new();
        for (x, &y) in xs.iter().zip(ys) {
            self.accumulate(x, y, &mut grads, &mut touched)?;
        }
        let inv = 1.0 / xs.len().max(1) as f64;
        for g in &mut grads {
            g.weights.iter_mut().for_each(|w| *w *= inv);
            g.biases.iter_mut().for_each(|b| *b *= inv);
        }
        Ok(grads)
    }

    fn zero_grads(&self) -> Vec<DenseLayer> {
        self.layers
            .iter()
            .map(|l| DenseLayer::zeros(l.inputs, l.outputs, l.activation))
            .collect()
    }

    /// Adds one sample's gradient into `grads`; records first-layer input
    /// columns it wrote to in `touched`.
    fn accumulate(&self, x: &FeatureVector, y: f64, grads: &mut [DenseLayer], touched: &mut Vec<u32>) -> Result<()> {
        let pass = self.forward(x)?;
        // d(BCE)/dZ at a logistic output.
        let mut delta = vec![pass.p_useful - y];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let grad = &mut grads[l];
            for (gb, d) in grad.biases.iter_mut().zip(&delta) {
                *gb += d;
            }
            let n = layer.outputs;
            if l == 0 {
                for &(k, v) in x.entries() {
                    let k = k as usize;
                    for (g, d) in grad.weights[k * n..(k + 1) * n].iter_mut().zip(&delta) {
                        *g += d * v;
                    }
                }
                touched.extend(x.entries().iter().map(|&(k, _)| k));
                break;
            }
            let input = &pass.activations[l - 1];
            for (k, &a) in input.iter().enumerate() {
                for (g, d) in grad.weights[k * n..(k + 1) * n].iter_mut().zip(&delta) {
                    *g += d * a;
                }
            }
            let below = &self.layers[l - 1];
            let mut next: Vec<f64> = (0..layer.inputs)
                .map(|k| layer.weights[k * n..(k + 1) * n].iter().zip(&delta).map(|(w, d)| w * d).sum())
                .collect();
            for (acc, &z) in next.iter_mut().zip(&pass.pre_activations[l - 1]) {
                *acc *= below.activation.derivative(z);
            }
            delta = next;
        }
        Ok(())
    }

    fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if index < layer.weights.len() {
                return &mut layer.weights[index];
            }
            index -= layer.weights.len();
            if index < layer.biases.len() {
                return &mut layer.biases[index];
            }
            index -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }
}

fn cross_entropy(p: f64, y: f64) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn flatten(layers: &[DenseLayer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
        .collect()
}

/// Largest relative disagreement between backprop and central differences
/// `(L(t + eps) - L(t - eps)) / 2 eps` over every parameter.
pub fn gradient_check(model: &MlpModel, xs: &[FeatureVector], ys: &[f64], epsilon: f64) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Precondition("gradient check needs a non-empty labeled batch".into()));
    }
    let analytic = flatten(&model.gradients(xs, ys)?);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (index, &g_bp) in analytic.iter().enumerate() {
        let original = *probe.parameter_mut(index);
        *probe.parameter_mut(index) = original + epsilon;
        let plus = probe.loss(xs, ys)?;
        *probe.parameter_mut(index) = original - epsilon;
        let minus = probe.loss(xs, ys)?;
        *probe.parameter_mut(index) = original;
        let g_fd = (plus - minus) / (2.0 * epsilon);
        let denom = g_bp.abs().max(g_fd.abs()).max(1e-8);
        worst = worst.max((g_bp - g_fd).abs() / denom);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpTrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        MlpTrainConfig {
            hidden_sizes: vec![100],
            activation: Activation::Relu,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl MlpTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMlp {
    pub model: MlpModel,
    /// Mean training loss after each epoch.
    pub loss_curve: Vec<f64>,
}

/// Trains from Glorot initialization. `ys` are 1.0 (Useful) / 0.0.
pub fn train_mlp(xs: &[FeatureVector], ys: &[f64], config: &MlpTrainConfig) -> Result<TrainedMlp> {
    config.validate()?;
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
    if let Some(y) = ys.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Training(format!("labels must be 0 or 1, got {y}")));
    }
    if !(ys.contains(&0.0) && ys.contains(&1.0)) {
        return Err(Error::Training("training data contains a single class".into()));
    }
    let model = MlpModel::init(dim, &config.hidden_sizes, config.activation, config.seed)?;
    fit(model, xs, ys, config)
}

fn fit(mut model: MlpModel, xs: &[FeatureVector], ys: &[f64], config: &MlpTrainConfig) -> Result<TrainedMlp> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut velocity = model.zero_grads();
    let mut grads = model.zero_grads();
    let mut touched: Vec<u32> = Vec::new();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let (lr, mu) = (config.learning_rate, config.momentum);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            for (l, g) in grads.iter_mut().enumerate() {
                if l == 0 {
                    touched.sort_unstable();
                    touched.dedup();
                    let n = g.outputs;
                    for &k in &touched {
                        let k = k as usize;
                        g.weights[k * n..(k + 1) * n].fill(0.0);
                    }
                } else {
                    g.weights.iter_mut().for_each(|w| *w = 0.0);
                }
                g.biases.iter_mut().for_each(|b| *b = 0.0);
            }
            touched.clear();
            for &i in batch {
                model.accumulate(&xs[i], ys[i], &mut grads, &mut touched)?;
            }
            let scale = lr / batch.len() as f64;
            for ((layer, v), g) in model.layers.iter_mut().zip(&mut velocity).zip(&grads) {
                for ((w, vw), gw) in layer.weights.iter_mut().zip(&mut v.weights).zip(&g.weights) {
                    *vw = mu * *vw - scale * gw;
                    *w += *vw;
                }
                for ((b, vb), gb) in layer.biases.iter_mut().zip(&mut v.biases).zip(&g.biases) {
                    *vb = mu * *vb - scale * gb;
                    *b += *vb;
                }
            }
        }
        let loss = model.loss(xs, ys)?;
        if !loss.is_finite() || model.layers.iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
            return Err(Error::Divergence { epoch });
        }
        loss_curve.push(loss);
    }
    Ok(TrainedMlp { model, loss_curve })
}
