//! Versioned JSON model artifacts and the six classifier configurations.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ann::{train_mlp, Activation, MlpModel, MlpTrainConfig};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::eval::Classifier;
use crate::features::FeatureVector;
use crate::svm::{train_linear, train_poly, KernelSvmModel, LinearSvmModel, PolyKernel, TrainConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearSvm,
    PolySvm,
    AnnRelu,
    AnnTanh,
    AnnLogistic,
    AnnIdentity,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::LinearSvm,
        ModelKind::PolySvm,
        ModelKind::AnnRelu,
        ModelKind::AnnTanh,
        ModelKind::AnnLogistic,
        ModelKind::AnnIdentity,
    ];

    /// Human-readable row name used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::LinearSvm => "Linear SVM",
            ModelKind::PolySvm => "SVM (poly. kernel)",
            ModelKind::AnnRelu => "ANN (ReLU)",
            ModelKind::AnnTanh => "ANN (tanh)",
            ModelKind::AnnLogistic => "ANN (logistic)",
            ModelKind::AnnIdentity => "ANN (identity)",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            ModelKind::LinearSvm => "linear-svm",
            ModelKind::PolySvm => "poly-svm",
            ModelKind::AnnRelu => "ann-relu",
            ModelKind::AnnTanh => "ann-tanh",
            ModelKind::AnnLogistic => "ann-logistic",
            ModelKind::AnnIdentity => "ann-identity",
        }
    }

    pub fn activation(self) -> Option<Activation> {
        match self {
            ModelKind::AnnRelu => Some(Activation::Relu),
            ModelKind::AnnTanh => Some(Activation::Tanh),
            ModelKind::AnnLogistic => Some(Activation::Logistic),
            ModelKind::AnnIdentity => Some(Activation::Identity),
            ModelKind::LinearSvm | ModelKind::PolySvm => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.slug() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrainedModel {
    LinearSvm(LinearSvmModel),
    KernelSvm(KernelSvmModel),
    Mlp(MlpModel),
}

impl TrainedModel {
    pub fn predict(&self, x: &FeatureVector) -> Result<(Label, f64)> {
        match self {
            TrainedModel::LinearSvm(m) => m.predict(x),
            TrainedModel::KernelSvm(m) => m.predict(x),
            TrainedModel::Mlp(m) => m.predict(x),
        }
    }

    pub fn input_dim(&self) -> Option<usize> {
        match self {
            TrainedModel::LinearSvm(m) => Some(m.dim()),
            TrainedModel::KernelSvm(m) => m.dim(),
            TrainedModel::Mlp(m) => Some(m.input_dim()),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TrainedModel::LinearSvm(m) => {
                if m.weights.is_empty() || !m.bias.is_finite() || m.weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Format("linear model parameters are malformed".into()));
                }
            }
            TrainedModel::KernelSvm(m) => {
                m.kernel.validate()?;
                let dim = m.dim();
                if m.support_vectors.is_empty()
                    || m.support_vectors.len() != m.dual_coefs.len()
                    || m.support_vectors.iter().any(|s| Some(s.dim()) != dim)
                {
                    return Err(Error::Format("kernel model parameters are malformed".into()));
                }
            }
            TrainedModel::Mlp(m) => {
                MlpModel::new(m.layers.clone())?;
            }
        }
        Ok(())
    }
}

/// A trained model bound to the feature space it was trained in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub kind: ModelKind,
    pub featurizer_fingerprint: String,
    pub model: TrainedModel,
}

impl Classifier for ModelArtifact {
    fn classify(&self, x: &FeatureVector) -> Result<(Label, f64)> {
        self.model.predict(x)
    }

    fn fingerprint(&self) -> &str {
        &self.featurizer_fingerprint
    }
}

impl ModelArtifact {
    pub fn new(kind: ModelKind, featurizer_fingerprint: impl Into<String>, model: TrainedModel) -> Self {
        ModelArtifact {
            format_version: MODEL_FORMAT_VERSION,
            kind,
            featurizer_fingerprint: featurizer_fingerprint.into(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: ModelArtifact = serde_json::from_str(text)?;
        if artifact.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {}",
                artifact.format_version
            )));
        }
        artifact.model.validate()?;
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        writer
            .write_all(self.to_json()?.as_bytes())
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Hyperparameters for each of the six model kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub linear_svm: TrainConfig,
    pub poly_svm: TrainConfig,
    /// `None` means the library default for the input dimension.
    pub poly_kernel: Option<PolyKernel>,
    pub ann_relu: MlpTrainConfig,
    pub ann_tanh: MlpTrainConfig,
    pub ann_logistic: MlpTrainConfig,
    pub ann_identity: MlpTrainConfig,
}

fn mlp_with(activation: Activation) -> MlpTrainConfig {
    MlpTrainConfig {
        activation,
        ..MlpTrainConfig::default()
    }
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            linear_svm: TrainConfig::default(),
            poly_svm: TrainConfig::default(),
            poly_kernel: None,
            ann_relu: mlp_with(Activation::Relu),
            ann_tanh: mlp_with(Activation::Tanh),
            ann_logistic: mlp_with(Activation::Logistic),
            ann_identity: mlp_with(Activation::Identity),
        }
    }
}

impl ModelSettings {
    pub fn mlp(&self, kind: ModelKind) -> Option<&MlpTrainConfig> {
        match kind {
            ModelKind::AnnRelu => Some(&self.ann_relu),
            ModelKind::AnnTanh => Some(&self.ann_tanh),
            ModelKind::AnnLogistic => Some(&self.ann_logistic),
            ModelKind::AnnIdentity => Some(&self.ann_identity),
            ModelKind::LinearSvm | ModelKind::PolySvm => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.linear_svm.validate()?;
        self.poly_svm.validate()?;
        if let Some(kernel) = &self.poly_kernel {
            kernel.validate()?;
        }
        for kind in ModelKind::ALL {
            if let Some(config) = self.mlp(kind) {
                config.validate()?;
                if Some(config.activation) != kind.activation() {
                    return Err(Error::Config(format!(
                        "{kind} must use the {} activation",
                        kind.activation().expect("ANN kind").name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sets every training seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.linear_svm.seed = seed;
        self.poly_svm.seed = seed;
        for config in [
            &mut self.ann_relu,
            &mut self.ann_tanh,
            &mut self.ann_logistic,
            &mut self.ann_identity,
        ] {
            config.seed = seed;
        }
    }
}

/// Trains one model kind on labeled vectors.
pub fn train_model(kind: ModelKind, xs: &[FeatureVector], labels: &[Label], settings: &ModelSettings) -> Result<TrainedModel> {
    if labels.iter().any(|l| !l.is_labeled()) {
        return Err(Error::Training("training data contains unlabeled pairs".into()));
    }
    match kind {
        ModelKind::LinearSvm => {
            let ys: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
            train_linear(xs, &ys, &settings.linear_svm).map(TrainedModel::LinearSvm)
        }
        ModelKind::PolySvm => {
            let ys: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
            let dim = xs.first().map(|x| x.dim()).unwrap_or(1);
            let kernel = settings.poly_kernel.unwrap_or_else(|| PolyKernel::default_for_dim(dim));
            train_poly(xs, &ys, &settings.poly_svm, kernel).map(TrainedModel::KernelSvm)
        }
        _ => {
            let config = settings.mlp(kind).expect("ANN kind");
            if Some(config.activation) != kind.activation() {
                return Err(Error::Config(format!("{kind} settings name the wrong activation")));
            }
            let ys: Vec<f64> = labels
                .iter()
                .map(|&l| if l == Label::Useful { 1.0 } else { 0.0 })
                .collect();
            train_mlp(xs, &ys, config).map(|t| TrainedModel::Mlp(t.model))
        }
    }
}
