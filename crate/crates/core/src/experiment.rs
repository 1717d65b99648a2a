//! Seed-vs-integrated experiment: split the seed corpus, train and evaluate
//! all six models, add generated pairs to the training portion only,
//! retrain, re-evaluate on the same test set and compare.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::{train_model, ModelArtifact, ModelKind, ModelSettings};
use crate::augment::{augment_blocking, AugmentStats, GenerationConfig, PromptTemplate, ScriptedResponse};
use crate::corpus::{load_corpus, save_corpus, split, Corpus, Format, Label, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{compare, evaluate, ComparisonTable, Condition, EvalReport, LabeledSet};
use crate::features::{fit_featurizer, FeatureSpace, FeaturizerConfig};
use crate::svm::PolyKernel;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationSettings {
    /// Serve completions from the built-in scripted mock.
    pub mock: bool,
    /// JSON array of scripted responses for the mock. Without it the mock
    /// acts as a cooperative model over a synthetic batch.
    pub mock_script: Option<PathBuf>,
    pub generation: GenerationConfig,
    pub template: PromptTemplate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed_corpus: PathBuf,
    /// Labeled generated pairs. When absent or missing on disk,
    /// `augmentation` must be configured.
    pub generated_corpus: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Overrides the split seed and every training seed.
    pub seed: Option<u64>,
    pub split: SplitSpec,
    pub featurizer: FeaturizerConfig,
    pub models: ModelSettings,
    pub augmentation: Option<AugmentationSettings>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let models = ModelSettings {
            poly_kernel: Some(PolyKernel {
                degree: 3,
                gamma: 1.0,
                coef0: 1.0,
            }),
            ..ModelSettings::default()
        };
        ExperimentConfig {
            seed_corpus: "data/synthetic/seed.jsonl".into(),
            generated_corpus: Some("data/synthetic/generated.jsonl".into()),
            output_dir: "experiment-out".into(),
            seed: None,
            split: SplitSpec::default(),
            featurizer: FeaturizerConfig {
                dim: 1 << 12,
                ..FeaturizerConfig::default()
            },
            models,
            augmentation: None,
        }
    }
}

impl ExperimentConfig {
    /// Applies the global seed, if any, and validates every component.
    pub fn resolved(&self) -> Result<ExperimentConfig> {
        let mut config = self.clone();
        if let Some(seed) = config.seed {
            config.split.seed = seed;
            config.models.set_seed(seed);
        }
        config.featurizer.validate()?;
        config.models.validate()?;
        if let Some(aug) = &config.augmentation {
            aug.generation.validate()?;
            aug.template.validate()?;
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub seed_corpus: usize,
    pub generated: usize,
    pub generated_merged: usize,
    pub generated_deduped: usize,
    pub train: usize,
    pub test: usize,
    pub validation: usize,
    pub integrated_train: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub stages_completed: Vec<String>,
    pub split_seed: u64,
    pub counts: Counts,
    /// Accuracy of always predicting the test set's majority class.
    pub majority_baseline: Option<f64>,
    pub test_set_sha256: Option<String>,
    pub seed_featurizer: Option<String>,
    pub integrated_featurizer: Option<String>,
    pub augment_stats: Option<AugmentStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub table: ComparisonTable,
    pub manifest: Manifest,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn save_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    save_corpus(corpus, path, Format::Jsonl)
}

/// SHA-256 of a corpus in canonical JSONL form.
pub fn corpus_sha256(corpus: &Corpus) -> Result<String> {
    let mut bytes = Vec::new();
    crate::corpus::write_jsonl(corpus, &mut bytes).map_err(|e| Error::io("<memory>", e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn labels_of(corpus: &Corpus) -> Vec<Label> {
    corpus.pairs().iter().map(|p| p.label).collect()
}

fn require_labeled(corpus: &Corpus, what: &str) -> Result<()> {
    match corpus.pairs().iter().find(|p| !p.label.is_labeled()) {
        Some(p) => Err(Error::Precondition(format!("{what} pair {} is unlabeled", p.id))),
        None => Ok(()),
    }
}

/// Fits, trains, evaluates and persists one condition under `dir`.
fn run_condition(
    condition: Condition,
    train: &Corpus,
    test: &Corpus,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<(Vec<EvalReport>, String)> {
    let featurizer = fit_featurizer(train, &config.featurizer)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    featurizer.save(&dir.join("featurizer.json"))?;
    let space = FeatureSpace::new(&featurizer, None);
    let fingerprint = space.fingerprint();
    let train_x = space.vectorize_corpus(train)?;
    let train_y = labels_of(train);
    let test_set = LabeledSet {
        fingerprint: fingerprint.clone(),
        vectors: space.vectorize_corpus(test)?,
        labels: labels_of(test),
    };
    save_jsonl(test, &dir.join("test.jsonl"))?;

    let models: Vec<ModelArtifact> = ModelKind::ALL
        .par_iter()
        .map(|&kind| {
            log::info!("{}: training {}", condition.as_str(), kind.display_name());
            let model = train_model(kind, &train_x, &train_y, &config.models)?;
            Ok(ModelArtifact::new(kind, fingerprint.clone(), model))
        })
        .collect::<Result<_>>()?;

    let model_dir = dir.join("models");
    fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
    let mut reports = Vec::with_capacity(models.len());
    for artifact in &models {
        let slug = artifact.kind.slug();
        artifact.save(&model_dir.join(format!("{slug}.json")))?;
        let report = evaluate(artifact, artifact.kind.display_name(), condition, &test_set)?;
        write_json(&dir.join("reports").join(format!("{slug}.json")), &report)?;
        reports.push(report);
    }
    Ok((reports, fingerprint))
}

fn acquire_generated(config: &ExperimentConfig, seed_corpus: &Corpus) -> Result<(Corpus, Option<AugmentStats>)> {
    if let Some(path) = config.generated_corpus.as_deref().filter(|p| p.exists()) {
        let generated = load_corpus(path, Format::from_path(path))?;
        return Ok((generated, None));
    }
    let aug = config
        .augmentation
        .as_ref()
        .ok_or_else(|| Error::Config("no generated corpus and no augmentation settings".into()))?;
    let script = if aug.mock {
        Some(match &aug.mock_script {
            Some(path) => load_script(path)?,
            None => default_mock_script(aug.generation.count, config.split.seed)?,
        })
    } else {
        None
    };
    let run = augment_blocking(seed_corpus, &aug.generation, &aug.template, script)?;
    let added: Vec<_> = run.corpus.pairs()[seed_corpus.len()..].to_vec();
    Ok((Corpus::new("generated", added)?, Some(run.stats)))
}

/// Reads a JSON array of scripted mock responses.
pub fn load_script(path: &Path) -> Result<Vec<ScriptedResponse>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Cooperative script over a synthetic batch of `count` generated pairs.
pub fn default_mock_script(count: usize, seed: u64) -> Result<Vec<ScriptedResponse>> {
    let useful = count * 3 / 5;
    let config = crate::synth::SynthConfig {
        source: crate::corpus::Source::Generated,
        ..crate::synth::SynthConfig::new("mock", useful, count - useful, seed ^ 0x6d6f_636b)
    };
    let batch = crate::synth::synthesize(&config)?;
    Ok(crate::augment::cooperative_script(batch.pairs()))
}

/// Runs the full protocol and writes every artifact under
/// `config.output_dir`. On failure the manifest records the failed stage.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let config = config.resolved()?;
    let has_generated = config.generated_corpus.as_deref().is_some_and(Path::exists);
    if !has_generated && config.augmentation.is_none() {
        return Err(Error::Config(
            "generated corpus is missing and no augmentation settings are configured".into(),
        ));
    }
    let out = config.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut manifest = Manifest {
        split_seed: config.split.seed,
        ..Manifest::default()
    };
    let result = run_stages(&config, &out, &mut manifest);
    match &result {
        Ok(_) => manifest.complete = true,
        Err(Error::Stage { stage, source }) => {
            manifest.failed_stage = Some(stage.to_string());
            manifest.error = Some(source.to_string());
        }
        Err(e) => manifest.error = Some(e.to_string()),
    }
    write_json(&out.join("manifest.json"), &manifest)?;
    result.map(|table| ExperimentOutcome { table, manifest })
}

fn stage<T>(name: &'static str, manifest: &mut Manifest, f: impl FnOnce(&mut Manifest) -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    let value = f(manifest).map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })?;
    manifest.stages_completed.push(name.to_string());
    Ok(value)
}

fn run_stages(config: &ExperimentConfig, out: &Path, manifest: &mut Manifest) -> Result<ComparisonTable> {
    let seed_corpus = stage("load", manifest, |m| {
        let path = &config.seed_corpus;
        let corpus = load_corpus(path, Format::from_path(path))?;
        require_labeled(&corpus, "seed")?;
        m.counts.seed_corpus = corpus.len();
        Ok(corpus)
    })?;

    let generated = stage("generate", manifest, |m| {
        let (generated, stats) = acquire_generated(config, &seed_corpus)?;
        require_labeled(&generated, "generated")?;
        m.counts.generated = generated.len();
        m.augment_stats = stats;
        Ok(generated)
    })?;

    let parts = stage("split", manifest, |m| {
        let parts = split(&seed_corpus, &config.split)?;
        let splits = out.join("splits");
        save_jsonl(&parts.train, &splits.join("train.jsonl"))?;
        save_jsonl(&parts.test, &splits.join("test.jsonl"))?;
        save_jsonl(&parts.validation, &splits.join("validation.jsonl"))?;
        m.counts.train = parts.train.len();
        m.counts.test = parts.test.len();
        m.counts.validation = parts.validation.len();
        m.test_set_sha256 = Some(corpus_sha256(&parts.test)?);
        let counts = parts.test.label_counts();
        m.majority_baseline = Some(counts.useful.max(counts.not_useful) as f64 / parts.test.len() as f64);
        Ok(parts)
    })?;

    let (seed_reports, fingerprint) = stage("seed-condition", manifest, |_| {
        run_condition(Condition::Seed, &parts.train, &parts.test, config, &out.join("seed"))
    })?;
    manifest.seed_featurizer = Some(fingerprint);

    let integrated_train = stage("merge", manifest, |m| {
        // Generated pairs already present anywhere in the seed corpus are
        // dropped so nothing leaks into the test set.
        let known = seed_corpus.content_hashes();
        let mut pairs = parts.train.pairs().to_vec();
        let before = pairs.len();
        pairs.extend(
            generated
                .pairs()
                .iter()
                .filter(|p| !known.contains(&p.content_hash()))
                .cloned(),
        );
        m.counts.generated_merged = pairs.len() - before;
        m.counts.generated_deduped = generated.len() - m.counts.generated_merged;
        let merged = Corpus::new(format!("{}-integrated-train", seed_corpus.name()), pairs)?;
        save_jsonl(&merged, &out.join("splits").join("integrated-train.jsonl"))?;
        m.counts.integrated_train = merged.len();
        Ok(merged)
    })?;

    let (integrated_reports, fingerprint) = stage("integrated-condition", manifest, |_| {
        run_condition(
            Condition::Integrated,
            &integrated_train,
            &parts.test,
            config,
            &out.join("integrated"),
        )
    })?;
    manifest.integrated_featurizer = Some(fingerprint);

    stage("report", manifest, |_| {
        let table = compare(&seed_reports, &integrated_reports)?;
        write_text(&out.join("comparison.json"), &table.to_json()?)?;
        write_text(&out.join("comparison.txt"), &table.render_text())?;
        Ok(table)
    })
}
