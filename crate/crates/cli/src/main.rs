//! `commentq`: command-line front end for the comment-usefulness pipeline.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use commentq_core::artifact::{train_model, ModelArtifact, ModelKind};
use commentq_core::augment::augment_blocking;
use commentq_core::corpus::{
    cohens_kappa, load_corpus, save_corpus, split, AnnotationTable, CodeCommentPair, Corpus, Format, Label, PartSize,
    Source,
};
use commentq_core::eval::{compare, evaluate, Condition, EvalReport, LabeledSet};
use commentq_core::experiment::{default_mock_script, load_script, run_experiment, ExperimentConfig};
use commentq_core::extractor::{extract_corpus, ExtractionConfig};
use commentq_core::features::{fit_featurizer, load_embeddings, EmbeddingTable, FeatureSpace, FittedFeaturizer};
use commentq_core::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "commentq", version, about = "Classify C code comments as Useful or Not Useful")]
struct Cli {
    /// TOML or JSON configuration (see `init-config`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path: a directory for split and experiment, a file otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine (comment, code) pairs from a tree of .c and .h files.
    Extract(ExtractArgs),
    /// Split a corpus into train, test and validation parts.
    Split(SplitArgs),
    /// Fit a featurizer on a corpus.
    Featurize(FeaturizeArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Evaluate a model on a labeled corpus.
    Eval(EvalArgs),
    /// Generate, label and merge new pairs through a completion endpoint.
    Augment(AugmentArgs),
    /// Run the seed-vs-integrated comparison end to end.
    Experiment(ExperimentArgs),
    /// Predict labels for a JSONL file of pairs.
    Classify(ClassifyArgs),
    /// Join per-model reports of two conditions into a comparison table.
    Report(ReportArgs),
    /// Cohen's kappa between two annotators.
    Kappa(KappaArgs),
    /// Write a configuration file with every default filled in.
    InitConfig(InitConfigArgs),
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    context_lines: Option<usize>,
    #[arg(long)]
    max_code_chars: Option<usize>,
    /// Never capture whole function bodies.
    #[arg(long)]
    no_attach_function: bool,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Fraction in (0,1) or absolute count.
    #[arg(long, value_parser = parse_part)]
    test: Option<PartSize>,
    #[arg(long, value_parser = parse_part)]
    validation: Option<PartSize>,
    #[arg(long)]
    no_stratify: bool,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    /// Also write one sparse vector per pair as JSONL.
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    featurizer: PathBuf,
    /// One of linear-svm, poly-svm, ann-relu, ann-tanh, ann-logistic, ann-identity.
    #[arg(long)]
    model: String,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    featurizer: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value = "seed")]
    condition: String,
    /// Report name; defaults to the model kind's display name.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long = "model")]
    model_name: Option<String>,
    /// Serve completions from the built-in scripted mock.
    #[arg(long)]
    mock: bool,
    /// JSON array of scripted mock responses (implies --mock).
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Write the prompts the mock received as a JSON array.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    seed_corpus: Option<PathBuf>,
    #[arg(long)]
    generated_corpus: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    featurizer: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    seed_reports: PathBuf,
    #[arg(long)]
    integrated_reports: PathBuf,
}

#[derive(Args)]
struct KappaArgs {
    /// CSV whose first two columns hold each annotator's labels.
    #[arg(long, conflicts_with = "table")]
    annotations: Option<PathBuf>,
    /// Agreement counts `uu,un,nu,nn` (rows: annotator A, columns: B).
    #[arg(long, value_delimiter = ',')]
    table: Option<Vec<u64>>,
}

#[derive(Args)]
struct InitConfigArgs {}

fn parse_part(text: &str) -> Result<PartSize, String> {
    if let Ok(n) = text.parse::<usize>() {
        return Ok(PartSize::Count(n));
    }
    text.parse::<f64>()
        .map(PartSize::Fraction)
        .map_err(|_| format!("{text:?} is neither a count nor a fraction"))
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let parsed = if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            } else {
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            };
            parsed?
        }
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    Ok(config.resolved()?)
}

fn read_corpus(path: &Path) -> anyhow::Result<Corpus> {
    Ok(load_corpus(path, Format::from_path(path))?)
}

fn write_corpus(corpus: &Corpus, path: &Path) -> anyhow::Result<()> {
    ensure_parent(path)?;
    Ok(save_corpus(corpus, path, Format::from_path(path))?)
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn pretty<T: serde::Serialize>(value: &T) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    Ok(text)
}

fn load_space(featurizer: &Path, embeddings: Option<&Path>) -> anyhow::Result<(FittedFeaturizer, Option<EmbeddingTable>)> {
    let featurizer = FittedFeaturizer::load(featurizer)?;
    let embeddings = embeddings.map(load_embeddings).transpose()?;
    Ok((featurizer, embeddings))
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn required_out(cli: &Cli) -> anyhow::Result<&Path> {
    match &cli.out {
        Some(path) => Ok(path),
        None => Err(Error::Config("--out is required for this command".into()).into()),
    }
}

fn cmd_extract(cli: &Cli, args: &ExtractArgs) -> anyhow::Result<()> {
    let defaults = ExtractionConfig::default();
    let config = ExtractionConfig {
        context_lines: args.context_lines.unwrap_or(defaults.context_lines),
        attach_function: !args.no_attach_function,
        max_code_chars: args.max_code_chars.unwrap_or(defaults.max_code_chars),
    };
    let (corpus, warnings) = extract_corpus(&args.root, &config)?;
    for w in &warnings {
        log::warn!("{}:{}: {}", w.file.display(), w.line, w.message);
    }
    let path = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.jsonl", corpus.name())));
    write_corpus(&corpus, &path)?;
    eprintln!("extracted {} pairs ({} warnings) into {}", corpus.len(), warnings.len(), path.display());
    Ok(())
}

fn cmd_split(cli: &Cli, args: &SplitArgs) -> anyhow::Result<()> {
    let config = load_config(cli)?;
    let mut spec = config.split;
    if let Some(test) = args.test {
        spec.test = test;
    }
    if let Some(validation) = args.validation {
        spec.validation = validation;
    }
    if args.no_stratify {
        spec.stratified = false;
    }
    let corpus = read_corpus(&args.corpus)?;
    let parts = split(&corpus, &spec)?;
    let dir = out_dir(cli);
    for (name, part) in [("train", &parts.train), ("test", &parts.test), ("validation", &parts.validation)] {
        let path = dir.join(format!("{name}.jsonl"));
        write_corpus(part, &path)?;
        eprintln!("{}: {} pairs", path.display(), part.len());
    }
    Ok(())
}

fn cmd_featurize(cli: &Cli, args: &FeaturizeArgs) -> anyhow::Result<()> {
    let mut config = load_config(cli)?.featurizer;
    if let Some(dim) = args.dim {
        config.dim = dim;
    }
    let corpus = read_corpus(&args.corpus)?;
    let featurizer = fit_featurizer(&corpus, &config)?;
    let output = required_out(cli)?;
    ensure_parent(output)?;
    featurizer.save(output)?;
    if let Some(path) = &args.vectors {
        let embeddings = args.embeddings.as_deref().map(load_embeddings).transpose()?;
        let space = FeatureSpace::new(&featurizer, embeddings.as_ref());
        let vectors = space.vectorize_corpus(&corpus)?;
        ensure_parent(path)?;
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        for (pair, vector) in corpus.pairs().iter().zip(&vectors) {
            let record = serde_json::json!({"id": pair.id, "vector": vector});
            writeln!(writer, "{record}").map_err(|e| Error::io(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
    }
    eprintln!("featurizer {} fitted on {} pairs", featurizer.fingerprint(), corpus.len());
    Ok(())
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> anyhow::Result<()> {
    let config = load_config(cli)?;
    let output = required_out(cli)?;
    let kind: ModelKind = args.model.parse()?;
    let (featurizer, embeddings) = load_space(&args.featurizer, args.embeddings.as_deref())?;
    let space = FeatureSpace::new(&featurizer, embeddings.as_ref());
    let corpus = read_corpus(&args.corpus)?;
    let xs = space.vectorize_corpus(&corpus)?;
    let labels: Vec<Label> = corpus.pairs().iter().map(|p| p.label).collect();
    let model = train_model(kind, &xs, &labels, &config.models)?;
    let artifact = ModelArtifact::new(kind, space.fingerprint(), model);
    ensure_parent(output)?;
    artifact.save(output)?;
    eprintln!("trained {} on {} pairs", kind.display_name(), corpus.len());
    Ok(())
}

fn parse_condition(text: &str) -> anyhow::Result<Condition> {
    match text {
        "seed" => Ok(Condition::Seed),
        "integrated" => Ok(Condition::Integrated),
        other => Err(Error::Config(format!("unknown condition {other:?}")).into()),
    }
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> anyhow::Result<()> {
    let condition = parse_condition(&args.condition)?;
    let artifact = ModelArtifact::load(&args.model)?;
    let (featurizer, embeddings) = load_space(&args.featurizer, args.embeddings.as_deref())?;
    let space = FeatureSpace::new(&featurizer, embeddings.as_ref());
    let corpus = read_corpus(&args.corpus)?;
    let set = LabeledSet {
        fingerprint: space.fingerprint(),
        vectors: space.vectorize_corpus(&corpus)?,
        labels: corpus.pairs().iter().map(|p| p.label).collect(),
    };
    let name = args.name.clone().unwrap_or_else(|| artifact.kind.display_name().to_string());
    let report = evaluate(&artifact, &name, condition, &set)?;
    let text = pretty(&report)?;
    match &cli.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    eprintln!(
        "{}: accuracy {:.3}, precision {:.3}, recall {:.3}, F1 {:.3}",
        report.model_name, report.accuracy, report.precision, report.recall, report.f1
    );
    Ok(())
}

fn cmd_augment(cli: &Cli, args: &AugmentArgs) -> anyhow::Result<()> {
    let config = load_config(cli)?;
    let output = required_out(cli)?;
    let settings = config.augmentation.clone().unwrap_or_default();
    let mut generation = settings.generation;
    if let Some(count) = args.count {
        generation.count = count;
    }
    if let Some(endpoint) = &args.endpoint {
        generation.endpoint = endpoint.clone();
    }
    if let Some(model) = &args.model_name {
        generation.model_name = model.clone();
    }
    generation.validate()?;
    let base = read_corpus(&args.base)?;
    let script_path = args.mock_script.clone().or(settings.mock_script);
    let mock = args.mock || args.mock_script.is_some() || settings.mock;
    let script = match (mock, script_path) {
        (false, _) => None,
        (true, Some(path)) => Some(load_script(&path)?),
        (true, None) => Some(default_mock_script(generation.count, config.split.seed)?),
    };
    let run = augment_blocking(&base, &generation, &settings.template, script)?;
    write_corpus(&run.corpus, output)?;
    let stats = pretty(&run.stats)?;
    match &args.stats {
        Some(path) => write_file(path, &stats)?,
        None => eprint!("{stats}"),
    }
    if let (Some(path), Some(prompts)) = (&args.transcript, &run.prompts) {
        write_file(path, &pretty(prompts)?)?;
    }
    eprintln!(
        "merged {} of {} requested pairs; corpus now has {} pairs",
        run.stats.merged,
        run.stats.requested,
        run.corpus.len()
    );
    Ok(())
}

fn cmd_experiment(cli: &Cli, args: &ExperimentArgs) -> anyhow::Result<()> {
    let mut config = load_config(cli)?;
    if let Some(path) = &args.seed_corpus {
        config.seed_corpus = path.clone();
    }
    if let Some(path) = &args.generated_corpus {
        config.generated_corpus = Some(path.clone());
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    let outcome = run_experiment(&config)?;
    print!("{}", outcome.table.render_text());
    eprintln!("artifacts written to {}", config.output_dir.display());
    Ok(())
}

fn cmd_classify(cli: &Cli, args: &ClassifyArgs) -> anyhow::Result<()> {
    let artifact = ModelArtifact::load(&args.model)?;
    let (featurizer, embeddings) = load_space(&args.featurizer, args.embeddings.as_deref())?;
    let space = FeatureSpace::new(&featurizer, embeddings.as_ref());
    let fingerprint = space.fingerprint();
    if artifact.featurizer_fingerprint != fingerprint {
        return Err(Error::Compatibility {
            expected: artifact.featurizer_fingerprint,
            found: fingerprint,
        }
        .into());
    }
    let input = fs::File::open(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let mut out: Box<dyn Write> = match &cli.out {
        Some(path) => {
            ensure_parent(path)?;
            Box::new(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for (index, line) in BufReader::new(input).lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::io(&args.input, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: Map<String, Value> = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let text = |key: &str| -> anyhow::Result<String> {
            match record.get(key) {
                Some(Value::String(s)) => Ok(s.clone()),
                None | Some(Value::Null) => Ok(String::new()),
                Some(_) => Err(Error::Parse {
                    line: line_no,
                    message: format!("field {key:?} must be a string"),
                }
                .into()),
            }
        };
        let mut pair = CodeCommentPair::new(text("comment")?, text("code")?, Label::Unlabeled, Source::Extracted);
        if let Some(Value::String(id)) = record.get("id") {
            pair.id = id.clone();
        }
        let (label, score) = artifact.model.predict(&space.vectorize(&pair)?)?;
        record.insert("predicted_label".into(), Value::from(label.as_str().unwrap_or_default()));
        record.insert("score".into(), Value::from(score));
        writeln!(out, "{}", Value::Object(record)).context("writing classification output")?;
    }
    out.flush().context("writing classification output")?;
    Ok(())
}

fn read_reports(dir: &Path) -> anyhow::Result<Vec<EvalReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Ok(serde_json::from_str(&text).map_err(Error::from)?)
        })
        .collect()
}

fn cmd_report(cli: &Cli, args: &ReportArgs) -> anyhow::Result<()> {
    let table = compare(&read_reports(&args.seed_reports)?, &read_reports(&args.integrated_reports)?)?;
    match &cli.out {
        Some(path) if path.extension().is_some_and(|e| e == "json") => write_file(path, &table.to_json()?)?,
        Some(path) if path.extension().is_some_and(|e| e == "txt") => write_file(path, &table.render_text())?,
        Some(path) => bail!(Error::Config(format!("{}: report output must end in .json or .txt", path.display()))),
        None => print!("{}", table.render_text()),
    }
    Ok(())
}

fn cmd_kappa(_cli: &Cli, args: &KappaArgs) -> anyhow::Result<()> {
    let table = match (&args.table, &args.annotations) {
        (Some(cells), _) => match cells[..] {
            [uu, un, nu, nn] => AnnotationTable::new([[uu, un], [nu, nn]]),
            _ => bail!(Error::Config(format!("--table needs 4 counts, got {}", cells.len()))),
        },
        (None, Some(path)) => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_path(path)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for (index, record) in reader.records().enumerate() {
                let record = record.map_err(|e| Error::Format(e.to_string()))?;
                let line = index + 2;
                let label = |column: usize| {
                    record
                        .get(column)
                        .and_then(Label::parse)
                        .ok_or_else(|| Error::Parse {
                            line,
                            message: format!("column {} is not a label", column + 1),
                        })
                };
                a.push(label(0)?);
                b.push(label(1)?);
            }
            AnnotationTable::from_labels(&a, &b)?
        }
        (None, None) => bail!(Error::Config("pass --annotations or --table".into())),
    };
    println!("{}", cohens_kappa(&table)?);
    Ok(())
}

fn cmd_init_config(cli: &Cli, _args: &InitConfigArgs) -> anyhow::Result<()> {
    let text = toml::to_string_pretty(&ExperimentConfig::default()).context("serializing default configuration")?;
    match &cli.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Extract(args) => cmd_extract(cli, args),
        Command::Split(args) => cmd_split(cli, args),
        Command::Featurize(args) => cmd_featurize(cli, args),
        Command::Train(args) => cmd_train(cli, args),
        Command::Eval(args) => cmd_eval(cli, args),
        Command::Augment(args) => cmd_augment(cli, args),
        Command::Experiment(args) => cmd_experiment(cli, args),
        Command::Classify(args) => cmd_classify(cli, args),
        Command::Report(args) => cmd_report(cli, args),
        Command::Kappa(args) => cmd_kappa(cli, args),
        Command::InitConfig(args) => cmd_init_config(cli, args),
    }
}

fn exit_code(error: &anyhow::Error) -> u8 {
    let kind = error
        .chain()
        .find_map(|cause| cause.downcast_ref::<Error>())
        .map(Error::kind);
    match kind {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Training) => 4,
        Some(ErrorKind::Transport) => 5,
        Some(ErrorKind::Io) | None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(exit_code(&error))
        }
    }
}
