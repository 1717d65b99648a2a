//! Labeled code-comment pairs: data model, JSONL/CSV persistence,
//! stratified splitting, merging, and Cohen's kappa.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Useful,
    NotUseful,
    Unlabeled,
}

impl Label {
    /// Canonicalizes "Useful" / "Not Useful": case-insensitive, internal
    /// whitespace collapsed. Anything else is rejected.
    pub fn parse(text: &str) -> Option<Label> {
        let collapsed = text
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        match collapsed.as_str() {
            "useful" => Some(Label::Useful),
            "not useful" => Some(Label::NotUseful),
            _ => None,
        }
    }

    /// Wire name; `None` for [`Label::Unlabeled`].
    pub fn as_str(self) -> Option<&'static str> {
        match self {
            Label::Useful => Some("Useful"),
            Label::NotUseful => Some("Not Useful"),
            Label::Unlabeled => None,
        }
    }

    /// +1 for Useful, -1 otherwise.
    pub fn sign(self) -> f64 {
        if self == Label::Useful {
            1.0
        } else {
            -1.0
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str().unwrap_or("Unlabeled"))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.as_str() {
            Some(s) => serializer.serialize_str(s),
            None => serializer.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw: Option<String> = Option::deserialize(deserializer)?;
        match raw {
            None => Ok(Label::Unlabeled),
            Some(s) if s.trim().is_empty() => Ok(Label::Unlabeled),
            Some(s) => Label::parse(&s)
                .ok_or_else(|| serde::de::Error::custom(format!("unrecognized label {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Seed,
    Generated,
    Extracted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeCommentPair {
    pub id: String,
    pub comment: String,
    pub code: String,
    pub label: Label,
    pub source: Source,
}

impl CodeCommentPair {
    /// Builds a pair whose id is the content hash of `(comment, code)`.
    pub fn new(comment: impl Into<String>, code: impl Into<String>, label: Label, source: Source) -> Self {
        let comment = comment.into();
        let code = code.into();
        CodeCommentPair {
            id: content_hash(&comment, &code),
            comment,
            code,
            label,
            source,
        }
    }

    pub fn content_hash(&self) -> String {
        content_hash(&self.comment, &self.code)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.comment.is_empty() && self.code.is_empty() {
            return Err(format!("pair {} has neither comment nor code", self.id));
        }
        if matches!(self.source, Source::Seed | Source::Generated) && !self.label.is_labeled() {
            return Err(format!("{:?} pair {} must carry a label", self.source, self.id));
        }
        Ok(())
    }
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Stable hex digest of the whitespace-normalized comment and code.
pub fn content_hash(comment: &str, code: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(normalize_ws(comment).as_bytes());
    hasher.update([0u8]);
    hasher.update(normalize_ws(code).as_bytes());
    hex::encode(&hasher.finalize()[..16])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub useful: usize,
    pub not_useful: usize,
    pub unlabeled: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.useful + self.not_useful + self.unlabeled
    }
}

/// An ordered, id-unique collection of pairs. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    pairs: Vec<CodeCommentPair>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, pairs: Vec<CodeCommentPair>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for pair in &pairs {
            pair.check().map_err(Error::Integrity)?;
            if !seen.insert(pair.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate id {:?}", pair.id)));
            }
        }
        Ok(Corpus {
            name: name.into(),
            pairs,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Corpus {
            name: name.into(),
            pairs: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pairs(&self) -> &[CodeCommentPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn into_pairs(self) -> Vec<CodeCommentPair> {
        self.pairs
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn label_counts(&self) -> LabelCounts {
        let mut counts = LabelCounts::default();
        for pair in &self.pairs {
            match pair.label {
                Label::Useful => counts.useful += 1,
                Label::NotUseful => counts.not_useful += 1,
                Label::Unlabeled => counts.unlabeled += 1,
            }
        }
        counts
    }

    pub fn content_hashes(&self) -> HashSet<String> {
        self.pairs.iter().map(CodeCommentPair::content_hash).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// `.csv` selects CSV; everything else is JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

fn required_nullable<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Label, D::Error> {
    Label::deserialize(deserializer)
}

#[derive(Deserialize)]
struct JsonRecord {
    #[serde(default)]
    id: Option<String>,
    comment: String,
    code: String,
    #[serde(deserialize_with = "required_nullable")]
    label: Label,
    #[serde(default)]
    source: Option<Source>,
}

#[derive(Deserialize)]
struct CsvRecord {
    #[serde(default)]
    id: Option<String>,
    comment: String,
    code: String,
    label: String,
    #[serde(default)]
    source: Option<String>,
}

fn finish_record(
    line: usize,
    id: Option<String>,
    comment: String,
    code: String,
    label: Label,
    source: Option<Source>,
) -> Result<CodeCommentPair> {
    let id = match id {
        Some(id) if !id.is_empty() => id,
        _ => content_hash(&comment, &code),
    };
    let pair = CodeCommentPair {
        id,
        comment,
        code,
        label,
        source: source.unwrap_or(Source::Seed),
    };
    pair.check().map_err(|message| Error::Parse { line, message })?;
    Ok(pair)
}

/// Parses JSONL records. Blank lines are skipped; line numbers are 1-based.
pub fn parse_jsonl<R: Read>(reader: R, name: &str) -> Result<Corpus> {
    let mut pairs = Vec::new();
    for (index, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        pairs.push(finish_record(
            line_no,
            record.id,
            record.comment,
            record.code,
            record.label,
            record.source,
        )?);
    }
    Corpus::new(name, pairs)
}

/// Parses RFC-4180 CSV with header `id,comment,code,label,source`.
pub fn parse_csv<R: Read>(reader: R, name: &str) -> Result<Corpus> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut pairs = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        let more = csv_reader.read_record(&mut row).map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let record: CsvRecord = row.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let label = if record.label.trim().is_empty() {
            Label::Unlabeled
        } else {
            Label::parse(&record.label).ok_or_else(|| Error::Parse {
                line,
                message: format!("unrecognized label {:?}", record.label),
            })?
        };
        let source = match record.source.as_deref().map(str::trim) {
            None | Some("") => None,
            Some("seed") => Some(Source::Seed),
            Some("generated") => Some(Source::Generated),
            Some("extracted") => Some(Source::Extracted),
            Some(other) => {
                return Err(Error::Parse {
                    line,
                    message: format!("unrecognized source {other:?}"),
                })
            }
        };
        pairs.push(finish_record(line, record.id, record.comment, record.code, label, source)?);
    }
    Corpus::new(name, pairs)
}

fn corpus_name(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string()
}

pub fn load_corpus(path: &Path, format: Format) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = corpus_name(path);
    match format {
        Format::Jsonl => parse_jsonl(file, &name),
        Format::Csv => parse_csv(file, &name),
    }
}

pub fn write_jsonl<W: Write>(corpus: &Corpus, mut writer: W) -> std::io::Result<()> {
    for pair in corpus.pairs() {
        serde_json::to_writer(&mut writer, pair)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_csv<W: Write>(corpus: &Corpus, writer: W) -> std::io::Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record(["id", "comment", "code", "label", "source"])?;
    for pair in corpus.pairs() {
        let source = match pair.source {
            Source::Seed => "seed",
            Source::Generated => "generated",
            Source::Extracted => "extracted",
        };
        csv_writer.write_record([
            pair.id.as_str(),
            pair.comment.as_str(),
            pair.code.as_str(),
            pair.label.as_str().unwrap_or(""),
            source,
        ])?;
    }
    csv_writer.flush()
}

pub fn save_corpus(corpus: &Corpus, path: &Path, format: Format) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let writer = BufWriter::new(file);
    match format {
        Format::Jsonl => write_jsonl(corpus, writer),
        Format::Csv => write_csv(corpus, writer),
    }
    .map_err(|e| Error::io(path, e))
}

/// A split portion: a fraction of the corpus (rounded down) or an absolute count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartSize {
    Count(usize),
    Fraction(f64),
}

impl PartSize {
    fn resolve(self, total: usize, what: &str, allow_zero: bool) -> Result<usize> {
        match self {
            PartSize::Count(n) => Ok(n),
            PartSize::Fraction(f) => {
                let valid = if allow_zero {
                    (0.0..1.0).contains(&f)
                } else {
                    f > 0.0 && f < 1.0
                };
                if !valid {
                    return Err(Error::Split(format!("{what} fraction {f} out of range")));
                }
                Ok((total as f64 * f).floor() as usize)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub test: PartSize,
    pub validation: PartSize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test: PartSize::Fraction(0.19),
            validation: PartSize::Fraction(0.10),
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Corpus,
    pub test: Corpus,
    pub validation: Corpus,
}

/// Integer allocation of each stratum to (train, test, validation) whose
/// cells are the floor or ceiling of the proportional share, with exact
/// row (stratum) and column (part) totals.
fn allocate(strata: &[usize], parts: [usize; 3]) -> Vec<[usize; 3]> {
    let total: usize = strata.iter().sum();
    if total == 0 {
        return vec![[0; 3]; strata.len()];
    }
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(strata.len());
    let mut fractional = Vec::new();
    for (c, &n) in strata.iter().enumerate() {
        let mut row = [0usize; 3];
        for (p, &s) in parts.iter().enumerate() {
            let product = (n as u128) * (s as u128);
            row[p] = (product / total as u128) as usize;
            let remainder = product % total as u128;
            if remainder != 0 {
                fractional.push((c, p, remainder));
            }
        }
        alloc.push(row);
    }
    let row_need: Vec<usize> = strata
        .iter()
        .zip(&alloc)
        .map(|(&n, row)| n - row.iter().sum::<usize>())
        .collect();
    let col_need: Vec<usize> = (0..3)
        .map(|p| parts[p] - alloc.iter().map(|row| row[p]).sum::<usize>())
        .collect();

    // At most 3 strata x 3 parts, so exhaustive search over which
    // fractional cells round up is cheap. Prefer the largest remainders.
    let k = fractional.len();
    let mut best: Option<(u128, u32)> = None;
    for mask in 0u32..(1u32 << k) {
        let mut rows = vec![0usize; strata.len()];
        let mut cols = [0usize; 3];
        let mut score = 0u128;
        for (bit, &(c, p, r)) in fractional.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                rows[c] += 1;
                cols[p] += 1;
                score += r;
            }
        }
        if rows == row_need && cols[..] == col_need[..] && best.is_none_or(|(s, _)| score > s) {
            best = Some((score, mask));
        }
    }
    let (_, mask) = best.expect("a floor/ceil rounding with exact margins always exists");
    for (bit, &(c, p, _)) in fractional.iter().enumerate() {
        if mask & (1 << bit) != 0 {
            alloc[c][p] += 1;
        }
    }
    alloc
}

/// Deterministic seeded partition into train/test/validation.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<Split> {
    let n = corpus.len();
    let test_n = spec.test.resolve(n, "test", false)?;
    let val_n = spec.validation.resolve(n, "validation", true)?;
    if test_n >= n {
        return Err(Error::Split(format!(
            "test size {test_n} must be smaller than corpus size {n}"
        )));
    }
    if test_n + val_n >= n {
        return Err(Error::Split(format!(
            "test ({test_n}) + validation ({val_n}) must be smaller than corpus size {n}"
        )));
    }

    let mut strata: Vec<Vec<usize>> = Vec::new();
    if spec.stratified {
        for label in [Label::Useful, Label::NotUseful, Label::Unlabeled] {
            let members: Vec<usize> = (0..n).filter(|&i| corpus.pairs[i].label == label).collect();
            if !members.is_empty() {
                strata.push(members);
            }
        }
    } else {
        strata.push((0..n).collect());
    }

    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let alloc = allocate(&sizes, [n - test_n - val_n, test_n, val_n]);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (members, counts) in strata.iter_mut().zip(&alloc) {
        members.shuffle(&mut rng);
        let (test, rest) = members.split_at(counts[1]);
        let (val, train) = rest.split_at(counts[2]);
        parts[0].extend_from_slice(train);
        parts[1].extend_from_slice(test);
        parts[2].extend_from_slice(val);
    }

    let build = |mut indices: Vec<usize>, suffix: &str| {
        indices.sort_unstable();
        Corpus {
            name: format!("{}-{suffix}", corpus.name),
            pairs: indices.into_iter().map(|i| corpus.pairs[i].clone()).collect(),
        }
    };
    let [train, test, validation] = parts;
    Ok(Split {
        train: build(train, "train"),
        test: build(test, "test"),
        validation: build(validation, "validation"),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MergeStats {
    pub added: usize,
    pub deduped: usize,
}

/// Appends `addition` to `base`, dropping pairs whose content hash is
/// already present (the base copy wins).
pub fn merge(base: &Corpus, addition: &Corpus) -> Result<Corpus> {
    merge_with_stats(base, addition).map(|(corpus, _)| corpus)
}

pub fn merge_with_stats(base: &Corpus, addition: &Corpus) -> Result<(Corpus, MergeStats)> {
    let mut hashes = base.content_hashes();
    let mut ids: HashSet<String> = base.pairs.iter().map(|p| p.id.clone()).collect();
    let mut pairs = base.pairs.clone();
    let mut stats = MergeStats::default();
    for pair in &addition.pairs {
        if !hashes.insert(pair.content_hash()) {
            stats.deduped += 1;
            continue;
        }
        if !ids.insert(pair.id.clone()) {
            return Err(Error::Integrity(format!(
                "id {:?} names different contents in base and addition",
                pair.id
            )));
        }
        pairs.push(pair.clone());
        stats.added += 1;
    }
    Ok((
        Corpus {
            name: base.name.clone(),
            pairs,
        },
        stats,
    ))
}

/// 2x2 agreement counts: rows are annotator A, columns annotator B,
/// index 0 = Useful, 1 = Not Useful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTable {
    pub counts: [[u64; 2]; 2],
}

impl AnnotationTable {
    pub fn new(counts: [[u64; 2]; 2]) -> Self {
        AnnotationTable { counts }
    }

    /// Tallies two parallel label sequences. Unlabeled entries are rejected.
    pub fn from_labels(a: &[Label], b: &[Label]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape {
                expected: a.len(),
                found: b.len(),
            });
        }
        let index = |label: Label| match label {
            Label::Useful => Ok(0),
            Label::NotUseful => Ok(1),
            Label::Unlabeled => Err(Error::Precondition("unlabeled annotation".into())),
        };
        let mut counts = [[0u64; 2]; 2];
        for (&x, &y) in a.iter().zip(b) {
            counts[index(x)?][index(y)?] += 1;
        }
        Ok(AnnotationTable { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`, unclamped.
pub fn cohens_kappa(table: &AnnotationTable) -> Result<f64> {
    let total = table.total();
    if total == 0 {
        return Err(Error::Degenerate("annotation table is empty".into()));
    }
    let n = total as f64;
    let [[a, b], [c, d]] = table.counts.map(|row| row.map(|v| v as f64));
    let observed = (a + d) / n;
    let expected = ((a + b) * (a + c) + (c + d) * (b + d)) / (n * n);
    if expected == 1.0 {
        return Err(Error::Degenerate(
            "chance agreement is 1: both annotators used one identical label".into(),
        ));
    }
    Ok((observed - expected) / (1.0 - expected))
}
