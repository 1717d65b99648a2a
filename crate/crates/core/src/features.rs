//! Hashed n-gram TF-IDF featurization and external embedding ingestion.
//!
//! Every n-gram is hashed with xxh3-64 under [`HASH_SEED`]. The low bits
//! select a bucket in `[0, dim)`; bit 63 selects the sign (+1 when clear,
//! -1 when set) so colliding terms tend to cancel instead of pile up.
//! Terms are namespaced per channel before hashing:
//!
//! | prefix | channel | tokens                                           |
//! |--------|---------|--------------------------------------------------|
//! | `cw:`  | comment | lowercased word n-grams                          |
//! | `cc:`  | comment | character n-grams of the normalized comment      |
//! | `kw:`  | code    | identifier/number n-grams, case preserved        |
//! | `ks:`  | code    | camelCase / snake_case parts of compound names   |

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::corpus::{CodeCommentPair, Corpus};
use crate::error::{Error, Result};

/// Seed for the n-gram hash. Changing it changes every feature index.
pub const HASH_SEED: u64 = 0x636f_6d6d_656e_7471;

pub const FEATURIZER_FORMAT_VERSION: u32 = 1;

/// Sparse vector with sorted, unique, non-zero entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector")]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

#[derive(Deserialize)]
struct RawVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl TryFrom<RawVector> for FeatureVector {
    type Error = Error;

    fn try_from(raw: RawVector) -> Result<Self> {
        let sorted = raw.entries.windows(2).all(|w| w[0].0 < w[1].0);
        let valid = raw
            .entries
            .iter()
            .all(|&(i, v)| (i as usize) < raw.dim && v != 0.0 && v.is_finite());
        if raw.dim == 0 || !sorted || !valid {
            return Err(Error::Format("malformed sparse vector".into()));
        }
        Ok(FeatureVector {
            dim: raw.dim,
            entries: raw.entries,
        })
    }
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        FeatureVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Sorts entries, sums duplicates and drops zeros.
    pub fn new(dim: usize, mut entries: Vec<(u32, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("feature dimension must be positive".into()));
        }
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (index, value) in entries {
            if index as usize >= dim {
                return Err(Error::Shape {
                    expected: dim,
                    found: index as usize + 1,
                });
            }
            match merged.last_mut() {
                Some((last, acc)) if *last == index => *acc += value,
                _ => merged.push((index, value)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        Ok(FeatureVector {
            dim,
            entries: merged,
        })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        FeatureVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(index as u32), |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            dense[i as usize] = v;
        }
        dense
    }

    pub fn norm_squared(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> Result<f64> {
        if dense.len() != self.dim {
            return Err(Error::Shape {
                expected: dense.len(),
                found: self.dim,
            });
        }
        Ok(self.entries.iter().map(|&(i, v)| v * dense[i as usize]).sum())
    }

    pub fn dot(&self, other: &FeatureVector) -> Result<f64> {
        if other.dim != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(sparse_dot(&self.entries, &other.entries))
    }

    fn scale(&mut self, factor: f64) {
        for (_, v) in &mut self.entries {
            *v *= factor;
        }
        self.entries.retain(|&(_, v)| v != 0.0);
    }
}

fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramRange {
    pub min: usize,
    pub max: usize,
}

impl NgramRange {
    pub const fn new(min: usize, max: usize) -> Self {
        NgramRange { min, max }
    }

    fn is_valid(&self) -> bool {
        self.min >= 1 && self.min <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub word_ngrams: NgramRange,
    pub char_ngrams: NgramRange,
    pub idf: bool,
    /// (comment, code) channel multipliers.
    pub comment_code_weighting: (f64, f64),
    pub l2_normalize: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            dim: 1 << 18,
            word_ngrams: NgramRange::new(1, 2),
            char_ngrams: NgramRange::new(3, 5),
            idf: true,
            comment_code_weighting: (1.0, 1.0),
            l2_normalize: true,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || !self.dim.is_power_of_two() || self.dim > (1 << 31) {
            return Err(Error::Config(format!("dim {} must be a power of two >= 2", self.dim)));
        }
        if !self.word_ngrams.is_valid() || !self.char_ngrams.is_valid() {
            return Err(Error::Config("n-gram ranges must satisfy 1 <= min <= max".into()));
        }
        let (a, b) = self.comment_code_weighting;
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Config("channel weights must be finite".into()));
        }
        Ok(())
    }
}

/// Lowercased alphanumeric runs of a comment.
pub fn comment_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Identifier and number tokens of code, case preserved.
pub fn code_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Splits `parseHTTPHeader_v2` into `parse`, `HTTP`, `Header`, `v2`.
pub fn split_identifier(ident: &str) -> Vec<String> {
    let mut parts = Vec::new();
    for chunk in ident.split('_').filter(|c| !c.is_empty()) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_uppercase() && cur.is_uppercase() && next_lower);
            if boundary {
                parts.push(chars[start..i].iter().collect());
                start = i;
            }
        }
        parts.push(chars[start..].iter().collect());
    }
    parts
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Channel {
    Comment,
    Code,
}

fn add_word_ngrams(terms: &mut BTreeMap<String, (Channel, u32)>, prefix: &str, tokens: &[String], range: NgramRange, channel: Channel) {
    for n in range.min..=range.max {
        for window in tokens.windows(n) {
            let term = format!("{prefix}{}", window.join(" "));
            terms.entry(term).or_insert((channel, 0)).1 += 1;
        }
    }
}

/// Term counts of a pair, keyed by namespaced term string.
fn term_counts(config: &FeaturizerConfig, pair: &CodeCommentPair) -> BTreeMap<String, (Channel, u32)> {
    let mut terms = BTreeMap::new();
    let words = comment_tokens(&pair.comment);
    add_word_ngrams(&mut terms, "cw:", &words, config.word_ngrams, Channel::Comment);
    if !words.is_empty() {
        let padded: Vec<char> = format!(" {} ", words.join(" ")).chars().collect();
        for n in config.char_ngrams.min..=config.char_ngrams.max {
            for window in padded.windows(n) {
                let term = format!("cc:{}", window.iter().collect::<String>());
                terms.entry(term).or_insert((Channel::Comment, 0)).1 += 1;
            }
        }
    }
    let code = code_tokens(&pair.code);
    add_word_ngrams(&mut terms, "kw:", &code, config.word_ngrams, Channel::Code);
    for token in &code {
        let parts = split_identifier(token);
        if parts.len() > 1 {
            for part in parts {
                terms.entry(format!("ks:{part}")).or_insert((Channel::Code, 0)).1 += 1;
            }
        }
    }
    terms
}

/// Bucket index and sign of a term.
pub fn hash_term(term: &str, dim: usize) -> (u32, f64) {
    let h = xxh3_64_with_seed(term.as_bytes(), HASH_SEED);
    let index = (h & (dim as u64 - 1)) as u32;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (index, sign)
}

/// Featurizer with IDF statistics. Immutable and serializable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFeaturizer {
    pub format_version: u32,
    pub config: FeaturizerConfig,
    pub n_docs: usize,
    /// Document frequency per bucket, sorted by bucket, zeros omitted.
    pub document_frequency: Vec<(u32, u32)>,
}

pub fn fit_featurizer(corpus: &Corpus, config: &FeaturizerConfig) -> Result<FittedFeaturizer> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Training("cannot fit a featurizer on an empty corpus".into()));
    }
    let mut df: BTreeMap<u32, u32> = BTreeMap::new();
    if config.idf {
        let per_doc: Vec<BTreeSet<u32>> = corpus
            .pairs()
            .par_iter()
            .map(|pair| {
                term_counts(config, pair)
                    .keys()
                    .map(|term| hash_term(term, config.dim).0)
                    .collect()
            })
            .collect();
        for buckets in per_doc {
            for bucket in buckets {
                *df.entry(bucket).or_insert(0) += 1;
            }
        }
    }
    Ok(FittedFeaturizer {
        format_version: FEATURIZER_FORMAT_VERSION,
        config: config.clone(),
        n_docs: corpus.len(),
        document_frequency: df.into_iter().collect(),
    })
}

impl FittedFeaturizer {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Smoothed `ln(N / (1 + df)) + 1`; 1.0 everywhere when IDF is off.
    pub fn idf(&self, bucket: u32) -> f64 {
        if !self.config.idf {
            return 1.0;
        }
        let df = self
            .document_frequency
            .binary_search_by_key(&bucket, |&(b, _)| b)
            .map(|pos| self.document_frequency[pos].1)
            .unwrap_or(0);
        (self.n_docs as f64 / (1.0 + df as f64)).ln() + 1.0
    }

    pub fn idf_of_term(&self, term: &str) -> f64 {
        self.idf(hash_term(term, self.dim()).0)
    }

    pub fn featurize(&self, pair: &CodeCommentPair) -> FeatureVector {
        let (comment_weight, code_weight) = self.config.comment_code_weighting;
        let mut buckets: BTreeMap<u32, f64> = BTreeMap::new();
        for (term, (channel, count)) in term_counts(&self.config, pair) {
            let (index, sign) = hash_term(&term, self.dim());
            let weight = match channel {
                Channel::Comment => comment_weight,
                Channel::Code => code_weight,
            };
            *buckets.entry(index).or_insert(0.0) += sign * count as f64 * self.idf(index) * weight;
        }
        let mut vector = FeatureVector {
            dim: self.dim(),
            entries: buckets.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        };
        if self.config.l2_normalize {
            let norm = vector.norm();
            if norm > 0.0 {
                vector.scale(1.0 / norm);
            }
        }
        vector
    }

    /// Hashed features in `[0, dim)` followed by the pair's embedding.
    pub fn featurize_with_embeddings(&self, table: &EmbeddingTable, pair: &CodeCommentPair) -> Result<FeatureVector> {
        let embedding = table.lookup(&pair.id)?;
        let mut vector = self.featurize(pair);
        let offset = self.dim();
        vector.dim = offset + embedding.len();
        vector.entries.extend(
            embedding
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| ((offset + j) as u32, v)),
        );
        Ok(vector)
    }

    /// Content digest identifying this fitted featurizer.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("featurizer serializes");
        hex::encode(&Sha256::digest(&bytes)[..16])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let featurizer: FittedFeaturizer = serde_json::from_str(text)?;
        if featurizer.format_version != FEATURIZER_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported featurizer format version {}",
                featurizer.format_version
            )));
        }
        featurizer.config.validate()?;
        Ok(featurizer)
    }
}

/// Hashed featurizer plus an optional embedding table: the full input space
/// seen by a classifier.
#[derive(Debug, Clone, Copy)]
pub struct FeatureSpace<'a> {
    pub featurizer: &'a FittedFeaturizer,
    pub embeddings: Option<&'a EmbeddingTable>,
}

impl<'a> FeatureSpace<'a> {
    pub fn new(featurizer: &'a FittedFeaturizer, embeddings: Option<&'a EmbeddingTable>) -> Self {
        FeatureSpace { featurizer, embeddings }
    }

    pub fn dim(&self) -> usize {
        self.featurizer.dim() + self.embeddings.and_then(|t| t.dim()).unwrap_or(0)
    }

    pub fn fingerprint(&self) -> String {
        let base = self.featurizer.fingerprint();
        match self.embeddings {
            Some(table) => format!("{base}+emb{}:{}", table.dim().unwrap_or(0), table.digest()),
            None => base,
        }
    }

    pub fn vectorize(&self, pair: &CodeCommentPair) -> Result<FeatureVector> {
        match self.embeddings {
            Some(table) => self.featurizer.featurize_with_embeddings(table, pair),
            None => Ok(self.featurizer.featurize(pair)),
        }
    }

    /// Vectorizes every pair in order.
    pub fn vectorize_corpus(&self, corpus: &Corpus) -> Result<Vec<FeatureVector>> {
        corpus.pairs().par_iter().map(|p| self.vectorize(p)).collect()
    }
}

/// Externally computed dense vectors keyed by pair id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: Option<usize>,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Short content digest over ids and exact vector bits.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (id, vector) in &self.vectors {
            hasher.update(id.as_bytes());
            hasher.update([0u8]);
            for v in vector {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(&hasher.finalize()[..8])
    }

    pub fn lookup(&self, id: &str) -> Result<&[f64]> {
        if self.dim.is_none() {
            return Err(Error::Lookup("embedding table is empty".into()));
        }
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("no embedding for pair {id:?}")))
    }

    pub fn insert(&mut self, id: String, vector: Vec<f64>) -> Result<()> {
        match self.dim {
            Some(dim) if dim != vector.len() => {
                return Err(Error::Format(format!(
                    "embedding for {id:?} has width {}, expected {dim}",
                    vector.len()
                )))
            }
            None if vector.is_empty() => {
                return Err(Error::Format(format!("embedding for {id:?} is empty")))
            }
            _ => {}
        }
        if self.vectors.contains_key(&id) {
            return Err(Error::Integrity(format!("duplicate embedding id {id:?}")));
        }
        self.dim = Some(vector.len());
        self.vectors.insert(id, vector);
        Ok(())
    }
}

/// Parses `<id> <v1> ... <vk>` lines. Blank lines are skipped.
pub fn parse_embeddings<R: Read>(reader: R) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::default();
    for (index, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let values = fields
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    line: line_no,
                    message: format!("invalid decimal {f:?}"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        table.insert(id.to_string(), values).map_err(|e| match e {
            Error::Format(message) => Error::Format(format!("line {line_no}: {message}")),
            other => other,
        })?;
    }
    Ok(table)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(file)
}
