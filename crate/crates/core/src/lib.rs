//! Classify C code comments as "Useful" or "Not Useful".
//!
//! The crate covers the whole pipeline: a labeled corpus model with
//! persistence, splitting and merging ([`corpus`]); a comment-aware C lexer
//! that mines (comment, code) pairs from source trees ([`extractor`]); a
//! hashed n-gram TF-IDF featurizer ([`features`]); two max-margin
//! classifiers ([`svm`]) and a multilayer perceptron ([`ann`]); metrics and
//! comparison tables ([`eval`]); an OpenAI-compatible augmentation client
//! with a scripted mock server ([`augment`]); and the seed-vs-integrated
//! experiment driver ([`experiment`]).

pub mod ann;
pub mod artifact;
pub mod augment;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod extractor;
pub mod features;
pub mod svm;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
