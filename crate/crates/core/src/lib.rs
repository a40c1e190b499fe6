//! Zero-shot topic classification of dataset column headers against a
//! controlled vocabulary, and the evaluation of those classifications.
//!
//! The pipeline runs in two halves. Classification builds a prompt per
//! dataset ([`promptgen`]), sends it to a backend ([`backend`]) and appends
//! one [`backend::RunRecord`] per execution to a run store. Evaluation reads
//! the store only and never calls a backend.

pub mod backend;
pub mod corpus;
pub mod metrics;
pub mod outcome;
pub mod promptgen;
pub mod stats;
pub mod vocab;

pub use backend::{Backend, BackendId, CellKey, RunRecord};
pub use corpus::{Corpus, Dataset, HumanLabels};
pub use promptgen::{build_prompt, PromptText};
pub use vocab::{normalize_label, parse_vocabulary, Topic, Vocabulary};
