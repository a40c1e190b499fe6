//! Campaign runner: classify datasets with LLM backends, then evaluate the
//! stored runs into a directory of CSV tables and box-plot figures.

pub mod classify;
pub mod config;
pub mod evaluate;
pub mod plots;
pub mod validate;

use std::fs;
use std::path::Path;

use coltopic::corpus::{load_corpus, load_human_labels, Corpus, HumanLabels};
use coltopic::vocab::{parse_vocabulary, Vocabulary};
use thiserror::Error;

use crate::config::CampaignConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input files. Exit code 2.
    #[error("{0}")]
    Invalid(String),
    /// Some cells could not be completed. Exit code 1.
    #[error("{0}")]
    Partial(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Partial(_) => 1,
            CliError::Invalid(_) => 2,
        }
    }
}

/// Corpus and vocabulary, loaded once per command.
pub struct Inputs {
    pub corpus: Corpus,
    pub vocab: Vocabulary,
}

impl Inputs {
    pub fn load(config: &CampaignConfig) -> Result<Self, CliError> {
        let corpus = load_corpus(&config.corpus).map_err(|e| CliError::invalid(e.to_string()))?;
        let text = read(&config.vocabulary)?;
        let vocab = parse_vocabulary(&text, config.abstention_label.as_deref())
            .map_err(|e| CliError::invalid(format!("{}: {e}", config.vocabulary.display())))?;
        Ok(Self { corpus, vocab })
    }

    /// Lenient load: unresolved rows are kept aside for reporting.
    pub fn human_labels(&self, path: &Path) -> Result<HumanLabels, CliError> {
        let text = read(path)?;
        load_human_labels(&text, &self.vocab, false)
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn context_name(with_context: bool) -> &'static str {
    if with_context {
        "with-context"
    } else {
        "no-context"
    }
}
