//! Five-way outcome taxonomy of assignments and its tabulation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::backend::{BackendId, RunRecord};
use crate::corpus::{Corpus, Dataset};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutcomeLabel {
    Specific,
    General,
    Other,
    Unassigned,
    Hallucination,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 5] = [
        OutcomeLabel::Specific,
        OutcomeLabel::General,
        OutcomeLabel::Other,
        OutcomeLabel::Unassigned,
        OutcomeLabel::Hallucination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeLabel::Specific => "specific",
            OutcomeLabel::General => "general",
            OutcomeLabel::Other => "other",
            OutcomeLabel::Unassigned => "unassigned",
            OutcomeLabel::Hallucination => "hallucination",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Labels one assignment. The abstention topic is recognised only after
/// exact vocabulary resolution, so a paraphrase of it is a hallucination.
pub fn label_assignment(vocab: &Vocabulary, assignment: Option<&str>) -> OutcomeLabel {
    let Some(text) = assignment.filter(|t| !t.trim().is_empty()) else {
        return OutcomeLabel::Unassigned;
    };
    match vocab.resolve(text) {
        None => OutcomeLabel::Hallucination,
        Some(topic) if vocab.is_abstention(topic) => OutcomeLabel::Other,
        Some(topic) if topic.is_general() => OutcomeLabel::General,
        Some(_) => OutcomeLabel::Specific,
    }
}

/// Counts per label, in [`OutcomeLabel::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LabelCounts(pub [usize; 5]);

impl LabelCounts {
    pub fn get(&self, label: OutcomeLabel) -> usize {
        self.0[label.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    fn add(&mut self, label: OutcomeLabel) {
        self.0[label.index()] += 1;
    }

    fn merge(&mut self, other: &LabelCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }

    /// Label shares of the total; all zero for an empty count.
    pub fn proportions(&self) -> [f64; 5] {
        let total = self.total();
        if total == 0 {
            return [0.0; 5];
        }
        self.0.map(|c| c as f64 / total as f64)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OutcomeError {
    #[error("run {run} of `{dataset}` has {got} assignments, dataset has {expected} headers")]
    LengthMismatch {
        dataset: String,
        run: u32,
        got: usize,
        expected: usize,
    },
    #[error("run references unknown dataset `{0}`")]
    UnknownDataset(String),
}

pub fn tally_run(
    vocab: &Vocabulary,
    dataset: &Dataset,
    run: &RunRecord,
) -> Result<LabelCounts, OutcomeError> {
    if run.assignments.len() != dataset.headers.len() {
        return Err(OutcomeError::LengthMismatch {
            dataset: dataset.id.clone(),
            run: run.run_index,
            got: run.assignments.len(),
            expected: dataset.headers.len(),
        });
    }
    let mut counts = LabelCounts::default();
    for assignment in &run.assignments {
        counts.add(label_assignment(vocab, assignment.as_deref()));
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TallyKey {
    pub backend: BackendId,
    pub dataset_id: String,
    pub with_context: bool,
    pub run_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProportionKey {
    pub backend: BackendId,
    pub with_context: bool,
    pub run_index: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutcomeTally {
    pub per_run: BTreeMap<TallyKey, LabelCounts>,
    /// Per backend, context and run index: label shares pooled across datasets.
    pub proportions: BTreeMap<ProportionKey, [f64; 5]>,
}

impl OutcomeTally {
    pub fn is_empty(&self) -> bool {
        self.per_run.is_empty()
    }

    pub fn backends(&self) -> BTreeSet<&BackendId> {
        self.proportions.keys().map(|k| &k.backend).collect()
    }

    /// Per-run shares of one label for one backend and context.
    pub fn series(&self, backend: &BackendId, with_context: bool, label: OutcomeLabel) -> Vec<f64> {
        self.proportions
            .iter()
            .filter(|(k, _)| &k.backend == backend && k.with_context == with_context)
            .map(|(_, p)| p[label.index()])
            .collect()
    }
}

pub fn tally_campaign(
    vocab: &Vocabulary,
    corpus: &Corpus,
    runs: &[RunRecord],
) -> Result<OutcomeTally, OutcomeError> {
    let mut tally = OutcomeTally::default();
    let mut pooled: BTreeMap<ProportionKey, LabelCounts> = BTreeMap::new();
    for run in runs {
        let dataset = corpus
            .get(&run.dataset_id)
            .ok_or_else(|| OutcomeError::UnknownDataset(run.dataset_id.clone()))?;
        let counts = tally_run(vocab, dataset, run)?;
        tally.per_run.insert(
            TallyKey {
                backend: run.backend.clone(),
                dataset_id: run.dataset_id.clone(),
                with_context: run.with_context,
                run_index: run.run_index,
            },
            counts,
        );
        pooled
            .entry(ProportionKey {
                backend: run.backend.clone(),
                with_context: run.with_context,
                run_index: run.run_index,
            })
            .or_default()
            .merge(&counts);
    }
    tally.proportions = pooled
        .into_iter()
        .map(|(k, c)| (k, c.proportions()))
        .collect();
    Ok(tally)
}
