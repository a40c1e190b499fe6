//! Alignment-based consistency scores and human-computer agreement.
//!
//! Runs are turned into token sequences (one token per header) and compared
//! with Needleman-Wunsch global alignment. Agreement with human annotators is
//! the per-header sum over topics of the product of the human and machine
//! label frequencies.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::backend::{BackendId, RunRecord};
use crate::corpus::{Corpus, HumanLabels};
use crate::vocab::{normalize_label, Vocabulary};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid scoring scheme: {0}")]
    Scheme(String),
    #[error("cannot normalize an alignment of two empty sequences")]
    BothEmpty,
    #[error("internal consistency needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("alignment needs at least one run on each side")]
    EmptyRunSet,
    #[error("`{dataset}`/`{header}` has human labels but no machine runs")]
    NoMachineRuns { dataset: String, header: String },
    #[error("run references unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("run {run} of `{dataset}` does not match the dataset's header count")]
    LengthMismatch { dataset: String, run: u32 },
}

/// One alignment symbol.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    /// Normalized label of a vocabulary topic.
    Topic(String),
    Unassigned,
    /// Normalized text that resolved to no topic.
    Hallucinated(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassificationSequence(pub Vec<Token>);

impl ClassificationSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn token_for(vocab: &Vocabulary, assignment: Option<&str>) -> Token {
    match assignment.filter(|t| !t.trim().is_empty()) {
        None => Token::Unassigned,
        Some(text) => match vocab.resolve(text) {
            Some(topic) => Token::Topic(normalize_label(&topic.label)),
            None => Token::Hallucinated(normalize_label(text)),
        },
    }
}

pub fn to_sequence(vocab: &Vocabulary, run: &RunRecord) -> ClassificationSequence {
    ClassificationSequence(
        run.assignments
            .iter()
            .map(|a| token_for(vocab, a.as_deref()))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringScheme {
    pub match_score: f64,
    pub mismatch: f64,
    pub gap: f64,
}

impl Default for ScoringScheme {
    fn default() -> Self {
        Self {
            match_score: 1.0,
            mismatch: 0.0,
            gap: -0.5,
        }
    }
}

impl ScoringScheme {
    pub fn new(match_score: f64, mismatch: f64, gap: f64) -> Result<Self, MetricsError> {
        let s = Self {
            match_score,
            mismatch,
            gap,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if ![self.match_score, self.mismatch, self.gap]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(MetricsError::Scheme("scores must be finite".into()));
        }
        if self.match_score <= self.mismatch {
            return Err(MetricsError::Scheme("match must exceed mismatch".into()));
        }
        if self.gap >= self.match_score {
            return Err(MetricsError::Scheme("gap must be below match".into()));
        }
        if self.match_score <= 0.0 {
            return Err(MetricsError::Scheme("match must be positive".into()));
        }
        Ok(())
    }
}

/// Best global alignment score of `a` against `b` (Needleman-Wunsch, score only).
pub fn nw_align<T: PartialEq>(a: &[T], b: &[T], s: &ScoringScheme) -> f64 {
    let mut prev: Vec<f64> = (0..=b.len()).map(|j| j as f64 * s.gap).collect();
    let mut curr = vec![0.0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        curr[0] = (i + 1) as f64 * s.gap;
        for (j, y) in b.iter().enumerate() {
            let diag = prev[j] + if x == y { s.match_score } else { s.mismatch };
            let up = prev[j + 1] + s.gap;
            let left = curr[j] + s.gap;
            curr[j + 1] = diag.max(up).max(left);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Alignment score scaled so that identical sequences score exactly 1.
pub fn normalized_alignment<T: PartialEq>(
    a: &[T],
    b: &[T],
    s: &ScoringScheme,
) -> Result<f64, MetricsError> {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return Err(MetricsError::BothEmpty);
    }
    Ok(nw_align(a, b, s) / (s.match_score * longest as f64))
}

/// Normalized alignment of every unordered pair of runs, in (i, j) order.
pub fn pairwise_consistency(
    runs: &[ClassificationSequence],
    s: &ScoringScheme,
) -> Result<Vec<f64>, MetricsError> {
    let mut scores = Vec::with_capacity(runs.len() * runs.len().saturating_sub(1) / 2);
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            scores.push(normalized_alignment(&a.0, &b.0, s)?);
        }
    }
    Ok(scores)
}

/// Mean normalized alignment over all unordered pairs of runs.
pub fn internal_consistency(
    runs: &[ClassificationSequence],
    s: &ScoringScheme,
) -> Result<f64, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::TooFewRuns(runs.len()));
    }
    let scores = pairwise_consistency(runs, s)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Normalized alignment of every run of `runs_a` against every run of `runs_b`.
pub fn pairwise_alignment(
    runs_a: &[ClassificationSequence],
    runs_b: &[ClassificationSequence],
    s: &ScoringScheme,
) -> Result<Vec<f64>, MetricsError> {
    let mut scores = Vec::with_capacity(runs_a.len() * runs_b.len());
    for a in runs_a {
        for b in runs_b {
            scores.push(normalized_alignment(&a.0, &b.0, s)?);
        }
    }
    Ok(scores)
}

/// Mean normalized alignment over the cross product of two run sets.
pub fn inter_model_alignment(
    runs_a: &[ClassificationSequence],
    runs_b: &[ClassificationSequence],
    s: &ScoringScheme,
) -> Result<f64, MetricsError> {
    if runs_a.is_empty() || runs_b.is_empty() {
        return Err(MetricsError::EmptyRunSet);
    }
    let scores = pairwise_alignment(runs_a, runs_b, s)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

type SequenceGroups = BTreeMap<(BackendId, String, bool), Vec<ClassificationSequence>>;

/// Groups run sequences by (backend, dataset, context), in run order.
pub fn group_sequences(vocab: &Vocabulary, runs: &[RunRecord]) -> SequenceGroups {
    let mut groups: SequenceGroups = BTreeMap::new();
    let mut sorted: Vec<&RunRecord> = runs.iter().collect();
    sorted.sort_by_key(|r| r.key());
    for run in sorted {
        groups
            .entry((
                run.backend.clone(),
                run.dataset_id.clone(),
                run.with_context,
            ))
            .or_default()
            .push(to_sequence(vocab, run));
    }
    groups
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsistencyTable {
    pub cells: BTreeMap<(BackendId, String, bool), f64>,
    /// Unweighted mean over datasets, per backend and context.
    pub overall: BTreeMap<(BackendId, bool), f64>,
    /// Cells left out for having fewer than two runs.
    pub skipped: Vec<(BackendId, String, bool)>,
}

pub fn consistency_table(
    vocab: &Vocabulary,
    runs: &[RunRecord],
    s: &ScoringScheme,
) -> Result<ConsistencyTable, MetricsError> {
    let mut table = ConsistencyTable::default();
    for (key, seqs) in group_sequences(vocab, runs) {
        if seqs.len() < 2 {
            table.skipped.push(key);
            continue;
        }
        table.cells.insert(key, internal_consistency(&seqs, s)?);
    }
    let mut by_backend: BTreeMap<(BackendId, bool), Vec<f64>> = BTreeMap::new();
    for ((backend, _, ctx), v) in &table.cells {
        by_backend
            .entry((backend.clone(), *ctx))
            .or_default()
            .push(*v);
    }
    table.overall = by_backend
        .into_iter()
        .filter_map(|(k, v)| mean(v).map(|m| (k, m)))
        .collect();
    Ok(table)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignmentTable {
    /// (backend A, backend B, dataset, context) with A < B.
    pub cells: BTreeMap<(BackendId, BackendId, String, bool), f64>,
    pub overall: BTreeMap<(BackendId, BackendId, bool), f64>,
}

pub fn alignment_table(
    vocab: &Vocabulary,
    runs: &[RunRecord],
    s: &ScoringScheme,
) -> Result<AlignmentTable, MetricsError> {
    let groups = group_sequences(vocab, runs);
    let backends: BTreeSet<&BackendId> = groups.keys().map(|(b, _, _)| b).collect();
    let backends: Vec<&BackendId> = backends.into_iter().collect();
    let mut table = AlignmentTable::default();
    for (i, a) in backends.iter().enumerate() {
        for b in &backends[i + 1..] {
            for ((backend, dataset, ctx), seqs_a) in &groups {
                if backend != *a {
                    continue;
                }
                let Some(seqs_b) = groups.get(&((*b).clone(), dataset.clone(), *ctx)) else {
                    continue;
                };
                let score = inter_model_alignment(seqs_a, seqs_b, s)?;
                table
                    .cells
                    .insert(((*a).clone(), (*b).clone(), dataset.clone(), *ctx), score);
            }
        }
    }
    let mut pooled: BTreeMap<(BackendId, BackendId, bool), Vec<f64>> = BTreeMap::new();
    for ((a, b, _, ctx), v) in &table.cells {
        pooled
            .entry((a.clone(), b.clone(), *ctx))
            .or_default()
            .push(*v);
    }
    table.overall = pooled
        .into_iter()
        .filter_map(|(k, v)| mean(v).map(|m| (k, m)))
        .collect();
    Ok(table)
}

// ---------------------------------------------------------------------------
// Human-computer agreement

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatchMode {
    /// Topics compared as given.
    Exact,
    /// Topics first mapped to their general topic.
    Close,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Exact => "exact",
            MatchMode::Close => "close",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Unweighted mean over every labelled header.
    #[default]
    PerHeader,
    /// Mean of per-dataset header means.
    PerDataset,
}

/// Empirical label distribution of one header, kept as integer counts so that
/// agreement sums are exact up to one final division.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Distribution {
    counts: BTreeMap<Token, u64>,
    total: u64,
}

impl Distribution {
    pub fn add(&mut self, token: Token) {
        *self.counts.entry(token).or_default() += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn probability(&self, token: &Token) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts.get(token).copied().unwrap_or(0) as f64 / self.total as f64
    }

    pub fn support(&self) -> impl Iterator<Item = &Token> {
        self.counts.keys()
    }
}

impl FromIterator<Token> for Distribution {
    fn from_iter<I: IntoIterator<Item = Token>>(iter: I) -> Self {
        let mut d = Distribution::default();
        for t in iter {
            d.add(t);
        }
        d
    }
}

/// Per (dataset, header) label distributions for one side of the comparison.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgreementInputs {
    pub per_header: BTreeMap<(String, String), Distribution>,
}

fn apply_mode(vocab: &Vocabulary, token: Token, mode: MatchMode) -> Token {
    match (mode, token) {
        (MatchMode::Close, Token::Topic(label)) => {
            // Topic tokens always come from resolved labels.
            let topic = vocab.resolve(&label).expect("topic token resolves");
            let general = vocab
                .generalize(topic)
                .expect("resolved topic is in vocabulary");
            Token::Topic(normalize_label(&general.label))
        }
        (_, token) => token,
    }
}

/// Human label distributions. Labels that do not resolve are skipped.
pub fn human_inputs(vocab: &Vocabulary, labels: &HumanLabels, mode: MatchMode) -> AgreementInputs {
    let mut inputs = AgreementInputs::default();
    for (key, topic) in labels.entries() {
        let token = token_for(vocab, Some(topic));
        if !matches!(token, Token::Topic(_)) {
            continue;
        }
        inputs
            .per_header
            .entry((key.dataset.clone(), key.header.clone()))
            .or_default()
            .add(apply_mode(vocab, token, mode));
    }
    inputs
}

/// Machine label distributions over every run in `runs`. Callers select the
/// runs of one backend and one context setting.
pub fn machine_inputs(
    vocab: &Vocabulary,
    corpus: &Corpus,
    runs: &[&RunRecord],
    mode: MatchMode,
) -> Result<AgreementInputs, MetricsError> {
    let mut inputs = AgreementInputs::default();
    for run in runs {
        let dataset = corpus
            .get(&run.dataset_id)
            .ok_or_else(|| MetricsError::UnknownDataset(run.dataset_id.clone()))?;
        if run.assignments.len() != dataset.headers.len() {
            return Err(MetricsError::LengthMismatch {
                dataset: run.dataset_id.clone(),
                run: run.run_index,
            });
        }
        for (header, assignment) in dataset.headers.iter().zip(&run.assignments) {
            let token = apply_mode(vocab, token_for(vocab, assignment.as_deref()), mode);
            inputs
                .per_header
                .entry((dataset.id.clone(), header.clone()))
                .or_default()
                .add(token);
        }
    }
    Ok(inputs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcaResult {
    pub per_header: BTreeMap<(String, String), f64>,
    /// `None` when no header carries human labels.
    pub aggregate: Option<f64>,
}

/// Sum over topics of P(human = t) * P(machine = t) for one header.
/// Unassigned and hallucinated machine tokens never match a topic.
pub fn header_agreement(human: &Distribution, machine: &Distribution) -> f64 {
    if human.total == 0 || machine.total == 0 {
        return 0.0;
    }
    let joint: u64 = human
        .counts
        .iter()
        .filter(|(t, _)| matches!(t, Token::Topic(_)))
        .map(|(t, &c)| c * machine.counts.get(t).copied().unwrap_or(0))
        .sum();
    joint as f64 / (human.total as f64 * machine.total as f64)
}

/// Agreement for every human-labelled header plus the corpus aggregate.
pub fn hca(
    humans: &AgreementInputs,
    machine: &AgreementInputs,
    aggregation: Aggregation,
) -> Result<HcaResult, MetricsError> {
    let mut per_header = BTreeMap::new();
    for (key, human) in &humans.per_header {
        let machine_dist = machine
            .per_header
            .get(key)
            .filter(|d| d.total > 0)
            .ok_or_else(|| MetricsError::NoMachineRuns {
                dataset: key.0.clone(),
                header: key.1.clone(),
            })?;
        per_header.insert(key.clone(), header_agreement(human, machine_dist));
    }
    let aggregate = match aggregation {
        Aggregation::PerHeader => mean(per_header.values().copied()),
        Aggregation::PerDataset => {
            let mut by_dataset: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for ((dataset, _), v) in &per_header {
                by_dataset.entry(dataset).or_default().push(*v);
            }
            mean(by_dataset.into_values().filter_map(mean))
        }
    };
    Ok(HcaResult {
        per_header,
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ParseDiagnostics, RequestMeta};
    use crate::vocab::parse_vocabulary;

    fn seq(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    fn tokens(labels: &[&str]) -> ClassificationSequence {
        ClassificationSequence(labels.iter().map(|l| Token::Topic(l.to_string())).collect())
    }

    #[test]
    fn alignment_examples() {
        let s = ScoringScheme::default();
        assert_eq!(nw_align(&seq("ABC"), &seq("ABC"), &s), 3.0);
        assert_eq!(nw_align(&seq("AB"), &seq("AC"), &s), 1.0);
        assert_eq!(nw_align(&seq("A"), &seq(""), &s), -0.5);
        assert_eq!(nw_align(&seq(""), &seq(""), &s), 0.0);
        assert_eq!(nw_align(&seq("ACGT"), &seq("AGT"), &s), 2.5);
    }

    #[test]
    fn normalized_examples() {
        let s = ScoringScheme::default();
        let long: Vec<u8> = (0..14).collect();
        assert_eq!(normalized_alignment(&long, &long, &s), Ok(1.0));
        assert_eq!(normalized_alignment(&seq("AB"), &seq("AC"), &s), Ok(0.5));
        assert_eq!(normalized_alignment(&seq("AB"), &seq("CD"), &s), Ok(0.0));
        assert_eq!(
            normalized_alignment(&seq(""), &seq(""), &s),
            Err(MetricsError::BothEmpty)
        );
        assert_eq!(normalized_alignment(&seq("AB"), &seq(""), &s), Ok(-0.5));
    }

    #[test]
    fn scheme_validation() {
        assert!(ScoringScheme::new(1.0, 1.0, -1.0).is_err());
        assert!(ScoringScheme::new(1.0, 0.0, 1.0).is_err());
        assert!(ScoringScheme::new(2.0, -1.0, -1.0).is_ok());
        assert!(ScoringScheme::new(f64::NAN, 0.0, -1.0).is_err());
    }

    #[test]
    fn consistency_examples() {
        let s = ScoringScheme::default();
        let same = vec![tokens(&["a", "b"]); 10];
        assert_eq!(internal_consistency(&same, &s), Ok(1.0));
        assert_eq!(
            internal_consistency(&[tokens(&["a", "b"]), tokens(&["a", "c"])], &s),
            Ok(0.5)
        );
        assert_eq!(
            internal_consistency(&same[..1], &s),
            Err(MetricsError::TooFewRuns(1))
        );
    }

    #[test]
    fn inter_model_examples() {
        let s = ScoringScheme::default();
        let a = vec![tokens(&["a", "b"]); 3];
        assert_eq!(inter_model_alignment(&a, &a, &s), Ok(1.0));
        let b = vec![tokens(&["c", "d"]); 2];
        assert_eq!(inter_model_alignment(&a, &b, &s), Ok(0.0));
        assert_eq!(
            inter_model_alignment(&a, &[], &s),
            Err(MetricsError::EmptyRunSet)
        );
    }

    fn vocab() -> Vocabulary {
        parse_vocabulary(
            "Topic Label,Topic Description,Parent Topic\n\
             Education,,\nHigher and Further Education,,Education\nHealth,,\nOther,,\n",
            None,
        )
        .unwrap()
    }

    #[test]
    fn sequence_tokens() {
        let v = vocab();
        let run = RunRecord {
            backend: BackendId::new("m").unwrap(),
            dataset_id: "d".into(),
            run_index: 1,
            with_context: false,
            raw_response: String::new(),
            assignments: vec![Some("EDUCATION".into()), None, Some(" Bananas ".into())],
            error: None,
            diagnostics: ParseDiagnostics::default(),
            meta: RequestMeta::default(),
        };
        assert_eq!(
            to_sequence(&v, &run).0,
            vec![
                Token::Topic("education".into()),
                Token::Unassigned,
                Token::Hallucinated("bananas".into())
            ]
        );
    }

    fn dist(tokens: &[&str]) -> Distribution {
        tokens.iter().map(|t| Token::Topic(t.to_string())).collect()
    }

    #[test]
    fn agreement_values() {
        let humans = dist(&["a", "a", "b"]);
        assert_eq!(header_agreement(&dist(&["a"; 3]), &dist(&["a"; 10])), 1.0);
        let v = header_agreement(&humans, &dist(&["a"; 10]));
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        let half: Vec<&str> = ["a"; 5].into_iter().chain(["b"; 5]).collect();
        assert_eq!(header_agreement(&humans, &dist(&half)), 0.5);
        assert_eq!(header_agreement(&dist(&["a"]), &dist(&["b"])), 0.0);

        let mut machine = Distribution::default();
        machine.add(Token::Unassigned);
        machine.add(Token::Hallucinated("a".into()));
        assert_eq!(header_agreement(&dist(&["a"]), &machine), 0.0);
    }

    #[test]
    fn close_mode_merges_under_general_topic() {
        let v = vocab();
        let specific = Token::Topic("higher and further education".into());
        assert_eq!(
            apply_mode(&v, specific.clone(), MatchMode::Close),
            Token::Topic("education".into())
        );
        assert_eq!(apply_mode(&v, specific.clone(), MatchMode::Exact), specific);
        assert_eq!(
            apply_mode(&v, Token::Topic("other".into()), MatchMode::Close),
            Token::Topic("other".into())
        );
    }

    #[test]
    fn hca_requires_machine_runs() {
        let mut humans = AgreementInputs::default();
        humans
            .per_header
            .insert(("d".into(), "h".into()), dist(&["a"]));
        let machine = AgreementInputs::default();
        assert!(matches!(
            hca(&humans, &machine, Aggregation::PerHeader),
            Err(MetricsError::NoMachineRuns { .. })
        ));
    }

    #[test]
    fn hca_aggregation_modes() {
        let mut humans = AgreementInputs::default();
        let mut machine = AgreementInputs::default();
        for (ds, h, agree) in [("d1", "x", true), ("d1", "y", true), ("d2", "z", false)] {
            humans
                .per_header
                .insert((ds.into(), h.into()), dist(&["a"]));
            machine.per_header.insert(
                (ds.into(), h.into()),
                dist(&[if agree { "a" } else { "b" }]),
            );
        }
        let per_header = hca(&humans, &machine, Aggregation::PerHeader).unwrap();
        assert!((per_header.aggregate.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let per_dataset = hca(&humans, &machine, Aggregation::PerDataset).unwrap();
        assert_eq!(per_dataset.aggregate, Some(0.5));
        let empty = hca(
            &AgreementInputs::default(),
            &machine,
            Aggregation::PerHeader,
        )
        .unwrap();
        assert_eq!(empty.aggregate, None);
    }
}
