//! Dataset descriptors and human annotation files.
//!
//! Only column headers (and an optional publisher description) are ever
//! ingested; row-level data is out of reach by construction.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed dataset descriptor: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dataset descriptor has an empty id")]
    MissingId,
    #[error("dataset `{0}` has no column headers")]
    NoHeaders(String),
    #[error("dataset `{id}`: header {position} is empty")]
    EmptyHeader { id: String, position: usize },
    #[error("dataset `{id}`: duplicate header `{header}`")]
    DuplicateHeader { id: String, header: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{} invalid descriptor(s): {}", .0.len(), describe_failures(.0))]
    InvalidFiles(Vec<(PathBuf, String)>),
    #[error("dataset id `{id}` appears in both {first} and {second}")]
    DuplicateDataset {
        id: String,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("dataset id `{0}` appears more than once")]
    DuplicateId(String),
    #[error("malformed human-label CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("human-label CSV must have columns `participant,dataset,header,topic`, found `{0}`")]
    BadLabelHeader(String),
    #[error("line {line}: participant `{participant}` labelled `{dataset}`/`{header}` twice")]
    DuplicateLabel {
        line: usize,
        participant: String,
        dataset: String,
        header: String,
    },
    #[error("line {line}: empty {field}")]
    EmptyLabelField { line: usize, field: &'static str },
    #[error("{} label(s) do not resolve against the vocabulary: {}", .0.len(), describe_unresolved(.0))]
    UnresolvedTopics(Vec<UnresolvedLabel>),
}

fn describe_failures(failures: &[(PathBuf, String)]) -> String {
    failures
        .iter()
        .map(|(p, cause)| format!("{}: {cause}", p.display()))
        .collect::<Vec<_>>()
        .join("; ")
}

fn describe_unresolved(rows: &[UnresolvedLabel]) -> String {
    rows.iter()
        .map(|r| format!("line {} `{}`", r.line, r.topic))
        .collect::<Vec<_>>()
        .join(", ")
}

/// A dataset as seen by the classifier: identity, optional context, headers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub headers: Vec<String>,
}

impl Dataset {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.id.trim().is_empty() {
            return Err(CorpusError::MissingId);
        }
        if self.headers.is_empty() {
            return Err(CorpusError::NoHeaders(self.id.clone()));
        }
        let mut seen = HashSet::with_capacity(self.headers.len());
        for (i, header) in self.headers.iter().enumerate() {
            if header.trim().is_empty() {
                return Err(CorpusError::EmptyHeader {
                    id: self.id.clone(),
                    position: i + 1,
                });
            }
            if !seen.insert(header.as_str()) {
                return Err(CorpusError::DuplicateHeader {
                    id: self.id.clone(),
                    header: header.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn header_index(&self, header: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == header)
    }
}

/// Parses and validates a JSON dataset descriptor.
pub fn load_dataset(document: &str) -> Result<Dataset, CorpusError> {
    let dataset: Dataset = serde_json::from_str(document)?;
    dataset.validate()?;
    Ok(dataset)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    datasets: Vec<Dataset>,
}

impl Corpus {
    /// Sorts by id and rejects duplicate ids.
    pub fn new(mut datasets: Vec<Dataset>) -> Result<Self, CorpusError> {
        datasets.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in datasets.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(CorpusError::DuplicateId(pair[0].id.clone()));
            }
        }
        Ok(Self { datasets })
    }

    pub fn datasets(&self) -> &[Dataset] {
        &self.datasets
    }

    pub fn get(&self, id: &str) -> Option<&Dataset> {
        self.datasets
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.datasets[i])
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }
}

/// Loads every `*.json` descriptor in `directory`, sorted by dataset id.
pub fn load_corpus(directory: &Path) -> Result<Corpus, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: directory.to_path_buf(),
        source,
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(directory).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();

    let mut failures = Vec::new();
    let mut by_id: BTreeMap<String, (PathBuf, Dataset)> = BTreeMap::new();
    for path in paths {
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|text| load_dataset(&text).map_err(|e| e.to_string()));
        match parsed {
            Ok(dataset) => {
                if let Some((first, _)) = by_id.get(&dataset.id) {
                    return Err(CorpusError::DuplicateDataset {
                        id: dataset.id,
                        first: first.clone(),
                        second: path,
                    });
                }
                by_id.insert(dataset.id.clone(), (path, dataset));
            }
            Err(cause) => failures.push((path, cause)),
        }
    }
    if !failures.is_empty() {
        return Err(CorpusError::InvalidFiles(failures));
    }
    Ok(Corpus {
        datasets: by_id.into_values().map(|(_, d)| d).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelKey {
    pub participant: String,
    pub dataset: String,
    pub header: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnresolvedLabel {
    pub line: usize,
    pub key: LabelKey,
    pub topic: String,
}

/// One topic label per participant per header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HumanLabels {
    entries: BTreeMap<LabelKey, String>,
    /// Rows whose topic did not resolve (lenient mode only).
    pub unresolved: Vec<UnresolvedLabel>,
}

impl HumanLabels {
    pub fn entries(&self) -> &BTreeMap<LabelKey, String> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn participants(&self) -> BTreeSet<&str> {
        self.entries
            .keys()
            .map(|k| k.participant.as_str())
            .collect()
    }

    /// Raw topic texts given for one header, in participant order.
    pub fn labels_for(&self, dataset: &str, header: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(k, _)| k.dataset == dataset && k.header == header)
            .map(|(_, t)| t.as_str())
            .collect()
    }

    /// Distinct (dataset, header) pairs that carry at least one label.
    pub fn labelled_headers(&self) -> BTreeSet<(&str, &str)> {
        self.entries
            .keys()
            .map(|k| (k.dataset.as_str(), k.header.as_str()))
            .collect()
    }

    /// Labels whose dataset or header is not in `corpus`.
    pub fn dangling<'a>(&'a self, corpus: &Corpus) -> Vec<&'a LabelKey> {
        self.entries
            .keys()
            .filter(|k| {
                corpus
                    .get(&k.dataset)
                    .and_then(|d| d.header_index(&k.header))
                    .is_none()
            })
            .collect()
    }
}

/// Parses a `participant,dataset,header,topic` CSV.
///
/// In strict mode every topic must resolve against `vocab`; otherwise the
/// offending rows are kept aside in [`HumanLabels::unresolved`].
pub fn load_human_labels(
    csv_text: &str,
    vocab: &Vocabulary,
    strict: bool,
) -> Result<HumanLabels, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_text.as_bytes());
    let header = reader.headers()?.clone();
    let columns: Vec<&str> = header.iter().map(str::trim).collect();
    if columns != ["participant", "dataset", "header", "topic"] {
        return Err(CorpusError::BadLabelHeader(columns.join(",")));
    }

    let mut labels = HumanLabels::default();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // line 1 is the header row
        let line = i + 2;
        let field = |idx: usize, name: &'static str| -> Result<String, CorpusError> {
            let value = record.get(idx).unwrap_or("");
            if value.trim().is_empty() {
                return Err(CorpusError::EmptyLabelField { line, field: name });
            }
            Ok(value.to_string())
        };
        let key = LabelKey {
            participant: field(0, "participant")?.trim().to_string(),
            dataset: field(1, "dataset")?.trim().to_string(),
            header: field(2, "header")?,
        };
        let topic = field(3, "topic")?;

        if labels.entries.contains_key(&key) || labels.unresolved.iter().any(|u| u.key == key) {
            return Err(CorpusError::DuplicateLabel {
                line,
                participant: key.participant,
                dataset: key.dataset,
                header: key.header,
            });
        }
        if vocab.resolve(&topic).is_none() {
            labels.unresolved.push(UnresolvedLabel {
                line,
                key: key.clone(),
                topic,
            });
            continue;
        }
        labels.entries.insert(key, topic);
    }
    if strict && !labels.unresolved.is_empty() {
        return Err(CorpusError::UnresolvedTopics(labels.unresolved));
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::parse_vocabulary;

    fn vocab() -> Vocabulary {
        parse_vocabulary("Topic Label,Topic Description\nA,\nB,\nOther,\n", None).unwrap()
    }

    #[test]
    fn loads_descriptor() {
        let d = load_dataset(
            r#"{"id":"84952eng","title":"Livestock","headers":["Periods","Cattle","Pigs"]}"#,
        )
        .unwrap();
        assert_eq!(d.headers.len(), 3);
        assert_eq!(d.description, None);
        assert_eq!(d.headers[1], "Cattle");
    }

    #[test]
    fn descriptor_errors() {
        assert!(matches!(
            load_dataset(r#"{"id":"x","headers":["X","X"]}"#),
            Err(CorpusError::DuplicateHeader { .. })
        ));
        assert!(matches!(
            load_dataset(r#"{"id":"x","headers":[]}"#),
            Err(CorpusError::NoHeaders(_))
        ));
        assert!(matches!(
            load_dataset(r#"{"title":"t","headers":["a"]}"#),
            Err(CorpusError::Json(_))
        ));
        assert!(matches!(
            load_dataset(r#"{"id":"  ","headers":["a"]}"#),
            Err(CorpusError::MissingId)
        ));
        assert!(matches!(
            load_dataset(r#"{"id":"x","headers":["a"," "]}"#),
            Err(CorpusError::EmptyHeader { position: 2, .. })
        ));
    }

    #[test]
    fn header_case_variants_are_distinct() {
        let d = load_dataset(r#"{"id":"x","headers":["Year","year"]}"#).unwrap();
        assert_eq!(d.headers.len(), 2);
    }

    #[test]
    fn human_labels_basic() {
        let csv = "participant,dataset,header,topic\n\
            p1,d,h,A\np2,d,h,a\np3,d,h,B\n";
        let labels = load_human_labels(csv, &vocab(), true).unwrap();
        assert_eq!(labels.len(), 3);
        assert_eq!(labels.labels_for("d", "h"), vec!["A", "a", "B"]);
        assert_eq!(labels.participants().len(), 3);
    }

    #[test]
    fn human_labels_strict_and_lenient() {
        let csv = "participant,dataset,header,topic\np1,d,h,A\np1,d,g,Nonexistent\n";
        match load_human_labels(csv, &vocab(), true) {
            Err(CorpusError::UnresolvedTopics(rows)) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].line, 3);
                assert_eq!(rows[0].topic, "Nonexistent");
            }
            other => panic!("expected unresolved error, got {other:?}"),
        }
        let lenient = load_human_labels(csv, &vocab(), false).unwrap();
        assert_eq!(lenient.len(), 1);
        assert_eq!(lenient.unresolved.len(), 1);
    }

    #[test]
    fn human_labels_duplicates_and_empty() {
        let dup = "participant,dataset,header,topic\np1,d,h,A\np1,d,h,B\n";
        assert!(matches!(
            load_human_labels(dup, &vocab(), true),
            Err(CorpusError::DuplicateLabel { line: 3, .. })
        ));
        let empty = "participant,dataset,header,topic\n";
        assert!(load_human_labels(empty, &vocab(), true).unwrap().is_empty());
        let bad = "who,dataset,header,topic\n";
        assert!(matches!(
            load_human_labels(bad, &vocab(), true),
            Err(CorpusError::BadLabelHeader(_))
        ));
    }
}
