//! Controlled vocabulary of topics.
//!
//! A vocabulary is read from a CSV file with the header row
//! `Topic Label,Topic Description` and an optional third column
//! `Parent Topic`. Topics with a parent are *specific* topics; topics
//! without one are *general*. Only two levels are allowed.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub const LABEL_COLUMN: &str = "Topic Label";
pub const DESCRIPTION_COLUMN: &str = "Topic Description";
pub const PARENT_COLUMN: &str = "Parent Topic";
pub const DEFAULT_ABSTENTION_LABEL: &str = "Other";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("header row must be `Topic Label,Topic Description[,Parent Topic]`, found `{0}`")]
    BadHeader(String),
    #[error("row {row}: empty topic label")]
    EmptyLabel { row: usize },
    #[error("row {row}: duplicate topic label `{label}` (collides with `{existing}`)")]
    DuplicateLabel {
        row: usize,
        label: String,
        existing: String,
    },
    #[error("topic `{topic}` references unknown parent `{parent}`")]
    UnknownParent { topic: String, parent: String },
    #[error("topic `{topic}` references `{parent}`, which is itself a specific topic")]
    NonGeneralParent { topic: String, parent: String },
    #[error("abstention label `{0}` does not name a topic in the vocabulary")]
    UnknownAbstention(String),
    #[error("abstention topic `{0}` must be a general topic")]
    SpecificAbstention(String),
    #[error("vocabulary needs at least 2 topics, found {0}")]
    TooFewTopics(usize),
    #[error("topic `{0}` does not belong to this vocabulary")]
    NotInVocabulary(String),
}

/// One entry of the controlled vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub label: String,
    pub description: String,
    pub parent_label: Option<String>,
}

impl Topic {
    pub fn is_general(&self) -> bool {
        self.parent_label.is_none()
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Trim, collapse internal whitespace runs to one space, and case-fold.
pub fn normalize_label(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for (i, word) in raw.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// An immutable, indexed controlled vocabulary.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    topics: Vec<Topic>,
    abstention: usize,
    index: HashMap<String, usize>,
    parents: Vec<Option<usize>>,
}

impl Vocabulary {
    /// Builds a vocabulary from topics in order, validating every invariant.
    pub fn new(topics: Vec<Topic>, abstention_label: Option<&str>) -> Result<Self, VocabError> {
        let mut index = HashMap::with_capacity(topics.len());
        for (pos, topic) in topics.iter().enumerate() {
            let key = normalize_label(&topic.label);
            if key.is_empty() {
                return Err(VocabError::EmptyLabel { row: pos + 1 });
            }
            if let Some(&prev) = index.get(&key) {
                let existing: &Topic = &topics[prev];
                return Err(VocabError::DuplicateLabel {
                    row: pos + 1,
                    label: topic.label.clone(),
                    existing: existing.label.clone(),
                });
            }
            index.insert(key, pos);
        }
        if topics.len() < 2 {
            return Err(VocabError::TooFewTopics(topics.len()));
        }

        let mut parents = Vec::with_capacity(topics.len());
        for topic in &topics {
            let Some(parent) = &topic.parent_label else {
                parents.push(None);
                continue;
            };
            let &p =
                index
                    .get(&normalize_label(parent))
                    .ok_or_else(|| VocabError::UnknownParent {
                        topic: topic.label.clone(),
                        parent: parent.clone(),
                    })?;
            if !topics[p].is_general() {
                return Err(VocabError::NonGeneralParent {
                    topic: topic.label.clone(),
                    parent: parent.clone(),
                });
            }
            parents.push(Some(p));
        }

        let abstention_label = abstention_label.unwrap_or(DEFAULT_ABSTENTION_LABEL);
        let &abstention = index
            .get(&normalize_label(abstention_label))
            .ok_or_else(|| VocabError::UnknownAbstention(abstention_label.to_string()))?;
        if !topics[abstention].is_general() {
            return Err(VocabError::SpecificAbstention(
                topics[abstention].label.clone(),
            ));
        }

        Ok(Self {
            topics,
            abstention,
            index,
            parents,
        })
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn abstention(&self) -> &Topic {
        &self.topics[self.abstention]
    }

    pub fn is_abstention(&self, topic: &Topic) -> bool {
        self.position(topic) == Some(self.abstention)
    }

    /// Normalized-exact lookup. No fuzzy matching: absence means the text is
    /// not a vocabulary term.
    pub fn resolve(&self, raw: &str) -> Option<&Topic> {
        self.index
            .get(&normalize_label(raw))
            .map(|&i| &self.topics[i])
    }

    /// Maps a specific topic to its general parent; general topics map to themselves.
    pub fn generalize<'a>(&'a self, topic: &Topic) -> Result<&'a Topic, VocabError> {
        let pos = self
            .position(topic)
            .ok_or_else(|| VocabError::NotInVocabulary(topic.label.clone()))?;
        Ok(match self.parents[pos] {
            Some(p) => &self.topics[p],
            None => &self.topics[pos],
        })
    }

    fn position(&self, topic: &Topic) -> Option<usize> {
        let &pos = self.index.get(&normalize_label(&topic.label))?;
        (self.topics[pos] == *topic).then_some(pos)
    }

    /// Two-column CSV block embedded in classification prompts. The hierarchy
    /// column is withheld. No trailing newline.
    pub fn serialize_for_prompt(&self) -> String {
        self.write_csv(false)
    }

    /// Full CSV including the `Parent Topic` column; parses back to an equal vocabulary.
    pub fn to_csv(&self) -> String {
        let mut text = self.write_csv(true);
        text.push('\n');
        text
    }

    fn write_csv(&self, with_parent: bool) -> String {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let result: Result<(), csv::Error> = (|| {
            if with_parent {
                writer.write_record([LABEL_COLUMN, DESCRIPTION_COLUMN, PARENT_COLUMN])?;
            } else {
                writer.write_record([LABEL_COLUMN, DESCRIPTION_COLUMN])?;
            }
            for topic in &self.topics {
                if with_parent {
                    let parent = topic.parent_label.as_deref().unwrap_or("");
                    writer.write_record([&topic.label, &topic.description, parent])?;
                } else {
                    writer.write_record([&topic.label, &topic.description])?;
                }
            }
            Ok(())
        })();
        // Writing into a Vec cannot fail on I/O.
        result.expect("in-memory CSV write");
        let bytes = writer.into_inner().expect("in-memory CSV flush");
        let mut text = String::from_utf8(bytes).expect("CSV built from UTF-8 strings");
        if text.ends_with('\n') {
            text.pop();
        }
        text
    }
}

/// Parses vocabulary CSV text. Topic order follows file order.
pub fn parse_vocabulary(
    csv_text: &str,
    abstention_label: Option<&str>,
) -> Result<Vocabulary, VocabError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(csv_text.as_bytes());

    let header = reader.headers()?.clone();
    let columns: Vec<&str> = header.iter().collect();
    let with_parent = match columns.as_slice() {
        [LABEL_COLUMN, DESCRIPTION_COLUMN] => false,
        [LABEL_COLUMN, DESCRIPTION_COLUMN, PARENT_COLUMN] => true,
        _ => return Err(VocabError::BadHeader(columns.join(","))),
    };

    let mut topics = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let label = record.get(0).unwrap_or("").trim().to_string();
        if label.is_empty() {
            return Err(VocabError::EmptyLabel { row: i + 1 });
        }
        let description = record.get(1).unwrap_or("").to_string();
        let parent_label = if with_parent {
            record
                .get(2)
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(str::to_string)
        } else {
            None
        };
        topics.push(Topic {
            label,
            description,
            parent_label,
        });
    }
    Vocabulary::new(topics, abstention_label)
}
