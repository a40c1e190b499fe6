//! Classification prompt construction.
//!
//! The wording is the experimental treatment, so the template below is kept
//! character-for-character stable. Do not reflow it.

use thiserror::Error;

use crate::corpus::Dataset;
use crate::vocab::Vocabulary;

const PREAMBLE: &str = "Task: Column Header Classification with Controlled Vocabulary

You are provided with two inputs, below: 1) the column headers of a dataset (in a list format), and 2) a controlled vocabulary of topics (in a CSV format). Your goal is to classify each column header with a relevant topic. The controlled vocabulary has two columns: the 'Topic Label' and 'Topic Description'. For each column header, assign a topic from the controlled vocabulary based on semantic relevance and the definition provided for each topic. The result should be structured in JSON format, where each column header is paired with its assigned topic's label.

**Constraints:
Use only topics provided in the controlled vocabulary, do not add any topics that are not included.
Do not change the text of the column headers or topic's label.
Only return the output in a JSON format, and no additional text.

**Inputs:

";

const DESCRIPTION_MARKER: &str = "*Dataset Description:";
const HEADERS_MARKER: &str = "*Column Headers (List):";
const VOCABULARY_MARKER: &str = "*Controlled Vocabulary (CSV Format):";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("dataset `{0}` has no description to use as context")]
    MissingDescription(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub text: String,
    pub with_context: bool,
}

impl AsRef<str> for PromptText {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

/// Renders the prompt for one dataset. With context, the dataset description
/// block goes right before the column headers.
pub fn build_prompt(
    dataset: &Dataset,
    vocab: &Vocabulary,
    with_context: bool,
) -> Result<PromptText, PromptError> {
    let vocabulary_csv = vocab.serialize_for_prompt();
    let header_list = dataset.headers.join(", ");

    let mut text =
        String::with_capacity(PREAMBLE.len() + vocabulary_csv.len() + header_list.len() + 128);
    text.push_str(PREAMBLE);
    if with_context {
        let description = dataset
            .description
            .as_deref()
            .filter(|d| !d.trim().is_empty())
            .ok_or_else(|| PromptError::MissingDescription(dataset.id.clone()))?;
        text.push_str(DESCRIPTION_MARKER);
        text.push('\n');
        text.push_str(description);
        text.push_str("\n\n");
    }
    text.push_str(HEADERS_MARKER);
    text.push_str("\n[");
    text.push_str(&header_list);
    text.push_str("]\n\n");
    text.push_str(VOCABULARY_MARKER);
    text.push('\n');
    text.push_str(&vocabulary_csv);

    Ok(PromptText { text, with_context })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::parse_vocabulary;

    fn fixture() -> (Dataset, Vocabulary) {
        let dataset = Dataset {
            id: "d".into(),
            title: "T".into(),
            description: Some("Numbers of animals".into()),
            headers: vec!["h1".into(), "h2".into()],
        };
        let vocab =
            parse_vocabulary("Topic Label,Topic Description\nA,first\nOther,\n", None).unwrap();
        (dataset, vocab)
    }

    #[test]
    fn no_context_prompt() {
        let (d, v) = fixture();
        let p = build_prompt(&d, &v, false).unwrap();
        assert!(!p.with_context);
        assert!(p.text.starts_with("Task: Column Header Classification"));
        assert!(p.text.contains("*Column Headers (List):\n[h1, h2]\n"));
        assert!(p.text.ends_with(
            "*Controlled Vocabulary (CSV Format):\nTopic Label,Topic Description\nA,first\nOther,"
        ));
        assert!(!p.text.contains(DESCRIPTION_MARKER));
    }

    #[test]
    fn context_adds_only_description_block() {
        let (d, v) = fixture();
        let plain = build_prompt(&d, &v, false).unwrap().text;
        let ctx = build_prompt(&d, &v, true).unwrap().text;
        let block = "*Dataset Description:\nNumbers of animals\n\n";
        assert_eq!(ctx.replacen(block, "", 1), plain);
        let pos = ctx.find(block).unwrap();
        assert!(pos < ctx.find(HEADERS_MARKER).unwrap());
    }

    #[test]
    fn context_requires_description() {
        let (mut d, v) = fixture();
        d.description = None;
        assert_eq!(
            build_prompt(&d, &v, true),
            Err(PromptError::MissingDescription("d".into()))
        );
        assert!(build_prompt(&d, &v, false).is_ok());
    }

    #[test]
    fn deterministic() {
        let (d, v) = fixture();
        assert_eq!(
            build_prompt(&d, &v, true).unwrap(),
            build_prompt(&d, &v, true).unwrap()
        );
    }
}
