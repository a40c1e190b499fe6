//! The `validate` command: lint the inputs of a campaign without running it.

use coltopic::backend::load_runs;

use crate::config::CampaignConfig;
use crate::{context_name, CliError, Inputs};

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Lint {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Lint {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

pub fn run(config: &CampaignConfig) -> Lint {
    let mut lint = Lint::default();
    let fatal = |mut lint: Lint, e: CliError| {
        lint.errors.push(e.to_string());
        lint
    };
    if let Err(e) = config.validate().and_then(|_| config.check_paths()) {
        return fatal(lint, e);
    }
    let inputs = match Inputs::load(config) {
        Ok(i) => i,
        Err(e) => return fatal(lint, e),
    };
    if inputs.corpus.is_empty() {
        lint.errors.push(format!(
            "corpus {} holds no datasets",
            config.corpus.display()
        ));
    }

    for backend in &config.backends {
        let contexts = config.contexts(backend);
        if contexts.is_empty() {
            lint.warnings.push(format!(
                "backend `{}` has no context setting left to run",
                backend.name
            ));
        }
        if contexts.contains(&true) {
            for d in inputs.corpus.datasets() {
                if d.description.as_deref().is_none_or(|t| t.trim().is_empty()) {
                    lint.errors.push(format!(
                        "dataset `{}` has no description but backend `{}` runs with context",
                        d.id, backend.name
                    ));
                }
            }
        }
        if backend.source.is_some() {
            if let Err(e) = backend.build() {
                lint.errors.push(e.to_string());
            }
        }
    }
    lint.errors.dedup();

    if let Some(path) = &config.human_labels {
        match inputs.human_labels(path) {
            Err(e) => lint.errors.push(e.to_string()),
            Ok(labels) => {
                for u in &labels.unresolved {
                    lint.errors.push(format!(
                        "{} line {}: topic `{}` is not in the vocabulary",
                        path.display(),
                        u.line,
                        u.topic
                    ));
                }
                for k in labels.dangling(&inputs.corpus) {
                    lint.warnings.push(format!(
                        "{}: label by `{}` for {}/{} names no corpus header",
                        path.display(),
                        k.participant,
                        k.dataset,
                        k.header
                    ));
                }
            }
        }
    }

    if config.store.exists() {
        match load_runs(&config.store) {
            Err(e) => lint.errors.push(e.to_string()),
            Ok(runs) => {
                for r in &runs {
                    match inputs.corpus.get(&r.dataset_id) {
                        None => lint
                            .errors
                            .push(format!("stored run {} names an unknown dataset", r.key())),
                        Some(d) if d.headers.len() != r.assignments.len() => {
                            lint.errors.push(format!(
                                "stored run {} has {} assignments for {} headers",
                                r.key(),
                                r.assignments.len(),
                                d.headers.len()
                            ))
                        }
                        Some(_) => {}
                    }
                }
                let failed = runs.iter().filter(|r| r.is_failed()).count();
                if failed > 0 {
                    lint.warnings
                        .push(format!("{failed} stored run(s) failed to parse"));
                }
                for b in &config.backends {
                    for ctx in config.contexts(b) {
                        let n = runs
                            .iter()
                            .filter(|r| r.backend.as_str() == b.name && r.with_context == ctx)
                            .count();
                        let expected = inputs.corpus.len() * config.runs as usize;
                        if n < expected {
                            lint.warnings.push(format!(
                                "store holds {n} of {expected} {} runs for `{}`",
                                context_name(ctx),
                                b.name
                            ));
                        }
                    }
                }
            }
        }
    }
    lint
}
