//! Campaign configuration file (TOML).
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use coltopic::backend::{
    ApiFlavor, Backend, BackendId, HttpBackend, HttpConfig, ReplayBackend, RetryPolicy,
};
use coltopic::metrics::ScoringScheme;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ContextSetting {
    /// Headers and vocabulary only.
    None,
    /// Dataset description included.
    With,
    Both,
}

impl ContextSetting {
    pub fn flags(self) -> &'static [bool] {
        match self {
            ContextSetting::None => &[false],
            ContextSetting::With => &[true],
            ContextSetting::Both => &[false, true],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Replay,
    OpenaiChat,
    Gemini,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub name: String,
    pub kind: BackendKind,
    /// Replay: recorded responses (cassette or run store).
    pub source: Option<PathBuf>,
    /// Replay: backend name to read from `source`, if it differs from `name`.
    pub record: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    pub max_retries: Option<u32>,
    pub timeout_secs: Option<u64>,
    /// Narrows the campaign context setting for this backend.
    pub context: Option<ContextSetting>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    #[serde(rename = "match")]
    pub match_score: Option<f64>,
    pub mismatch: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub corpus: PathBuf,
    pub vocabulary: PathBuf,
    pub abstention_label: Option<String>,
    pub store: PathBuf,
    pub human_labels: Option<PathBuf>,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default = "default_context")]
    pub context: ContextSetting,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub scoring: Option<ScoringConfig>,
    pub backends: Vec<BackendConfig>,
}

fn default_runs() -> u32 {
    10
}

fn default_context() -> ContextSetting {
    ContextSetting::None
}

fn default_parallelism() -> usize {
    4
}

fn default_alpha() -> f64 {
    0.05
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub store: Option<PathBuf>,
    pub context: Option<ContextSetting>,
    pub runs: Option<u32>,
    pub backends: Vec<String>,
    pub alpha: Option<f64>,
    pub match_score: Option<f64>,
    pub mismatch: Option<f64>,
    pub gap: Option<f64>,
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: CampaignConfig = toml::from_str(&text)
            .map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.corpus = base.join(&config.corpus);
        config.vocabulary = base.join(&config.vocabulary);
        config.store = base.join(&config.store);
        config.human_labels = config.human_labels.map(|p| base.join(p));
        for b in &mut config.backends {
            b.source = b.source.take().map(|p| base.join(p));
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(store) = &o.store {
            self.store = store.clone();
        }
        if let Some(context) = o.context {
            self.context = context;
        }
        if let Some(runs) = o.runs {
            self.runs = runs;
        }
        if let Some(alpha) = o.alpha {
            self.alpha = alpha;
        }
        if o.match_score.is_some() || o.mismatch.is_some() || o.gap.is_some() {
            let mut s = self.scoring.unwrap_or(ScoringConfig {
                match_score: None,
                mismatch: None,
                gap: None,
            });
            s.match_score = o.match_score.or(s.match_score);
            s.mismatch = o.mismatch.or(s.mismatch);
            s.gap = o.gap.or(s.gap);
            self.scoring = Some(s);
        }
        if !o.backends.is_empty() {
            let known: BTreeSet<&str> = self.backends.iter().map(|b| b.name.as_str()).collect();
            if let Some(missing) = o.backends.iter().find(|n| !known.contains(n.as_str())) {
                return Err(CliError::invalid(format!(
                    "no backend named `{missing}` in config"
                )));
            }
            self.backends.retain(|b| o.backends.contains(&b.name));
        }
        Ok(())
    }

    /// Checks the invariants that do not need any file contents.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.runs < 1 {
            return Err(CliError::invalid("runs must be at least 1"));
        }
        if self.backends.is_empty() {
            return Err(CliError::invalid("at least one backend is required"));
        }
        if self.parallelism < 1 {
            return Err(CliError::invalid("parallelism must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::invalid("alpha must lie strictly between 0 and 1"));
        }
        self.scoring()?;
        let mut names = BTreeSet::new();
        for b in &self.backends {
            BackendId::new(b.name.clone()).map_err(|e| CliError::invalid(e.to_string()))?;
            if !names.insert(b.name.as_str()) {
                return Err(CliError::invalid(format!(
                    "backend `{}` listed twice",
                    b.name
                )));
            }
            if b.kind == BackendKind::Replay && b.source.is_none() {
                return Err(CliError::invalid(format!(
                    "replay backend `{}` needs a `source`",
                    b.name
                )));
            }
        }
        Ok(())
    }

    pub fn check_paths(&self) -> Result<(), CliError> {
        let mut required = vec![("corpus", &self.corpus), ("vocabulary", &self.vocabulary)];
        if let Some(labels) = &self.human_labels {
            required.push(("human_labels", labels));
        }
        for b in &self.backends {
            if let Some(source) = &b.source {
                required.push(("replay source", source));
            }
        }
        for (what, path) in required {
            if !path.exists() {
                return Err(CliError::invalid(format!(
                    "{what} {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn scoring(&self) -> Result<ScoringScheme, CliError> {
        let d = ScoringScheme::default();
        let Some(s) = self.scoring else {
            return Ok(d);
        };
        ScoringScheme::new(
            s.match_score.unwrap_or(d.match_score),
            s.mismatch.unwrap_or(d.mismatch),
            s.gap.unwrap_or(d.gap),
        )
        .map_err(|e| CliError::invalid(e.to_string()))
    }

    /// Context flags to run for one backend.
    pub fn contexts(&self, backend: &BackendConfig) -> Vec<bool> {
        let campaign = self.context.flags();
        let narrowed = backend.context.unwrap_or(self.context).flags();
        campaign
            .iter()
            .copied()
            .filter(|c| narrowed.contains(c))
            .collect()
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn Backend>, CliError> {
        let id = BackendId::new(self.name.clone()).map_err(|e| CliError::invalid(e.to_string()))?;
        match self.kind {
            BackendKind::Replay => {
                let source = self.source.as_deref().expect("validated replay source");
                let replay = ReplayBackend::load(id, self.record.as_deref(), source)
                    .map_err(|e| CliError::invalid(e.to_string()))?;
                Ok(Box::new(replay))
            }
            BackendKind::OpenaiChat | BackendKind::Gemini => {
                let flavor = if self.kind == BackendKind::Gemini {
                    ApiFlavor::Gemini
                } else {
                    ApiFlavor::OpenaiChat
                };
                let endpoint = match (&self.endpoint, flavor) {
                    (Some(e), _) => e.clone(),
                    (None, ApiFlavor::OpenaiChat) => {
                        "https://api.openai.com/v1/chat/completions".to_string()
                    }
                    (None, ApiFlavor::Gemini) => {
                        let model = self.model.as_deref().ok_or_else(|| {
                            CliError::invalid(format!(
                                "gemini backend `{}` needs a model",
                                self.name
                            ))
                        })?;
                        format!(
                            "https://generativelanguage.googleapis.com/v1beta/models/{model}:generateContent"
                        )
                    }
                };
                let api_key = HttpBackend::api_key_from_env(&id)
                    .map_err(|e| CliError::invalid(e.to_string()))?;
                let retry = RetryPolicy {
                    max_retries: self
                        .max_retries
                        .unwrap_or(RetryPolicy::default().max_retries),
                    ..RetryPolicy::default()
                };
                let config = HttpConfig {
                    flavor,
                    endpoint,
                    model: self.model.clone(),
                    parameters: self.parameters.clone(),
                    retry,
                    timeout: Duration::from_secs(self.timeout_secs.unwrap_or(120)),
                };
                Ok(Box::new(HttpBackend::new(id, config, api_key)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
corpus = "corpus"
vocabulary = "vocab.csv"
store = "runs.jsonl"

[[backends]]
name = "mock"
kind = "replay"
source = "cassette.jsonl"
"#;

    fn parse(text: &str) -> CampaignConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn defaults() {
        let c = parse(MINIMAL);
        assert_eq!(c.runs, 10);
        assert_eq!(c.context, ContextSetting::None);
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.scoring().unwrap(), ScoringScheme::default());
        c.validate().unwrap();
    }

    #[test]
    fn overrides_win() {
        let mut c = parse(MINIMAL);
        c.apply(&Overrides {
            runs: Some(3),
            context: Some(ContextSetting::Both),
            gap: Some(-1.0),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(c.runs, 3);
        assert_eq!(c.scoring().unwrap().gap, -1.0);
        assert_eq!(c.contexts(&c.backends[0]), [false, true]);

        let unknown = Overrides {
            backends: vec!["nope".into()],
            ..Overrides::default()
        };
        assert!(c.apply(&unknown).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = parse(MINIMAL);
        c.runs = 0;
        assert!(c.validate().is_err());
        let mut c = parse(MINIMAL);
        c.backends.clear();
        assert!(c.validate().is_err());
        let mut c = parse(MINIMAL);
        c.scoring = Some(ScoringConfig {
            match_score: Some(0.0),
            mismatch: None,
            gap: None,
        });
        assert!(c.validate().is_err());
        assert!(toml::from_str::<CampaignConfig>(&format!("{MINIMAL}\nbogus = 1\n")).is_err());
    }

    #[test]
    fn backend_context_narrows() {
        let mut c = parse(MINIMAL);
        c.context = ContextSetting::Both;
        c.backends[0].context = Some(ContextSetting::None);
        assert_eq!(c.contexts(&c.backends[0]), [false]);
        c.context = ContextSetting::With;
        assert!(c.contexts(&c.backends[0]).is_empty());
    }

    #[test]
    fn parameters_become_json() {
        let c = parse(&format!(
            "{MINIMAL}\n[backends.parameters]\ntemperature = 0.7\nmax_tokens = 512\n"
        ));
        assert_eq!(c.backends[0].parameters["max_tokens"], 512);
        assert_eq!(c.backends[0].parameters["temperature"], 0.7);
    }
}
