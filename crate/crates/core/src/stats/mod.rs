//! Significance testing: main-effects ANOVA, Tukey HSD, and the distribution
//! tails they need.

mod anova;
mod ptukey;
mod special;
mod tukey;

use std::collections::BTreeMap;

use thiserror::Error;

pub use anova::{anova, AnovaResult, AnovaRow};
pub use ptukey::{
    range_upper_tail, studentized_range_upper_tail, studentized_range_upper_tail_with,
    QuadratureConfig,
};
pub use special::{f_upper_tail, ln_gamma, normal_cdf, regularized_beta, t_upper_tail};
pub use tukey::{tukey_hsd, TukeyPair, TukeyResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical routine did not converge: {0}")]
    NonConvergent(String),
    #[error("observation {index} lacks factor `{factor}`")]
    MissingFactor { index: usize, factor: String },
    #[error("observations disagree on factor names")]
    InconsistentFactors,
    #[error("factor `{factor}` has {levels} level(s); at least 2 required")]
    TooFewLevels { factor: String, levels: usize },
    #[error("no residual degrees of freedom left ({0})")]
    NoResidualDf(String),
    #[error("response values must be finite")]
    NonFiniteResponse,
}

/// One response value with its factor levels, e.g. `model=chatgpt`, `dataset=80393eng`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub response: f64,
    pub factors: BTreeMap<String, String>,
}

impl Observation {
    pub fn new<K, V>(response: f64, factors: impl IntoIterator<Item = (K, V)>) -> Self
    where
        K: Into<String>,
        V: Into<String>,
    {
        Self {
            response,
            factors: factors
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }

    pub fn level(&self, factor: &str) -> Option<&str> {
        self.factors.get(factor).map(String::as_str)
    }
}

/// Checks shared factor names, finite responses, and returns each requested
/// factor's sorted level list.
fn check_observations(
    observations: &[Observation],
    factors: &[&str],
) -> Result<Vec<Vec<String>>, StatsError> {
    if let Some(first) = observations.first() {
        if observations
            .iter()
            .any(|o| o.factors.keys().ne(first.factors.keys()))
        {
            return Err(StatsError::InconsistentFactors);
        }
    }
    if observations.iter().any(|o| !o.response.is_finite()) {
        return Err(StatsError::NonFiniteResponse);
    }
    let mut levels = Vec::with_capacity(factors.len());
    for &factor in factors {
        let mut seen: Vec<String> = Vec::new();
        for (index, o) in observations.iter().enumerate() {
            let level = o.level(factor).ok_or_else(|| StatsError::MissingFactor {
                index,
                factor: factor.to_string(),
            })?;
            if !seen.iter().any(|s| s == level) {
                seen.push(level.to_string());
            }
        }
        if seen.len() < 2 {
            return Err(StatsError::TooFewLevels {
                factor: factor.to_string(),
                levels: seen.len(),
            });
        }
        seen.sort();
        levels.push(seen);
    }
    Ok(levels)
}
