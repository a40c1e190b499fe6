//! Main-effects multi-way ANOVA with Type-II sums of squares.
//!
//! Each factor's sum of squares is the increase in residual sum of squares
//! when that factor is dropped from the full main-effects model. For a
//! balanced design this coincides with the classical decomposition.

use nalgebra::{DMatrix, DVector};

use super::special::f_upper_tail;
use super::{check_observations, Observation, StatsError};

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaRow {
    pub source: String,
    pub sum_sq: f64,
    pub df: f64,
    pub mean_sq: f64,
    pub f: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaResult {
    pub rows: Vec<AnovaRow>,
    pub residual_sum_sq: f64,
    pub residual_df: f64,
    pub warnings: Vec<String>,
}

impl AnovaResult {
    pub fn row(&self, source: &str) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.source == source)
    }

    pub fn residual_mean_sq(&self) -> f64 {
        self.residual_sum_sq / self.residual_df
    }
}

/// Residual sum of squares and rank of the least-squares fit of `y` on `x`.
fn fit(x: &DMatrix<f64>, y: &DVector<f64>) -> (f64, usize) {
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON * 16.0;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let beta = svd.solve(y, eps).expect("SVD computed with both factors");
    let resid = y - x * beta;
    (resid.norm_squared(), rank)
}

fn design(
    observations: &[Observation],
    factors: &[&str],
    levels: &[Vec<String>],
    skip: Option<usize>,
) -> DMatrix<f64> {
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; observations.len()]];
    for (fi, (&factor, lv)) in factors.iter().zip(levels).enumerate() {
        if Some(fi) == skip {
            continue;
        }
        // treatment coding: first level is the baseline
        for level in &lv[1..] {
            columns.push(
                observations
                    .iter()
                    .map(|o| f64::from(u8::from(o.level(factor) == Some(level))))
                    .collect(),
            );
        }
    }
    DMatrix::from_fn(observations.len(), columns.len(), |r, c| columns[c][r])
}

pub fn anova(observations: &[Observation], factors: &[&str]) -> Result<AnovaResult, StatsError> {
    if factors.is_empty() {
        return Err(StatsError::Domain("anova needs at least one factor".into()));
    }
    let levels = check_observations(observations, factors)?;
    let n = observations.len();
    let y = DVector::from_iterator(n, observations.iter().map(|o| o.response));

    let (rss_full, rank_full) = fit(&design(observations, factors, &levels, None), &y);
    if rank_full >= n {
        return Err(StatsError::NoResidualDf(format!(
            "{n} observations, model rank {rank_full}"
        )));
    }
    let residual_df = (n - rank_full) as f64;

    let mean = y.mean();
    let total_ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let degenerate = rss_full <= 1e-12 * total_ss.max(f64::MIN_POSITIVE) || rss_full == 0.0;
    let rss_full = if degenerate { 0.0 } else { rss_full };
    let residual_ms = rss_full / residual_df;

    let mut rows = Vec::with_capacity(factors.len());
    let mut warnings = Vec::new();
    for (fi, &factor) in factors.iter().enumerate() {
        let (rss_reduced, rank_reduced) =
            fit(&design(observations, factors, &levels, Some(fi)), &y);
        let df = (rank_full - rank_reduced) as f64;
        let mut sum_sq = (rss_reduced - rss_full).max(0.0);
        if sum_sq <= 1e-12 * total_ss {
            sum_sq = 0.0;
        }
        let mean_sq = if df > 0.0 { sum_sq / df } else { 0.0 };
        let (f, p) = if df == 0.0 || sum_sq == 0.0 {
            (0.0, 1.0)
        } else if degenerate {
            warnings.push(format!(
                "zero residual variance: effect of `{factor}` reported with F = inf, p = 0"
            ));
            (f64::INFINITY, 0.0)
        } else {
            let f = mean_sq / residual_ms;
            (f, f_upper_tail(f, df, residual_df)?)
        };
        rows.push(AnovaRow {
            source: factor.to_string(),
            sum_sq,
            df,
            mean_sq,
            f,
            p,
        });
    }
    Ok(AnovaResult {
        rows,
        residual_sum_sq: rss_full,
        residual_df,
        warnings,
    })
}
