//! Tukey HSD (Tukey-Kramer for unequal group sizes).

use std::collections::BTreeMap;

use super::ptukey::studentized_range_upper_tail;
use super::{check_observations, Observation, StatsError};

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyPair {
    pub level_a: String,
    pub level_b: String,
    /// mean(a) - mean(b)
    pub mean_diff: f64,
    pub q: f64,
    pub p_adj: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyResult {
    pub factor: String,
    pub alpha: f64,
    /// (level, group size, group mean), sorted by level.
    pub groups: Vec<(String, usize, f64)>,
    pub mean_sq_within: f64,
    pub df_within: f64,
    pub pairs: Vec<TukeyPair>,
    pub warnings: Vec<String>,
}

impl TukeyResult {
    /// Signed mean difference mean(a) - mean(b).
    pub fn mean_diff(&self, a: &str, b: &str) -> Option<f64> {
        self.pairs.iter().find_map(|p| {
            if p.level_a == a && p.level_b == b {
                Some(p.mean_diff)
            } else if p.level_a == b && p.level_b == a {
                Some(-p.mean_diff)
            } else {
                None
            }
        })
    }

    pub fn pair(&self, a: &str, b: &str) -> Option<&TukeyPair> {
        self.pairs
            .iter()
            .find(|p| (p.level_a == a && p.level_b == b) || (p.level_a == b && p.level_b == a))
    }
}

/// All pairwise comparisons of `factor` levels, using the one-way within-group
/// mean square and the studentized range with k = level count.
pub fn tukey_hsd(
    observations: &[Observation],
    factor: &str,
    alpha: f64,
) -> Result<TukeyResult, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Domain(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    check_observations(observations, &[factor])?;
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for o in observations {
        groups
            .entry(o.level(factor).expect("checked above"))
            .or_default()
            .push(o.response);
    }
    let k = groups.len();
    let n = observations.len();
    if n <= k {
        return Err(StatsError::NoResidualDf(format!(
            "{n} observations in {k} groups"
        )));
    }
    let df_within = (n - k) as f64;

    let summary: Vec<(String, usize, f64)> = groups
        .iter()
        .map(|(level, vals)| {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (level.to_string(), vals.len(), mean)
        })
        .collect();
    let ss_within: f64 = groups
        .values()
        .zip(&summary)
        .map(|(vals, (_, _, mean))| vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>())
        .sum();
    let mean_sq_within = ss_within / df_within;

    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for (i, (level_a, n_a, mean_a)) in summary.iter().enumerate() {
        for (level_b, n_b, mean_b) in &summary[i + 1..] {
            let mean_diff = mean_a - mean_b;
            let se = (mean_sq_within / 2.0 * (1.0 / *n_a as f64 + 1.0 / *n_b as f64)).sqrt();
            let (q, p_adj) = if mean_diff == 0.0 {
                (0.0, 1.0)
            } else if se == 0.0 {
                warnings.push(format!(
                    "zero within-group variance: {level_a} vs {level_b} reported with q = inf"
                ));
                (f64::INFINITY, 0.0)
            } else {
                let q = mean_diff.abs() / se;
                (q, studentized_range_upper_tail(q, k as u32, df_within)?)
            };
            pairs.push(TukeyPair {
                level_a: level_a.clone(),
                level_b: level_b.clone(),
                mean_diff,
                q,
                p_adj,
                significant: p_adj < alpha,
            });
        }
    }
    Ok(TukeyResult {
        factor: factor.to_string(),
        alpha,
        groups: summary,
        mean_sq_within,
        df_within,
        pairs,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(groups: &[(&str, &[f64])]) -> Vec<Observation> {
        groups
            .iter()
            .flat_map(|(g, vals)| {
                vals.iter()
                    .map(move |&v| Observation::new(v, [("model", *g)]))
            })
            .collect()
    }

    #[test]
    fn identical_means() {
        let r = tukey_hsd(
            &obs(&[
                ("a", &[1.0, 2.0, 3.0]),
                ("b", &[3.0, 2.0, 1.0]),
                ("c", &[2.0, 2.0, 2.0]),
            ]),
            "model",
            0.05,
        )
        .unwrap();
        assert_eq!(r.pairs.len(), 3);
        for p in &r.pairs {
            assert_eq!(p.mean_diff, 0.0);
            assert_eq!(p.p_adj, 1.0);
            assert!(!p.significant);
        }
    }

    #[test]
    fn antisymmetric_lookup() {
        let r = tukey_hsd(
            &obs(&[("a", &[1.0, 2.0]), ("b", &[4.0, 5.0])]),
            "model",
            0.05,
        )
        .unwrap();
        assert_eq!(r.mean_diff("a", "b"), Some(-3.0));
        assert_eq!(r.mean_diff("b", "a"), Some(3.0));
        assert!(r.pair("b", "a").is_some());
    }

    #[test]
    fn reference_fixture() {
        // three groups of five; p-values from an independent statistics package
        let r = tukey_hsd(
            &obs(&[
                ("g1", &[24.5, 23.5, 26.4, 27.1, 29.9]),
                ("g2", &[28.4, 34.2, 29.5, 32.2, 30.1]),
                ("g3", &[26.1, 28.3, 24.3, 26.2, 27.8]),
            ]),
            "model",
            0.05,
        )
        .unwrap();
        let expected = [
            ("g1", "g2", 0.014_448_326_736_400_73),
            ("g1", "g3", 0.980_310_724_094_108_1),
            ("g2", "g3", 0.020_331_136_739_714_76),
        ];
        for (a, b, p) in expected {
            let got = r.pair(a, b).unwrap().p_adj;
            assert!((got - p).abs() < 1e-3, "{a}-{b}: {got} vs {p}");
        }
        assert!(r.pair("g1", "g2").unwrap().significant);
        assert!(!r.pair("g1", "g3").unwrap().significant);
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(tukey_hsd(
            &obs(&[("a", &[1.0, 2.0]), ("b", &[4.0, 5.0])]),
            "model",
            1.5
        )
        .is_err());
    }
}
