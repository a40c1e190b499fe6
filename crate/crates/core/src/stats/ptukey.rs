//! Studentized range distribution.
//!
//! P(Q > q) = ∫ f_s(s) · R(q·s) ds, where f_s is the density of
//! s = sqrt(χ²_df / df) and R(w) is the upper tail of the range of k standard
//! normals:
//!
//!   R(w) = k ∫ φ(z) [Φ(z)^(k-1) - (Φ(z) - Φ(z - w))^(k-1)] dz.
//!
//! Both integrals use adaptive Gauss-Legendre quadrature.

use std::sync::OnceLock;

use super::special::{ln_gamma, normal_cdf, normal_pdf};
use super::StatsError;

/// Quadrature settings for [`studentized_range_upper_tail_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Absolute tolerance of the outer integral over s.
    pub outer_tolerance: f64,
    /// Absolute tolerance of each inner integral over z.
    pub inner_tolerance: f64,
    /// Maximum bisection depth before giving up.
    pub max_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            outer_tolerance: 1e-9,
            inner_tolerance: 1e-11,
            max_depth: 30,
        }
    }
}

const GL_ORDER: usize = 20;

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp;
            loop {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let step = p1 / dp;
                z -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

fn gl_panel(
    f: &mut impl FnMut(f64) -> Result<f64, StatsError>,
    a: f64,
    b: f64,
) -> Result<f64, StatsError> {
    let (nodes, weights) = gauss_legendre();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        sum += w * f(mid + half * x)?;
    }
    Ok(sum * half)
}

fn adaptive(
    f: &mut impl FnMut(f64) -> Result<f64, StatsError>,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, StatsError> {
    let mid = 0.5 * (a + b);
    let left = gl_panel(f, a, mid)?;
    let right = gl_panel(f, mid, b)?;
    let refined = left + right;
    if (refined - whole).abs() <= tol {
        return Ok(refined);
    }
    if depth == 0 {
        return Err(StatsError::NonConvergent(format!(
            "quadrature on [{a}, {b}] did not reach tolerance {tol:e}"
        )));
    }
    Ok(adaptive(f, a, mid, left, tol / 2.0, depth - 1)?
        + adaptive(f, mid, b, right, tol / 2.0, depth - 1)?)
}

/// Integrates `f` over [a, b], starting from `panels` equal sub-intervals.
fn integrate(
    mut f: impl FnMut(f64) -> Result<f64, StatsError>,
    a: f64,
    b: f64,
    panels: usize,
    tol: f64,
    max_depth: u32,
) -> Result<f64, StatsError> {
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + width * i as f64;
        let hi = if i + 1 == panels { b } else { lo + width };
        let whole = gl_panel(&mut f, lo, hi)?;
        total += adaptive(&mut f, lo, hi, whole, tol / panels as f64, max_depth)?;
    }
    Ok(total)
}

const Z_LIMIT: f64 = 9.0;

/// Upper tail of the range of `k` independent standard normals.
pub fn range_upper_tail(w: f64, k: u32, cfg: &QuadratureConfig) -> Result<f64, StatsError> {
    if w <= 0.0 {
        return Ok(1.0);
    }
    let km1 = (k - 1) as i32;
    let tail = integrate(
        |z| {
            let cdf = normal_cdf(z);
            let inside = (cdf - normal_cdf(z - w)).max(0.0);
            Ok(normal_pdf(z) * (cdf.powi(km1) - inside.powi(km1)))
        },
        -Z_LIMIT,
        Z_LIMIT + w.min(Z_LIMIT),
        8,
        cfg.inner_tolerance,
        cfg.max_depth,
    )?;
    Ok((k as f64 * tail).clamp(0.0, 1.0))
}

fn ln_scale_density(s: f64, df: f64) -> f64 {
    let half = df / 2.0;
    half * df.ln() + (df - 1.0) * s.ln() - df * s * s / 2.0 + std::f64::consts::LN_2
        - half * std::f64::consts::LN_2
        - ln_gamma(half)
}

/// P(Q > q) for the studentized range with `k` groups and `df` error degrees
/// of freedom.
pub fn studentized_range_upper_tail(q: f64, k: u32, df: f64) -> Result<f64, StatsError> {
    studentized_range_upper_tail_with(q, k, df, &QuadratureConfig::default())
}

pub fn studentized_range_upper_tail_with(
    q: f64,
    k: u32,
    df: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, StatsError> {
    if q.is_nan() || !df.is_finite() {
        return Err(StatsError::Domain(format!(
            "studentized range needs a number q and finite df (q={q}, df={df})"
        )));
    }
    if k < 2 {
        return Err(StatsError::Domain(format!(
            "studentized range needs k >= 2, got {k}"
        )));
    }
    if df < 1.0 {
        return Err(StatsError::Domain(format!(
            "studentized range needs df >= 1, got {df}"
        )));
    }
    if q <= 0.0 {
        return Ok(1.0);
    }
    if q == f64::INFINITY {
        return Ok(0.0);
    }

    let spread = 14.0 / (2.0 * df).sqrt();
    let lo = (1.0 - spread).max(0.0);
    let hi = 1.0 + spread;
    let p = integrate(
        |s| {
            if s <= 0.0 {
                return Ok(0.0);
            }
            let density = ln_scale_density(s, df).exp();
            if density == 0.0 {
                return Ok(0.0);
            }
            Ok(density * range_upper_tail(q * s, k, cfg)?)
        },
        lo,
        hi,
        8,
        cfg.outer_tolerance,
        cfg.max_depth,
    )?;
    Ok(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (nodes, weights) = gauss_legendre();
        let total: f64 = weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        // exact for degree <= 39
        let x38: f64 = nodes.iter().zip(weights).map(|(x, w)| w * x.powi(38)).sum();
        assert!((x38 - 2.0 / 39.0).abs() < 1e-14);
    }

    #[test]
    fn scale_density_integrates_to_one() {
        for df in [1.0, 2.0, 5.0, 30.0, 500.0] {
            let spread = 14.0 / (2.0_f64 * df).sqrt();
            let mass = integrate(
                |s| {
                    Ok(if s > 0.0 {
                        ln_scale_density(s, df).exp()
                    } else {
                        0.0
                    })
                },
                (1.0 - spread).max(0.0),
                1.0 + spread,
                8,
                1e-12,
                30,
            )
            .unwrap();
            assert!((mass - 1.0).abs() < 1e-10, "df={df}: {mass}");
        }
    }

    #[test]
    fn range_of_two_normals() {
        // the range of two standard normals is |N(0, 2)|
        let cfg = QuadratureConfig::default();
        let w = 1.7;
        let expected = libm::erfc(w / 2.0);
        assert!((range_upper_tail(w, 2, &cfg).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn edge_cases() {
        assert_eq!(studentized_range_upper_tail(0.0, 3, 10.0).unwrap(), 1.0);
        assert_eq!(
            studentized_range_upper_tail(f64::INFINITY, 3, 10.0).unwrap(),
            0.0
        );
        assert!(studentized_range_upper_tail(1.0, 1, 10.0).is_err());
        assert!(studentized_range_upper_tail(1.0, 3, 0.5).is_err());
        assert!(studentized_range_upper_tail(f64::NAN, 3, 5.0).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let cfg = QuadratureConfig {
            outer_tolerance: 1e-30,
            inner_tolerance: 1e-30,
            max_depth: 1,
        };
        assert!(matches!(
            studentized_range_upper_tail_with(3.0, 3, 10.0, &cfg),
            Err(StatsError::NonConvergent(_))
        ));
    }
}
