//! Gamma, incomplete beta and the distribution tails built on them.

use std::f64::consts::{PI, SQRT_2};

use super::StatsError;

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> Option<f64> {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Some(h);
        }
    }
    None
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_beta(x: f64, a: f64, b: f64) -> Result<f64, StatsError> {
    if !(x.is_finite() && a.is_finite() && b.is_finite()) || a <= 0.0 || b <= 0.0 {
        return Err(StatsError::Domain(format!(
            "incomplete beta needs finite x and a, b > 0 (x={x}, a={a}, b={b})"
        )));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp();
    let cf = |a, b, x| {
        beta_continued_fraction(a, b, x).ok_or_else(|| {
            StatsError::NonConvergent(format!("incomplete beta at x={x}, a={a}, b={b}"))
        })
    };
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * cf(a, b, x)? / a)
    } else {
        Ok(1.0 - front * cf(b, a, 1.0 - x)? / b)
    }
}

/// Complement 1 - I_x(a, b), computed without cancellation where possible.
fn regularized_beta_complement(x: f64, a: f64, b: f64) -> Result<f64, StatsError> {
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x >= 1.0 {
        return Ok(0.0);
    }
    regularized_beta(1.0 - x, b, a)
}

fn check_df(name: &str, df: f64) -> Result<(), StatsError> {
    if !df.is_finite() || df <= 0.0 {
        return Err(StatsError::Domain(format!(
            "{name} must be positive and finite, got {df}"
        )));
    }
    Ok(())
}

/// P(F > x) for the F distribution with (d1, d2) degrees of freedom.
pub fn f_upper_tail(x: f64, d1: f64, d2: f64) -> Result<f64, StatsError> {
    check_df("numerator df", d1)?;
    check_df("denominator df", d2)?;
    if x.is_nan() {
        return Err(StatsError::Domain("F statistic is NaN".into()));
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    // P(F > x) = I_{d2/(d2 + d1 x)}(d2/2, d1/2)
    let z = d1 * x;
    if z > d2 {
        regularized_beta(d2 / (d2 + z), d2 / 2.0, d1 / 2.0)
    } else {
        regularized_beta_complement(z / (d2 + z), d1 / 2.0, d2 / 2.0)
    }
}

/// P(T > t) for Student's t with `df` degrees of freedom.
pub fn t_upper_tail(t: f64, df: f64) -> Result<f64, StatsError> {
    check_df("df", df)?;
    if t.is_nan() {
        return Err(StatsError::Domain("t statistic is NaN".into()));
    }
    let tail = 0.5 * regularized_beta(df / (df + t * t), df / 2.0, 0.5)?;
    Ok(if t >= 0.0 { tail } else { 1.0 - tail })
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn beta_edges_and_symmetry() {
        assert_eq!(regularized_beta(0.0, 2.0, 3.0).unwrap(), 0.0);
        assert_eq!(regularized_beta(1.0, 2.0, 3.0).unwrap(), 1.0);
        // I_x(1, 1) = x
        assert!((regularized_beta(0.3, 1.0, 1.0).unwrap() - 0.3).abs() < 1e-15);
        // I_x(a, b) = 1 - I_{1-x}(b, a)
        let lhs = regularized_beta(0.27, 3.5, 1.25).unwrap();
        let rhs = 1.0 - regularized_beta(0.73, 1.25, 3.5).unwrap();
        assert!((lhs - rhs).abs() < 1e-14);
        assert!(regularized_beta(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn f_tail_basics() {
        assert_eq!(f_upper_tail(0.0, 3.0, 7.0).unwrap(), 1.0);
        assert_eq!(f_upper_tail(f64::INFINITY, 3.0, 7.0).unwrap(), 0.0);
        for d in [1.0, 2.0, 5.0, 10.0] {
            assert!((f_upper_tail(1.0, d, d).unwrap() - 0.5).abs() <= 1e-10);
        }
        assert!(f_upper_tail(f64::NAN, 1.0, 1.0).is_err());
        assert!(f_upper_tail(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn t_tail_symmetry() {
        let a = t_upper_tail(1.3, 7.0).unwrap();
        let b = t_upper_tail(-1.3, 7.0).unwrap();
        assert!((a + b - 1.0).abs() < 1e-14);
        assert_eq!(t_upper_tail(0.0, 3.0).unwrap(), 0.5);
    }
}
