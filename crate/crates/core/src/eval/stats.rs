use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    if x < half {
        // Reflection keeps the series in its accurate range.
        let pi = T::of(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut a = T::of(LANCZOS[0]);
    let t = x + T::of(7.5);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += T::of(c) / (x + T::count(i));
    }
    T::of(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf<T: Scalar>(a: T, b: T, x: T) -> T {
    let tiny = T::of(1e-300).max(T::min_positive_value());
    let eps = T::epsilon();
    let one = T::one();
    let (qab, qap, qam) = (a + b, a + one, a - one);
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=300 {
        let m = T::count(m);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h *= del;
        if (del - one).abs() < eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta<T: Scalar>(a: T, b: T, x: T) -> T {
    let (zero, one) = (T::zero(), T::one());
    if x <= zero {
        return zero;
    }
    if x >= one {
        return one;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (one - x).ln()).exp();
    if x < (a + one) / (a + b + T::of(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        one - front * beta_cf(b, a, one - x) / b
    }
}

/// Two-tailed p-value of Student's t with `dof` degrees of freedom.
pub fn t_two_tailed_p<T: Scalar>(t: T, dof: T) -> T {
    if t.is_infinite() {
        return T::zero();
    }
    let half = T::of(0.5);
    incomplete_beta(dof * half, half, dof / (dof + t * t))
}

/// CDF of Student's t.
pub fn t_cdf<T: Scalar>(t: T, dof: T) -> T {
    let tail = t_two_tailed_p(t, dof) * T::of(0.5);
    if t >= T::zero() {
        T::one() - tail
    } else {
        tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_stat: f64,
    pub p_value: f64,
    pub corrected_p: f64,
    pub significant_at_0_05: bool,
    pub n: usize,
}

/// Paired two-tailed t-test of `a - b` with Bonferroni correction over
/// `num_comparisons` simultaneous tests.
pub fn paired_ttest(a: &[f64], b: &[f64], num_comparisons: usize) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(invalid(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(invalid("paired t-test needs at least two pairs"));
    }
    if num_comparisons == 0 {
        return Err(invalid("num_comparisons must be at least 1"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let (t_stat, p_value) = if d.iter().all(|&v| v == 0.0) {
        (0.0, 1.0)
    } else if var == 0.0 {
        (f64::INFINITY.copysign(mean), 0.0)
    } else {
        let t = mean / (var.sqrt() / (n as f64).sqrt());
        (t, t_two_tailed_p(t, (n - 1) as f64).clamp(0.0, 1.0))
    };
    let corrected_p = (p_value * num_comparisons as f64).min(1.0);
    Ok(TTestResult { t_stat, p_value, corrected_p, significant_at_0_05: corrected_p < 0.05, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn gamma_values() {
        assert!(ln_gamma(1.0f64).abs() < 1e-14);
        assert!((ln_gamma(5.0f64) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5f64) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn table_values() {
        assert!((t_two_tailed_p(1.0f64, 1.0) - 0.5).abs() < 1e-3);
        assert!((t_two_tailed_p(2.262f64, 9.0) - 0.05).abs() < 1e-3);
        assert!((t_two_tailed_p(2.045f64, 29.0) - 0.05).abs() < 1e-3);
        assert!((t_cdf(1.0f64, 1.0) - 0.75).abs() < 1e-12);
        assert!((t_two_tailed_p(2.262f32, 9.0) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn matches_reference_cdf() {
        for dof in [1.0, 2.0, 3.5, 9.0, 29.0, 120.0] {
            let reference = StudentsT::new(0.0, 1.0, dof).unwrap();
            for i in -40..=40 {
                let t = i as f64 * 0.15;
                assert!((t_cdf(t, dof) - reference.cdf(t)).abs() < 1e-10, "dof {dof} t {t}");
            }
        }
    }

    #[test]
    fn ttest_conventions() {
        let r = paired_ttest(&[0.3, 0.4, 0.5], &[0.3, 0.4, 0.5], 5).unwrap();
        assert_eq!((r.t_stat, r.p_value, r.significant_at_0_05), (0.0, 1.0, false));
        let r = paired_ttest(&[2.0; 4], &[1.0; 4], 1).unwrap();
        assert_eq!((r.t_stat, r.p_value), (f64::INFINITY, 0.0));
        assert!(paired_ttest(&[1.0], &[0.0], 1).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[0.0], 1).is_err());
    }

    #[test]
    fn ttest_is_antisymmetric_and_corrected() {
        let a = [0.31, 0.45, 0.22, 0.61, 0.38, 0.27];
        let b = [0.28, 0.40, 0.25, 0.50, 0.30, 0.26];
        let ab = paired_ttest(&a, &b, 3).unwrap();
        let ba = paired_ttest(&b, &a, 3).unwrap();
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(ab.t_stat, -ba.t_stat);
        assert_eq!(ab.corrected_p, (ab.p_value * 3.0).min(1.0));
        let reference = StudentsT::new(0.0, 1.0, 5.0).unwrap();
        assert!((ab.p_value - 2.0 * (1.0 - reference.cdf(ab.t_stat.abs()))).abs() < 1e-10);
    }
}
