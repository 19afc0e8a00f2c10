//! Statistical primitives: Welch t-test, F-test, Benjamini–Hochberg,
//! order statistics, correlation and smoothing kernels.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("k = {k} out of range for {n} values")]
    RankOutOfRange { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Sample size, mean and unbiased variance, accumulated with Welford updates.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn from_iter<I: IntoIterator<Item = f64>>(it: I) -> Self {
        let mut m = Moments::default();
        for x in it {
            m.push(x);
        }
        m
    }

    /// Unbiased sample variance (0 for fewer than two points).
    pub fn var(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }
}

/// Two-sided Student-t tail probability `P(|T| ≥ |t|)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Welch's unequal-variance two-sample t-test.
pub fn welch_t_test(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    for s in [x, y] {
        if s.len() < 2 {
            return Err(StatsError::TooFewObservations { need: 2, got: s.len() });
        }
    }
    Ok(welch_from_moments(
        &Moments::from_iter(x.iter().copied()),
        &Moments::from_iter(y.iter().copied()),
    ))
}

/// Welch test from precomputed moments. Both samples need `n ≥ 2`.
pub fn welch_from_moments(x: &Moments, y: &Moments) -> TestResult {
    let vx = x.var() / x.n as f64;
    let vy = y.var() / y.n as f64;
    let diff = x.mean - y.mean;
    let se2 = vx + vy;
    if se2 <= 0.0 {
        return if diff == 0.0 {
            TestResult { statistic: 0.0, p_value: 1.0 }
        } else {
            TestResult { statistic: diff.signum() * f64::INFINITY, p_value: 0.0 }
        };
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (vx * vx / (x.n - 1) as f64 + vy * vy / (y.n - 1) as f64);
    TestResult { statistic: t, p_value: student_t_two_sided(t, df) }
}

/// Two-sided F-test for equal variances. Degenerate zero-variance cases
/// return 1 when both variances vanish and 0 when only one does.
pub fn f_test_from_moments(x: &Moments, y: &Moments) -> TestResult {
    let (vx, vy) = (x.var(), y.var());
    if vx == 0.0 || vy == 0.0 {
        return if vx == vy {
            TestResult { statistic: 1.0, p_value: 1.0 }
        } else {
            TestResult { statistic: if vy == 0.0 { f64::INFINITY } else { 0.0 }, p_value: 0.0 }
        };
    }
    let f = vx / vy;
    let dist = FisherSnedecor::new((x.n - 1) as f64, (y.n - 1) as f64).expect("df positive");
    let lower = dist.cdf(f);
    let p = (2.0 * lower.min(1.0 - lower)).clamp(0.0, 1.0);
    TestResult { statistic: f, p_value: p }
}

/// Benjamini–Hochberg step-up. Hypotheses with p at or below the largest
/// passing order statistic are all rejected.
pub fn bh_reject(p_values: &[f64], q: f64) -> Vec<bool> {
    let m = p_values.len();
    if m == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut threshold = None;
    for (k, &p) in sorted.iter().enumerate().rev() {
        if p <= (k + 1) as f64 * q / m as f64 {
            threshold = Some(p);
            break;
        }
    }
    match threshold {
        Some(t) => p_values.iter().map(|&p| p <= t).collect(),
        None => vec![false; m],
    }
}

/// Exact k-th order statistic (1-based), no interpolation.
pub fn kth_smallest(values: &[f64], k: usize) -> Result<f64, StatsError> {
    if k == 0 || k > values.len() {
        return Err(StatsError::RankOutOfRange { k, n: values.len() });
    }
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Pearson correlation; 0 when either input is constant.
pub fn pearson<I, J>(x: I, y: J) -> f64
where
    I: IntoIterator<Item = f64>,
    J: IntoIterator<Item = f64>,
{
    let (mut n, mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.into_iter().zip(y) {
        n += 1.0;
        let dx = a - mx;
        let dy = b - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (a - mx);
        syy += dy * (b - my);
        sxy += dx * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Gaussian,
    Triangular,
    Uniform,
}

impl Kernel {
    /// Kernel value at `u ≥ 0`, normalized so that `K(0) = 1`.
    pub fn eval(self, u: f64) -> f64 {
        if !u.is_finite() {
            return 0.0;
        }
        let u = u.abs();
        match self {
            Kernel::Gaussian => (-0.5 * u * u).exp(),
            Kernel::Triangular => (1.0 - u).max(0.0),
            Kernel::Uniform => {
                if u <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_equal_samples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = welch_t_test(&x, &x).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn welch_degenerate() {
        let r = welch_t_test(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = welch_t_test(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(r.statistic.is_infinite() && r.statistic < 0.0);
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn student_tail_closed_forms() {
        // df = 1 is Cauchy: P(|T| > t) = 1 - 2 atan(t) / pi.
        for &t in &[0.1, 1.0, 3.0, 25.0] {
            let want = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert!((student_t_two_sided(t, 1.0) - want).abs() < 1e-12);
        }
        // df = 2: P(|T| > t) = 1 - t / sqrt(t^2 + 2).
        for &t in &[0.5f64, 2.0, 9.0] {
            let want = 1.0 - t / (t * t + 2.0).sqrt();
            assert!((student_t_two_sided(t, 2.0) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_reject(&[0.0, 0.0, 0.0], 0.05), vec![true; 3]);
        assert_eq!(bh_reject(&[0.01, 0.02, 0.04], 0.05), vec![true; 3]);
        assert_eq!(bh_reject(&[0.06], 0.05), vec![false]);
        assert!(bh_reject(&[], 0.05).is_empty());
        assert_eq!(bh_reject(&[0.001, 0.04, 0.9], 0.05), vec![true, false, false]);
        // Step-up: 0.02 fails its own rank-1 cutoff but is rescued by rank 2.
        assert_eq!(bh_reject(&[0.03, 0.02], 0.05), vec![true, true]);
    }

    #[test]
    fn kth_examples() {
        assert_eq!(kth_smallest(&[3.0, 1.0, 2.0], 2).unwrap(), 2.0);
        assert_eq!(kth_smallest(&[5.0], 1).unwrap(), 5.0);
        assert!(kth_smallest(&[5.0], 0).is_err());
        assert!(kth_smallest(&[5.0], 2).is_err());
    }

    #[test]
    fn kernels() {
        assert_eq!(Kernel::Gaussian.eval(0.0), 1.0);
        assert!((Kernel::Gaussian.eval(1.0) - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert_eq!(Kernel::Triangular.eval(0.25), 0.75);
        assert_eq!(Kernel::Uniform.eval(1.0), 1.0);
        assert_eq!(Kernel::Uniform.eval(1.5), 0.0);
        for k in [Kernel::Gaussian, Kernel::Triangular, Kernel::Uniform] {
            assert_eq!(k.eval(f64::INFINITY), 0.0);
        }
    }

    #[test]
    fn pearson_basic() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(x, [2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(x, [8.0, 6.0, 4.0, 2.0]) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(x, [1.0; 4]), 0.0);
    }

    #[test]
    fn f_test_symmetry() {
        let a = Moments::from_iter([1.0, 2.0, 4.0, 8.0, 3.0]);
        let b = Moments::from_iter([0.5, 0.7, 0.2, 0.9]);
        let p1 = f_test_from_moments(&a, &b).p_value;
        let p2 = f_test_from_moments(&b, &a).p_value;
        assert!((p1 - p2).abs() < 1e-12);
        assert!(p1 > 0.0 && p1 < 1.0);
    }
}
