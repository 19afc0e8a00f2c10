//! Split conformal quantiles, the contamination penalty and coverage bounds.

use serde::{Deserialize, Serialize};

use crate::stats_core::kth_smallest;

/// Guards `ceil` against representation error in `(n+1)(1-α)`, so that e.g.
/// `10 · 0.9` maps to rank 9 rather than 10.
pub(crate) const RANK_TOL: f64 = 1e-12;

/// Closed symmetric interval `[center - radius, center + radius]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub center: f64,
    pub radius: f64,
    pub feasible: bool,
}

impl Interval {
    pub fn contains(&self, y: f64) -> bool {
        !self.feasible || (y - self.center).abs() <= self.radius
    }

    pub fn width(&self) -> f64 {
        2.0 * self.radius
    }
}

pub fn make_interval(center: f64, q: f64) -> Interval {
    let radius = q.max(0.0);
    Interval { center, radius, feasible: radius.is_finite() }
}

/// `k = ⌈(n+1)(1-α)⌉`; `α ≤ 0` yields `n + 1` (the point at infinity).
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    if alpha <= 0.0 {
        return n + 1;
    }
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    ((x - RANK_TOL).ceil().max(1.0)) as usize
}

/// k-th smallest of `scores ∪ {∞}`.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> f64 {
    let k = conformal_rank(scores.len(), alpha);
    if k > scores.len() {
        f64::INFINITY
    } else {
        kth_smallest(scores, k).expect("rank within range")
    }
}

/// What to report when the requested rank exceeds the calibration size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    /// Infinite interval.
    #[default]
    Infinite,
    /// Largest calibration score (empty set still gives an infinite radius).
    ClipToMax,
}

/// Quantile plus whether the requested rank was attainable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibrated {
    pub q: f64,
    pub rank: usize,
    pub rank_feasible: bool,
}

pub fn calibrate(scores: &[f64], alpha: f64, policy: InfeasiblePolicy) -> Calibrated {
    let n = scores.len();
    let rank = conformal_rank(n, alpha);
    if rank <= n {
        return Calibrated { q: kth_smallest(scores, rank).expect("rank within range"), rank, rank_feasible: true };
    }
    let q = match policy {
        InfeasiblePolicy::ClipToMax if n > 0 => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        _ => f64::INFINITY,
    };
    Calibrated { q, rank, rank_feasible: false }
}

/// `g(δ, n) = δn / ((1-δ)n + 1)`.
pub fn g_bound(delta: f64, n: usize) -> f64 {
    let n = n as f64;
    delta * n / ((1.0 - delta) * n + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedLevel {
    pub alpha_prime: f64,
    pub feasible_hint: bool,
}

/// `α' = α - g(δ̂, n)`. The hint is false when `α' ≤ 0` or when the implied
/// rank exceeds `n`.
pub fn corrected_alpha(alpha: f64, delta_hat: f64, n: usize) -> CorrectedLevel {
    let alpha_prime = alpha - g_bound(delta_hat, n);
    let feasible_hint = alpha_prime > 0.0 && conformal_rank(n, alpha_prime) <= n;
    CorrectedLevel { alpha_prime, feasible_hint }
}

/// `max(0, 1 - α - g(δ, n))`.
pub fn coverage_lower_bound(alpha: f64, delta: f64, n: usize) -> f64 {
    (1.0 - alpha - g_bound(delta, n)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryParams {
    pub eps_fn: f64,
    pub eps_fp: f64,
    pub eps_cx: f64,
    pub u_bar: usize,
}

/// Expected-contamination bound under the recovery assumptions. A
/// non-positive denominator gives the vacuous bound 1.
pub fn recovery_delta_bound(pi0: f64, params: &RecoveryParams) -> f64 {
    let num = (1.0 - pi0) * params.eps_cx;
    let den = pi0 * (1.0 - params.u_bar as f64 * params.eps_fn) + num;
    if den <= 0.0 {
        return 1.0;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Selected calibration set for one (target, test) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSelection {
    pub selected: Vec<usize>,
    pub n: usize,
    /// Number of truly safe members, when the truth is known.
    pub m: Option<usize>,
    /// `(n - m) / n`, 0 for an empty selection.
    pub delta: Option<f64>,
}

impl CalibrationSelection {
    pub fn new(selected: Vec<usize>, m: Option<usize>) -> Self {
        let n = selected.len();
        if let Some(m) = m {
            assert!(m <= n, "good count {m} exceeds selection size {n}");
        }
        let delta = m.map(|m| if n == 0 { 0.0 } else { (n - m) as f64 / n as f64 });
        CalibrationSelection { selected, n, m, delta }
    }
}
