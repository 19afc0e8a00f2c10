//! Local invariant causal prediction around a target gene, distance maps and
//! kernel-weighted conformal calibration.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::conformal_core::RANK_TOL;
use crate::graph_sem::InterventionalDataset;
use crate::stats_core::{f_test_from_moments, pearson, welch_from_moments, Kernel, Moments};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default)]
    pub kernel: Kernel,
    pub h: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { kernel: Kernel::Gaussian, h: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpParams {
    pub alpha_icp: f64,
    /// Candidate pool size from correlation screening.
    pub k: usize,
    pub s_max: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams { alpha_icp: 0.05, k: 10, s_max: 2 }
    }
}

/// The `k` variables other than `g` with the largest absolute correlation to
/// column `g`, ties broken by lower index.
pub fn screen_candidates(obs: &Array2<f64>, g: usize, k: usize) -> Vec<usize> {
    let y = obs.column(g);
    let mut scored: Vec<(f64, usize)> = (0..obs.ncols())
        .filter(|&j| j != g)
        .map(|j| (pearson(obs.column(j).iter().copied(), y.iter().copied()).abs(), j))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Solves the small symmetric system `a x = b` by Gaussian elimination with
/// partial pivoting. Returns `None` when the system is numerically singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Pooled least squares of `g` on `subset` (with intercept), then residual
/// moments per environment. `None` for a singular design.
fn residual_moments(envs: &[ArrayView2<f64>], g: usize, subset: &[usize]) -> Option<Vec<Moments>> {
    let d = subset.len() + 1;
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![0.0; d];
    let mut x = vec![0.0; d];
    for env in envs {
        for row in env.rows() {
            x[0] = 1.0;
            for (k, &j) in subset.iter().enumerate() {
                x[k + 1] = row[j];
            }
            for r in 0..d {
                xty[r] += x[r] * row[g];
                for c in 0..d {
                    xtx[r][c] += x[r] * x[c];
                }
            }
        }
    }
    let beta = solve(xtx, xty)?;
    Some(
        envs.iter()
            .map(|env| {
                Moments::from_iter(env.rows().into_iter().map(|row| {
                    let fit = beta[0] + subset.iter().enumerate().map(|(k, &j)| beta[k + 1] * row[j]).sum::<f64>();
                    row[g] - fit
                }))
            })
            .collect(),
    )
}

fn subsets_up_to(pool: &[usize], s_max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![(Vec::new(), 0usize)];
    for _ in 0..s_max.min(pool.len()) {
        let mut next = Vec::new();
        for (s, start) in frontier {
            for k in start..pool.len() {
                let mut t: Vec<usize> = s.clone();
                t.push(pool[k]);
                out.push(t.clone());
                next.push((t, k + 1));
            }
        }
        frontier = next;
    }
    out
}

/// Whether residuals look invariant: every environment pair passes a Welch
/// test of means and an F-test of variances at the Bonferroni level.
fn invariant(moments: &[Moments], min_n: usize, alpha: f64) -> bool {
    let usable: Vec<&Moments> = moments.iter().filter(|m| m.n >= min_n).collect();
    let pairs = usable.len() * usable.len().saturating_sub(1) / 2;
    if pairs == 0 {
        return true;
    }
    let level = alpha / (2.0 * pairs as f64);
    for (k, a) in usable.iter().enumerate() {
        for b in &usable[k + 1..] {
            if welch_from_moments(a, b).p_value <= level || f_test_from_moments(a, b).p_value <= level {
                return false;
            }
        }
    }
    true
}

/// Intersection of all invariant subsets of `pool` with at most `s_max`
/// members. Environments are the observational arm plus every intervention
/// not on `g`. Empty when no subset is accepted.
pub fn icp_parents(data: &InterventionalDataset, g: usize, pool: &[usize], alpha_icp: f64, s_max: usize) -> BTreeSet<usize> {
    let mut envs: Vec<ArrayView2<f64>> = vec![data.obs().view()];
    envs.extend(data.per_intervention().iter().filter(|(&a, _)| a != g).map(|(_, m)| m.view()));
    let pool: Vec<usize> = pool.iter().copied().filter(|&j| j != g).collect();
    let mut accepted: Option<BTreeSet<usize>> = None;
    for s in subsets_up_to(&pool, s_max) {
        let Some(moments) = residual_moments(&envs, g, &s) else {
            continue;
        };
        if invariant(&moments, s.len() + 2, alpha_icp) {
            let set: BTreeSet<usize> = s.into_iter().collect();
            accepted = Some(match accepted {
                None => set,
                Some(acc) => acc.intersection(&set).copied().collect(),
            });
            if accepted.as_ref().is_some_and(BTreeSet::is_empty) {
                break;
            }
        }
    }
    accepted.unwrap_or_default()
}

/// Estimated graph distance from each node to a target, up to depth `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMap {
    pub target: usize,
    pub depth: usize,
    d: BTreeMap<usize, usize>,
}

impl DistanceMap {
    pub fn new(target: usize, depth: usize, d: BTreeMap<usize, usize>) -> Self {
        DistanceMap { target, depth, d }
    }

    /// Finite distance, or `None` for ∞.
    pub fn get(&self, a: usize) -> Option<usize> {
        self.d.get(&a).copied()
    }

    /// Distance as a real number, ∞ when unreached.
    pub fn dist(&self, a: usize) -> f64 {
        self.get(a).map_or(f64::INFINITY, |v| v as f64)
    }

    pub fn reached(&self) -> &BTreeMap<usize, usize> {
        &self.d
    }

    /// `intervention,target,distance` rows for the given interventions.
    pub fn write_csv<W: Write>(&self, w: W, interventions: &[usize]) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["intervention", "target", "distance"])?;
        for &a in interventions {
            let d = self.get(a).map_or_else(|| "inf".to_string(), |v| v.to_string());
            wr.write_record([a.to_string(), self.target.to_string(), d])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Breadth-first expansion through estimated parent sets, starting from the
/// target itself at distance 0.
pub fn expand_frontier_with<F>(target: usize, depth: usize, mut parents_of: F) -> DistanceMap
where
    F: FnMut(usize) -> BTreeSet<usize>,
{
    let mut d = BTreeMap::from([(target, 0usize)]);
    let mut newest = vec![target];
    for t in 1..=depth {
        let mut added = BTreeSet::new();
        for g in &newest {
            for pa in parents_of(*g) {
                if !d.contains_key(&pa) {
                    added.insert(pa);
                }
            }
        }
        for &a in &added {
            d.insert(a, t);
        }
        newest = added.into_iter().collect();
        if newest.is_empty() {
            break;
        }
    }
    DistanceMap { target, depth, d }
}

pub fn expand_frontier(data: &InterventionalDataset, target: usize, depth: usize, params: &IcpParams) -> DistanceMap {
    expand_frontier_with(target, depth, |g| {
        let pool = screen_candidates(data.obs(), g, params.k);
        icp_parents(data, g, &pool, params.alpha_icp, params.s_max)
    })
}

/// `K(d / h)`, 0 for an infinite distance.
pub fn kernel_weight(d: f64, cfg: &KernelConfig) -> f64 {
    if !d.is_finite() {
        return 0.0;
    }
    cfg.kernel.eval(d / cfg.h)
}

/// Weighted split-conformal quantile. The test point's weight sits on a
/// point mass at +∞; the result is the smallest calibration score whose
/// normalized cumulative weight reaches `1 - α`, else ∞.
pub fn weighted_conformal_quantile(scores: &[f64], weights: &[f64], test_weight: f64, alpha: f64) -> f64 {
    assert_eq!(scores.len(), weights.len(), "scores and weights differ in length");
    assert!(test_weight > 0.0, "test weight must be positive");
    let cal: f64 = weights.iter().sum();
    if cal <= 0.0 || alpha <= 0.0 {
        return f64::INFINITY;
    }
    let total = cal + test_weight;
    let n1 = scores.len() as f64 + 1.0;
    let target = n1 * (1.0 - alpha) - RANK_TOL;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut cum = 0.0;
    for &k in &idx {
        cum += weights[k];
        // Compare in rank units so equal weights reproduce the unweighted rank exactly.
        if cum / total * n1 >= target {
            return scores[k];
        }
    }
    f64::INFINITY
}
