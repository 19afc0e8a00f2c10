use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::conformal_core::{coverage_lower_bound, make_interval, Interval};
use crate::rng::{stream_rng, streams};

/// One (method, test intervention, target) evaluation. The interval is
/// `center ± radius` and `y` is the observed outcome it is judged against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub seed: u64,
    pub method: Method,
    pub test_intervention: usize,
    pub gene: usize,
    pub center: f64,
    pub radius: f64,
    pub covered: bool,
    /// The conformal rank was attainable (`k ≤ n`).
    pub feasible: bool,
    pub n_cal: usize,
    pub delta_true: Option<f64>,
    pub delta_hat: Option<f64>,
    pub delta_inject: Option<f64>,
    pub y: f64,
}

impl EvaluationRecord {
    pub fn interval(&self) -> Interval {
        make_interval(self.center, self.radius)
    }

    pub fn width(&self) -> f64 {
        2.0 * self.radius
    }
}

/// Aggregates for one method (and one injected δ in ablations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub delta_inject: Option<f64>,
    pub n_records: usize,
    /// Headline coverage: `coverage_feasible` for methods reported over
    /// feasible evaluations only, `coverage_all` otherwise.
    pub coverage: f64,
    /// Infinite intervals count as covered.
    pub coverage_all: f64,
    pub coverage_feasible: Option<f64>,
    /// Mean width over finite intervals.
    pub mean_width: Option<f64>,
    pub mean_n_cal: f64,
    pub mean_delta_hat: Option<f64>,
    pub mean_delta_true: Option<f64>,
    pub feasible_frac: f64,
    pub coverage_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<MethodSummary>,
    pub records: Vec<EvaluationRecord>,
    /// Pairs that could not be evaluated (e.g. nothing to resample from).
    pub skipped: usize,
    pub feasible_only: Vec<Method>,
}

fn mean_opt<I: Iterator<Item = f64>>(it: I) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in it {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

type GroupKey = (Option<u64>, Method);

fn group_key(r: &EvaluationRecord) -> GroupKey {
    (r.delta_inject.map(f64::to_bits), r.method)
}

fn groups(records: &[EvaluationRecord]) -> BTreeMap<GroupKey, Vec<usize>> {
    let mut g: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
    for (k, r) in records.iter().enumerate() {
        g.entry(group_key(r)).or_default().push(k);
    }
    g
}

fn coverage_of<'a, I>(it: I, feasible_only: bool) -> Option<f64>
where
    I: Iterator<Item = &'a EvaluationRecord>,
{
    mean_opt(it.filter(|r| !feasible_only || r.feasible).map(|r| f64::from(u8::from(r.covered))))
}

impl Report {
    /// Aggregates records grouped by (injected δ, method). Methods listed in
    /// `feasible_only` report coverage over feasible evaluations.
    pub fn from_records(records: Vec<EvaluationRecord>, skipped: usize, feasible_only: Vec<Method>) -> Self {
        let rows = groups(&records)
            .into_iter()
            .map(|((_, method), idx)| {
                let rs: Vec<&EvaluationRecord> = idx.iter().map(|&k| &records[k]).collect();
                let coverage_all = coverage_of(rs.iter().copied(), false).unwrap_or(f64::NAN);
                let coverage_feasible = coverage_of(rs.iter().copied(), true);
                let coverage = if feasible_only.contains(&method) {
                    coverage_feasible.unwrap_or(f64::NAN)
                } else {
                    coverage_all
                };
                MethodSummary {
                    method,
                    delta_inject: rs[0].delta_inject,
                    n_records: rs.len(),
                    coverage,
                    coverage_all,
                    coverage_feasible,
                    mean_width: mean_opt(rs.iter().filter(|r| r.radius.is_finite()).map(|r| r.width())),
                    mean_n_cal: mean_opt(rs.iter().map(|r| r.n_cal as f64)).unwrap_or(0.0),
                    mean_delta_hat: mean_opt(rs.iter().filter_map(|r| r.delta_hat)),
                    mean_delta_true: mean_opt(rs.iter().filter_map(|r| r.delta_true)),
                    feasible_frac: mean_opt(rs.iter().map(|r| f64::from(u8::from(r.feasible)))).unwrap_or(0.0),
                    coverage_sd: None,
                }
            })
            .collect();
        Report { rows, records, skipped, feasible_only }
    }

    pub fn row(&self, method: Method, delta_inject: Option<f64>) -> Option<&MethodSummary> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.delta_inject.map(f64::to_bits) == delta_inject.map(f64::to_bits))
    }

    /// Fills `coverage_sd` from `b` bootstrap replicates.
    pub fn attach_bootstrap(&mut self, b: usize, seed: u64) {
        let sds = bootstrap_stability(&self.records, b, seed, &self.feasible_only);
        for row in &mut self.rows {
            row.coverage_sd = sds.get(&(row.delta_inject.map(f64::to_bits), row.method)).copied();
        }
    }
}

/// Standard deviation of the headline coverage across `b` bootstrap
/// resamples of each (δ, method) group's records.
pub fn bootstrap_stability(
    records: &[EvaluationRecord],
    b: usize,
    seed: u64,
    feasible_only: &[Method],
) -> BTreeMap<(Option<u64>, Method), f64> {
    assert!(b >= 2, "bootstrap needs at least two replicates");
    let mut rng = stream_rng(seed, streams::BOOTSTRAP);
    let mut out = BTreeMap::new();
    for (key, idx) in groups(records) {
        let feas = feasible_only.contains(&key.1);
        let n = idx.len();
        let mut covs = Vec::with_capacity(b);
        for _ in 0..b {
            let (mut hit, mut tot) = (0usize, 0usize);
            for _ in 0..n {
                let r = &records[idx[rng.random_range(0..n)]];
                if feas && !r.feasible {
                    continue;
                }
                tot += 1;
                hit += usize::from(r.covered);
            }
            if tot > 0 {
                covs.push(hit as f64 / tot as f64);
            }
        }
        if covs.len() >= 2 {
            let m = covs.iter().sum::<f64>() / covs.len() as f64;
            let var = covs.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (covs.len() - 1) as f64;
            out.insert(key, var.sqrt());
        }
    }
    out
}

/// Empirical coverage minus the theoretical lower bound at the group's mean
/// realized contamination and mean calibration size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub method: Method,
    pub delta_inject: Option<f64>,
    pub coverage: f64,
    pub mean_delta_true: f64,
    pub mean_n: f64,
    pub bound: f64,
    pub gap: f64,
}

pub fn bound_gap(report: &Report, alpha: f64) -> Vec<GapRow> {
    report
        .rows
        .iter()
        .map(|row| {
            let delta = row.mean_delta_true.unwrap_or(0.0);
            let n = row.mean_n_cal.round() as usize;
            let bound = coverage_lower_bound(alpha, delta, n);
            GapRow {
                method: row.method,
                delta_inject: row.delta_inject,
                coverage: row.coverage,
                mean_delta_true: delta,
                mean_n: row.mean_n_cal,
                bound,
                gap: row.coverage - bound,
            }
        })
        .collect()
}
