use std::collections::BTreeMap;

use log::debug;
use rayon::prelude::*;

use super::config::{DeltaHatRule, ExperimentConfig, Method};
use super::report::{EvaluationRecord, Report};
use super::{choose_interventions, gen_scores, split_interventions, ExperimentError, ScoreTable};
use crate::affected_sets::{compute_affected_sets, AffectedSets};
use crate::conformal_core::{calibrate, corrected_alpha, CalibrationSelection, InfeasiblePolicy};
use crate::descendant_discovery::{classification_metrics, intersect_descendants, select_calibration, ZMatrix};
use crate::graph_sem::{Dag, InterventionalDataset};
use crate::local_icp::{expand_frontier, kernel_weight, weighted_conformal_quantile, DistanceMap};

/// Runs every seed (in parallel) and aggregates in seed order.
pub fn run_main(cfg: &ExperimentConfig) -> Result<Report, ExperimentError> {
    cfg.validate()?;
    let per_seed: Vec<Vec<EvaluationRecord>> =
        cfg.seeds.par_iter().map(|&s| run_main_seed(cfg, s)).collect::<Result<_, _>>()?;
    Ok(Report::from_records(per_seed.into_iter().flatten().collect(), 0, Vec::new()))
}

pub(crate) struct PairContext<'a> {
    pub alpha: f64,
    pub policy: InfeasiblePolicy,
    pub seed: u64,
    pub test: usize,
    pub gene: usize,
    pub y: f64,
    pub scores: &'a dyn Fn(usize) -> f64,
}

impl PairContext<'_> {
    /// Calibrates on the selected interventions' scores at level `alpha` and
    /// judges the test outcome.
    pub fn record(
        &self,
        method: Method,
        sel: &CalibrationSelection,
        alpha: f64,
        policy: InfeasiblePolicy,
        delta_hat: Option<f64>,
    ) -> EvaluationRecord {
        let cal: Vec<f64> = sel.selected.iter().map(|&a| (self.scores)(a)).collect();
        let c = calibrate(&cal, alpha, policy);
        self.finish(method, c.q, c.rank_feasible, sel.n, sel.delta, delta_hat)
    }

    pub fn finish(
        &self,
        method: Method,
        q: f64,
        feasible: bool,
        n_cal: usize,
        delta_true: Option<f64>,
        delta_hat: Option<f64>,
    ) -> EvaluationRecord {
        let radius = q.max(0.0);
        EvaluationRecord {
            seed: self.seed,
            method,
            test_intervention: self.test,
            gene: self.gene,
            center: 0.0,
            radius,
            covered: !radius.is_finite() || self.y.abs() <= radius,
            feasible,
            n_cal,
            delta_true,
            delta_hat,
            delta_inject: None,
            y: self.y,
        }
    }

    pub fn corrected(&self, sel: &CalibrationSelection, delta_hat: f64) -> EvaluationRecord {
        let level = corrected_alpha(self.alpha, delta_hat, sel.n);
        self.record(Method::Corrected, sel, level.alpha_prime, self.policy, Some(delta_hat))
    }
}

/// Self-consistency estimate: share of selected interventions whose raw
/// affected set still contains the target.
pub(crate) fn self_consistency(sel: &CalibrationSelection, raw: &AffectedSets, gene: usize) -> f64 {
    if sel.n == 0 {
        return 0.0;
    }
    let hits = sel.selected.iter().filter(|&&a| raw.get(a).is_some_and(|s| s.contains(&gene))).count();
    hits as f64 / sel.n as f64
}

pub(crate) fn estimate_delta(
    rule: DeltaHatRule,
    sel: &CalibrationSelection,
    raw: &AffectedSets,
    z_hat: &ZMatrix,
    z_true: &ZMatrix,
    gene: usize,
    pool: &[usize],
) -> f64 {
    match rule {
        DeltaHatRule::Fixed { value } => value,
        DeltaHatRule::SelfConsistency => self_consistency(sel, raw, gene),
        DeltaHatRule::OraclePlugin => {
            classification_metrics(z_hat, z_true, gene, pool).map_or(0.0, |m| m.delta_plugin)
        }
    }
}

pub(crate) fn truth_selection(z_true: &ZMatrix, gene: usize, pool: &[usize]) -> CalibrationSelection {
    let sel: Vec<usize> = pool.iter().copied().filter(|&a| !z_true.affected(a, gene)).collect();
    let m = sel.len();
    CalibrationSelection::new(sel, Some(m))
}

pub(crate) fn pooled_selection(z_true: &ZMatrix, gene: usize, pool: &[usize]) -> CalibrationSelection {
    let good = pool.iter().filter(|&&a| !z_true.affected(a, gene)).count();
    CalibrationSelection::new(pool.to_vec(), Some(good))
}

/// One seed of the main synthetic experiment.
pub fn run_main_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<EvaluationRecord>, ExperimentError> {
    let dag = Dag::gen_er(cfg.p, cfg.d_avg, cfg.w_lo, cfg.w_hi, seed)?;
    let desc = dag.descendant_sets();
    let all = choose_interventions(cfg.p, cfg.n_interventions, seed);
    let (train, cal, test) = split_interventions(&all, &cfg.split, seed);
    let mut discovery: Vec<usize> = train.iter().chain(&cal).copied().collect();
    discovery.sort_unstable();

    // Test interventions stay out of discovery; their samples are never drawn.
    let data = InterventionalDataset::simulate(&dag, cfg.n_obs, cfg.n_per_intervention, &discovery, seed);
    let raw = compute_affected_sets(&data, cfg.q_fdr, cfg.deg_score)?;
    let z_hat = ZMatrix::from_sets(cfg.p, &discovery, &intersect_descendants(&raw));
    let z_true = ZMatrix::from_descendants(cfg.p, &all, &desc);
    let scores: ScoreTable = gen_scores(&z_true, &cfg.score_model, seed);

    let distances: BTreeMap<usize, DistanceMap> = if cfg.methods.contains(&Method::Weighted) {
        (0..cfg.p)
            .into_par_iter()
            .map(|i| (i, expand_frontier(&data, i, cfg.icp_depth, &cfg.icp)))
            .collect()
    } else {
        BTreeMap::new()
    };

    let mut out = Vec::new();
    for &a_star in &test {
        for gene in 0..cfg.p {
            if gene == a_star || z_true.affected(a_star, gene) {
                continue;
            }
            let score_of = |a: usize| scores.get(a, gene);
            let ctx = PairContext {
                alpha: cfg.alpha,
                policy: cfg.infeasible,
                seed,
                test: a_star,
                gene,
                y: scores.get(a_star, gene),
                scores: &score_of,
            };
            let est = select_calibration(&z_hat, gene, a_star, &cal, Some(&z_true))?;
            let delta_hat = estimate_delta(cfg.delta_hat, &est, &raw, &z_hat, &z_true, gene, &cal);
            for &m in &cfg.methods {
                let rec = match m {
                    Method::Oracle => ctx.record(m, &truth_selection(&z_true, gene, &cal), cfg.alpha, InfeasiblePolicy::Infinite, None),
                    Method::Estimated => ctx.record(m, &est, cfg.alpha, InfeasiblePolicy::Infinite, Some(delta_hat)),
                    Method::Pooled => ctx.record(m, &pooled_selection(&z_true, gene, &cal), cfg.alpha, InfeasiblePolicy::Infinite, None),
                    Method::Corrected => ctx.corrected(&est, delta_hat),
                    Method::Weighted => {
                        let d = &distances[&gene];
                        let d_star = d.dist(a_star);
                        let weights: Vec<f64> = cal
                            .iter()
                            .map(|&a| {
                                let da = d.dist(a);
                                let diff = if da.is_infinite() && d_star.is_infinite() { 0.0 } else { (da - d_star).abs() };
                                kernel_weight(diff, &cfg.kernel)
                            })
                            .collect();
                        let cal_scores: Vec<f64> = cal.iter().map(|&a| score_of(a)).collect();
                        let q = weighted_conformal_quantile(&cal_scores, &weights, 1.0, cfg.alpha);
                        let pooled = pooled_selection(&z_true, gene, &cal);
                        ctx.finish(m, q, q.is_finite(), cal.len(), pooled.delta, None)
                    }
                };
                out.push(rec);
            }
        }
    }
    debug!("seed {seed}: {} records, {} edges", out.len(), dag.edges().len());
    Ok(out)
}
