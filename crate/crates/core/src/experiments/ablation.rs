use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Method};
use super::main_run::{pooled_selection, truth_selection, PairContext};
use super::report::{EvaluationRecord, Report};
use super::{choose_interventions, gen_scores, split_interventions, ExperimentError};
use crate::conformal_core::{calibrate, conformal_quantile, g_bound, InfeasiblePolicy};
use crate::descendant_discovery::ZMatrix;
use crate::graph_sem::Dag;
use crate::rng::{stream_rng, streams};

/// Controlled-contamination ablation over `cfg.delta_inject`.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Report, ExperimentError> {
    cfg.validate()?;
    if cfg.delta_inject.is_empty() {
        return Err(ExperimentError::Invalid("ablation needs a non-empty delta_inject list".into()));
    }
    if cfg.methods.contains(&Method::Weighted) {
        return Err(ExperimentError::Invalid("the weighted method is not part of the ablation".into()));
    }
    let per_seed: Vec<(Vec<EvaluationRecord>, usize)> =
        cfg.seeds.par_iter().map(|&s| run_ablation_seed(cfg, s)).collect::<Result<_, _>>()?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for (r, s) in per_seed {
        records.extend(r);
        skipped += s;
    }
    Ok(Report::from_records(records, skipped, Vec::new()))
}

/// One seed: starts from the truly unaffected calibration set of each
/// (test, target) pair and swaps `round(δ·n)` of its scores for scores drawn
/// with replacement from the seed's truly affected calibration pairs.
/// Returns the records and the number of skipped (pair, δ) cells.
pub fn run_ablation_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<EvaluationRecord>, usize), ExperimentError> {
    let dag = Dag::gen_er(cfg.p, cfg.d_avg, cfg.w_lo, cfg.w_hi, seed)?;
    let desc = dag.descendant_sets();
    let all = choose_interventions(cfg.p, cfg.n_interventions, seed);
    let (_, cal, test) = split_interventions(&all, &cfg.split, seed);
    let z_true = ZMatrix::from_descendants(cfg.p, &all, &desc);
    let scores = gen_scores(&z_true, &cfg.score_model, seed);

    let mut affected_pool = Vec::new();
    for &a in &cal {
        for i in 0..cfg.p {
            if z_true.affected(a, i) {
                affected_pool.push(scores.get(a, i));
            }
        }
    }

    let mut pairs = Vec::new();
    for &a_star in &test {
        for gene in 0..cfg.p {
            if gene != a_star && !z_true.affected(a_star, gene) {
                pairs.push((a_star, gene));
            }
        }
    }

    let mut out = Vec::new();
    let mut skipped = 0;
    for (di, &delta) in cfg.delta_inject.iter().enumerate() {
        let mut rng = stream_rng(seed, streams::CONTAMINATION_BASE + di as u64);
        for &(a_star, gene) in &pairs {
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
            let good = truth_selection(&z_true, gene, &cal);
            let n = good.n;
            let r = (delta * n as f64).round() as usize;
            if r > 0 && affected_pool.is_empty() {
                skipped += 1;
                continue;
            }
            let mut contaminated: Vec<f64> = good.selected.iter().map(|&a| score_of(a)).collect();
            if r > 0 {
                for pos in sample(&mut rng, n, r) {
                    contaminated[pos] = affected_pool[rng.random_range(0..affected_pool.len())];
                }
            }
            let realized = if n == 0 { 0.0 } else { r as f64 / n as f64 };
            for &m in &cfg.methods {
                let mut rec = match m {
                    Method::Oracle => ctx.record(m, &good, cfg.alpha, InfeasiblePolicy::Infinite, None),
                    Method::Pooled => ctx.record(m, &pooled_selection(&z_true, gene, &cal), cfg.alpha, InfeasiblePolicy::Infinite, None),
                    Method::Estimated => {
                        let q = conformal_quantile(&contaminated, cfg.alpha);
                        ctx.finish(m, q, q.is_finite(), n, Some(realized), Some(delta))
                    }
                    Method::Corrected => {
                        let alpha_prime = cfg.alpha - g_bound(delta, n);
                        let c = calibrate(&contaminated, alpha_prime, cfg.infeasible);
                        ctx.finish(m, c.q, c.rank_feasible, n, Some(realized), Some(delta))
                    }
                    Method::Weighted => unreachable!("rejected above"),
                };
                rec.delta_inject = Some(delta);
                out.push(rec);
            }
        }
    }
    Ok((out, skipped))
}
