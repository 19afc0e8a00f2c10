use std::collections::HashMap;

use log::info;
use rand::seq::SliceRandom;

use super::config::{Method, RealConfig, SplitFractions};
use super::main_run::{estimate_delta, pooled_selection, truth_selection, PairContext};
use super::report::{EvaluationRecord, Report};
use super::{split_sizes, ExperimentError};
use crate::conformal_core::InfeasiblePolicy;
use crate::descendant_discovery::{intersect_descendants, select_calibration, ZMatrix};
use crate::ingest::{proxy_affected_sets, PerturbMatrix};
use crate::rng::{stream_rng, streams};

/// Train/cal/test split of `0..n` where `forced` always lands in test. The
/// test part is topped up at random to its [`split_sizes`] length; the
/// remaining items fill train, then cal. Parts are returned sorted.
pub fn split_with_forced_test(
    n: usize,
    forced: &[usize],
    f: &SplitFractions,
    seed: u64,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (tr, _, te) = split_sizes(n, f);
    let mut others: Vec<usize> = (0..n).filter(|k| !forced.contains(k)).collect();
    others.shuffle(&mut stream_rng(seed, streams::SPLIT));
    let extra = te.saturating_sub(forced.len()).min(others.len());
    let mut test: Vec<usize> = forced.to_vec();
    test.extend(others.drain(..extra));
    let tr = tr.min(others.len());
    let mut cal = others.split_off(tr);
    let mut train = others;
    train.sort_unstable();
    cal.sort_unstable();
    test.sort_unstable();
    (train, cal, test)
}

/// Real-data pipeline on an LFC matrix. Proxy truth is the top `top_frac`
/// genes by |LFC| per perturbation; the same sets over train and cal
/// perturbations feed descendant discovery. Scores are `|LFC|` (a constant
/// zero predictor). Corrected coverage is reported over feasible evaluations.
pub fn run_real(m: &PerturbMatrix, cfg: &RealConfig) -> Result<Report, ExperimentError> {
    cfg.validate()?;
    let n = m.n_perturbations();
    if n < 3 {
        return Err(ExperimentError::Invalid(format!("need at least 3 perturbations, found {n}")));
    }
    let forced: Vec<usize> = cfg
        .test_perturbations
        .iter()
        .map(|name| {
            m.perturbation_index(name)
                .ok_or_else(|| ExperimentError::Invalid(format!("test perturbation '{name}' not in data")))
        })
        .collect::<Result<_, _>>()?;
    let p = m.n_genes();
    let nodes = m.perturbation_nodes();
    let index_of: HashMap<usize, usize> = nodes.iter().enumerate().map(|(j, &a)| (a, j)).collect();
    let proxy = proxy_affected_sets(m, cfg.top_frac);
    let z_true = ZMatrix::from_sets(p, &nodes, proxy.sets());

    let mut records = Vec::new();
    for &seed in &cfg.seeds {
        let (train, cal, test) = split_with_forced_test(n, &forced, &cfg.split, seed);
        if cal.is_empty() || test.is_empty() {
            return Err(ExperimentError::Invalid(format!(
                "split of {n} perturbations leaves {} calibration and {} test",
                cal.len(),
                test.len()
            )));
        }
        let cal_nodes: Vec<usize> = cal.iter().map(|&j| nodes[j]).collect();
        let mut disc_nodes: Vec<usize> = train.iter().chain(&cal).map(|&j| nodes[j]).collect();
        disc_nodes.sort_unstable();
        let raw = proxy.restrict(&disc_nodes);
        let z_hat = ZMatrix::from_sets(p, &disc_nodes, &intersect_descendants(&raw));

        for &t in &test {
            let a_star = nodes[t];
            for gene in 0..p {
                if gene == a_star || z_true.affected(a_star, gene) {
                    continue;
                }
                let score_of = |a: usize| m.lfc[[index_of[&a], gene]].abs();
                let ctx = PairContext {
                    alpha: cfg.alpha,
                    policy: cfg.infeasible,
                    seed,
                    test: t,
                    gene,
                    y: m.lfc[[t, gene]].abs(),
                    scores: &score_of,
                };
                let est = select_calibration(&z_hat, gene, a_star, &cal_nodes, Some(&z_true))?;
                let delta_hat = estimate_delta(cfg.delta_hat, &est, &raw, &z_hat, &z_true, gene, &cal_nodes);
                for &method in &cfg.methods {
                    let rec: EvaluationRecord = match method {
                        Method::Oracle => ctx.record(method, &truth_selection(&z_true, gene, &cal_nodes), cfg.alpha, InfeasiblePolicy::Infinite, None),
                        Method::Estimated => ctx.record(method, &est, cfg.alpha, InfeasiblePolicy::Infinite, Some(delta_hat)),
                        Method::Pooled => ctx.record(method, &pooled_selection(&z_true, gene, &cal_nodes), cfg.alpha, InfeasiblePolicy::Infinite, None),
                        Method::Corrected => ctx.corrected(&est, delta_hat),
                        Method::Weighted => unreachable!("rejected by validation"),
                    };
                    records.push(rec);
                }
            }
        }
        info!("real split seed {seed}: test perturbations {:?}", test.iter().map(|&t| &m.perturbations[t]).collect::<Vec<_>>());
    }
    let mut report = Report::from_records(records, 0, vec![Method::Corrected]);
    if cfg.bootstrap >= 2 {
        report.attach_bootstrap(cfg.bootstrap, cfg.seeds[0]);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_split() {
        let f = SplitFractions::default();
        let (tr, ca, te) = split_with_forced_test(50, &[47, 48, 49], &f, 2);
        assert_eq!((tr.len(), ca.len(), te.len()), (5, 40, 5));
        assert!([47, 48, 49].iter().all(|k| te.contains(k)));
        let (tr, ca, te) = split_with_forced_test(10, &[1, 2, 3], &f, 2);
        assert_eq!(te, vec![1, 2, 3]);
        assert_eq!(tr.len(), 1);
        assert_eq!(ca.len(), 6);
    }
}
