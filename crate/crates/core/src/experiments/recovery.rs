use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::affected_sets::AffectedSets;
use crate::conformal_core::RecoveryParams;
use crate::descendant_discovery::{intersect_descendants, upstream_sets};
use crate::graph_sem::{Dag, DescendantSets, Edge};
use crate::rng::{stream_rng, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    Chain,
    Tree,
    /// Alternates chains and trees.
    ChainAndTree,
}

/// Empirical checks of the descendant-recovery guarantees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub trials: usize,
    /// Interventions whose identified upstream set contains only true ancestors.
    pub superset_checks: usize,
    pub superset_failures: usize,
    pub superset_failure_rate: f64,
    /// Mean of `|desc(a)|·(|U(a)|+1)·ε_fn` over the checked interventions.
    pub union_bound: f64,
    /// Non-descendant pairs for which upstream diversity holds.
    pub diverse_pairs: usize,
    pub false_positives: usize,
    pub zhat_fpr: f64,
    /// Failure rate of one designated diversity witness per pair.
    pub eps_cx_estimate: f64,
}

impl RecoveryReport {
    pub fn superset_se(&self) -> f64 {
        binomial_se(self.superset_failure_rate, self.superset_checks)
    }

    pub fn fpr_se(&self) -> f64 {
        binomial_se(self.zhat_fpr, self.diverse_pairs)
    }
}

fn binomial_se(rate: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (rate * (1.0 - rate) / n as f64).sqrt()
    }
}

fn random_graph<R: Rng>(family: GraphFamily, trial: usize, rng: &mut R) -> Dag {
    let p = rng.random_range(3..=10);
    let chain = match family {
        GraphFamily::Chain => true,
        GraphFamily::Tree => false,
        GraphFamily::ChainAndTree => trial % 2 == 0,
    };
    let edges = (1..p)
        .map(|k| Edge { parent: if chain { k - 1 } else { rng.random_range(0..k) }, child: k, weight: 1.0 })
        .collect();
    Dag::from_edges(p, edges).expect("chains and trees are acyclic")
}

/// Corrupts true descendant sets: each descendant is missed with probability
/// `ε_fn`, each non-descendant (other than `a`) included with probability `ε_fp`.
fn corrupt<R: Rng>(desc: &DescendantSets, p: usize, params: &RecoveryParams, rng: &mut R) -> AffectedSets {
    let sets = (0..p)
        .map(|a| {
            let s: BTreeSet<usize> = (0..p)
                .filter(|&i| {
                    if i == a {
                        false
                    } else if desc.contains(a, i) {
                        rng.random::<f64>() >= params.eps_fn
                    } else {
                        rng.random::<f64>() < params.eps_fp
                    }
                })
                .collect();
            (a, s)
        })
        .collect();
    AffectedSets::new(0.0, sets)
}

/// Monte Carlo check of the superset and false-positive guarantees on
/// small random graphs in which every node is intervened on.
pub fn simulate_recovery(params: &RecoveryParams, family: GraphFamily, trials: usize, seed: u64) -> RecoveryReport {
    let mut rng = stream_rng(seed, streams::RECOVERY);
    let mut rep = RecoveryReport {
        trials,
        superset_checks: 0,
        superset_failures: 0,
        superset_failure_rate: 0.0,
        union_bound: 0.0,
        diverse_pairs: 0,
        false_positives: 0,
        zhat_fpr: 0.0,
        eps_cx_estimate: 0.0,
    };
    let mut bound_sum = 0.0;
    let mut witness_failures = 0usize;
    for t in 0..trials {
        let dag = random_graph(family, t, &mut rng);
        let p = dag.p();
        let desc = dag.descendant_sets();
        let s = corrupt(&desc, p, params, &mut rng);
        let u = upstream_sets(&s);
        let cand: BTreeMap<usize, BTreeSet<usize>> = intersect_descendants(&s);
        for a in 0..p {
            let ua = &u[&a];
            if ua.iter().all(|&b| desc.contains(b, a)) {
                rep.superset_checks += 1;
                bound_sum += desc.get(a).len() as f64 * (ua.len() + 1) as f64 * params.eps_fn;
                if !desc.get(a).is_subset(&cand[&a]) {
                    rep.superset_failures += 1;
                }
            }
            for i in 0..p {
                if i == a || desc.contains(a, i) {
                    continue;
                }
                let Some(b) = (0..p).find(|&b| desc.contains(b, a) && !desc.contains(b, i)) else {
                    continue;
                };
                rep.diverse_pairs += 1;
                rep.false_positives += usize::from(cand[&a].contains(&i));
                let sb = s.get(b).expect("every node intervened");
                witness_failures += usize::from(!(sb.contains(&a) && !sb.contains(&i)));
            }
        }
    }
    if rep.superset_checks > 0 {
        rep.superset_failure_rate = rep.superset_failures as f64 / rep.superset_checks as f64;
        rep.union_bound = bound_sum / rep.superset_checks as f64;
    }
    if rep.diverse_pairs > 0 {
        rep.zhat_fpr = rep.false_positives as f64 / rep.diverse_pairs as f64;
        rep.eps_cx_estimate = witness_failures as f64 / rep.diverse_pairs as f64;
    }
    rep
}

/// A three-node graph `b → a`, `b → i` where the only upstream intervention
/// of `a` also reaches `i`, so upstream diversity fails for the pair (a, i).
/// With `S_a = {i}` (a false positive) and `S_b = {a, i}`, the intersection
/// keeps `i`. Returns `(dag, affected sets, a, i, retained)`.
pub fn diversity_violation_example() -> (Dag, AffectedSets, usize, usize, bool) {
    let (a, i, b) = (0, 1, 2);
    let dag = Dag::from_edges(
        3,
        vec![Edge { parent: b, child: a, weight: 1.0 }, Edge { parent: b, child: i, weight: 1.0 }],
    )
    .expect("acyclic");
    let s = AffectedSets::new(
        0.0,
        BTreeMap::from([(a, BTreeSet::from([i])), (i, BTreeSet::new()), (b, BTreeSet::from([a, i]))]),
    );
    let retained = intersect_descendants(&s)[&a].contains(&i);
    (dag, s, a, i, retained)
}
