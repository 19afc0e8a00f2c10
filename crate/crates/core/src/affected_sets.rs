//! Differentially affected gene sets per intervention.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_sem::InterventionalDataset;
use crate::stats_core::{bh_reject, welch_from_moments, Moments};

#[derive(Debug, Error)]
pub enum AffectedError {
    #[error("FDR level q must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("intervention {a} has {n} samples, need at least 2")]
    TooFewSamples { a: usize, n: usize },
    #[error("observational arm has {0} samples, need at least 2")]
    TooFewObservational(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Gene-wise test statistic used for the DEG step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegScore {
    /// Welch test on raw values (mean shift).
    #[default]
    MeanShift,
    /// Welch test on absolute deviations from each arm's mean (scale shift).
    AbsT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectedSets {
    q: f64,
    sets: BTreeMap<usize, BTreeSet<usize>>,
}

impl AffectedSets {
    pub fn new(q: f64, sets: BTreeMap<usize, BTreeSet<usize>>) -> Self {
        AffectedSets { q, sets }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn get(&self, a: usize) -> Option<&BTreeSet<usize>> {
        self.sets.get(&a)
    }

    pub fn sets(&self) -> &BTreeMap<usize, BTreeSet<usize>> {
        &self.sets
    }

    pub fn interventions(&self) -> impl Iterator<Item = usize> + '_ {
        self.sets.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Subset of the interventions, in the given order.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let sets = keep
            .iter()
            .filter_map(|a| self.sets.get(a).map(|s| (*a, s.clone())))
            .collect();
        AffectedSets { q: self.q, sets }
    }

    /// `intervention,gene` rows, one per member.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AffectedError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["intervention", "gene"])?;
        for (a, s) in &self.sets {
            for g in s {
                wr.write_record([a.to_string(), g.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn column_moments(col: ArrayView1<f64>, score: DegScore) -> Moments {
    match score {
        DegScore::MeanShift => Moments::from_iter(col.iter().copied()),
        DegScore::AbsT => {
            let m = col.mean().unwrap_or(0.0);
            Moments::from_iter(col.iter().map(|v| (v - m).abs()))
        }
    }
}

fn all_moments(x: &Array2<f64>, score: DegScore) -> Vec<Moments> {
    x.columns().into_iter().map(|c| column_moments(c, score)).collect()
}

/// Gene-wise p-values of one interventional arm against the observational arm.
pub fn deg_pvalues(obs: &[Moments], arm: &Array2<f64>, score: DegScore) -> Vec<f64> {
    arm.columns()
        .into_iter()
        .zip(obs)
        .map(|(c, o)| welch_from_moments(&column_moments(c, score), o).p_value)
        .collect()
}

/// BH-rejected genes. The intervened node is left out of the testing family
/// (it is trivially changed and would otherwise loosen the BH threshold).
pub fn affected_from_pvalues(a: usize, p_values: &[f64], q: f64) -> BTreeSet<usize> {
    let genes: Vec<usize> = (0..p_values.len()).filter(|&g| g != a).collect();
    let family: Vec<f64> = genes.iter().map(|&g| p_values[g]).collect();
    bh_reject(&family, q).into_iter().zip(genes).filter(|&(r, _)| r).map(|(_, g)| g).collect()
}

/// Runs the DEG step for every intervention in `data`: Welch test per gene,
/// BH at level `q` across genes within each intervention.
pub fn compute_affected_sets(
    data: &InterventionalDataset,
    q: f64,
    score: DegScore,
) -> Result<AffectedSets, AffectedError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(AffectedError::BadLevel(q));
    }
    if data.obs().nrows() < 2 {
        return Err(AffectedError::TooFewObservational(data.obs().nrows()));
    }
    for (&a, m) in data.per_intervention() {
        if m.nrows() < 2 {
            return Err(AffectedError::TooFewSamples { a, n: m.nrows() });
        }
    }
    let obs = all_moments(data.obs(), score);
    let sets = data
        .per_intervention()
        .par_iter()
        .map(|(&a, arm)| (a, affected_from_pvalues(a, &deg_pvalues(&obs, arm, score), q)))
        .collect();
    Ok(AffectedSets { q, sets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_sem::{Dag, Edge};

    #[test]
    fn self_is_excluded() {
        let g = Dag::from_edges(3, vec![Edge { parent: 0, child: 1, weight: 1.0 }]).unwrap();
        let d = InterventionalDataset::simulate(&g, 100, 100, &[0, 1, 2], 4);
        for score in [DegScore::MeanShift, DegScore::AbsT] {
            let s = compute_affected_sets(&d, 0.05, score).unwrap();
            for a in 0..3 {
                assert!(!s.get(a).unwrap().contains(&a));
            }
        }
    }

    #[test]
    fn rejects_bad_level() {
        let g = Dag::from_edges(2, vec![]).unwrap();
        let d = InterventionalDataset::simulate(&g, 10, 10, &[0], 1);
        assert!(compute_affected_sets(&d, 0.0, DegScore::MeanShift).is_err());
        assert!(compute_affected_sets(&d, 1.0, DegScore::MeanShift).is_err());
    }

    #[test]
    fn csv_dump() {
        let s = AffectedSets::new(0.05, BTreeMap::from([(3, BTreeSet::from([1, 4])), (5, BTreeSet::new())]));
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "intervention,gene\n3,1\n3,4\n");
    }
}
