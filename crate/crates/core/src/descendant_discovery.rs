//! Descendant discovery by intersecting upstream affected sets, and the
//! classification/contamination metrics of the resulting indicator matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affected_sets::AffectedSets;
use crate::conformal_core::CalibrationSelection;
use crate::graph_sem::DescendantSets;

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("intervention {0} is not a row of the indicator matrix")]
    UnknownIntervention(usize),
    #[error("gene {gene} out of range for {p} genes")]
    GeneOutOfRange { gene: usize, p: usize },
    #[error("test intervention {0} is part of the calibration pool")]
    TestInPool(usize),
    #[error("calibration pool is empty")]
    EmptyPool,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `U(a) = {b ≠ a : a ∈ S_b}` for every intervention `a` in `s`.
pub fn upstream_sets(s: &AffectedSets) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut u: BTreeMap<usize, BTreeSet<usize>> = s.interventions().map(|a| (a, BTreeSet::new())).collect();
    for (&b, sb) in s.sets() {
        for (&a, ua) in u.iter_mut() {
            if a != b && sb.contains(&a) {
                ua.insert(b);
            }
        }
    }
    u
}

/// Estimated descendants: `S_a` intersected with every upstream `S_b`,
/// falling back to `S_a` when nothing is upstream.
pub fn intersect_descendants(s: &AffectedSets) -> BTreeMap<usize, BTreeSet<usize>> {
    let u = upstream_sets(s);
    s.sets()
        .iter()
        .map(|(&a, sa)| {
            let mut cand = sa.clone();
            for b in &u[&a] {
                let sb = &s.sets()[b];
                cand.retain(|g| sb.contains(g));
            }
            (a, cand)
        })
        .collect()
}

/// Binary indicator matrix over interventions × genes. The diagonal entry
/// `(a, a)` is not applicable and reads as `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZMatrix {
    p: usize,
    interventions: Vec<usize>,
    row_of: BTreeMap<usize, usize>,
    bits: Vec<bool>,
}

impl ZMatrix {
    /// `Z_{a,i} = 1` iff `i ∈ sets[a]`; interventions missing from `sets`
    /// get an all-zero row.
    pub fn from_sets(p: usize, interventions: &[usize], sets: &BTreeMap<usize, BTreeSet<usize>>) -> Self {
        let empty = BTreeSet::new();
        Self::build(p, interventions, |a| sets.get(&a).unwrap_or(&empty))
    }

    pub fn from_descendants(p: usize, interventions: &[usize], desc: &DescendantSets) -> Self {
        Self::build(p, interventions, |a| desc.get(a))
    }

    fn build<'a>(p: usize, interventions: &[usize], row: impl Fn(usize) -> &'a BTreeSet<usize>) -> Self {
        let mut bits = vec![false; interventions.len() * p];
        let mut row_of = BTreeMap::new();
        for (r, &a) in interventions.iter().enumerate() {
            row_of.insert(a, r);
            for &g in row(a) {
                if g < p && g != a {
                    bits[r * p + g] = true;
                }
            }
        }
        ZMatrix { p, interventions: interventions.to_vec(), row_of, bits }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn interventions(&self) -> &[usize] {
        &self.interventions
    }

    pub fn contains_row(&self, a: usize) -> bool {
        self.row_of.contains_key(&a)
    }

    /// Indicator for `(a, i)`, `None` when `i == a`.
    ///
    /// # Panics
    /// If `a` is not a row or `i` is out of range.
    pub fn get(&self, a: usize, i: usize) -> Option<bool> {
        assert!(i < self.p, "gene {i} out of range");
        let r = *self.row_of.get(&a).unwrap_or_else(|| panic!("intervention {a} is not a row"));
        (i != a).then(|| self.bits[r * self.p + i])
    }

    /// True when `(a, i)` is declared affected; the diagonal counts as unaffected.
    pub fn affected(&self, a: usize, i: usize) -> bool {
        self.get(a, i) == Some(true)
    }

    /// `intervention,gene,zhat` rows for every applicable entry.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DiscoveryError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["intervention", "gene", "zhat"])?;
        for &a in &self.interventions {
            for i in 0..self.p {
                if let Some(z) = self.get(a, i) {
                    wr.write_record([a.to_string(), i.to_string(), u8::from(z).to_string()])?;
                }
            }
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Rates of the estimated indicator against the truth for one target gene.
/// "False positive" follows the contamination convention: a truly affected
/// intervention wrongly declared unaffected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    /// `P(Ẑ = 0 | Z = 1)`, `None` when no pool member is affected.
    pub fpr: Option<f64>,
    /// `P(Ẑ = 1 | Z = 0)`, `None` when no pool member is unaffected.
    pub fnr: Option<f64>,
    pub pi0: f64,
    pub delta_plugin: f64,
}

/// `δ = (1-π0)·FPR / (π0·(1-FNR) + (1-π0)·FPR)`, with 0/0 read as 0.
pub fn plugin_delta(fpr: f64, fnr: f64, pi0: f64) -> f64 {
    let num = (1.0 - pi0) * fpr;
    let den = pi0 * (1.0 - fnr) + num;
    if den <= 0.0 {
        0.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// Metrics over the pool, skipping the diagonal pair `a == target`.
pub fn classification_metrics(
    z_hat: &ZMatrix,
    z_true: &ZMatrix,
    target: usize,
    pool: &[usize],
) -> Result<ClassificationMetrics, DiscoveryError> {
    check_gene(z_hat, target)?;
    let (mut aff, mut missed, mut unaff, mut flagged) = (0usize, 0usize, 0usize, 0usize);
    for &a in pool {
        for z in [z_hat, z_true] {
            if !z.contains_row(a) {
                return Err(DiscoveryError::UnknownIntervention(a));
            }
        }
        let (Some(t), Some(h)) = (z_true.get(a, target), z_hat.get(a, target)) else {
            continue;
        };
        if t {
            aff += 1;
            missed += usize::from(!h);
        } else {
            unaff += 1;
            flagged += usize::from(h);
        }
    }
    let total = aff + unaff;
    if total == 0 {
        return Err(DiscoveryError::EmptyPool);
    }
    let fpr = (aff > 0).then(|| missed as f64 / aff as f64);
    let fnr = (unaff > 0).then(|| flagged as f64 / unaff as f64);
    let pi0 = unaff as f64 / total as f64;
    Ok(ClassificationMetrics {
        fpr,
        fnr,
        pi0,
        delta_plugin: plugin_delta(fpr.unwrap_or(0.0), fnr.unwrap_or(0.0), pi0),
    })
}

fn check_gene(z: &ZMatrix, gene: usize) -> Result<(), DiscoveryError> {
    if gene >= z.p() {
        Err(DiscoveryError::GeneOutOfRange { gene, p: z.p() })
    } else {
        Ok(())
    }
}

/// Calibration interventions declared safe for `target`: `{a ∈ pool : Ẑ_{a,i} = 0}`.
/// The diagonal pair counts as safe. With `truth`, the good count and realized
/// contamination are filled in.
pub fn select_calibration(
    z_hat: &ZMatrix,
    target: usize,
    test: usize,
    pool: &[usize],
    truth: Option<&ZMatrix>,
) -> Result<CalibrationSelection, DiscoveryError> {
    check_gene(z_hat, target)?;
    if pool.contains(&test) {
        return Err(DiscoveryError::TestInPool(test));
    }
    let mut selected = Vec::new();
    for &a in pool {
        if !z_hat.contains_row(a) {
            return Err(DiscoveryError::UnknownIntervention(a));
        }
        if !z_hat.affected(a, target) {
            selected.push(a);
        }
    }
    let good = match truth {
        Some(z) => {
            let mut m = 0;
            for &a in &selected {
                if !z.contains_row(a) {
                    return Err(DiscoveryError::UnknownIntervention(a));
                }
                m += usize::from(!z.affected(a, target));
            }
            Some(m)
        }
        None => None,
    };
    Ok(CalibrationSelection::new(selected, good))
}
