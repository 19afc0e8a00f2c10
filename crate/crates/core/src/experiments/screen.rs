//! Synthetic perturbation screen with a known regulatory SEM.
//!
//! Genes are split into regulators (which are also the perturbations) and
//! targets. Most regulators are "narrow": each hits a log-normally sized
//! random subset of responsive targets. A few "broad" regulators hit many
//! targets, preferring the ones already heavily regulated, and have a higher
//! baseline so knocking them down moves those genes further. Perturbations
//! are hard knockdowns to 0; LFCs are differences of per-cell means against
//! a control population.

use rand::seq::index::{sample, sample_weighted};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph_sem::{Dag, Edge, SemParams};
use crate::ingest::PerturbMatrix;
use crate::rng::{stream_rng, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScreenSpec {
    pub n_regulators: usize,
    pub n_targets: usize,
    /// Fraction of targets that any regulator can reach.
    pub responsive_frac: f64,
    /// The last `n_broad` regulators are broad.
    pub n_broad: usize,
    pub broad_targets: usize,
    pub broad_intercept: f64,
    pub narrow_median: f64,
    pub narrow_log_sd: f64,
    /// Probability of an edge between two narrow regulators.
    pub regulator_edge_prob: f64,
    pub intercept_lo: f64,
    pub intercept_hi: f64,
    pub noise_log_sd: f64,
    pub w_lo: f64,
    pub w_hi: f64,
    pub n_control: usize,
    pub n_cells: usize,
}

impl Default for ScreenSpec {
    fn default() -> Self {
        ScreenSpec {
            n_regulators: 50,
            n_targets: 1950,
            responsive_frac: 0.3,
            n_broad: 3,
            broad_targets: 400,
            broad_intercept: 4.0,
            narrow_median: 120.0,
            narrow_log_sd: 0.6,
            regulator_edge_prob: 0.03,
            intercept_lo: 1.0,
            intercept_hi: 3.0,
            noise_log_sd: 0.5,
            w_lo: 0.3,
            w_hi: 1.0,
            n_control: 400,
            n_cells: 200,
        }
    }
}

/// The generated SEM and naming.
#[derive(Debug, Clone)]
pub struct Screen {
    pub dag: Dag,
    pub params: SemParams,
    pub genes: Vec<String>,
    pub regulators: Vec<usize>,
    pub broad: Vec<usize>,
}

impl ScreenSpec {
    pub fn build(&self, seed: u64) -> Screen {
        let mut rng = stream_rng(seed, streams::SCREEN);
        let r = self.n_regulators;
        let p = r + self.n_targets;
        let n_narrow = r - self.n_broad.min(r);
        let n_resp = ((self.responsive_frac * self.n_targets as f64).round() as usize).min(self.n_targets);
        let responsive: Vec<usize> = sample(&mut rng, self.n_targets, n_resp).into_iter().map(|t| r + t).collect();
        let mut indeg = vec![0usize; p];
        let mut edges = Vec::new();
        let weight = |rng: &mut rand_chacha::ChaCha8Rng| {
            let w = rng.random_range(self.w_lo..=self.w_hi);
            if rng.random::<bool>() {
                w
            } else {
                -w
            }
        };
        let out_degree = LogNormal::new(self.narrow_median.ln(), self.narrow_log_sd).expect("valid log-normal");
        for reg in 0..r {
            let chosen: Vec<usize> = if reg < n_narrow {
                let k = (out_degree.sample(&mut rng) as usize).min(n_resp);
                let t: Vec<usize> = sample(&mut rng, n_resp, k).into_iter().map(|k| responsive[k]).collect();
                for &g in &t {
                    indeg[g] += 1;
                }
                t
            } else {
                let k = self.broad_targets.min(n_resp);
                sample_weighted(&mut rng, n_resp, |k| (indeg[responsive[k]] as f64).powi(2) + 1e-9, k)
                    .expect("positive weights")
                    .into_iter()
                    .map(|k| responsive[k])
                    .collect()
            };
            for child in chosen {
                edges.push(Edge { parent: reg, child, weight: weight(&mut rng) });
            }
            for other in (reg + 1)..n_narrow {
                if rng.random::<f64>() < self.regulator_edge_prob {
                    edges.push(Edge { parent: reg, child: other, weight: weight(&mut rng) });
                }
            }
        }
        let mut intercepts: Vec<f64> = (0..p).map(|_| rng.random_range(self.intercept_lo..self.intercept_hi)).collect();
        let broad: Vec<usize> = (n_narrow..r).collect();
        for &b in &broad {
            intercepts[b] = self.broad_intercept;
        }
        let noise = Normal::new(0.0, self.noise_log_sd).expect("valid normal");
        let noise_sd: Vec<f64> = (0..p).map(|_| noise.sample(&mut rng).exp()).collect();
        let genes = (0..p)
            .map(|g| if g < r { format!("R{g:02}") } else { format!("G{:04}", g - r) })
            .collect();
        Screen {
            dag: Dag::from_edges(p, edges).expect("regulator edges point forward"),
            params: SemParams { intercepts: Some(intercepts), noise_sd: Some(noise_sd), intervention_value: 0.0 },
            genes,
            regulators: (0..r).collect(),
            broad,
        }
    }
}

impl Screen {
    /// Samples control and per-regulator cells and returns the LFC matrix.
    pub fn simulate(&self, spec: &ScreenSpec, seed: u64) -> PerturbMatrix {
        let mean_of = |arm: Option<usize>, n: usize, stream: u64| {
            let mut rng = stream_rng(seed, stream);
            let x = self.dag.sample_with(n, arm, &self.params, &mut rng);
            x.mean_axis(ndarray::Axis(0)).expect("non-empty arm")
        };
        let control = mean_of(None, spec.n_control, streams::OBSERVATIONAL);
        let rows: Vec<ndarray::Array1<f64>> = self
            .regulators
            .par_iter()
            .map(|&a| mean_of(Some(a), spec.n_cells, streams::INTERVENTIONAL_BASE + a as u64) - &control)
            .collect();
        let mut lfc = ndarray::Array2::zeros((rows.len(), self.dag.p()));
        for (k, row) in rows.into_iter().enumerate() {
            lfc.row_mut(k).assign(&row);
        }
        PerturbMatrix {
            genes: self.genes.clone(),
            perturbations: self.regulators.iter().map(|&a| self.genes[a].clone()).collect(),
            lfc,
            cell_counts: Some(vec![spec.n_cells; self.regulators.len()]),
        }
    }
}

/// Builds and simulates a screen in one call.
pub fn simulate_screen(spec: &ScreenSpec, seed: u64) -> (Screen, PerturbMatrix) {
    let screen = spec.build(seed);
    let m = screen.simulate(spec, seed);
    (screen, m)
}
