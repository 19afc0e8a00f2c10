//! Contamination-robust selective conformal prediction under interventions.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph_sem`]: random weighted DAGs, linear Gaussian SEM sampling under
//!   hard interventions, ground-truth descendant sets.
//! - [`stats_core`]: Welch t-test, Benjamini–Hochberg, order statistics, kernels.
//! - [`affected_sets`]: per-intervention differentially affected gene sets.
//! - [`descendant_discovery`]: descendant estimation by intersecting upstream
//!   affected sets, plus the classification/contamination metrics built on it.
//! - [`local_icp`]: local invariant causal prediction for distance-to-target
//!   estimation and kernel-weighted conformal calibration.
//! - [`conformal_core`]: split conformal quantiles, the contamination penalty
//!   `g(δ, n)`, corrected levels and coverage bounds.
//! - [`experiments`]: the synthetic, ablation, recovery and real-data harnesses.
//! - [`ingest`]: CSV ingestion of perturbation screens.
//! - [`output`]: CSV writers and SVG line charts for experiment results.

pub mod affected_sets;
pub mod conformal_core;
pub mod descendant_discovery;
pub mod experiments;
pub mod graph_sem;
pub mod ingest;
pub mod local_icp;
pub mod output;
pub mod rng;
pub mod stats_core;

pub use affected_sets::{compute_affected_sets, AffectedSets, DegScore};
pub use conformal_core::{
    conformal_quantile, corrected_alpha, coverage_lower_bound, g_bound, make_interval,
    recovery_delta_bound, CalibrationSelection, InfeasiblePolicy, Interval, RecoveryParams,
};
pub use descendant_discovery::{intersect_descendants, upstream_sets, ZMatrix};
pub use graph_sem::{Dag, DescendantSets, InterventionalDataset};
