use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affected_sets::DegScore;
use crate::conformal_core::InfeasiblePolicy;
use crate::local_icp::{IcpParams, KernelConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oracle,
    Estimated,
    Pooled,
    Corrected,
    Weighted,
}

impl Method {
    pub const DEFAULT: [Method; 4] = [Method::Oracle, Method::Estimated, Method::Pooled, Method::Corrected];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Estimated => "estimated",
            Method::Pooled => "pooled",
            Method::Corrected => "corrected",
            Method::Weighted => "weighted",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [Method::Oracle, Method::Estimated, Method::Pooled, Method::Corrected, Method::Weighted]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

fn default_methods() -> Vec<Method> {
    Method::DEFAULT.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub cal: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.10, cal: 0.81, test: 0.09 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let parts = [self.train, self.cal, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return invalid("split fractions must lie in [0, 1]");
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid(format!("split fractions must sum to 1, got {}", parts.iter().sum::<f64>()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreModel {
    pub sigma_unaffected: f64,
    pub sigma_affected: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        ScoreModel { sigma_unaffected: 1.0, sigma_affected: 0.15 }
    }
}

/// How the Corrected method estimates contamination for a (target, test) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaHatRule {
    /// Share of selected interventions whose raw affected set still lists the
    /// target (pruned only by the intersection step).
    #[default]
    SelfConsistency,
    /// Plug-in formula from FPR/FNR/π0 measured against the (proxy) truth
    /// over the calibration pool.
    OraclePlugin,
    /// A fixed upper bound.
    Fixed { value: f64 },
}

impl DeltaHatRule {
    fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            DeltaHatRule::Fixed { value } if !(0.0..1.0).contains(&value) => {
                invalid(format!("fixed delta_hat must lie in [0, 1), got {value}"))
            }
            _ => Ok(()),
        }
    }
}

fn default_w_lo() -> f64 {
    0.3
}
fn default_w_hi() -> f64 {
    1.0
}
fn default_depth() -> usize {
    2
}
fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}

/// Synthetic experiment configuration (main run and ablation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: usize,
    pub d_avg: f64,
    #[serde(default = "default_w_lo")]
    pub w_lo: f64,
    #[serde(default = "default_w_hi")]
    pub w_hi: f64,
    pub n_obs: usize,
    pub n_per_intervention: usize,
    pub n_interventions: usize,
    pub alpha: f64,
    pub q_fdr: f64,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub score_model: ScoreModel,
    #[serde(default)]
    pub deg_score: DegScore,
    #[serde(default)]
    pub delta_inject: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub delta_hat: DeltaHatRule,
    /// Quantile reported when the Corrected rank exceeds the selection size.
    #[serde(default)]
    pub infeasible: InfeasiblePolicy,
    #[serde(default)]
    pub icp: IcpParams,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default = "default_depth")]
    pub icp_depth: usize,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.p < 2 {
            return invalid("p must be at least 2");
        }
        if !(self.d_avg >= 0.0 && self.d_avg <= (self.p - 1) as f64) {
            return invalid(format!("d_avg must lie in [0, p-1], got {}", self.d_avg));
        }
        if !(self.w_lo > 0.0 && self.w_lo < self.w_hi) {
            return invalid("weights need 0 < w_lo < w_hi");
        }
        if self.n_obs < 2 || self.n_per_intervention < 2 {
            return invalid("n_obs and n_per_intervention must be at least 2");
        }
        if self.n_interventions == 0 || self.n_interventions > self.p {
            return invalid(format!("n_interventions must lie in [1, p], got {}", self.n_interventions));
        }
        check_alpha(self.alpha)?;
        if !(self.q_fdr > 0.0 && self.q_fdr < 1.0) {
            return invalid(format!("q_fdr must lie in (0, 1), got {}", self.q_fdr));
        }
        self.split.validate()?;
        if self.seeds.is_empty() {
            return invalid("at least one seed is required");
        }
        let sm = &self.score_model;
        if !(sm.sigma_unaffected > 0.0 && sm.sigma_affected > 0.0) {
            return invalid("score sigmas must be positive");
        }
        if let Some(d) = self.delta_inject.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return invalid(format!("delta_inject values must lie in [0, 1), got {d}"));
        }
        if self.methods.is_empty() {
            return invalid("method list is empty");
        }
        self.delta_hat.validate()?;
        if !(self.kernel.h > 0.0) {
            return invalid("kernel bandwidth must be positive");
        }
        if self.icp_depth == 0 {
            return invalid("icp_depth must be at least 1");
        }
        let (tr, ca, te) = super::split_sizes(self.n_interventions, &self.split);
        if ca == 0 || te == 0 {
            return invalid(format!(
                "split of {} interventions leaves {tr}/{ca}/{te} train/cal/test; need cal and test non-empty",
                self.n_interventions
            ));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<(), ConfigError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        invalid(format!("alpha must lie in (0, 1), got {alpha}"))
    }
}

fn default_top_frac() -> f64 {
    0.10
}
fn default_real_delta_hat() -> DeltaHatRule {
    DeltaHatRule::OraclePlugin
}
fn default_control() -> String {
    "control".to_string()
}
fn default_min_cells() -> usize {
    200
}
fn default_min_expr() -> f64 {
    0.10
}

/// Real-data pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealConfig {
    pub alpha: f64,
    /// Fraction of genes (by |LFC|) forming each perturbation's proxy affected set.
    #[serde(default = "default_top_frac")]
    pub top_frac: f64,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Perturbations always placed in the test split (by name).
    #[serde(default)]
    pub test_perturbations: Vec<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_real_delta_hat")]
    pub delta_hat: DeltaHatRule,
    #[serde(default)]
    pub infeasible: InfeasiblePolicy,
    /// Bootstrap replicates for coverage stability (0 disables).
    #[serde(default)]
    pub bootstrap: usize,
    /// Cell-level input only: label of the control population.
    #[serde(default = "default_control")]
    pub control_label: String,
    #[serde(default = "default_min_cells")]
    pub min_cells: usize,
    #[serde(default = "default_min_expr")]
    pub min_expr_frac: f64,
}

impl Default for RealConfig {
    fn default() -> Self {
        serde_json::from_str(r#"{"alpha": 0.1}"#).expect("defaults parse")
    }
}

impl RealConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check_alpha(self.alpha)?;
        if !(self.top_frac > 0.0 && self.top_frac <= 1.0) {
            return invalid(format!("top_frac must lie in (0, 1], got {}", self.top_frac));
        }
        self.split.validate()?;
        if self.seeds.is_empty() {
            return invalid("at least one seed is required");
        }
        if self.methods.is_empty() {
            return invalid("method list is empty");
        }
        if self.methods.contains(&Method::Weighted) {
            return invalid("the weighted method needs sample-level data and is not available for real runs");
        }
        self.delta_hat.validate()?;
        if self.bootstrap == 1 {
            return invalid("bootstrap needs at least 2 replicates");
        }
        if !(0.0..=1.0).contains(&self.min_expr_frac) {
            return invalid("min_expr_frac must lie in [0, 1]");
        }
        Ok(())
    }
}
