//! Experiment manifests: one JSON object per run, tagged by `experiment`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Init, Integrator, LossKind};
use crate::quasimodel::{ClassificationDataset, ModelKind};
use crate::twoballs::{BallProblem, SweepModel, DEFAULT_MU};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Logistic(LogisticConfig),
    TwoballsSweep(SweepConfig),
    Nc(NcConfig),
    Verify(VerifyConfig),
    KktProbe(KktProbeConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::Logistic(_) => "logistic",
            ExperimentConfig::TwoballsSweep(_) => "twoballs-sweep",
            ExperimentConfig::Nc(_) => "nc",
            ExperimentConfig::Verify(_) => "verify",
            ExperimentConfig::KktProbe(_) => "kkt-probe",
        }
    }

    pub fn out(&self) -> Option<&Path> {
        match self {
            ExperimentConfig::Logistic(c) => c.out.as_deref(),
            ExperimentConfig::TwoballsSweep(c) => c.out.as_deref(),
            ExperimentConfig::Nc(c) => c.out.as_deref(),
            ExperimentConfig::Verify(c) => c.out.as_deref(),
            ExperimentConfig::KktProbe(c) => c.out.as_deref(),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::Logistic(c) => c.seed = seed,
            ExperimentConfig::TwoballsSweep(c) => c.seed = seed,
            ExperimentConfig::Nc(c) => c.seed = seed,
            ExperimentConfig::Verify(c) => c.seed = seed,
            ExperimentConfig::KktProbe(c) => c.seed = seed,
        }
    }

    fn schema_version(&self) -> u32 {
        match self {
            ExperimentConfig::Logistic(c) => c.schema_version,
            ExperimentConfig::TwoballsSweep(c) => c.schema_version,
            ExperimentConfig::Nc(c) => c.schema_version,
            ExperimentConfig::Verify(c) => c.schema_version,
            ExperimentConfig::KktProbe(c) => c.schema_version,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if cfg.schema_version() != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version()
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::Logistic(c) => {
                c.flow.validate()?;
                crate::quasimodel::Model::new(ModelKind::UnbalancedDiagonal {
                    depths: c.quasi_depths.clone(),
                })?;
                if c.quasi_depths.len() != c.mean.len() {
                    return Err(Error::InvalidConfig("quasi_depths must match the mean's dimension".into()));
                }
                ClassificationDataset::gaussian_clouds(&c.mean, c.std, c.per_class, 0).map(|_| ())
            }
            ExperimentConfig::TwoballsSweep(c) => {
                c.flow.validate()?;
                for r in c.radii() {
                    c.problem(r)?;
                }
                if c.models.is_empty() {
                    return Err(Error::InvalidConfig("no models to sweep".into()));
                }
                Ok(())
            }
            ExperimentConfig::Nc(c) => {
                c.flow.validate()?;
                if c.flow.loss_kind != LossKind::CrossEntropy {
                    return Err(Error::InvalidConfig("nc runs use loss_kind cross_entropy".into()));
                }
                if c.per_class == 0 {
                    return Err(Error::InvalidConfig("per_class must be positive".into()));
                }
                crate::collapse::nc_closed_form(c.classes, c.feature_dim).map(|_| ())
            }
            ExperimentConfig::Verify(c) => {
                if !(c.tol > 0.0) || c.trials == 0 {
                    return Err(Error::InvalidConfig("verify needs tol > 0 and trials > 0".into()));
                }
                for m in &c.models {
                    crate::quasimodel::Model::new(m.clone())?;
                }
                Ok(())
            }
            ExperimentConfig::KktProbe(c) => {
                c.flow.validate()?;
                crate::quasimodel::Model::new(c.model.clone())?;
                if c.points == 0 {
                    return Err(Error::InvalidConfig("points must be positive".into()));
                }
                c.dataset.build(0).map(|_| ())
            }
        }
    }
}

fn default_seed() -> u64 {
    0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output path; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "LogisticConfig::default_mean")]
    pub mean: Vec<f64>,
    #[serde(default = "LogisticConfig::default_std")]
    pub std: f64,
    #[serde(default = "LogisticConfig::default_per_class")]
    pub per_class: usize,
    #[serde(default = "LogisticConfig::default_depths")]
    pub quasi_depths: Vec<usize>,
    #[serde(default = "LogisticConfig::default_max_angle")]
    pub max_angle_deg: f64,
    #[serde(default)]
    pub flow: FlowConfig,
}

impl LogisticConfig {
    fn default_mean() -> Vec<f64> {
        vec![std::f64::consts::FRAC_1_SQRT_2; 2]
    }
    fn default_std() -> f64 {
        0.25
    }
    fn default_per_class() -> usize {
        100
    }
    fn default_depths() -> Vec<usize> {
        vec![2, 1]
    }
    fn default_max_angle() -> f64 {
        8.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output path; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "SweepConfig::default_mu")]
    pub mu: Vec<f64>,
    #[serde(default = "SweepConfig::default_m")]
    pub m: usize,
    #[serde(default = "SweepConfig::default_samples")]
    pub samples_per_ball: usize,
    #[serde(default = "SweepConfig::default_surface")]
    pub surface_only: bool,
    /// Defaults to `k/101` for `k = 1..=100`.
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    #[serde(default = "SweepConfig::default_models")]
    pub models: Vec<SweepModel>,
    #[serde(default = "SweepConfig::default_flow")]
    pub flow: FlowConfig,
}

impl SweepConfig {
    fn default_mu() -> Vec<f64> {
        DEFAULT_MU.to_vec()
    }
    fn default_m() -> usize {
        1
    }
    fn default_samples() -> usize {
        512
    }
    fn default_surface() -> bool {
        true
    }
    fn default_models() -> Vec<SweepModel> {
        vec![
            SweepModel::Hom,
            SweepModel::QuasiHom {
                depths: vec![1, 5, 10],
            },
        ]
    }
    pub fn default_flow() -> FlowConfig {
        FlowConfig {
            init: Init::Ones,
            integrator: Integrator::Dopri5,
            ..FlowConfig::default()
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        self.radii.clone().unwrap_or_else(crate::twoballs::default_radii)
    }

    /// The ball problem at radius `r`, with `mu` scaled to unit length.
    pub fn problem(&self, r: f64) -> Result<BallProblem> {
        let n = crate::linalg::norm(&self.mu);
        if !(n > 0.0) {
            return Err(Error::InvalidConfig("mu must be nonzero".into()));
        }
        let mu = self.mu.iter().map(|v| v / n).collect();
        BallProblem::new(mu, r, self.m, self.samples_per_ball, self.surface_only)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NcConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output path; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "NcConfig::default_classes")]
    pub classes: usize,
    #[serde(default = "NcConfig::default_dim")]
    pub feature_dim: usize,
    #[serde(default = "NcConfig::default_per_class")]
    pub per_class: usize,
    #[serde(default = "NcConfig::default_flow")]
    pub flow: FlowConfig,
}

impl NcConfig {
    fn default_classes() -> usize {
        3
    }
    fn default_dim() -> usize {
        5
    }
    fn default_per_class() -> usize {
        10
    }
    pub fn default_flow() -> FlowConfig {
        FlowConfig {
            loss_kind: LossKind::CrossEntropy,
            integrator: Integrator::Dopri5,
            stop_loss: 1e-300,
            max_steps: 2_000_000,
            record_every: 1000,
            ..FlowConfig::default()
        }
    }

    /// Labels `0, 1, .., C-1, 0, 1, ..`, `per_class` of each.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.classes * self.per_class).map(|i| i % self.classes).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output path; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub models: Vec<ModelKind>,
    #[serde(default = "VerifyConfig::default_trials")]
    pub trials: usize,
    /// `alpha` is drawn uniformly from `[-alpha_range, alpha_range]`.
    #[serde(default = "VerifyConfig::default_alpha")]
    pub alpha_range: f64,
    #[serde(default = "VerifyConfig::default_tol")]
    pub tol: f64,
}

impl VerifyConfig {
    fn default_trials() -> usize {
        20
    }
    fn default_alpha() -> f64 {
        2.0
    }
    fn default_tol() -> f64 {
        1e-10
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    GaussianClouds {
        mean: Vec<f64>,
        std: f64,
        per_class: usize,
    },
    Balls {
        mu: Vec<f64>,
        r: f64,
        m: usize,
        samples_per_ball: usize,
        #[serde(default = "SweepConfig::default_surface")]
        surface_only: bool,
    },
    Explicit {
        inputs: Vec<Vec<f64>>,
        labels: Vec<f64>,
    },
}

impl DatasetSpec {
    pub fn build(&self, seed: u64) -> Result<ClassificationDataset> {
        match self {
            DatasetSpec::GaussianClouds { mean, std, per_class } => {
                ClassificationDataset::gaussian_clouds(mean, *std, *per_class, seed)
            }
            DatasetSpec::Balls {
                mu,
                r,
                m,
                samples_per_ball,
                surface_only,
            } => {
                let p = BallProblem::new(mu.clone(), *r, *m, *samples_per_ball, *surface_only)?;
                Ok(crate::twoballs::sample_balls(&p, seed))
            }
            DatasetSpec::Explicit { inputs, labels } => ClassificationDataset::binary(inputs.clone(), labels.clone()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KktProbeConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output path; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub model: ModelKind,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub flow: FlowConfig,
    /// Number of late recorded points to certify.
    #[serde(default = "KktProbeConfig::default_points")]
    pub points: usize,
}

impl KktProbeConfig {
    fn default_points() -> usize {
        20
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_manifests_parse() {
        for text in [
            r#"{"experiment": "logistic", "schema_version": 1}"#,
            r#"{"experiment": "twoballs_sweep", "schema_version": 1, "radii": [0.6]}"#,
            r#"{"experiment": "nc", "schema_version": 1}"#,
            r#"{"experiment": "verify", "schema_version": 1, "models": [{"kind": "linear_homogeneous", "input_dim": 2}]}"#,
            r#"{"experiment": "kkt_probe", "schema_version": 1,
                "model": {"kind": "linear_homogeneous", "input_dim": 2},
                "dataset": {"kind": "explicit", "inputs": [[2, 0], [-1, 0]], "labels": [1, -1]}}"#,
        ] {
            ExperimentConfig::from_json(text).unwrap();
        }
    }

    #[test]
    fn bad_manifests_are_rejected() {
        for text in [
            "{",
            r#"{"experiment": "logistic"}"#,
            r#"{"experiment": "logistic", "schema_version": 2}"#,
            r#"{"experiment": "logistic", "schema_version": 1, "bogus": 1}"#,
            r#"{"experiment": "twoballs_sweep", "schema_version": 1, "radii": [1.5]}"#,
            r#"{"experiment": "nc", "schema_version": 1, "classes": 6, "feature_dim": 5}"#,
        ] {
            assert!(
                matches!(ExperimentConfig::from_json(text), Err(Error::InvalidConfig(_))),
                "{text}"
            );
        }
    }
}
