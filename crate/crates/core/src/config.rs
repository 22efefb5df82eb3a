//! Experiment files: TOML with `[model]`, `[noise]`, `[sim]` and `[analysis]`
//! sections whose keys are the field names of the corresponding types.
//!
//! Unknown keys are rejected. [`ExperimentConfig::to_canonical`] writes every
//! field in a fixed order, so parse -> serialize -> parse is a fixed point.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec};
use crate::noise::{NoiseKind, NoiseSpec};
use crate::simulate::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta2: Option<f64>,
    pub epsilon: f64,
    /// Defaults to `+epsilon` for normal forms and `-epsilon` for Stommel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slow_rate: Option<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// Defaults to the attracting branch at `y0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    pub y0: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_delta")]
    pub jump_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub window: [f64; 2],
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_stride() -> usize {
    10
}
fn default_delta() -> f64 {
    0.3
}
fn default_bins() -> usize {
    20
}
fn default_tolerance() -> f64 {
    0.1
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub noise: NoiseSection,
    pub sim: SimSection,
    pub analysis: AnalysisSection,
}

impl Default for ExperimentConfig {
    /// The white-noise Stommel-Cessi run.
    fn default() -> Self {
        Self {
            model: ModelSection {
                kind: "stommel".into(),
                eta2: Some(7.5),
                epsilon: 0.01,
                slow_rate: None,
                sigma: 0.01,
            },
            noise: NoiseSection {
                kind: "white".into(),
                tau: None,
                hurst: None,
            },
            sim: SimSection {
                x0: None,
                y0: 1.4,
                dt: 1e-3,
                t_end: 45.0,
                n_paths: 2000,
                master_seed: 0,
                record_stride: default_stride(),
                jump_delta: default_delta(),
            },
            analysis: AnalysisSection {
                window: [0.05, 0.43],
                bins: default_bins(),
                tolerance: default_tolerance(),
                output_dir: default_output(),
            },
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.to_sim_config()?;
        let [lo, hi] = self.analysis.window;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::invalid(format!("analysis window [{lo}, {hi}] must satisfy 0 < lo < hi")));
        }
        if self.analysis.bins < crate::analysis::MIN_BINS {
            return Err(Error::invalid(format!("bins must be at least {}", crate::analysis::MIN_BINS)));
        }
        if !(self.analysis.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let kind = ModelKind::from_name(&m.kind, m.eta2)?;
        let default_rate = match kind {
            ModelKind::StommelCessi { .. } => -m.epsilon,
            _ => m.epsilon,
        };
        ModelSpec::new(kind, m.epsilon, m.slow_rate.unwrap_or(default_rate), m.sigma)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let kind: NoiseKind = self.noise.kind.parse()?;
        NoiseSpec::from_parts(kind, self.noise.tau, self.noise.hurst)
    }

    pub fn to_sim_config(&self) -> Result<SimConfig> {
        let model = self.model_spec()?;
        let s = &self.sim;
        let x0 = match s.x0 {
            Some(x) => x,
            None => model.attracting_branch(s.y0)?,
        };
        let mut c = SimConfig::new(model, self.noise_spec()?, x0, s.y0, s.dt, s.t_end, s.n_paths);
        c.master_seed = s.master_seed;
        c.record_stride = s.record_stride;
        c.jump_delta = s.jump_delta;
        c.validate()?;
        Ok(c)
    }
}
