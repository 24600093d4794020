//! Run configuration: one JSON file per experiment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::GaConfig;
use crate::circuits::{paper_spec_ranges, Circuit, OpAmp, OpAmpConstants, ParasiticConfig, Tia, TiaConstants};
use crate::env::{sample_targets, EnvConfig, EnvError, SizingEnv, TargetSpec};
use crate::mna::TechConstants;
use crate::neural::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl From<EnvError> for ConfigError {
    fn from(e: EnvError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitId {
    Tia,
    Opamp,
}

impl CircuitId {
    pub fn as_str(self) -> &'static str {
        match self {
            CircuitId::Tia => "tia",
            CircuitId::Opamp => "opamp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecRanges {
    /// Ranges quoted for the original process; recorded for reference.
    pub paper: Vec<(f64, f64)>,
    /// Percentile ranges written by `calibrate`; used when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub samples: usize,
    pub seed: u64,
    /// Draw calibration points from the box reachable from the center in
    /// this many steps; `None` samples the whole grid.
    pub horizon: Option<usize>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { samples: 10_000, seed: 1, horizon: Some(30) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeployConfig {
    pub targets: usize,
    pub transfer_targets: usize,
    pub compare_targets: usize,
    pub random_targets: usize,
    pub seed: u64,
    pub stochastic: bool,
}

impl Default for DeployConfig {
    fn default() -> Self {
        Self {
            targets: 200,
            transfer_targets: 40,
            compare_targets: 50,
            random_targets: 500,
            seed: 3,
            stochastic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub circuit: CircuitId,
    #[serde(default)]
    pub tech: TechConstants,
    #[serde(default)]
    pub opamp: OpAmpConstants,
    #[serde(default)]
    pub tia: TiaConstants,
    /// Perturbation used by the transfer experiment.
    #[serde(default)]
    pub parasitics: ParasiticConfig,
    pub spec_ranges: SpecRanges,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub deploy: DeployConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    /// Defaults for a circuit with the paper ranges and no calibration.
    pub fn new(circuit: CircuitId) -> Self {
        Self {
            circuit,
            tech: TechConstants::default(),
            opamp: OpAmpConstants::default(),
            tia: TiaConstants::default(),
            parasitics: ParasiticConfig::default(),
            spec_ranges: SpecRanges {
                paper: paper_spec_ranges(circuit.as_str()).expect("known circuit"),
                calibrated: None,
            },
            calibration: CalibrationConfig::default(),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            ga: GaConfig::default(),
            deploy: DeployConfig::default(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the serialized config.
    pub fn hash(&self) -> String {
        Sha256::digest(serde_json::to_vec(self).expect("config serializes"))
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Structural checks that do not need calibrated ranges.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = self.build_circuit(false).specs().len();
        let check_len = |name: &str, r: &[(f64, f64)]| {
            if r.len() != m {
                return Err(ConfigError::Invalid(format!("{name} ranges: {m} expected, {} given", r.len())));
            }
            if r.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi >= lo)) {
                return Err(ConfigError::Invalid(format!("{name} ranges must be finite with min <= max")));
            }
            Ok(())
        };
        check_len("paper", &self.spec_ranges.paper)?;
        if let Some(c) = &self.spec_ranges.calibrated {
            check_len("calibrated", c)?;
        }
        self.env.validate()?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ga.validate().map_err(ConfigError::Invalid)?;
        if !self.parasitics.is_valid() {
            return Err(ConfigError::Invalid("parasitics must be finite and non-negative".into()));
        }
        if self.calibration.samples < 10 {
            return Err(ConfigError::Invalid("calibration needs at least 10 samples".into()));
        }
        let d = &self.deploy;
        if d.targets == 0 || d.transfer_targets == 0 || d.compare_targets == 0 || d.random_targets == 0 {
            return Err(ConfigError::Invalid("deployment target counts must be positive".into()));
        }
        Ok(())
    }

    /// Calibrated ranges when present, the paper ranges otherwise; each must be non-degenerate.
    pub fn active_ranges(&self) -> Result<Vec<(f64, f64)>, ConfigError> {
        let (which, r) = match &self.spec_ranges.calibrated {
            Some(c) => ("calibrated", c),
            None => ("paper", &self.spec_ranges.paper),
        };
        if let Some(i) = r.iter().position(|&(lo, hi)| !(hi > lo)) {
            return Err(ConfigError::Invalid(format!(
                "{which} range {i} is degenerate ({}, {}); run `calibrate` first",
                r[i].0, r[i].1
            )));
        }
        Ok(r.clone())
    }

    pub fn build_circuit(&self, parasitic: bool) -> Arc<dyn Circuit> {
        match self.circuit {
            CircuitId::Tia => Arc::new(Tia::new(self.tia, self.tech)),
            CircuitId::Opamp => Arc::new(OpAmp::new(self.opamp, self.tech, parasitic.then_some(self.parasitics))),
        }
    }

    pub fn build_env(&self) -> Result<SizingEnv, ConfigError> {
        Ok(SizingEnv::new(self.build_circuit(false), self.active_ranges()?, self.env)?)
    }

    /// Environment with parasitics, normalized with the clean ranges.
    pub fn build_transfer_env(&self) -> Result<SizingEnv, ConfigError> {
        if self.circuit != CircuitId::Opamp {
            return Err(ConfigError::Invalid("transfer is defined for the op-amp only".into()));
        }
        Ok(SizingEnv::new(self.build_circuit(true), self.active_ranges()?, self.env)?)
    }

    pub fn deploy_targets(&self, count: usize, seed: u64) -> Result<Vec<TargetSpec>, ConfigError> {
        Ok(sample_targets(&self.active_ranges()?, count, seed))
    }
}
