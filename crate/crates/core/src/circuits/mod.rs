//! Benchmark circuits: grid-indexed parameters in, measured specs out.

mod calibrate;
mod opamp;
mod space;
mod tia;
mod toy;

pub use calibrate::{
    calibrate_ranges, paper_spec_ranges, random_points, random_points_in, reachable_box, sample_specs, Calibration,
};
pub use opamp::{opamp_param_space, solve_opamp_bias, OpAmp, OpAmpBias, OpAmpConstants, ParasiticConfig};
pub use space::{ParamDesc, ParamSpace};
pub use tia::{tia_param_space, Tia, TiaConstants};
pub use toy::ToyCircuit;

use serde::{Deserialize, Serialize};
use std::fmt;

/// How a spec enters the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecRole {
    /// Hard constraint met when `value >= target`.
    AtLeast,
    /// Hard constraint met when `value <= target`.
    AtMost,
    /// Objective to drive below target, weighted by ε.
    Minimize,
}

impl SpecRole {
    pub fn is_hard(self) -> bool {
        !matches!(self, SpecRole::Minimize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDef {
    pub name: String,
    pub unit: String,
    pub role: SpecRole,
}

impl SpecDef {
    pub fn new(name: &str, unit: &str, role: SpecRole) -> Self {
        Self { name: name.to_owned(), unit: unit.to_owned(), role }
    }
}

/// Measured specs, aligned with [`Circuit::specs`]. Always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecVector {
    pub values: Vec<f64>,
}

impl SpecVector {
    pub fn new(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }
}

/// Marker for a parameter point the simulator could not evaluate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Infeasible(pub String);

impl fmt::Display for Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "infeasible: {}", self.0)
    }
}

pub type SimOutcome = Result<SpecVector, Infeasible>;

pub(crate) fn finite_specs(values: Vec<f64>) -> SimOutcome {
    if values.iter().all(|v| v.is_finite()) {
        Ok(SpecVector::new(values))
    } else {
        Err(Infeasible(format!("non-finite measurement {values:?}")))
    }
}

/// A sizing problem: a discrete parameter grid and a simulator over it.
pub trait Circuit: Send + Sync + fmt::Debug {
    /// Stable identifier; `tia` and `opamp` for the shipped circuits.
    fn id(&self) -> &str;
    fn param_space(&self) -> &ParamSpace;
    fn specs(&self) -> &[SpecDef];
    fn simulate(&self, x: &[usize]) -> SimOutcome;

    /// Circuit-specific clamping applied after every action. No-op by default.
    fn constrain(&self, _x: &mut [usize]) {}
}
