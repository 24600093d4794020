use serde::{Deserialize, Serialize};

use super::{MnaError, Result};

/// Process constants for the long-channel square-law device model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechConstants {
    /// µ·Cox in A/V².
    pub mu_cox: f64,
    /// Channel-length modulation in 1/V; gds = λ·Id.
    pub lambda: f64,
    /// Gate oxide capacitance per area, F/m².
    pub cox: f64,
    /// Gate-drain overlap capacitance per width, F/m.
    pub cov: f64,
    /// 4kTγ in J, so the channel current noise PSD is `four_kt_gamma · gm`.
    pub four_kt_gamma: f64,
    /// 4kT in J, for resistor thermal noise `four_kt / R`.
    pub four_kt: f64,
}

impl Default for TechConstants {
    fn default() -> Self {
        let four_kt = 4.0 * 1.380_649e-23 * 300.0;
        Self { mu_cox: 50e-6, lambda: 0.5, cox: 0.01, cov: 0.3e-9, four_kt_gamma: four_kt * 2.0 / 3.0, four_kt }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallSignalMos {
    pub gm: f64,
    pub gds: f64,
    pub cgs: f64,
    pub cgd: f64,
    pub id: f64,
    pub vov: f64,
}

pub fn mosfet_small_signal(w: f64, l: f64, id: f64, tech: &TechConstants) -> Result<SmallSignalMos> {
    for (name, v) in [("w", w), ("l", l), ("id", id)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(MnaError::BadDevice(format!("{name} must be positive, got {v}")));
        }
    }
    let vov = (2.0 * id / (tech.mu_cox * (w / l))).sqrt();
    let gm = 2.0 * id / vov;
    let dev =
        SmallSignalMos { gm, gds: tech.lambda * id, cgs: 2.0 / 3.0 * w * l * tech.cox, cgd: w * tech.cov, id, vov };
    let consistent = (dev.gm * dev.vov - 2.0 * id).abs() <= 1e-9 * id;
    if !consistent || !(dev.gds > 0.0) || !dev.gm.is_finite() {
        return Err(MnaError::BadDevice(format!("inconsistent square-law point: {dev:?}")));
    }
    Ok(dev)
}
