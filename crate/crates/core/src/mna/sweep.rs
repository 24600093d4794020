use num_complex::Complex64;

use super::{solve_nodes, Component, IoSpec, MnaError, Result};

/// Log-spaced frequency grid description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub f_start: f64,
    pub f_stop: f64,
    pub points_per_decade: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self { f_start: 1.0, f_stop: 100e9, points_per_decade: 20 }
    }
}

impl SweepGrid {
    pub fn new(f_start: f64, f_stop: f64, points_per_decade: usize) -> Self {
        Self { f_start, f_stop, points_per_decade }
    }

    fn validate(&self) -> Result<()> {
        if !(self.f_start > 0.0) || !self.f_start.is_finite() || !self.f_stop.is_finite() {
            return Err(MnaError::BadSweep(format!(
                "frequencies must be positive and finite, got [{}, {}]",
                self.f_start, self.f_stop
            )));
        }
        if !(self.f_start < self.f_stop) {
            return Err(MnaError::BadSweep(format!("f_start {} must be below f_stop {}", self.f_start, self.f_stop)));
        }
        if self.points_per_decade < 10 {
            return Err(MnaError::BadSweep(format!("points_per_decade must be >= 10, got {}", self.points_per_decade)));
        }
        Ok(())
    }
}

/// Log-spaced points from `f_start` to `f_stop` inclusive.
pub fn log_grid(grid: SweepGrid) -> Result<Vec<f64>> {
    grid.validate()?;
    let decades = (grid.f_stop / grid.f_start).log10();
    let intervals = ((decades * grid.points_per_decade as f64).round() as usize).max(1);
    let (l0, l1) = (grid.f_start.log10(), grid.f_stop.log10());
    let mut freqs: Vec<f64> =
        (0..=intervals).map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / intervals as f64)).collect();
    freqs[0] = grid.f_start;
    freqs[intervals] = grid.f_stop;
    Ok(freqs)
}

/// Complex transfer samples over a log-frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub freqs: Vec<f64>,
    pub h: Vec<Complex64>,
    pub node_count: usize,
}

impl FrequencyResponse {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.h.iter().map(|z| z.norm()).collect()
    }
}

pub fn frequency_sweep(
    components: &[Component],
    node_count: usize,
    io: IoSpec,
    grid: SweepGrid,
) -> Result<FrequencyResponse> {
    let freqs = log_grid(grid)?;
    let h = freqs
        .iter()
        .map(|&f| {
            let v = solve_nodes(components, node_count, io.excitation, f)?;
            v.get(io.output).copied().ok_or(MnaError::UnknownNode { index: usize::MAX, node: io.output, node_count })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyResponse { freqs, h, node_count })
}
