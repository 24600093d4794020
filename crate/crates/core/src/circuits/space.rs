use serde::{Deserialize, Serialize};

/// One discretized design parameter: `start + i·step` for `0 <= i < grid_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDesc {
    pub name: String,
    pub unit: String,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub grid_size: usize,
}

impl ParamDesc {
    /// Panics if the range holds fewer than two grid points.
    pub fn new(name: &str, unit: &str, start: f64, stop: f64, step: f64) -> Self {
        assert!(step > 0.0 && stop > start, "bad range for {name}");
        // the epsilon absorbs decimal steps such as 0.1 that are not exact in binary
        let grid_size = ((stop - start) / step + 1e-9).floor() as usize + 1;
        assert!(grid_size >= 2, "{name} needs at least two grid points");
        Self { name: name.to_owned(), unit: unit.to_owned(), start, stop, step, grid_size }
    }

    pub fn decode(&self, index: usize) -> f64 {
        debug_assert!(index < self.grid_size);
        self.start + index as f64 * self.step
    }

    /// Nearest grid index for a physical value, clamped to the grid.
    pub fn encode(&self, value: f64) -> usize {
        let i = ((value - self.start) / self.step).round();
        i.clamp(0.0, (self.grid_size - 1) as f64) as usize
    }

    pub fn center(&self) -> usize {
        self.grid_size / 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub params: Vec<ParamDesc>,
}

impl ParamSpace {
    pub fn new(params: Vec<ParamDesc>) -> Self {
        Self { params }
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn grid_sizes(&self) -> Vec<usize> {
        self.params.iter().map(|p| p.grid_size).collect()
    }

    pub fn contains(&self, x: &[usize]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.params).all(|(&i, p)| i < p.grid_size)
    }

    pub fn decode(&self, x: &[usize]) -> Vec<f64> {
        x.iter().zip(&self.params).map(|(&i, p)| p.decode(i)).collect()
    }

    pub fn center(&self) -> Vec<usize> {
        self.params.iter().map(ParamDesc::center).collect()
    }

    /// Number of distinct parameter points, as a float since it overflows quickly.
    pub fn joint_size(&self) -> f64 {
        self.params.iter().map(|p| p.grid_size as f64).product()
    }

    /// Grid index divided by `K_i - 1`, in `[0, 1]`.
    pub fn normalize(&self, x: &[usize]) -> Vec<f64> {
        x.iter().zip(&self.params).map(|(&i, p)| i as f64 / (p.grid_size - 1) as f64).collect()
    }
}
