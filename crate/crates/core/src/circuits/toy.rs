use super::{Circuit, ParamDesc, ParamSpace, SimOutcome, SpecDef, SpecRole, SpecVector};

/// Exactly solvable sizing problem for tests and smoke runs.
///
/// Every parameter `i` reports its grid position `x_i + 1` twice, once as an
/// at-least and once as an at-most constraint, so a target drawn from a grid
/// point is met only at that point.
#[derive(Debug, Clone)]
pub struct ToyCircuit {
    space: ParamSpace,
    specs: Vec<SpecDef>,
}

impl ToyCircuit {
    pub fn new(dims: usize, levels: usize) -> Self {
        let params = (0..dims).map(|i| ParamDesc::new(&format!("p{i}"), "", 0.0, (levels - 1) as f64, 1.0)).collect();
        let specs = (0..dims)
            .flat_map(|i| {
                [
                    SpecDef::new(&format!("p{i}_lo"), "", SpecRole::AtLeast),
                    SpecDef::new(&format!("p{i}_hi"), "", SpecRole::AtMost),
                ]
            })
            .collect();
        Self { space: ParamSpace::new(params), specs }
    }

    /// Spec vector produced at grid point `x`.
    pub fn spec_at(x: &[usize]) -> Vec<f64> {
        x.iter().flat_map(|&i| [(i + 1) as f64; 2]).collect()
    }

    /// Per-spec ranges covering the whole grid.
    pub fn ranges(&self) -> Vec<(f64, f64)> {
        self.space.params.iter().flat_map(|p| [(1.0, p.grid_size as f64); 2]).collect()
    }
}

impl Circuit for ToyCircuit {
    fn id(&self) -> &str {
        "toy"
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn specs(&self) -> &[SpecDef] {
        &self.specs
    }

    fn simulate(&self, x: &[usize]) -> SimOutcome {
        Ok(SpecVector::new(Self::spec_at(x)))
    }
}
