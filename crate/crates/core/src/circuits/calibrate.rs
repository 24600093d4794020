use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Circuit, ParamSpace};

/// Spec ranges quoted for the original process technologies. The op-amp
/// phase margin is a lower bound only, so its range is a single point.
pub fn paper_spec_ranges(circuit_id: &str) -> Option<Vec<(f64, f64)>> {
    match circuit_id {
        "tia" => Some(vec![(5e-12, 500e-12), (5.0e8, 7.0e9), (100e-8, 500e-6)]),
        "opamp" => Some(vec![(200.0, 400.0), (1.0e6, 2.5e7), (60.0, 60.0), (0.1e-3, 10e-3)]),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub ranges: Vec<(f64, f64)>,
    pub samples: usize,
    pub infeasible: usize,
}

impl Calibration {
    pub fn infeasible_fraction(&self) -> f64 {
        self.infeasible as f64 / self.samples as f64
    }

    /// Fraction of the feasible samples that fall inside every range on its own axis.
    pub fn coverage(values: &[Vec<f64>], ranges: &[(f64, f64)], spec: usize) -> f64 {
        let (lo, hi) = ranges[spec];
        let inside = values.iter().filter(|v| v[spec] >= lo && v[spec] <= hi).count();
        inside as f64 / values.len() as f64
    }
}

/// Linear-interpolated percentile of an ascending slice, `q` in [0, 1].
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

/// Uniformly random grid points, in draw order.
pub fn random_points(circuit: &dyn Circuit, samples: usize, seed: u64) -> Vec<Vec<usize>> {
    let bounds: Vec<(usize, usize)> = circuit.param_space().grid_sizes().iter().map(|&k| (0, k - 1)).collect();
    random_points_in(&bounds, samples, seed)
}

/// Uniformly random points of the index box `bounds` (inclusive per axis).
pub fn random_points_in(bounds: &[(usize, usize)], samples: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).map(|_| bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()).collect()
}

/// Index box reachable from the grid center in `horizon` unit moves.
pub fn reachable_box(space: &ParamSpace, horizon: usize) -> Vec<(usize, usize)> {
    space
        .params
        .iter()
        .map(|p| {
            let c = p.center();
            (c.saturating_sub(horizon), (c + horizon).min(p.grid_size - 1))
        })
        .collect()
}

/// Sets each spec's range to the [10th, 90th] percentile of its value over
/// `samples` uniformly random grid points. With `horizon`, points are drawn
/// from the box an episode can reach from the center instead of the whole
/// grid. Infeasible points are counted and skipped.
pub fn calibrate_ranges(circuit: &dyn Circuit, samples: usize, seed: u64, horizon: Option<usize>) -> Calibration {
    let bounds = match horizon {
        Some(h) => reachable_box(circuit.param_space(), h),
        None => circuit.param_space().grid_sizes().iter().map(|&k| (0, k - 1)).collect(),
    };
    let (values, infeasible) = sample_specs_in(circuit, &bounds, samples, seed);
    let m = circuit.specs().len();
    let ranges = (0..m)
        .map(|s| {
            let mut col: Vec<f64> = values.iter().map(|v| v[s]).collect();
            col.sort_by(f64::total_cmp);
            (percentile(&col, 0.1), percentile(&col, 0.9))
        })
        .collect();
    Calibration { ranges, samples, infeasible }
}

/// Feasible spec values at uniformly random grid points, plus the infeasible count.
pub fn sample_specs(circuit: &dyn Circuit, samples: usize, seed: u64) -> (Vec<Vec<f64>>, usize) {
    let bounds: Vec<(usize, usize)> = circuit.param_space().grid_sizes().iter().map(|&k| (0, k - 1)).collect();
    sample_specs_in(circuit, &bounds, samples, seed)
}

fn sample_specs_in(
    circuit: &dyn Circuit,
    bounds: &[(usize, usize)],
    samples: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, usize) {
    let mut infeasible = 0;
    let mut values = Vec::with_capacity(samples);
    for x in random_points_in(bounds, samples, seed) {
        match circuit.simulate(&x) {
            Ok(s) => values.push(s.values),
            Err(_) => infeasible += 1,
        }
    }
    (values, infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..11).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.1), 1.0);
        assert_eq!(percentile(&v, 0.9), 9.0);
        assert_eq!(percentile(&v, 0.55), 5.5);
    }

    #[test]
    fn reachable_box_clips_to_grid() {
        let amp = super::super::opamp_param_space();
        assert!(reachable_box(&amp, 30).iter().all(|&b| b == (20, 80)));
        let tia = super::super::tia_param_space();
        assert_eq!(reachable_box(&tia, 30), vec![(0, 4), (0, 15), (0, 9), (0, 19)]);
    }

    #[test]
    fn paper_ranges_recorded() {
        let tia = paper_spec_ranges("tia").unwrap();
        assert_eq!(tia[0], (5e-12, 500e-12));
        let amp = paper_spec_ranges("opamp").unwrap();
        assert_eq!(amp[0], (200.0, 400.0));
        assert!(paper_spec_ranges("nope").is_none());
    }
}
