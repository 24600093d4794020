use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Target spec values `o*`, aligned with the circuit's spec list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub values: Vec<f64>,
}

impl TargetSpec {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn within(&self, ranges: &[(f64, f64)]) -> bool {
        self.values.len() == ranges.len() && self.values.iter().zip(ranges).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }
}

/// `count` targets, each spec independently uniform in its range.
pub fn sample_targets(ranges: &[(f64, f64)], count: usize, seed: u64) -> Vec<TargetSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            TargetSpec::new(ranges.iter().map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo }).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const RANGES: [(f64, f64); 3] = [(200.0, 400.0), (1e6, 2.5e7), (1e-4, 1e-2)];

    #[test]
    fn fifty_reproducible_targets_inside_ranges() {
        let a = sample_targets(&RANGES, 50, 7);
        assert_eq!(a.len(), 50);
        assert!(a.iter().all(|t| t.within(&RANGES)));
        assert_eq!(a, sample_targets(&RANGES, 50, 7));
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(sample_targets(&RANGES, 5, 1), sample_targets(&RANGES, 5, 2));
    }

    #[test]
    fn collapsed_range_is_constant() {
        let t = sample_targets(&[(60.0, 60.0)], 20, 3);
        assert!(t.iter().all(|t| t.values[0] == 60.0));
    }
}
