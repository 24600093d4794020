use serde::{Deserialize, Serialize};

use crate::circuits::SpecRole;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// Weight of the minimize-objective terms.
    pub epsilon: f64,
    /// Success when `r >= -success_threshold`.
    pub success_threshold: f64,
    /// Added to `r` on success.
    pub bonus: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, success_threshold: 0.01, bonus: 10.0 }
    }
}

impl RewardConfig {
    pub fn is_valid(&self) -> bool {
        self.epsilon > 0.0 && self.bonus > 0.0 && self.success_threshold >= 0.0
    }
}

/// Affine map of `range` onto [-1, 1]; values outside extrapolate linearly.
pub fn normalize_spec(value: f64, range: (f64, f64)) -> Option<f64> {
    let (lo, hi) = range;
    if !(hi > lo) {
        return None;
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    Some((value - mid) / half)
}

fn relative_gap(o: f64, target: f64) -> f64 {
    let den = o.abs() + target.abs();
    if den == 0.0 {
        0.0
    } else {
        (o - target) / den
    }
}

/// Dense shaping term: hard constraints contribute only their violation,
/// minimize-objectives contribute `-ε` times their signed relative gap.
pub fn compute_r(o: &[f64], target: &[f64], roles: &[SpecRole], epsilon: f64) -> f64 {
    debug_assert_eq!(o.len(), target.len());
    debug_assert_eq!(o.len(), roles.len());
    o.iter()
        .zip(target)
        .zip(roles)
        .map(|((&o, &t), role)| {
            let gap = relative_gap(o, t);
            match role {
                SpecRole::AtLeast => gap.min(0.0),
                SpecRole::AtMost => (-gap).min(0.0),
                SpecRole::Minimize => -epsilon * gap,
            }
        })
        .sum()
}

/// Step reward and success flag for a shaping value `r`.
pub fn compute_reward(r: f64, cfg: &RewardConfig) -> (f64, bool) {
    if r >= -cfg.success_threshold {
        (cfg.bonus + r, true)
    } else {
        (r, false)
    }
}
