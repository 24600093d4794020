use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvError, SizingEnv, TargetSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomAgentReport {
    pub successes: usize,
    pub total: usize,
    /// Steps taken on each target, successful or not.
    pub steps: Vec<usize>,
    pub reached: Vec<bool>,
}

impl RandomAgentReport {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.total as f64
    }
}

/// One episode per target with every head drawn uniformly from {-1, 0, +1}.
pub fn random_agent_deploy(
    env: &mut SizingEnv,
    targets: &[TargetSpec],
    seed: u64,
) -> Result<RandomAgentReport, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = env.num_params();
    let mut report = RandomAgentReport { successes: 0, total: targets.len(), steps: Vec::new(), reached: Vec::new() };
    for t in targets {
        env.reset(t.clone())?;
        let mut steps = 0;
        loop {
            let a = Action((0..n).map(|_| rng.gen_range(-1i8..=1)).collect());
            let res = env.step(&a)?;
            steps += 1;
            if res.done {
                break;
            }
        }
        let ok = env.is_success();
        report.successes += ok as usize;
        report.steps.push(steps);
        report.reached.push(ok);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::ToyCircuit;
    use crate::env::EnvConfig;
    use std::sync::Arc;

    fn env() -> SizingEnv {
        let c = ToyCircuit::new(2, 5);
        let r = c.ranges();
        SizingEnv::new(Arc::new(c), r, EnvConfig::default()).unwrap()
    }

    #[test]
    fn always_reachable_targets_all_succeed() {
        // at-least 1 and at-most 5 hold everywhere on the grid
        let t = vec![TargetSpec::new(vec![1.0, 5.0, 1.0, 5.0]); 20];
        let rep = random_agent_deploy(&mut env(), &t, 0).unwrap();
        assert_eq!(rep.successes, 20);
        assert!(rep.steps.iter().all(|&s| s == 1));
    }

    #[test]
    fn unreachable_targets_never_succeed() {
        let t = vec![TargetSpec::new(vec![5.0, 1.0, 5.0, 1.0]); 20];
        let rep = random_agent_deploy(&mut env(), &t, 0).unwrap();
        assert_eq!(rep.successes, 0);
        assert!(rep.steps.iter().all(|&s| s == 30));
    }
}
