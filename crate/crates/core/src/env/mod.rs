//! Sizing environment: ternary grid moves, normalized observations, shaped reward.

mod reward;
mod targets;

pub use reward::{compute_r, compute_reward, normalize_spec, RewardConfig};
pub use targets::{sample_targets, TargetSpec};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::circuits::{Circuit, ParamSpace, SpecRole, SpecVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("spec {index} has a degenerate range ({lo}, {hi})")]
    DegenerateRange { index: usize, lo: f64, hi: f64 },
    #[error("expected {expected} spec ranges, got {got}")]
    RangeCount { expected: usize, got: usize },
    #[error("target has {got} values, circuit has {expected} specs")]
    TargetLength { expected: usize, got: usize },
    #[error("action has {got} entries, circuit has {expected} parameters")]
    ActionLength { expected: usize, got: usize },
    #[error("action entry {0} is not in {{-1, 0, +1}}")]
    ActionValue(i8),
    #[error("step called before reset")]
    NotReset,
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("invalid environment config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Steps per episode.
    pub horizon: usize,
    pub reward: RewardConfig,
    /// Shaping value for an infeasible simulation; `-2·M` when absent.
    #[serde(default)]
    pub r_floor: Option<f64>,
    /// Normalized spec value reported for an infeasible simulation.
    pub obs_floor: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { horizon: 30, reward: RewardConfig::default(), r_floor: None, obs_floor: -5.0 }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.horizon == 0 {
            return Err(EnvError::Config("horizon must be positive".into()));
        }
        if !self.reward.is_valid() {
            return Err(EnvError::Config("reward needs epsilon > 0, bonus > 0, threshold >= 0".into()));
        }
        if let Some(f) = self.r_floor {
            if !(f.is_finite() && f < 0.0) {
                return Err(EnvError::Config("r_floor must be finite and negative".into()));
            }
        }
        if !self.obs_floor.is_finite() {
            return Err(EnvError::Config("obs_floor must be finite".into()));
        }
        Ok(())
    }
}

/// Ternary move per parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action(pub Vec<i8>);

impl Action {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    /// From per-head class indices 0, 1, 2 meaning -1, 0, +1.
    pub fn from_classes(classes: &[usize]) -> Self {
        Self(classes.iter().map(|&c| c as i8 - 1).collect())
    }

    pub fn classes(&self) -> Vec<usize> {
        self.0.iter().map(|&a| (a + 1) as usize).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub norm_o: Vec<f64>,
    pub norm_target: Vec<f64>,
    pub norm_params: Vec<f64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.norm_o.len() + self.norm_target.len() + self.norm_params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[norm_o, norm_target, norm_params]` as the network input.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.norm_o);
        v.extend_from_slice(&self.norm_target);
        v.extend_from_slice(&self.norm_params);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajStep {
    pub obs: Vec<f64>,
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
    pub target: TargetSpec,
    /// Specs at the last visited point; `None` if it was infeasible.
    pub final_spec: Option<SpecVector>,
    pub final_params: Vec<usize>,
    pub sim_count: usize,
    pub success: bool,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    /// Shaping value before the success bonus.
    pub r: f64,
    pub done: bool,
    pub success: bool,
}

/// Identifies what a policy was trained against: circuit and spec normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fingerprint {
    pub circuit_id: String,
    pub ranges_hash: String,
}

impl Fingerprint {
    pub fn new(circuit: &dyn Circuit, ranges: &[(f64, f64)]) -> Self {
        let mut h = Sha256::new();
        h.update(circuit.id().as_bytes());
        for (s, &(lo, hi)) in circuit.specs().iter().zip(ranges) {
            h.update([0u8]);
            h.update(s.name.as_bytes());
            h.update(lo.to_le_bytes());
            h.update(hi.to_le_bytes());
        }
        for p in &circuit.param_space().params {
            h.update([1u8]);
            h.update((p.grid_size as u64).to_le_bytes());
        }
        let ranges_hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Self { circuit_id: circuit.id().to_owned(), ranges_hash }
    }
}

/// `clamp(x_i + a_i, 0, K_i - 1)` per parameter.
pub fn apply_action(x: &[usize], a: &Action, space: &ParamSpace) -> Vec<usize> {
    x.iter()
        .zip(&a.0)
        .zip(&space.params)
        .map(|((&xi, &ai), p)| (xi as i64 + ai as i64).clamp(0, p.grid_size as i64 - 1) as usize)
        .collect()
}

#[derive(Debug, Clone)]
struct Episode {
    target: TargetSpec,
    norm_target: Vec<f64>,
    x: Vec<usize>,
    spec: Option<SpecVector>,
    step_index: usize,
    sim_count: usize,
    done: bool,
    success: bool,
}

#[derive(Debug, Clone)]
pub struct SizingEnv {
    circuit: Arc<dyn Circuit>,
    ranges: Vec<(f64, f64)>,
    roles: Vec<SpecRole>,
    cfg: EnvConfig,
    episode: Option<Episode>,
}

impl SizingEnv {
    pub fn new(circuit: Arc<dyn Circuit>, ranges: Vec<(f64, f64)>, cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let m = circuit.specs().len();
        if ranges.len() != m {
            return Err(EnvError::RangeCount { expected: m, got: ranges.len() });
        }
        for (index, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(EnvError::DegenerateRange { index, lo, hi });
            }
        }
        let roles = circuit.specs().iter().map(|s| s.role).collect();
        Ok(Self { circuit, ranges, roles, cfg, episode: None })
    }

    pub fn circuit(&self) -> &Arc<dyn Circuit> {
        &self.circuit
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn roles(&self) -> &[SpecRole] {
        &self.roles
    }

    pub fn num_specs(&self) -> usize {
        self.roles.len()
    }

    pub fn num_params(&self) -> usize {
        self.circuit.param_space().dim()
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.num_specs() + self.num_params()
    }

    pub fn r_floor(&self) -> f64 {
        self.cfg.r_floor.unwrap_or(-2.0 * self.num_specs() as f64)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::new(self.circuit.as_ref(), &self.ranges)
    }

    pub fn params(&self) -> Option<&[usize]> {
        self.episode.as_ref().map(|e| e.x.as_slice())
    }

    pub fn current_spec(&self) -> Option<&SpecVector> {
        self.episode.as_ref().and_then(|e| e.spec.as_ref())
    }

    pub fn sim_count(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.sim_count)
    }

    pub fn step_index(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.step_index)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.done)
    }

    pub fn is_success(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.success)
    }

    pub fn target(&self) -> Option<&TargetSpec> {
        self.episode.as_ref().map(|e| &e.target)
    }

    /// Shaping value of a simulation outcome against a target; the infeasible floor otherwise.
    pub fn shaped(&self, spec: Option<&SpecVector>, target: &TargetSpec) -> f64 {
        match spec {
            Some(s) => compute_r(&s.values, &target.values, &self.roles, self.cfg.reward.epsilon),
            None => self.r_floor(),
        }
    }

    fn normalize_all(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(&self.ranges)
            .map(|(&v, &r)| normalize_spec(v, r).expect("ranges validated at construction"))
            .collect()
    }

    fn observe(&self, ep: &Episode) -> Observation {
        let norm_o = match &ep.spec {
            Some(s) => self.normalize_all(&s.values),
            None => vec![self.cfg.obs_floor; self.num_specs()],
        };
        Observation {
            norm_o,
            norm_target: ep.norm_target.clone(),
            norm_params: self.circuit.param_space().normalize(&ep.x),
        }
    }

    pub fn reset(&mut self, target: TargetSpec) -> Result<Observation, EnvError> {
        if target.values.len() != self.num_specs() {
            return Err(EnvError::TargetLength { expected: self.num_specs(), got: target.values.len() });
        }
        let x = self.circuit.param_space().center();
        let spec = self.circuit.simulate(&x).ok();
        let ep = Episode {
            norm_target: self.normalize_all(&target.values),
            target,
            x,
            spec,
            step_index: 0,
            sim_count: 1,
            done: false,
            success: false,
        };
        let obs = self.observe(&ep);
        self.episode = Some(ep);
        Ok(obs)
    }

    pub fn step(&mut self, a: &Action) -> Result<StepResult, EnvError> {
        let n = self.num_params();
        if a.0.len() != n {
            return Err(EnvError::ActionLength { expected: n, got: a.0.len() });
        }
        if let Some(&bad) = a.0.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(EnvError::ActionValue(bad));
        }
        let mut ep = self.episode.take().ok_or(EnvError::NotReset)?;
        if ep.done {
            self.episode = Some(ep);
            return Err(EnvError::EpisodeFinished);
        }
        let space = self.circuit.param_space();
        let mut x = apply_action(&ep.x, a, space);
        self.circuit.constrain(&mut x);
        ep.x = x;
        ep.spec = self.circuit.simulate(&ep.x).ok();
        ep.sim_count += 1;
        ep.step_index += 1;
        let r = self.shaped(ep.spec.as_ref(), &ep.target);
        let (reward, success) = if ep.spec.is_some() { compute_reward(r, &self.cfg.reward) } else { (r, false) };
        ep.success = success;
        ep.done = success || ep.step_index >= self.cfg.horizon;
        let res = StepResult { obs: self.observe(&ep), reward, r, done: ep.done, success };
        self.episode = Some(ep);
        Ok(res)
    }

    /// Shaping value of the current point, or `None` before reset.
    pub fn current_r(&self) -> Option<f64> {
        self.episode.as_ref().map(|e| self.shaped(e.spec.as_ref(), &e.target))
    }

    /// Success of the reset point itself, which counts as a zero-step solve.
    pub fn reset_is_success(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| {
            e.spec.is_some() && compute_reward(self.shaped(e.spec.as_ref(), &e.target), &self.cfg.reward).1
        })
    }
}
