use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dist::{greedy_action, sample_action};
use super::ppo::{compute_gae, normalize_advantages, ppo_update, Adam, PpoStats, Sample, TrainConfig};
use super::{NetArch, NeuralError, PolicyNet};
use crate::env::{sample_targets, SizingEnv, TargetSpec, TrajStep, Trajectory};

/// How the policy picks actions during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// Runs one episode from reset to done.
pub fn run_episode(
    env: &mut SizingEnv,
    net: &PolicyNet,
    target: TargetSpec,
    mode: ActionMode,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, NeuralError> {
    let mut obs = env.reset(target.clone())?.to_vec();
    let mut steps = Vec::with_capacity(env.config().horizon);
    loop {
        let (logits, value) = net.forward(&obs)?;
        let (action, log_prob) = match mode {
            ActionMode::Sample => {
                let (a, lp, _) = sample_action(&logits, rng);
                (a, lp)
            }
            ActionMode::Greedy => {
                let a = greedy_action(&logits);
                let lp = super::dist::log_prob(&logits, &a);
                (a, lp)
            }
        };
        let res = env.step(&action)?;
        let next = res.obs.to_vec();
        steps.push(TrajStep { obs, action, log_prob, value, reward: res.reward, done: res.done });
        obs = next;
        if res.done {
            break;
        }
    }
    Ok(Trajectory {
        steps,
        target,
        final_spec: env.current_spec().cloned(),
        final_params: env.params().map(<[usize]>::to_vec).unwrap_or_default(),
        sim_count: env.sim_count(),
        success: env.is_success(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env_steps: usize,
    pub mean_reward: f64,
    pub running_mean: f64,
    pub episodes: usize,
    pub success_rate: f64,
    pub stats: PpoStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn write_csv(&self, w: impl Write) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["env_steps", "mean_reward", "running_mean", "episodes", "success_rate"])?;
        for p in &self.points {
            out.write_record([
                p.env_steps.to_string(),
                p.mean_reward.to_string(),
                p.running_mean.to_string(),
                p.episodes.to_string(),
                p.success_rate.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: PolicyNet,
    pub curve: TrainingCurve,
    /// The running mean reached the target at some batch.
    pub converged: bool,
    /// Env steps at the first such batch.
    pub converged_at: Option<usize>,
    pub env_steps: usize,
}

/// The cycled training target set for a run.
pub fn training_targets(env: &SizingEnv, cfg: &TrainConfig) -> Vec<TargetSpec> {
    sample_targets(env.ranges(), cfg.training_targets, cfg.seed.wrapping_add(0x7a5c))
}

/// A freshly initialized net sized for `env`.
pub fn initial_net(env: &SizingEnv, cfg: &TrainConfig) -> Result<PolicyNet, NeuralError> {
    let arch = NetArch { input: env.obs_dim(), hidden: cfg.hidden.clone(), heads: env.num_params() };
    PolicyNet::new(arch, cfg.seed)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn to_samples(trajs: &[Trajectory], cfg: &TrainConfig) -> Vec<Sample> {
    let mut out = Vec::new();
    for t in trajs {
        let rewards: Vec<f64> = t.steps.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = t.steps.iter().map(|s| s.value).collect();
        let dones: Vec<bool> = t.steps.iter().map(|s| s.done).collect();
        let (adv, ret) = compute_gae(&rewards, &values, &dones, cfg.gamma, cfg.lam);
        for ((s, a), r) in t.steps.iter().zip(adv).zip(ret) {
            out.push(Sample {
                obs: s.obs.clone(),
                classes: s.action.classes(),
                old_log_prob: s.log_prob,
                advantage: a,
                ret: r,
            });
        }
    }
    out
}

/// PPO until the running mean episode reward reaches the target (and at least
/// `min_env_steps` have run) or the step budget runs out. Each worker collects whole episodes on its own environment
/// with its own random stream, so results depend on the seed and worker count only.
pub fn train(
    make_env: &(dyn Fn() -> SizingEnv + Sync),
    mut net: PolicyNet,
    targets: &[TargetSpec],
    cfg: &TrainConfig,
    mut on_batch: Option<&mut dyn FnMut(&CurvePoint)>,
) -> Result<TrainOutcome, NeuralError> {
    cfg.validate()?;
    if targets.is_empty() {
        return Err(NeuralError::Config("no training targets".into()));
    }
    let probe = make_env();
    if net.input_dim() != probe.obs_dim() || net.heads() != probe.num_params() {
        return Err(NeuralError::Architecture(format!(
            "net {}→{} heads, env {}→{} params",
            net.input_dim(),
            net.heads(),
            probe.obs_dim(),
            probe.num_params()
        )));
    }
    let workers = cfg.workers;
    let quota = cfg.steps_per_update.div_ceil(workers);
    let mut envs: Vec<SizingEnv> = (0..workers).map(|_| make_env()).collect();
    let mut cursors: Vec<usize> = (0..workers).collect();
    let mut adam = Adam::new(net.params.len());
    let mut update_rng = stream_rng(cfg.seed, 0);
    let mut curve = TrainingCurve::default();
    let mut env_steps = 0usize;
    let mut converged = false;
    let mut converged_at = None;
    let mut batch = 0u64;
    while env_steps < cfg.max_env_steps {
        let snapshot = &net;
        let per_worker: Vec<Result<(Vec<Trajectory>, usize), NeuralError>> = envs
            .par_iter_mut()
            .zip(cursors.par_iter_mut())
            .enumerate()
            .map(|(w, (env, cursor))| {
                let mut rng = stream_rng(cfg.seed, 1 + batch * workers as u64 + w as u64);
                let mut trajs = Vec::new();
                let mut steps = 0;
                while steps < quota {
                    let t = run_episode(
                        env,
                        snapshot,
                        targets[*cursor % targets.len()].clone(),
                        ActionMode::Sample,
                        &mut rng,
                    )?;
                    *cursor += workers;
                    steps += t.steps.len();
                    trajs.push(t);
                }
                Ok((trajs, steps))
            })
            .collect();
        let mut trajs = Vec::new();
        for r in per_worker {
            let (t, s) = r?;
            env_steps += s;
            trajs.extend(t);
        }
        let episodes = trajs.len();
        let mean_reward = trajs.iter().map(Trajectory::total_reward).sum::<f64>() / episodes as f64;
        let success_rate = trajs.iter().filter(|t| t.success).count() as f64 / episodes as f64;
        let mut samples = to_samples(&trajs, cfg);
        normalize_advantages(&mut samples);
        let stats = ppo_update(&mut net, &mut adam, &samples, cfg, &mut update_rng)?;

        let window = cfg.running_window.min(curve.points.len() + 1);
        let recent: f64 = curve.points.iter().rev().take(window - 1).map(|p| p.mean_reward).sum::<f64>() + mean_reward;
        let running_mean = recent / window as f64;
        let point = CurvePoint { env_steps, mean_reward, running_mean, episodes, success_rate, stats };
        if let Some(f) = on_batch.as_deref_mut() {
            f(&point);
        }
        curve.points.push(point);
        batch += 1;
        if curve.points.len() >= cfg.running_window && running_mean >= cfg.target_mean_reward {
            converged = true;
            converged_at.get_or_insert(env_steps);
            if env_steps >= cfg.min_env_steps {
                break;
            }
        }
    }
    Ok(TrainOutcome { net, curve, converged, converged_at, env_steps })
}
