use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dist::log_softmax3;
use super::{NeuralError, PolicyNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub lr: f64,
    pub epochs_per_update: usize,
    pub minibatch: usize,
    /// Env steps per PPO batch, summed over workers. Episodes are never cut,
    /// so a batch can run slightly over.
    pub steps_per_update: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    pub target_mean_reward: f64,
    /// Batches in the stopping running mean.
    pub running_window: usize,
    pub max_env_steps: usize,
    /// Training continues at least this long even once the running mean is met.
    pub min_env_steps: usize,
    pub workers: usize,
    /// Size of the cycled training target set.
    pub training_targets: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            lr: 3e-4,
            epochs_per_update: 10,
            minibatch: 256,
            steps_per_update: 3000,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: Some(0.5),
            target_mean_reward: 0.0,
            running_window: 10,
            max_env_steps: 500_000,
            min_env_steps: 0,
            workers: 4,
            training_targets: 50,
            hidden: vec![50; 3],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::Config(m.to_owned()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.lam > 0.0 && self.lam <= 1.0) {
            return bad("lam must lie in (0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs_per_update == 0 || self.minibatch == 0 || self.steps_per_update == 0 {
            return bad("epochs, minibatch and steps_per_update must be positive");
        }
        if self.workers == 0 || self.training_targets == 0 || self.running_window == 0 {
            return bad("workers, training_targets and running_window must be positive");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return bad("loss coefficients must be non-negative");
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        if self.min_env_steps > self.max_env_steps {
            return bad("min_env_steps exceeds max_env_steps");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty and positive");
        }
        Ok(())
    }
}

/// One collected transition with its PPO targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    /// Head classes 0, 1, 2.
    pub classes: Vec<usize>,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Advantages and returns with `V_{t+1}` masked on done steps.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "misaligned GAE inputs");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_v * live - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        adv[t] = next_adv;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_frac: f64,
}

impl PpoStats {
    fn add(&mut self, o: &PpoStats) {
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.kl += o.kl;
        self.clip_frac += o.clip_frac;
    }

    fn scale(&mut self, k: f64) {
        self.policy_loss *= k;
        self.value_loss *= k;
        self.entropy *= k;
        self.kl *= k;
        self.clip_frac *= k;
    }
}

/// Loss coefficients used by [`loss_and_grad`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs {
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
}

impl From<&TrainConfig> for LossCoefs {
    fn from(c: &TrainConfig) -> Self {
        Self { clip: c.clip, entropy_coef: c.entropy_coef, value_coef: c.value_coef }
    }
}

fn sample_loss(net: &PolicyNet, s: &Sample, k: LossCoefs, grad: &mut [f64]) -> Result<(f64, PpoStats), NeuralError> {
    let cache = net.forward_cached(&s.obs)?;
    let heads = net.heads();
    let mut lps = Vec::with_capacity(heads);
    let mut lp_new = 0.0;
    let mut ent = 0.0;
    for (h, z) in cache.logits.chunks_exact(3).enumerate() {
        let l = log_softmax3(z);
        lp_new += l[s.classes[h]];
        ent -= l.iter().map(|v| v.exp() * v).sum::<f64>();
        lps.push(l);
    }
    let ratio = (lp_new - s.old_log_prob).exp();
    let a = s.advantage;
    let surr1 = ratio * a;
    let surr2 = ratio.clamp(1.0 - k.clip, 1.0 + k.clip) * a;
    let policy_loss = -surr1.min(surr2);
    let dv = cache.value - s.ret;
    let value_loss = dv * dv;
    let loss = policy_loss + k.value_coef * value_loss - k.entropy_coef * ent;

    // d(policy_loss)/d(lp_new); zero where the clipped branch is the minimum
    let dlp = if surr1 <= surr2 { -ratio * a } else { 0.0 };
    let mut dlogits = vec![0.0; 3 * heads];
    for (h, l) in lps.iter().enumerate() {
        let head_ent = -l.iter().map(|v| v.exp() * v).sum::<f64>();
        for c in 0..3 {
            let p = l[c].exp();
            let onehot = if c == s.classes[h] { 1.0 } else { 0.0 };
            let dent = -p * (l[c] + head_ent);
            dlogits[3 * h + c] = dlp * (onehot - p) - k.entropy_coef * dent;
        }
    }
    net.backward(&cache, &dlogits, 2.0 * k.value_coef * dv, grad);
    let stats = PpoStats {
        policy_loss,
        value_loss,
        entropy: ent,
        kl: s.old_log_prob - lp_new,
        clip_frac: if (ratio - 1.0).abs() > k.clip { 1.0 } else { 0.0 },
    };
    Ok((loss, stats))
}

const GRAD_CHUNK: usize = 32;

/// Mean loss over `batch` and its gradient. Chunks are reduced in a fixed
/// order, so the result does not depend on the thread count.
pub fn loss_and_grad(
    net: &PolicyNet,
    batch: &[&Sample],
    k: LossCoefs,
) -> Result<(f64, Vec<f64>, PpoStats), NeuralError> {
    let np = net.params.len();
    type Part = (f64, Vec<f64>, PpoStats);
    let parts: Vec<Result<Part, NeuralError>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; np];
            let mut loss = 0.0;
            let mut st = PpoStats::default();
            for s in chunk {
                let (l, ss) = sample_loss(net, s, k, &mut g)?;
                loss += l;
                st.add(&ss);
            }
            Ok((loss, g, st))
        })
        .collect();
    let mut grad = vec![0.0; np];
    let mut loss = 0.0;
    let mut stats = PpoStats::default();
    for p in parts {
        let (l, g, st) = p?;
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        stats.add(&st);
    }
    let inv = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    stats.scale(inv);
    Ok((loss * inv, grad, stats))
}

/// Probability ratios of `batch` under `net` against the recorded log-probs.
pub fn ratios(net: &PolicyNet, batch: &[Sample]) -> Result<Vec<f64>, NeuralError> {
    batch
        .iter()
        .map(|s| {
            let (logits, _) = net.forward(&s.obs)?;
            let lp: f64 = logits.chunks_exact(3).zip(&s.classes).map(|(z, &c)| log_softmax3(z)[c]).sum();
            Ok((lp - s.old_log_prob).exp())
        })
        .collect()
}

/// Bias-corrected adaptive-moment optimizer, minimizing.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Normalizes advantages in place; skipped when the variance is below 1e-8.
pub fn normalize_advantages(samples: &mut [Sample]) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return;
    }
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    if var < 1e-8 {
        return;
    }
    let sd = var.sqrt();
    samples.iter_mut().for_each(|s| s.advantage = (s.advantage - mean) / sd);
}

/// Clipped-surrogate epochs over shuffled minibatches. `samples` must already
/// carry normalized advantages.
pub fn ppo_update(
    net: &mut PolicyNet,
    adam: &mut Adam,
    samples: &[Sample],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<PpoStats, NeuralError> {
    let k = LossCoefs::from(cfg);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut total = PpoStats::default();
    let mut count = 0usize;
    for epoch in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for (mb, idx) in order.chunks(cfg.minibatch).enumerate() {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
            let (loss, mut grad, stats) = loss_and_grad(net, &batch, k)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NeuralError::NonFinite(format!(
                    "epoch {epoch} minibatch {mb}: loss {loss}, stats {stats:?}"
                )));
            }
            if let Some(max) = cfg.max_grad_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    grad.iter_mut().for_each(|g| *g *= max / norm);
                }
            }
            adam.step(&mut net.params, &grad, cfg.lr);
            if !net.is_finite() {
                return Err(NeuralError::NonFinite(format!("parameters after epoch {epoch} minibatch {mb}")));
            }
            total.add(&stats);
            count += 1;
        }
    }
    if count > 0 {
        total.scale(1.0 / count as f64);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{dist, NetArch};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gae_examples() {
        let (a, r) = compute_gae(&[10.0], &[0.0], &[true], 0.99, 0.95);
        assert_eq!((a[0], r[0]), (10.0, 10.0));

        let rw = [1.0, -2.0, 3.0];
        let v = [0.5, 0.1, -0.3];
        let (a, _) = compute_gae(&rw, &v, &[false, false, true], 0.0, 0.95);
        for t in 0..3 {
            assert_eq!(a[t], rw[t] - v[t]);
        }
        let (a, r) = compute_gae(&rw, &v, &[false, false, false], 1.0, 1.0);
        assert!((a[0] - (2.0 - 0.5)).abs() < 1e-12);
        assert!((a[1] - (1.0 - 0.1)).abs() < 1e-12);
        assert!((a[2] - (3.0 + 0.3)).abs() < 1e-12);
        assert!((r[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gae_resets_across_episode_boundary() {
        let (a, _) = compute_gae(&[1.0, 5.0], &[0.0, 0.0], &[true, true], 0.9, 0.9);
        assert_eq!(a, vec![1.0, 5.0]);
    }

    fn random_batch(net: &PolicyNet, n: usize, rng: &mut ChaCha8Rng, perturb: bool) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let obs: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let (logits, _) = net.forward(&obs).unwrap();
                let (a, lp, _) = dist::sample_action(&logits, rng);
                let shift = if perturb { rng.gen_range(-0.4..0.4) } else { 0.0 };
                Sample {
                    obs,
                    classes: a.classes(),
                    old_log_prob: lp + shift,
                    advantage: rng.gen_range(-2.0..2.0),
                    ret: rng.gen_range(-3.0..3.0),
                }
            })
            .collect()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let k = LossCoefs { clip: 0.2, entropy_coef: 0.05, value_coef: 0.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let arch = NetArch {
                input: rng.gen_range(1..4),
                hidden: vec![rng.gen_range(1..4); rng.gen_range(1..3)],
                heads: rng.gen_range(1..3),
            };
            let mut net = PolicyNet::new(arch, trial).unwrap();
            // larger heads than the 0.01 init so the softmax is far from uniform
            net.params.iter_mut().for_each(|p| *p += rng.gen_range(-0.5..0.5));
            let batch = random_batch(&net, 6, &mut rng, true);
            let refs: Vec<&Sample> = batch.iter().collect();
            let (_, g, _) = loss_and_grad(&net, &refs, k).unwrap();
            let h = 1e-5;
            for (i, &gi) in g.iter().enumerate() {
                let mut p = net.clone();
                p.params[i] += h;
                let lp = loss_and_grad(&p, &refs, k).unwrap().0;
                p.params[i] -= 2.0 * h;
                let lm = loss_and_grad(&p, &refs, k).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                let scale = gi.abs().max(fd.abs()).max(1e-6);
                assert!((gi - fd).abs() / scale < 1e-4, "trial {trial} param {i}: {gi} vs {fd}");
            }
        }
    }

    #[test]
    fn fresh_batch_has_unit_ratio() {
        let net = PolicyNet::new(NetArch::standard(5, 3), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = random_batch(&net, 64, &mut rng, false);
        assert!(ratios(&net, &batch).unwrap().iter().all(|r| (r - 1.0).abs() < 1e-12));
        let refs: Vec<&Sample> = batch.iter().collect();
        let (_, _, st) =
            loss_and_grad(&net, &refs, LossCoefs { clip: 0.2, entropy_coef: 0.0, value_coef: 0.5 }).unwrap();
        assert_eq!(st.clip_frac, 0.0);
    }

    #[test]
    fn zero_advantage_has_zero_policy_loss() {
        let net = PolicyNet::new(NetArch::standard(4, 2), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut batch = random_batch(&net, 16, &mut rng, true);
        batch.iter_mut().for_each(|s| s.advantage = 0.0);
        let refs: Vec<&Sample> = batch.iter().collect();
        let k = LossCoefs { clip: 0.2, entropy_coef: 0.0, value_coef: 0.0 };
        let (loss, g, st) = loss_and_grad(&net, &refs, k).unwrap();
        assert_eq!(st.policy_loss, 0.0);
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn entropy_bonus_drives_heads_uniform() {
        let mut net = PolicyNet::new(NetArch { input: 3, hidden: vec![8], heads: 2 }, 4).unwrap();
        net.params.iter_mut().for_each(|p| *p *= 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = TrainConfig {
            entropy_coef: 1.0,
            value_coef: 0.0,
            lr: 1e-2,
            epochs_per_update: 1,
            minibatch: 32,
            ..Default::default()
        };
        let mut adam = Adam::new(net.params.len());
        let mut batch = random_batch(&net, 32, &mut rng, false);
        batch.iter_mut().for_each(|s| s.advantage = 0.0);
        for _ in 0..2000 {
            ppo_update(&mut net, &mut adam, &batch, &cfg, &mut rng).unwrap();
        }
        for s in &batch {
            let (logits, _) = net.forward(&s.obs).unwrap();
            let e = dist::entropy(&logits);
            assert!((e - 2.0 * 3f64.ln()).abs() / (2.0 * 3f64.ln()) < 0.01, "{e}");
            for p in dist::head_probs(&logits) {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn advantage_normalization() {
        let mut s: Vec<Sample> = (0..4)
            .map(|i| Sample { obs: vec![], classes: vec![], old_log_prob: 0.0, advantage: i as f64, ret: 0.0 })
            .collect();
        normalize_advantages(&mut s);
        let m: f64 = s.iter().map(|s| s.advantage).sum::<f64>() / 4.0;
        let v: f64 = s.iter().map(|s| s.advantage * s.advantage).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        let mut c = vec![s[0].clone(); 3];
        c.iter_mut().for_each(|x| x.advantage = 2.0);
        normalize_advantages(&mut c);
        assert!(c.iter().all(|x| x.advantage == 2.0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { clip: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..Default::default() }.validate().is_err());
    }
}
