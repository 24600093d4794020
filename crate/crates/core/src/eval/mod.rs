//! Deployment, transfer evaluation, and comparison reports.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{GaResult, RandomAgentReport};
use crate::circuits::Circuit;
use crate::env::{SizingEnv, TargetSpec};
use crate::neural::{run_episode, ActionMode, Checkpoint, CheckpointError, NeuralError, PolicyNet};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("policy parameters changed during deployment")]
    ParamsMutated,
    #[error("target sets differ: {0}")]
    TargetMismatch(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentRecord {
    pub target: Vec<f64>,
    pub reached: bool,
    pub steps: usize,
    /// `None` when the last visited point was infeasible.
    pub final_spec: Option<Vec<f64>>,
    pub final_params: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentSummary {
    pub reached: usize,
    pub total: usize,
    pub generalization: f64,
    /// Mean steps over reached targets only; `None` if nothing was reached.
    pub mean_steps: Option<f64>,
    pub ga_mean_evals: Option<f64>,
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentReport {
    pub spec_names: Vec<String>,
    pub records: Vec<DeploymentRecord>,
    pub summary: DeploymentSummary,
}

impl DeploymentReport {
    fn from_records(spec_names: Vec<String>, records: Vec<DeploymentRecord>) -> Self {
        let reached: Vec<&DeploymentRecord> = records.iter().filter(|r| r.reached).collect();
        let total = records.len();
        let mean_steps =
            (!reached.is_empty()).then(|| reached.iter().map(|r| r.steps as f64).sum::<f64>() / reached.len() as f64);
        let summary = DeploymentSummary {
            reached: reached.len(),
            total,
            generalization: if total == 0 { 0.0 } else { reached.len() as f64 / total as f64 },
            mean_steps,
            ga_mean_evals: None,
            speedup: None,
        };
        Self { spec_names, records, summary }
    }

    /// One row per target: target values, reached, steps, final spec values.
    pub fn write_csv(&self, w: impl Write) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = self.spec_names.iter().map(|n| format!("target_{n}")).collect();
        header.extend(["reached".to_owned(), "steps".to_owned()]);
        header.extend(self.spec_names.iter().map(|n| format!("final_{n}")));
        out.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<String> = r.target.iter().map(f64::to_string).collect();
            row.push((r.reached as u8).to_string());
            row.push(r.steps.to_string());
            match &r.final_spec {
                Some(s) => row.extend(s.iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), self.spec_names.len())),
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_summary_json(&self, w: impl Write) -> Result<(), EvalError> {
        serde_json::to_writer_pretty(w, &self.summary)?;
        Ok(())
    }
}

/// Runs one episode per target with a fixed policy. Episodes run in
/// parallel; a stochastic episode draws from its own stream keyed by the
/// target index, so reports do not depend on the thread count.
pub fn deploy_net(
    net: &PolicyNet,
    env: &SizingEnv,
    targets: &[TargetSpec],
    mode: ActionMode,
    seed: u64,
) -> Result<DeploymentReport, EvalError> {
    let records: Vec<Result<DeploymentRecord, NeuralError>> = targets
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut env = env.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let tr = run_episode(&mut env, net, t.clone(), mode, &mut rng)?;
            Ok(DeploymentRecord {
                target: t.values.clone(),
                reached: tr.success,
                steps: tr.steps.len(),
                final_spec: tr.final_spec.map(|s| s.values),
                final_params: tr.final_params,
            })
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>, _>>()?;
    let names = env.circuit().specs().iter().map(|s| s.name.clone()).collect();
    Ok(DeploymentReport::from_records(names, records))
}

fn param_digest(net: &PolicyNet) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in &net.params {
        h.update(p.to_le_bytes());
    }
    h.finalize().into()
}

/// Deployment on the environment the checkpoint was trained on; the
/// fingerprint must match exactly.
pub fn deploy(
    ckpt: &Checkpoint,
    env: &SizingEnv,
    targets: &[TargetSpec],
    mode: ActionMode,
    seed: u64,
) -> Result<DeploymentReport, EvalError> {
    ckpt.check_fingerprint(&env.fingerprint())?;
    deploy_net(&ckpt.net, env, targets, mode, seed)
}

/// Deployment on a different variant of the same circuit with no training;
/// only the circuit id must match. Fails if the parameters change.
pub fn transfer_deploy(
    ckpt: &Checkpoint,
    env: &SizingEnv,
    targets: &[TargetSpec],
    mode: ActionMode,
    seed: u64,
) -> Result<DeploymentReport, EvalError> {
    ckpt.check_circuit(env.circuit().id())?;
    let before = param_digest(&ckpt.net);
    let report = deploy_net(&ckpt.net, env, targets, mode, seed)?;
    if param_digest(&ckpt.net) != before {
        return Err(EvalError::ParamsMutated);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    /// Mean simulations over successful targets.
    pub mean_sims: Option<f64>,
    pub reached: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// GA mean evaluations over RL mean steps.
    pub speedup: Option<f64>,
}

impl Comparison {
    pub fn write_csv(&self, w: impl Write) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["method", "mean_sims", "reached", "total", "generalization"])?;
        for r in &self.rows {
            out.write_record([
                r.method.clone(),
                r.mean_sims.map(|m| m.to_string()).unwrap_or_default(),
                r.reached.to_string(),
                r.total.to_string(),
                (r.reached as f64 / r.total as f64).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sample-efficiency table over one shared target set. `ga` holds one
/// result per target, in target order.
pub fn compare(rl: &DeploymentReport, ga: &[GaResult], random: &RandomAgentReport) -> Result<Comparison, EvalError> {
    if ga.len() != rl.records.len() || random.total != rl.records.len() {
        return Err(EvalError::TargetMismatch(format!(
            "rl {} targets, ga {}, random {}",
            rl.records.len(),
            ga.len(),
            random.total
        )));
    }
    let ga_ok: Vec<&GaResult> = ga.iter().filter(|g| g.success).collect();
    let ga_mean =
        (!ga_ok.is_empty()).then(|| ga_ok.iter().map(|g| g.eval_count as f64).sum::<f64>() / ga_ok.len() as f64);
    let random_steps: Vec<usize> =
        random.steps.iter().zip(&random.reached).filter(|(_, &ok)| ok).map(|(&s, _)| s).collect();
    let random_mean =
        (!random_steps.is_empty()).then(|| random_steps.iter().sum::<usize>() as f64 / random_steps.len() as f64);
    let speedup = match (ga_mean, rl.summary.mean_steps) {
        (Some(g), Some(r)) => Some(g / r),
        _ => None,
    };
    Ok(Comparison {
        rows: vec![
            ComparisonRow {
                method: "rl".into(),
                mean_sims: rl.summary.mean_steps,
                reached: rl.summary.reached,
                total: rl.summary.total,
            },
            ComparisonRow { method: "ga".into(), mean_sims: ga_mean, reached: ga_ok.len(), total: ga.len() },
            ComparisonRow {
                method: "random".into(),
                mean_sims: random_mean,
                reached: random.successes,
                total: random.total,
            },
        ],
        speedup,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub params: Vec<usize>,
    /// `100·(parasitic − clean)/|clean|` per spec.
    pub percent: Vec<f64>,
}

/// Percent change of every spec between the clean and perturbed circuit at
/// the given points. Points infeasible in either circuit are skipped.
pub fn spec_delta_histogram(clean: &dyn Circuit, perturbed: &dyn Circuit, points: &[Vec<usize>]) -> Vec<DeltaRow> {
    points
        .iter()
        .filter_map(|x| {
            let a = clean.simulate(x).ok()?;
            let b = perturbed.simulate(x).ok()?;
            let percent = a.values.iter().zip(&b.values).map(|(c, p)| 100.0 * (p - c) / c.abs()).collect();
            Some(DeltaRow { params: x.clone(), percent })
        })
        .collect()
}

pub fn write_delta_csv(rows: &[DeltaRow], spec_names: &[String], w: impl Write) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    let header: Vec<String> = spec_names.iter().map(|n| format!("delta_pct_{n}")).collect();
    out.write_record(&header)?;
    for r in rows {
        out.write_record(r.percent.iter().map(f64::to_string))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{OpAmp, OpAmpConstants, ParasiticConfig, ToyCircuit};
    use crate::env::{sample_targets, EnvConfig, Fingerprint};
    use crate::mna::TechConstants;
    use crate::neural::{initial_net, train, TrainConfig};
    use std::sync::Arc;

    fn toy_env() -> SizingEnv {
        let c = ToyCircuit::new(1, 11);
        let r = c.ranges();
        SizingEnv::new(Arc::new(c), r, EnvConfig::default()).unwrap()
    }

    #[test]
    fn trained_dummy_policy_reaches_everything() {
        let env = toy_env();
        let make = || env.clone();
        let cfg = TrainConfig {
            steps_per_update: 200,
            minibatch: 64,
            workers: 1,
            max_env_steps: 20_000,
            seed: 1,
            ..Default::default()
        };
        let goal = TargetSpec::new(vec![9.0, 9.0]);
        let out = train(&make, initial_net(&env, &cfg).unwrap(), std::slice::from_ref(&goal), &cfg, None).unwrap();
        let ckpt = Checkpoint { fingerprint: env.fingerprint(), train: cfg, net: out.net };
        let targets = vec![goal; 100];
        let rep = deploy(&ckpt, &env, &targets, ActionMode::Greedy, 0).unwrap();
        assert_eq!(rep.summary.reached, 100);
        assert!(rep.summary.mean_steps.unwrap() <= 4.0);
        assert_eq!(rep, deploy(&ckpt, &env, &targets, ActionMode::Greedy, 0).unwrap());
    }

    #[test]
    fn fingerprint_mismatch_refused_but_transfer_allowed() {
        let env = toy_env();
        let net = initial_net(&env, &TrainConfig::default()).unwrap();
        let ckpt = Checkpoint {
            fingerprint: Fingerprint { circuit_id: "toy".into(), ranges_hash: "other".into() },
            train: TrainConfig::default(),
            net,
        };
        let t = vec![TargetSpec::new(vec![3.0, 3.0])];
        assert!(matches!(deploy(&ckpt, &env, &t, ActionMode::Greedy, 0), Err(EvalError::Checkpoint(_))));
        assert!(transfer_deploy(&ckpt, &env, &t, ActionMode::Greedy, 0).is_ok());
        let wrong =
            Checkpoint { fingerprint: Fingerprint { circuit_id: "tia".into(), ranges_hash: String::new() }, ..ckpt };
        assert!(transfer_deploy(&wrong, &env, &t, ActionMode::Greedy, 0).is_err());
    }

    #[test]
    fn summary_counts_reached_only() {
        let rec = |reached, steps| DeploymentRecord {
            target: vec![1.0],
            reached,
            steps,
            final_spec: None,
            final_params: vec![],
        };
        let rep = DeploymentReport::from_records(vec!["a".into()], vec![rec(true, 4), rec(false, 30), rec(true, 10)]);
        assert_eq!(rep.summary.reached, 2);
        assert_eq!(rep.summary.mean_steps, Some(7.0));
        assert!((rep.summary.generalization - 2.0 / 3.0).abs() < 1e-15);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "target_a,reached,steps,final_a");
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn speedup_is_ratio_of_means() {
        let rec = DeploymentRecord { target: vec![], reached: true, steps: 27, final_spec: None, final_params: vec![] };
        let rl = DeploymentReport::from_records(vec![], vec![rec]);
        let ga = vec![GaResult {
            best_x: vec![],
            best_r: 0.0,
            eval_count: 1063,
            success: true,
            generations: 1,
            best_history: vec![],
        }];
        let rnd = RandomAgentReport { successes: 0, total: 1, steps: vec![30], reached: vec![false] };
        let c = compare(&rl, &ga, &rnd).unwrap();
        assert!((c.speedup.unwrap() - 39.37).abs() < 0.01);
        let same = vec![GaResult { eval_count: 27, ..ga[0].clone() }];
        assert_eq!(compare(&rl, &same, &rnd).unwrap().speedup, Some(1.0));
        assert!(compare(&rl, &[], &rnd).is_err());
    }

    #[test]
    fn parasitic_deltas() {
        let tech = TechConstants::default();
        let clean = OpAmp::new(OpAmpConstants::default(), tech, None);
        let zero =
            OpAmp::new(OpAmpConstants::default(), tech, Some(ParasiticConfig { scale: 0.0, ..Default::default() }));
        let par = OpAmp::new(OpAmpConstants::default(), tech, Some(ParasiticConfig::default()));
        let pts = crate::circuits::random_points(&clean, 40, 3);
        let d0 = spec_delta_histogram(&clean, &zero, &pts);
        assert!(d0.iter().all(|r| r.percent.iter().all(|&p| p == 0.0)));
        let d1 = spec_delta_histogram(&clean, &par, &pts);
        assert_eq!(d1.len(), d0.len());
        // ugbw never rises with added shunt capacitance
        assert!(d1.iter().all(|r| r.percent[1] <= 0.0));
    }

    #[test]
    fn transfer_at_zero_scale_matches_plain_deploy() {
        let tech = TechConstants::default();
        let clean = Arc::new(OpAmp::new(OpAmpConstants::default(), tech, None));
        let zero = Arc::new(OpAmp::new(
            OpAmpConstants::default(),
            tech,
            Some(ParasiticConfig { scale: 0.0, ..Default::default() }),
        ));
        let ranges = vec![(300.0, 1300.0), (3e6, 1.5e7), (-7.0, 60.0), (2e-5, 5e-5)];
        let env_clean = SizingEnv::new(clean, ranges.clone(), EnvConfig::default()).unwrap();
        let env_zero = SizingEnv::new(zero, ranges.clone(), EnvConfig::default()).unwrap();
        let cfg = TrainConfig::default();
        let ckpt = Checkpoint {
            fingerprint: env_clean.fingerprint(),
            train: cfg.clone(),
            net: initial_net(&env_clean, &cfg).unwrap(),
        };
        let targets = sample_targets(&ranges, 6, 4);
        let a = deploy(&ckpt, &env_clean, &targets, ActionMode::Greedy, 0).unwrap();
        let b = transfer_deploy(&ckpt, &env_zero, &targets, ActionMode::Greedy, 0).unwrap();
        assert_eq!(a, b);
    }
}
