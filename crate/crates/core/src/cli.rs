//! Command-line driver. Every verb reads one config file, writes its artifacts
//! into the output directory, and records them in `manifest_<verb>.json`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{
    best_sweep_row, ga_optimize, ga_population_sweep, random_agent_deploy, GaConfig, GaResult, RandomAgentReport,
};
use crate::circuits::calibrate_ranges;
use crate::config::{ConfigError, RunConfig};
use crate::env::TargetSpec;
use crate::eval::{
    compare, deploy, spec_delta_histogram, transfer_deploy, write_delta_csv, DeploymentReport, EvalError,
};
use crate::neural::{initial_net, train, training_targets, ActionMode, Checkpoint, CheckpointError, NeuralError};
use crate::selftest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FINGERPRINT: i32 = 3;
pub const EXIT_SELFTEST: i32 = 4;
pub const EXIT_NOT_CONVERGED: i32 = 5;
/// Unknown verb or flag.
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "ampsize", version, about = "RL sizing of analog circuits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed the verb uses.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Caps worker threads; for `train` it also sets the rollout worker count.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes percentile spec ranges into the config.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
        /// Write the calibrated config here instead of overwriting `--config`.
        #[arg(long)]
        write_to: Option<PathBuf>,
    },
    /// Trains a policy; writes a checkpoint and the training curve.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Deploys a checkpoint on unseen targets.
    Deploy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        targets: Option<usize>,
        /// Sample actions instead of taking each head's argmax.
        #[arg(long)]
        stochastic: bool,
    },
    /// Deploys a clean-trained checkpoint on the parasitic op-amp.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        targets: Option<usize>,
        #[arg(long)]
        stochastic: bool,
    },
    /// Genetic-algorithm baseline.
    Ga {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        targets: Option<usize>,
        /// Also run the population sweep.
        #[arg(long)]
        sweep: bool,
    },
    /// Uniform random-action baseline.
    Random {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        targets: Option<usize>,
    },
    /// RL, GA and random agent on one shared target set.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        targets: Option<usize>,
    },
    /// Runs the analytic oracle suite.
    Selftest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Fingerprint(CheckpointError),
    #[error("selftest failed: {0}")]
    Selftest(String),
    #[error("training did not reach the target mean reward within {0} env steps")]
    NotConverged(usize),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Fingerprint(_) => EXIT_FINGERPRINT,
            CliError::Selftest(_) => EXIT_SELFTEST,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            CliError::Other(_) => EXIT_FAILURE,
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Fingerprint { .. } | CheckpointError::Circuit { .. } => CliError::Fingerprint(e),
            e => CliError::Other(format!("checkpoint: {e}")),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Checkpoint(c) => c.into(),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<NeuralError> for CliError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Config(m) => CliError::Config(ConfigError::Invalid(m)),
            e => CliError::Other(e.to_string()),
        }
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

#[derive(Debug, Serialize)]
struct Artifact {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    verb: &'a str,
    version: &'a str,
    config_hash: Option<String>,
    seed: Option<u64>,
    workers: Option<usize>,
    artifacts: Vec<Artifact>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects artifact files for one run and writes the manifest last.
struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| other(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir, artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| other(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.push(Artifact { path: name.to_owned(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(other)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn finish(
        self,
        verb: &str,
        config: Option<&RunConfig>,
        seed: Option<u64>,
        workers: Option<usize>,
    ) -> Result<(), CliError> {
        let m = Manifest {
            verb,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: config.map(RunConfig::hash),
            seed,
            workers,
            artifacts: self.artifacts,
        };
        let mut bytes = serde_json::to_vec_pretty(&m).map_err(other)?;
        bytes.push(b'\n');
        let path = self.dir.join(format!("manifest_{verb}.json"));
        std::fs::write(&path, bytes).map_err(|e| other(format!("cannot write {}: {e}", path.display())))
    }
}

fn report_bytes(r: &DeploymentReport) -> Result<(Vec<u8>, Vec<u8>), CliError> {
    let mut csv = Vec::new();
    r.write_csv(&mut csv)?;
    let mut json = Vec::new();
    r.write_summary_json(&mut json)?;
    Ok((csv, json))
}

fn target_header(names: &[String]) -> Vec<String> {
    names.iter().map(|n| format!("target_{n}")).collect()
}

fn ga_csv(names: &[String], targets: &[TargetSpec], runs: &[GaResult]) -> Result<Vec<u8>, CliError> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = target_header(names);
    header.extend(["success", "evals", "best_r", "generations"].map(String::from));
    out.write_record(&header).map_err(other)?;
    for (t, g) in targets.iter().zip(runs) {
        let mut row: Vec<String> = t.values.iter().map(f64::to_string).collect();
        row.extend([
            (g.success as u8).to_string(),
            g.eval_count.to_string(),
            g.best_r.to_string(),
            g.generations.to_string(),
        ]);
        out.write_record(&row).map_err(other)?;
    }
    out.into_inner().map_err(other)
}

fn random_csv(names: &[String], targets: &[TargetSpec], rep: &RandomAgentReport) -> Result<Vec<u8>, CliError> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = target_header(names);
    header.extend(["reached", "steps"].map(String::from));
    out.write_record(&header).map_err(other)?;
    for ((t, ok), s) in targets.iter().zip(&rep.reached).zip(&rep.steps) {
        let mut row: Vec<String> = t.values.iter().map(f64::to_string).collect();
        row.extend([(*ok as u8).to_string(), s.to_string()]);
        out.write_record(&row).map_err(other)?;
    }
    out.into_inner().map_err(other)
}

/// One GA run per target, seeded `seed + i`.
pub fn ga_runs(env: &crate::env::SizingEnv, targets: &[TargetSpec], cfg: &GaConfig) -> Vec<GaResult> {
    targets
        .iter()
        .enumerate()
        .map(|(i, t)| ga_optimize(env, t, &GaConfig { seed: cfg.seed.wrapping_add(i as u64), ..cfg.clone() }))
        .collect()
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Ok(Checkpoint::load(path)?)
}

fn mode(stochastic: bool) -> ActionMode {
    if stochastic {
        ActionMode::Sample
    } else {
        ActionMode::Greedy
    }
}

fn set_threads(workers: Option<usize>) {
    if let Some(w) = workers {
        // fails harmlessly if a global pool already exists in this process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
}

struct Prepared {
    cfg: RunConfig,
    dir: PathBuf,
}

fn prepare(common: &Common, apply_seed: impl FnOnce(&mut RunConfig, u64)) -> Result<Prepared, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        apply_seed(&mut cfg, s);
    }
    if let Some(w) = common.workers {
        cfg.train.workers = w;
    }
    cfg.validate()?;
    set_threads(common.workers);
    let dir = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok(Prepared { cfg, dir })
}

/// Runs one parsed command.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Selftest { out } => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(dir) = out {
                let mut o = Outputs::new(dir)?;
                o.write_json("selftest.json", &checks)?;
                o.finish("selftest", None, None, None)?;
            }
            let bad: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
            if bad.is_empty() {
                Ok(())
            } else {
                Err(CliError::Selftest(bad.join(", ")))
            }
        }
        Command::Calibrate { common, samples, write_to } => {
            let p = prepare(&common, |c, s| c.calibration.seed = s)?;
            let mut cfg = p.cfg;
            if let Some(n) = samples {
                cfg.calibration.samples = n;
                cfg.validate()?;
            }
            let hash_in = cfg.clone();
            let cal = calibrate_ranges(
                cfg.build_circuit(false).as_ref(),
                cfg.calibration.samples,
                cfg.calibration.seed,
                cfg.calibration.horizon,
            );
            if cal.ranges.iter().any(|&(lo, hi)| !(hi > lo)) {
                return Err(
                    ConfigError::Invalid(format!("calibration produced a degenerate range: {:?}", cal.ranges)).into()
                );
            }
            println!("calibrated ranges {:?} ({} of {} samples infeasible)", cal.ranges, cal.infeasible, cal.samples);
            cfg.spec_ranges.calibrated = Some(cal.ranges.clone());
            let target = write_to.unwrap_or_else(|| common.config.clone());
            std::fs::write(&target, cfg.to_json() + "\n")
                .map_err(|e| other(format!("cannot write {}: {e}", target.display())))?;
            #[derive(Serialize)]
            struct CalOut<'a> {
                ranges: &'a [(f64, f64)],
                samples: usize,
                infeasible: usize,
                horizon: Option<usize>,
            }
            let mut o = Outputs::new(p.dir)?;
            o.write_json(
                "calibration.json",
                &CalOut {
                    ranges: &cal.ranges,
                    samples: cal.samples,
                    infeasible: cal.infeasible,
                    horizon: cfg.calibration.horizon,
                },
            )?;
            o.finish("calibrate", Some(&hash_in), Some(cfg.calibration.seed), common.workers)
        }
        Command::Train { common } => {
            let p = prepare(&common, |c, s| c.train.seed = s)?;
            let cfg = p.cfg;
            let env = cfg.build_env()?;
            let targets = training_targets(&env, &cfg.train);
            let net = initial_net(&env, &cfg.train)?;
            let make = || env.clone();
            let mut log = |pt: &crate::neural::CurvePoint| {
                eprintln!(
                    "steps {:>7}  mean {:>8.3}  running {:>8.3}  success {:.2}",
                    pt.env_steps, pt.mean_reward, pt.running_mean, pt.success_rate
                );
            };
            let outcome = train(&make, net, &targets, &cfg.train, Some(&mut log))?;
            let ckpt = Checkpoint { fingerprint: env.fingerprint(), train: cfg.train.clone(), net: outcome.net };
            let mut curve = Vec::new();
            outcome.curve.write_csv(&mut curve).map_err(other)?;
            let mut o = Outputs::new(p.dir)?;
            o.write("checkpoint.bin", &ckpt.encode())?;
            o.write("training_curve.csv", &curve)?;
            o.finish("train", Some(&cfg), Some(cfg.train.seed), Some(cfg.train.workers))?;
            println!("trained {} env steps; running mean first met at {:?}", outcome.env_steps, outcome.converged_at);
            if outcome.converged {
                Ok(())
            } else {
                Err(CliError::NotConverged(outcome.env_steps))
            }
        }
        Command::Deploy { common, checkpoint, targets, stochastic } => {
            let p = prepare(&common, |c, s| c.deploy.seed = s)?;
            let cfg = p.cfg;
            let env = cfg.build_env()?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let n = targets.unwrap_or(cfg.deploy.targets);
            let ts = cfg.deploy_targets(n, cfg.deploy.seed)?;
            let report = deploy(&ckpt, &env, &ts, mode(stochastic || cfg.deploy.stochastic), cfg.deploy.seed)?;
            print_summary("deploy", &report);
            let (csv, json) = report_bytes(&report)?;
            let mut o = Outputs::new(p.dir)?;
            o.write("deploy_report.csv", &csv)?;
            o.write("deploy_summary.json", &json)?;
            o.finish("deploy", Some(&cfg), Some(cfg.deploy.seed), common.workers)
        }
        Command::Transfer { common, checkpoint, targets, stochastic } => {
            let p = prepare(&common, |c, s| c.deploy.seed = s)?;
            let cfg = p.cfg;
            let clean = cfg.build_env()?;
            let parasitic = cfg.build_transfer_env()?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let n = targets.unwrap_or(cfg.deploy.transfer_targets);
            let ts = cfg.deploy_targets(n, cfg.deploy.seed)?;
            let m = mode(stochastic || cfg.deploy.stochastic);
            let clean_rep = deploy(&ckpt, &clean, &ts, m, cfg.deploy.seed)?;
            let rep = transfer_deploy(&ckpt, &parasitic, &ts, m, cfg.deploy.seed)?;
            print_summary("clean", &clean_rep);
            print_summary("parasitic", &rep);
            let reached: Vec<Vec<usize>> =
                rep.records.iter().filter(|r| r.reached).map(|r| r.final_params.clone()).collect();
            let deltas = spec_delta_histogram(clean.circuit().as_ref(), parasitic.circuit().as_ref(), &reached);
            let mut delta_csv = Vec::new();
            write_delta_csv(&deltas, &rep.spec_names, &mut delta_csv)?;
            let (csv, json) = report_bytes(&rep)?;
            let (_, clean_json) = report_bytes(&clean_rep)?;
            let mut o = Outputs::new(p.dir)?;
            o.write("transfer_report.csv", &csv)?;
            o.write("transfer_summary.json", &json)?;
            o.write("transfer_clean_summary.json", &clean_json)?;
            o.write("transfer_deltas.csv", &delta_csv)?;
            o.finish("transfer", Some(&cfg), Some(cfg.deploy.seed), common.workers)
        }
        Command::Ga { common, targets, sweep } => {
            let p = prepare(&common, |c, s| c.ga.seed = s)?;
            let cfg = p.cfg;
            let env = cfg.build_env()?;
            let n = targets.unwrap_or(cfg.deploy.compare_targets);
            let ts = cfg.deploy_targets(n, cfg.deploy.seed)?;
            let runs = ga_runs(&env, &ts, &cfg.ga);
            let names: Vec<String> = env.circuit().specs().iter().map(|s| s.name.clone()).collect();
            let ok = runs.iter().filter(|r| r.success).count();
            println!("ga: {ok}/{} reached", runs.len());
            let mut o = Outputs::new(p.dir)?;
            o.write("ga_results.csv", &ga_csv(&names, &ts, &runs)?)?;
            if sweep {
                let rows = ga_population_sweep(&env, &ts, &cfg.ga);
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in &rows {
                    w.serialize(r).map_err(other)?;
                }
                o.write("ga_sweep.csv", &w.into_inner().map_err(other)?)?;
                if let Some(best) = best_sweep_row(&rows) {
                    println!("best population {} with mean {:.1} evals", best.population, best.mean_evals);
                }
            }
            o.finish("ga", Some(&cfg), Some(cfg.ga.seed), common.workers)
        }
        Command::Random { common, targets } => {
            let p = prepare(&common, |c, s| c.deploy.seed = s)?;
            let cfg = p.cfg;
            let mut env = cfg.build_env()?;
            let n = targets.unwrap_or(cfg.deploy.random_targets);
            let ts = cfg.deploy_targets(n, cfg.deploy.seed)?;
            let rep = random_agent_deploy(&mut env, &ts, cfg.deploy.seed).map_err(other)?;
            println!("random: {}/{} reached", rep.successes, rep.total);
            let names: Vec<String> = env.circuit().specs().iter().map(|s| s.name.clone()).collect();
            let mut o = Outputs::new(p.dir)?;
            o.write("random_report.csv", &random_csv(&names, &ts, &rep)?)?;
            o.write_json(
                "random_summary.json",
                &serde_json::json!({ "reached": rep.successes, "total": rep.total, "success_rate": rep.success_rate() }),
            )?;
            o.finish("random", Some(&cfg), Some(cfg.deploy.seed), common.workers)
        }
        Command::Compare { common, checkpoint, targets } => {
            let p = prepare(&common, |c, s| c.deploy.seed = s)?;
            let cfg = p.cfg;
            let env = cfg.build_env()?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let n = targets.unwrap_or(cfg.deploy.compare_targets);
            let ts = cfg.deploy_targets(n, cfg.deploy.seed)?;
            let rl = deploy(&ckpt, &env, &ts, mode(cfg.deploy.stochastic), cfg.deploy.seed)?;
            let ga = ga_runs(&env, &ts, &cfg.ga);
            let random = random_agent_deploy(&mut env.clone(), &ts, cfg.deploy.seed).map_err(other)?;
            let cmp = compare(&rl, &ga, &random)?;
            println!("{:<8} {:>12} {:>10}", "method", "mean sims", "reached");
            for r in &cmp.rows {
                let m = r.mean_sims.map(|m| format!("{m:.1}")).unwrap_or_else(|| "-".into());
                println!("{:<8} {:>12} {:>6}/{}", r.method, m, r.reached, r.total);
            }
            if let Some(s) = cmp.speedup {
                println!("speedup {s:.1}x (reference: 1063 GA evals vs 27 RL steps, about 40x)");
            }
            let mut csv = Vec::new();
            cmp.write_csv(&mut csv)?;
            let mut o = Outputs::new(p.dir)?;
            o.write("comparison.csv", &csv)?;
            o.write_json("comparison.json", &cmp)?;
            o.finish("compare", Some(&cfg), Some(cfg.deploy.seed), common.workers)
        }
    }
}

fn print_summary(label: &str, r: &DeploymentReport) {
    let s = &r.summary;
    let steps = s.mean_steps.map(|m| format!("{m:.1}")).unwrap_or_else(|| "-".into());
    println!("{label}: {}/{} reached ({:.1}%), mean steps {steps}", s.reached, s.total, 100.0 * s.generalization);
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
