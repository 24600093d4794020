//! Analytic oracle suite behind the `selftest` verb.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::mna::{
    frequency_sweep, integrate_input_noise, log_grid, measure_dc_gain, measure_f3db, measure_phase_margin, Component,
    Excitation, IoSpec, SweepGrid,
};
use crate::neural::{dist, loss_and_grad, LossCoefs, NetArch, PolicyNet, Sample};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> Check {
    check(name, false, e.to_string())
}

/// Series R then shunt C: f3db = 1/(2πRC) within 0.5%.
pub fn rc_lowpass() -> Check {
    let (r, c) = (1e3, 1e-9);
    let comps = [Component::resistor(1, 2, r), Component::capacitor(2, 0, c)];
    let io = IoSpec { excitation: Excitation::Voltage(1), output: 2 };
    let want = 1.0 / (2.0 * PI * r * c);
    match frequency_sweep(&comps, 3, io, SweepGrid::default()).and_then(|fr| measure_f3db(&fr)) {
        Ok(f) => {
            let err = (f - want).abs() / want;
            check("rc_f3db", err < 0.005, format!("{f:.2} Hz vs {want:.2} Hz, rel err {err:.2e}"))
        }
        Err(e) => failed("rc_f3db", e),
    }
}

/// Equal-resistor divider: gain exactly 0.5 to 1e-12 at every frequency.
pub fn divider() -> Check {
    let comps = [Component::resistor(1, 2, 1e3), Component::resistor(2, 0, 1e3)];
    let io = IoSpec { excitation: Excitation::Voltage(1), output: 2 };
    match frequency_sweep(&comps, 3, io, SweepGrid::default()) {
        Ok(fr) => {
            let err = fr.h.iter().map(|z| (z.re - 0.5).abs().max(z.im.abs())).fold(0.0, f64::max);
            check("divider_gain", err < 1e-12, format!("max deviation {err:.2e}"))
        }
        Err(e) => failed("divider_gain", e),
    }
}

/// Transconductor into an RC load with A0 = 100, p1 = 1 kHz: PM ≈ 90.57° within 0.2°.
pub fn single_pole_pm() -> Check {
    let (gm, r) = (1e-3, 1e5);
    let c = 1.0 / (2.0 * PI * r * 1e3);
    let comps = [Component::vccs(0, 2, 1, 0, gm), Component::resistor(2, 0, r), Component::capacitor(2, 0, c)];
    let io = IoSpec { excitation: Excitation::Voltage(1), output: 2 };
    let fr = match frequency_sweep(&comps, 3, io, SweepGrid::default()) {
        Ok(fr) => fr,
        Err(e) => return failed("single_pole_pm", e),
    };
    let a0 = measure_dc_gain(&fr);
    match measure_phase_margin(&fr) {
        Ok(pm) => check(
            "single_pole_pm",
            (pm - 90.57).abs() < 0.2 && (a0 - 100.0).abs() < 0.5,
            format!("PM {pm:.3} deg, A0 {a0:.3}"),
        ),
        Err(e) => failed("single_pole_pm", e),
    }
}

/// Flat PSD integrated over 1 Hz to 1 GHz equals sqrt(S·Δf) within 1%.
pub fn white_noise() -> Check {
    let s = 4e-18;
    let psd: Vec<(f64, f64)> = match log_grid(SweepGrid::default()) {
        Ok(g) => g.into_iter().map(|f| (f, s)).collect(),
        Err(e) => return failed("white_noise", e),
    };
    let want = (s * (1e9 - 1.0)).sqrt();
    match integrate_input_noise(&psd, (1.0, 1e9)) {
        Ok(v) => {
            let err = (v - want).abs() / want;
            check("white_noise", err < 0.01, format!("{v:.4e} vs {want:.4e}, rel err {err:.2e}"))
        }
        Err(e) => failed("white_noise", e),
    }
}

fn random_batch(net: &PolicyNet, n: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            let obs: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (logits, _) = net.forward(&obs).expect("width matches");
            let (a, lp, _) = dist::sample_action(&logits, rng);
            Sample {
                obs,
                classes: a.classes(),
                old_log_prob: lp + rng.gen_range(-0.4..0.4),
                advantage: rng.gen_range(-2.0..2.0),
                ret: rng.gen_range(-3.0..3.0),
            }
        })
        .collect()
}

/// Largest relative error between backprop and central differences over
/// `nets` random small nets and batches.
pub fn max_gradient_error(nets: usize, seed: u64) -> f64 {
    let k = LossCoefs { clip: 0.2, entropy_coef: 0.05, value_coef: 0.5 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..nets {
        let arch = NetArch {
            input: rng.gen_range(1..4),
            hidden: vec![rng.gen_range(1..4); rng.gen_range(1..3)],
            heads: rng.gen_range(1..3),
        };
        let mut net = PolicyNet::new(arch, trial as u64).expect("valid arch");
        net.params.iter_mut().for_each(|p| *p += rng.gen_range(-0.5..0.5));
        let batch = random_batch(&net, 6, &mut rng);
        let refs: Vec<&Sample> = batch.iter().collect();
        let loss = |n: &PolicyNet| loss_and_grad(n, &refs, k).expect("finite").0;
        let (_, g, _) = loss_and_grad(&net, &refs, k).expect("finite");
        let h = 1e-5;
        for (i, &gi) in g.iter().enumerate() {
            let mut p = net.clone();
            p.params[i] += h;
            let lp = loss(&p);
            p.params[i] -= 2.0 * h;
            let lm = loss(&p);
            let fd = (lp - lm) / (2.0 * h);
            let scale = gi.abs().max(fd.abs()).max(1e-6);
            worst = worst.max((gi - fd).abs() / scale);
        }
    }
    worst
}

pub fn gradient_check() -> Check {
    let err = max_gradient_error(20, 5);
    check("ppo_gradient", err < 1e-4, format!("max rel err {err:.2e} over 20 nets"))
}

pub fn run_all() -> Vec<Check> {
    vec![rc_lowpass(), divider(), single_pole_pm(), white_noise(), gradient_check()]
}
