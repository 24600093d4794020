//! Shunt-feedback transimpedance amplifier.
//!
//! A self-biased CMOS inverter (NMOS and PMOS sized identically by width and
//! multiplier) with a feedback resistor built from unit resistors: `series`
//! in series per leg, `parallel` legs. The input current source sees the
//! photodiode capacitance plus both gates; node 1 is the input, node 2 the
//! output.
//!
//! Input noise is the output noise PSD divided by the core's voltage gain
//! `|V(2)/V(1)|²`, integrated from the sweep start up to f3db, in Vrms.

use serde::{Deserialize, Serialize};

use super::{finite_specs, Circuit, Infeasible, ParamDesc, ParamSpace, SimOutcome, SpecDef, SpecRole};
use crate::mna::{
    frequency_sweep, integrate_input_noise, log_grid, measure_f3db, mosfet_small_signal, output_noise_psd, solve_nodes,
    Component, Excitation, IoSpec, SweepGrid, TechConstants,
};
use num_complex::Complex64;

pub const WIDTH: usize = 0;
pub const MULT: usize = 1;
pub const SERIES: usize = 2;
pub const PARALLEL: usize = 3;

const NODES: usize = 3;
const N_IN: usize = 1;
const N_OUT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiaConstants {
    /// Unit resistance of the feedback network, Ω.
    pub unit_res: f64,
    pub length: f64,
    /// Overdrive set by the inverter trip point, V.
    pub vov: f64,
    /// Photodiode capacitance at the input, F.
    pub pd_cap: f64,
    pub load_cap: f64,
}

impl Default for TiaConstants {
    fn default() -> Self {
        Self { unit_res: 5.6e3, length: 0.1e-6, vov: 0.2, pd_cap: 200e-15, load_cap: 50e-15 }
    }
}

impl TiaConstants {
    pub fn feedback_resistance(&self, series: f64, parallel: f64) -> f64 {
        self.unit_res * series / parallel
    }
}

pub fn tia_param_space() -> ParamSpace {
    ParamSpace::new(vec![
        ParamDesc::new("width", "m", 2e-6, 10e-6, 2e-6),
        ParamDesc::new("multiplier", "", 2.0, 32.0, 2.0),
        ParamDesc::new("series", "", 2.0, 20.0, 2.0),
        ParamDesc::new("parallel", "", 1.0, 20.0, 1.0),
    ])
}

#[derive(Debug, Clone)]
pub struct Tia {
    pub consts: TiaConstants,
    pub tech: TechConstants,
    pub grid: SweepGrid,
    space: ParamSpace,
    specs: Vec<SpecDef>,
}

/// 1%-settling of the dominant-pole approximation.
pub fn settling_from_f3db(f3db: f64) -> f64 {
    100f64.ln() / (2.0 * std::f64::consts::PI * f3db)
}

impl Tia {
    pub fn new(consts: TiaConstants, tech: TechConstants) -> Self {
        Self {
            consts,
            tech,
            grid: SweepGrid::default(),
            space: tia_param_space(),
            specs: vec![
                SpecDef::new("settling_time", "s", SpecRole::AtMost),
                SpecDef::new("f3db", "Hz", SpecRole::AtLeast),
                SpecDef::new("input_noise", "V", SpecRole::AtMost),
            ],
        }
    }

    pub fn feedback_resistance(&self, x: &[usize]) -> f64 {
        let p = self.space.decode(x);
        self.consts.feedback_resistance(p[SERIES], p[PARALLEL])
    }

    /// Netlist including noise current sources.
    pub fn netlist(&self, x: &[usize]) -> Result<Vec<Component>, Infeasible> {
        let p = self.space.decode(x);
        let c = &self.consts;
        let w = p[WIDTH] * p[MULT];
        let id = 0.5 * self.tech.mu_cox * (w / c.length) * c.vov * c.vov;
        let m = mosfet_small_signal(w, c.length, id, &self.tech).map_err(|e| Infeasible(e.to_string()))?;
        let rf = c.feedback_resistance(p[SERIES], p[PARALLEL]);
        // NMOS and PMOS in parallel, identical small-signal parameters
        let gm = 2.0 * m.gm;
        Ok(vec![
            Component::vccs(N_OUT, 0, N_IN, 0, gm),
            Component::conductance(N_OUT, 0, 2.0 * m.gds),
            Component::resistor(N_IN, N_OUT, rf),
            Component::capacitor(N_IN, 0, c.pd_cap + 2.0 * m.cgs),
            Component::capacitor(N_IN, N_OUT, 2.0 * m.cgd),
            Component::capacitor(N_OUT, 0, c.load_cap),
            Component::noise_current(N_IN, N_OUT, self.tech.four_kt / rf),
            Component::noise_current(N_OUT, 0, self.tech.four_kt_gamma * gm),
        ])
    }

    /// Input-referred voltage noise PSD (V²/Hz) at each frequency.
    pub fn input_noise_psd(&self, comps: &[Component], freqs: &[f64]) -> Result<Vec<(f64, f64)>, Infeasible> {
        self.referred_psd(comps, freqs, |v| v[N_OUT] / v[N_IN])
    }

    /// Output noise divided by the transimpedance: equivalent input current PSD (A²/Hz).
    pub fn input_current_noise_psd(&self, comps: &[Component], freqs: &[f64]) -> Result<Vec<(f64, f64)>, Infeasible> {
        self.referred_psd(comps, freqs, |v| v[N_OUT])
    }

    fn referred_psd(
        &self,
        comps: &[Component],
        freqs: &[f64],
        gain: impl Fn(&[Complex64]) -> Complex64,
    ) -> Result<Vec<(f64, f64)>, Infeasible> {
        let infeasible = |e: crate::mna::MnaError| Infeasible(e.to_string());
        freqs
            .iter()
            .map(|&f| {
                let v = solve_nodes(comps, NODES, Excitation::current_into(N_IN), f).map_err(infeasible)?;
                let s = output_noise_psd(comps, NODES, N_OUT, f).map_err(infeasible)?;
                Ok((f, s / gain(&v).norm_sqr()))
            })
            .collect()
    }
}

impl Circuit for Tia {
    fn id(&self) -> &str {
        "tia"
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn specs(&self) -> &[SpecDef] {
        &self.specs
    }

    fn simulate(&self, x: &[usize]) -> SimOutcome {
        if !self.space.contains(x) {
            return Err(Infeasible(format!("parameter point {x:?} outside grid")));
        }
        let comps = self.netlist(x)?;
        let io = IoSpec { excitation: Excitation::current_into(N_IN), output: N_OUT };
        let fr = frequency_sweep(&comps, NODES, io, self.grid).map_err(|e| Infeasible(e.to_string()))?;
        let f3db = measure_f3db(&fr).map_err(|e| Infeasible(e.to_string()))?;
        let band_top = f3db.max(self.grid.f_start * 1.0001);
        let mut freqs: Vec<f64> =
            log_grid(self.grid).map_err(|e| Infeasible(e.to_string()))?.into_iter().filter(|&f| f < band_top).collect();
        freqs.push(band_top);
        let psd = self.input_noise_psd(&comps, &freqs)?;
        let noise =
            integrate_input_noise(&psd, (self.grid.f_start, band_top)).map_err(|e| Infeasible(e.to_string()))?;
        finite_specs(vec![settling_from_f3db(f3db), f3db, noise])
    }
}
