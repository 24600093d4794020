//! Two-stage Miller-compensated op-amp.
//!
//! The differential pair is reduced to its small-signal half-circuit with an
//! ideal tail: both input devices see ±v_in/2, the PMOS mirror folds the
//! first branch onto the first-stage output, and the second stage is a
//! common-source PMOS driver with an NMOS current-sink load. Node map:
//!
//! | node | net                                        |
//! |------|--------------------------------------------|
//! | 1    | differential input                         |
//! | 2    | mirror diode (M1/M3 drains, M3/M4 gates)   |
//! | 3    | first-stage output (M2/M4 drains, M6 gate) |
//! | 4    | output (M6/M7 drains)                      |

use serde::{Deserialize, Serialize};

use super::{finite_specs, Circuit, Infeasible, ParamDesc, ParamSpace, SimOutcome, SpecDef, SpecRole};
use crate::mna::{
    frequency_sweep, measure_dc_gain, measure_phase_margin, measure_ugbw, mosfet_small_signal, Component, Excitation,
    IoSpec, SmallSignalMos, SweepGrid, TechConstants,
};

pub const W_IN: usize = 0;
pub const W_LOAD: usize = 1;
pub const W_TAIL: usize = 2;
pub const W_DRIVER: usize = 3;
pub const W_SINK: usize = 4;
pub const W_REF: usize = 5;
pub const CC: usize = 6;

const NODES: usize = 5;
const N_MIRROR: usize = 2;
const N_STAGE1: usize = 3;
const N_OUT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpAmpConstants {
    /// Reference current through the diode-connected mirror master, A.
    pub i_ref: f64,
    /// Output load capacitance, F.
    pub load_cap: f64,
    /// Channel length shared by every device, m.
    pub length: f64,
}

impl Default for OpAmpConstants {
    fn default() -> Self {
        Self { i_ref: 10e-6, load_cap: 1e-12, length: 0.5e-6 }
    }
}

/// Analytical stand-in for extracted layout parasitics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParasiticConfig {
    /// Capacitance per device width added at gate and drain nodes, F/m.
    pub cap_per_width: f64,
    /// Fixed capacitance at every internal node, F.
    pub routing_cap: f64,
    pub scale: f64,
}

impl Default for ParasiticConfig {
    fn default() -> Self {
        Self { cap_per_width: 2e-9, routing_cap: 20e-15, scale: 1.0 }
    }
}

impl ParasiticConfig {
    pub fn is_valid(&self) -> bool {
        [self.cap_per_width, self.routing_cap, self.scale].iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

pub fn opamp_param_space() -> ParamSpace {
    let width = |name: &str| ParamDesc::new(name, "m", 0.5e-6, 50e-6, 0.5e-6);
    ParamSpace::new(vec![
        width("w_in"),
        width("w_load"),
        width("w_tail"),
        width("w_driver"),
        width("w_sink"),
        width("w_ref"),
        ParamDesc::new("cc", "F", 0.1e-12, 10.0e-12, 0.1e-12),
    ])
}

/// Branch currents of the op-amp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpAmpBias {
    pub i_ref: f64,
    pub tail: f64,
    /// Current in each input-pair / load-pair branch.
    pub branch: f64,
    pub stage2: f64,
    /// Total supply current, reference branch included.
    pub ibias: f64,
}

pub fn solve_opamp_bias(widths: &[f64], consts: &OpAmpConstants) -> OpAmpBias {
    let w_ref = widths[W_REF];
    let tail = consts.i_ref * widths[W_TAIL] / w_ref;
    let stage2 = consts.i_ref * widths[W_SINK] / w_ref;
    OpAmpBias { i_ref: consts.i_ref, tail, branch: tail / 2.0, stage2, ibias: consts.i_ref + tail + stage2 }
}

#[derive(Debug, Clone)]
pub struct OpAmp {
    pub consts: OpAmpConstants,
    pub tech: TechConstants,
    pub parasitics: Option<ParasiticConfig>,
    pub grid: SweepGrid,
    space: ParamSpace,
    specs: Vec<SpecDef>,
}

impl OpAmp {
    pub fn new(consts: OpAmpConstants, tech: TechConstants, parasitics: Option<ParasiticConfig>) -> Self {
        Self {
            consts,
            tech,
            parasitics,
            grid: SweepGrid::default(),
            space: opamp_param_space(),
            specs: vec![
                SpecDef::new("gain", "V/V", SpecRole::AtLeast),
                SpecDef::new("ugbw", "Hz", SpecRole::AtLeast),
                SpecDef::new("pm", "deg", SpecRole::AtLeast),
                SpecDef::new("ibias", "A", SpecRole::Minimize),
            ],
        }
    }

    pub fn with_grid(mut self, grid: SweepGrid) -> Self {
        self.grid = grid;
        self
    }

    /// Small-signal netlist at a decoded parameter point.
    pub fn netlist(&self, x: &[usize]) -> Result<(Vec<Component>, OpAmpBias), Infeasible> {
        let p = self.space.decode(x);
        let bias = solve_opamp_bias(&p, &self.consts);
        let l = self.consts.length;
        let dev = |w: f64, id: f64| -> Result<SmallSignalMos, Infeasible> {
            mosfet_small_signal(w, l, id, &self.tech).map_err(|e| Infeasible(e.to_string()))
        };
        let m_in = dev(p[W_IN], bias.branch)?;
        let m_load = dev(p[W_LOAD], bias.branch)?;
        let m_drv = dev(p[W_DRIVER], bias.stage2)?;
        let m_sink = dev(p[W_SINK], bias.stage2)?;

        let mut c = vec![
            // input pair, driven by -vin/2 (M1) and +vin/2 (M2)
            Component::vccs(N_MIRROR, 0, 1, 0, -m_in.gm / 2.0),
            Component::vccs(N_STAGE1, 0, 1, 0, m_in.gm / 2.0),
            // mirror: diode M3 and output M4
            Component::conductance(N_MIRROR, 0, m_load.gm + m_load.gds + m_in.gds),
            Component::vccs(N_STAGE1, 0, N_MIRROR, 0, m_load.gm),
            Component::conductance(N_STAGE1, 0, m_in.gds + m_load.gds),
            Component::capacitor(N_MIRROR, 0, 2.0 * m_load.cgs + m_in.cgd),
            Component::capacitor(N_MIRROR, N_STAGE1, m_load.cgd),
            Component::capacitor(N_STAGE1, 0, m_in.cgd + m_drv.cgs),
            // second stage
            Component::vccs(N_OUT, 0, N_STAGE1, 0, m_drv.gm),
            Component::conductance(N_OUT, 0, m_drv.gds + m_sink.gds),
            Component::capacitor(N_STAGE1, N_OUT, m_drv.cgd + p[CC]),
            Component::capacitor(N_OUT, 0, self.consts.load_cap + m_sink.cgd),
        ];

        if let Some(par) = self.parasitics {
            let k = par.cap_per_width * par.scale;
            let r = par.routing_cap * par.scale;
            let node_caps = [
                // M1 drain, M3 gate+drain, M4 gate
                (N_MIRROR, k * (p[W_IN] + 2.0 * p[W_LOAD] + p[W_LOAD]) + r),
                // M2 drain, M4 drain, M6 gate
                (N_STAGE1, k * (p[W_IN] + p[W_LOAD] + p[W_DRIVER]) + r),
                // M6 drain, M7 drain
                (N_OUT, k * (p[W_DRIVER] + p[W_SINK]) + r),
            ];
            for (node, cap) in node_caps {
                if cap > 0.0 {
                    c.push(Component::capacitor(node, 0, cap));
                }
            }
        }
        Ok((c, bias))
    }
}

impl Circuit for OpAmp {
    fn id(&self) -> &str {
        "opamp"
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
        let (comps, bias) = self.netlist(x)?;
        let io = IoSpec { excitation: Excitation::Voltage(1), output: N_OUT };
        let fr = frequency_sweep(&comps, NODES, io, self.grid).map_err(|e| Infeasible(e.to_string()))?;
        let gain = measure_dc_gain(&fr);
        let ugbw = measure_ugbw(&fr).map_err(|e| Infeasible(e.to_string()))?;
        let pm = measure_phase_margin(&fr).map_err(|e| Infeasible(e.to_string()))?;
        finite_specs(vec![gain, ugbw, pm, bias.ibias])
    }
}
