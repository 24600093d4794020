//! Linear small-signal circuit engine.
//!
//! Circuits are lists of two-terminal stamps plus voltage-controlled current
//! sources. Node 0 is ground and is eliminated from the system, so a circuit
//! with `node_count` nodes produces an `(node_count - 1)`-square complex
//! admittance matrix.

mod device;
mod lu;
mod measure;
mod noise;
mod sweep;

pub use device::{mosfet_small_signal, SmallSignalMos, TechConstants};
pub use lu::{lu_solve, ComplexMatrix};
pub use measure::{measure_dc_gain, measure_f3db, measure_phase_margin, measure_ugbw, unwrapped_phase_deg};
pub use noise::{integrate_input_noise, output_noise_psd};
pub use sweep::{frequency_sweep, log_grid, FrequencyResponse, SweepGrid};

use num_complex::Complex64;
use std::f64::consts::PI;

pub type Node = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentKind {
    Resistor,
    Capacitor,
    Conductance,
    /// Current `value * (V(ctrl.0) - V(ctrl.1))` flowing out of `nodes.0` into `nodes.1`.
    Vccs {
        ctrl: (Node, Node),
    },
    /// Noise injection only; contributes nothing to the admittance matrix.
    /// `value` is the current PSD in A²/Hz.
    CurrentSource,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub kind: ComponentKind,
    pub nodes: (Node, Node),
    pub value: f64,
}

impl Component {
    pub fn resistor(a: Node, b: Node, ohms: f64) -> Self {
        Self { kind: ComponentKind::Resistor, nodes: (a, b), value: ohms }
    }

    pub fn capacitor(a: Node, b: Node, farads: f64) -> Self {
        Self { kind: ComponentKind::Capacitor, nodes: (a, b), value: farads }
    }

    pub fn conductance(a: Node, b: Node, siemens: f64) -> Self {
        Self { kind: ComponentKind::Conductance, nodes: (a, b), value: siemens }
    }

    pub fn vccs(out_p: Node, out_n: Node, ctrl_p: Node, ctrl_n: Node, gm: f64) -> Self {
        Self { kind: ComponentKind::Vccs { ctrl: (ctrl_p, ctrl_n) }, nodes: (out_p, out_n), value: gm }
    }

    pub fn noise_current(a: Node, b: Node, psd: f64) -> Self {
        Self { kind: ComponentKind::CurrentSource, nodes: (a, b), value: psd }
    }

    fn touches(&self, node: Node) -> bool {
        let own = self.nodes.0 == node || self.nodes.1 == node;
        match self.kind {
            ComponentKind::Vccs { ctrl } => own || ctrl.0 == node || ctrl.1 == node,
            _ => own,
        }
    }

    fn max_node(&self) -> Node {
        let own = self.nodes.0.max(self.nodes.1);
        match self.kind {
            ComponentKind::Vccs { ctrl } => own.max(ctrl.0).max(ctrl.1),
            _ => own,
        }
    }
}

/// How the circuit is driven for a transfer-function solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Excitation {
    /// Unit AC voltage from `node` to ground.
    Voltage(Node),
    /// Unit AC current injected into `into`, drawn from `from`.
    Current { into: Node, from: Node },
}

impl Excitation {
    pub fn current_into(node: Node) -> Self {
        Excitation::Current { into: node, from: 0 }
    }

    fn input_node(&self) -> Node {
        match *self {
            Excitation::Voltage(n) => n,
            Excitation::Current { into, .. } => into,
        }
    }
}

/// Which node pair a transfer function is read from, and how it is driven.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoSpec {
    pub excitation: Excitation,
    pub output: Node,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MnaError {
    #[error("node_count must be at least 2, got {0}")]
    TooFewNodes(usize),
    #[error("component {index} references node {node} but the circuit has {node_count} nodes")]
    UnknownNode { index: usize, node: Node, node_count: usize },
    #[error("non-positive frequency {0} Hz")]
    BadFrequency(f64),
    #[error("no component touches input node {0}")]
    FloatingInput(Node),
    #[error("invalid component value {value} at index {index}")]
    BadValue { index: usize, value: f64 },
    #[error("singular at f = {freq:e} Hz")]
    Singular { freq: f64 },
    #[error("invalid sweep: {0}")]
    BadSweep(String),
    #[error("no crossing in sweep range")]
    NoCrossing,
    #[error("gain never exceeds unity")]
    GainBelowUnity,
    #[error("no unity crossing in range")]
    NoUnityCrossing,
    #[error("band [{f1:e}, {f2:e}] Hz outside PSD coverage")]
    BandOutsidePsd { f1: f64, f2: f64 },
    #[error("invalid device: {0}")]
    BadDevice(String),
}

pub type Result<T> = std::result::Result<T, MnaError>;

/// Assembled linear system `matrix · v = rhs` over the non-ground nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MnaSystem {
    pub matrix: ComplexMatrix,
    pub rhs: Vec<Complex64>,
}

fn validate(components: &[Component], node_count: usize) -> Result<()> {
    if node_count < 2 {
        return Err(MnaError::TooFewNodes(node_count));
    }
    for (index, c) in components.iter().enumerate() {
        let node = c.max_node();
        if node >= node_count {
            return Err(MnaError::UnknownNode { index, node, node_count });
        }
        let ok = match c.kind {
            ComponentKind::Resistor | ComponentKind::Capacitor | ComponentKind::Conductance => {
                c.value.is_finite() && c.value > 0.0
            }
            ComponentKind::CurrentSource => c.value.is_finite() && c.value >= 0.0,
            ComponentKind::Vccs { .. } => c.value.is_finite(),
        };
        if !ok {
            return Err(MnaError::BadValue { index, value: c.value });
        }
    }
    Ok(())
}

/// Stamps every component at `freq` and appends the excitation.
///
/// A voltage excitation replaces the input node's KCL row with `v_in = 1`,
/// which keeps the system square over the non-ground nodes.
pub fn build_system(
    components: &[Component],
    node_count: usize,
    excitation: Excitation,
    freq: f64,
) -> Result<MnaSystem> {
    validate(components, node_count)?;
    if !(freq > 0.0) || !freq.is_finite() {
        return Err(MnaError::BadFrequency(freq));
    }
    let input = excitation.input_node();
    if input == 0 || input >= node_count || !components.iter().any(|c| c.touches(input)) {
        return Err(MnaError::FloatingInput(input));
    }

    let size = node_count - 1;
    let mut y = ComplexMatrix::zeros(size);
    let omega = 2.0 * PI * freq;
    for c in components {
        let adm = match c.kind {
            ComponentKind::Resistor => Complex64::new(1.0 / c.value, 0.0),
            ComponentKind::Conductance => Complex64::new(c.value, 0.0),
            ComponentKind::Capacitor => Complex64::new(0.0, omega * c.value),
            ComponentKind::Vccs { ctrl } => {
                let gm = Complex64::new(c.value, 0.0);
                stamp(&mut y, c.nodes.0, ctrl.0, gm);
                stamp(&mut y, c.nodes.0, ctrl.1, -gm);
                stamp(&mut y, c.nodes.1, ctrl.0, -gm);
                stamp(&mut y, c.nodes.1, ctrl.1, gm);
                continue;
            }
            ComponentKind::CurrentSource => continue,
        };
        let (a, b) = c.nodes;
        stamp(&mut y, a, a, adm);
        stamp(&mut y, b, b, adm);
        stamp(&mut y, a, b, -adm);
        stamp(&mut y, b, a, -adm);
    }

    let mut rhs = vec![Complex64::new(0.0, 0.0); size];
    match excitation {
        Excitation::Voltage(n) => {
            let row = n - 1;
            for col in 0..size {
                y[(row, col)] = Complex64::new(0.0, 0.0);
            }
            y[(row, row)] = Complex64::new(1.0, 0.0);
            rhs[row] = Complex64::new(1.0, 0.0);
        }
        Excitation::Current { into, from } => {
            if into != 0 {
                rhs[into - 1] += 1.0;
            }
            if from != 0 {
                rhs[from - 1] -= 1.0;
            }
        }
    }
    Ok(MnaSystem { matrix: y, rhs })
}

fn stamp(y: &mut ComplexMatrix, row: Node, col: Node, v: Complex64) {
    if row != 0 && col != 0 {
        y[(row - 1, col - 1)] += v;
    }
}

/// Solves for every node voltage at `freq`; index 0 of the result is ground.
pub fn solve_nodes(
    components: &[Component],
    node_count: usize,
    excitation: Excitation,
    freq: f64,
) -> Result<Vec<Complex64>> {
    let sys = build_system(components, node_count, excitation, freq)?;
    let x = lu_solve(sys.matrix, sys.rhs).ok_or(MnaError::Singular { freq })?;
    let mut v = Vec::with_capacity(node_count);
    v.push(Complex64::new(0.0, 0.0));
    v.extend(x);
    Ok(v)
}

/// Transfer value `V(output) / input` at a single frequency.
pub fn solve_ac(components: &[Component], node_count: usize, io: IoSpec, freq: f64) -> Result<Complex64> {
    if io.output >= node_count {
        return Err(MnaError::UnknownNode { index: usize::MAX, node: io.output, node_count });
    }
    let v = solve_nodes(components, node_count, io.excitation, freq)?;
    Ok(v[io.output])
}
