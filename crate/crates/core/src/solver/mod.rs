//! Fixed-step trapezoidal transient solver.
//!
//! Each element is compiled to primitive branches (conductances, companion
//! models, line ends, and constraint rows for ideal sources and ideal
//! transformers). Every step assembles the nodal system, reusing the LU
//! factorization until a switch or saturation segment changes it.

mod companion;
mod history;
mod saturation;
mod waveform;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Dyn, LU};

pub use companion::{bergeron_history, companion_capacitor, companion_inductor, CompanionStamp};
pub use saturation::{update_saturable_inductor, Segment, TwoSlope};
pub use waveform::WaveformSet;

use crate::circuit::{Circuit, Element, ElementId, NodeRef, ProbeTarget};
use crate::error::{positive, Error, Result};
use history::LineHistory;

pub const G_OPEN: f64 = 1e-9;
pub const G_CLOSED: f64 = 1e9;

/// Lines must span at least this many steps.
pub const MIN_STEPS_PER_TAU: f64 = 10.0;

/// Local step halvings allowed when a saturable branch keeps flipping.
const MAX_HALVINGS: u32 = 6;

#[derive(Debug, Clone)]
enum Branch {
    Conductance {
        a: usize,
        b: usize,
        g: f64,
    },
    Inductor {
        a: usize,
        b: usize,
        l: f64,
        i: f64,
        v: f64,
    },
    Capacitor {
        a: usize,
        b: usize,
        c: f64,
        i: f64,
        v: f64,
    },
    Saturable {
        a: usize,
        b: usize,
        curve: TwoSlope,
        flux: f64,
        i: f64,
        v: f64,
    },
    Switch {
        a: usize,
        b: usize,
        t_close: Option<f64>,
        closed: bool,
    },
    Line {
        a: usize,
        b: usize,
        z: f64,
        tau: f64,
        hist_a: LineHistory,
        hist_b: LineHistory,
        i_a: f64,
        i_b: f64,
    },
    Source {
        node: usize,
        row: usize,
        amplitude: f64,
        freq: f64,
        phase: f64,
    },
    IdealTransformer {
        p1: usize,
        p2: usize,
        s1: usize,
        s2: usize,
        ratio: f64,
        row: usize,
    },
}

impl Branch {
    fn terminals(&self) -> (usize, usize) {
        match *self {
            Branch::Conductance { a, b, .. }
            | Branch::Inductor { a, b, .. }
            | Branch::Capacitor { a, b, .. }
            | Branch::Saturable { a, b, .. }
            | Branch::Switch { a, b, .. }
            | Branch::Line { a, b, .. } => (a, b),
            Branch::Source { node, .. } => (node, 0),
            Branch::IdealTransformer { p1, s1, .. } => (p1, s1),
        }
    }
}

/// Linear combination of recorded quantities.
#[derive(Debug, Clone)]
enum Tap {
    Node(usize),
    Row(usize),
    Current(usize),
    Voltage(usize),
    Flux(usize),
    Combo(Vec<(f64, Tap)>),
}

/// Per-element probe taps.
#[derive(Debug, Clone)]
struct ElementTaps {
    current: Tap,
    voltage: Tap,
    flux: Option<Tap>,
    magnetizing: Option<Tap>,
}

/// Integration rule for one solve. Backward Euler is used only for the
/// vanishing steps that establish a consistent state at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    Trapezoidal,
    BackwardEuler,
}

impl Rule {
    /// Companion conductance factor: `g = k h / L` or `g = C / (k h)`.
    fn k(self) -> f64 {
        match self {
            Rule::Trapezoidal => 0.5,
            Rule::BackwardEuler => 1.0,
        }
    }
}

/// Length of the initialization steps relative to `dt`.
const INIT_STEP_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
struct MatrixKey {
    rule: Rule,
    h_bits: u64,
    closed: Vec<bool>,
    segments: Vec<Segment>,
}

/// Mutable time-marching state.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub t: f64,
    pub dt: f64,
    pub step: usize,
    /// Indexed by node; entry 0 is ground and stays 0.
    pub node_voltages: Vec<f64>,
    /// Currents of constraint rows (ideal sources and ideal transformers).
    pub row_currents: Vec<f64>,
}

struct Compiled {
    node_count: usize,
    row_count: usize,
    branches: Vec<Branch>,
    taps: Vec<ElementTaps>,
}

impl Compiled {
    fn from_circuit(circuit: &Circuit, dt: f64) -> Result<Self> {
        let mut c = Compiled {
            node_count: circuit.node_count(),
            row_count: 0,
            branches: Vec::new(),
            taps: Vec::with_capacity(circuit.elements().len()),
        };
        for e in circuit.elements() {
            let taps = c.compile(e, dt)?;
            c.taps.push(taps);
        }
        Ok(c)
    }

    fn node(&mut self) -> usize {
        self.node_count += 1;
        self.node_count - 1
    }

    fn row(&mut self) -> usize {
        self.row_count += 1;
        self.row_count - 1
    }

    fn push(&mut self, b: Branch) -> usize {
        self.branches.push(b);
        self.branches.len() - 1
    }

    fn conductance(&mut self, a: usize, b: usize, r: f64) -> usize {
        self.push(Branch::Conductance { a, b, g: 1.0 / r })
    }

    fn inductor(&mut self, a: usize, b: usize, l: f64, i0: f64) -> usize {
        self.push(Branch::Inductor {
            a,
            b,
            l,
            i: i0,
            v: 0.0,
        })
    }

    fn line(&mut self, a: usize, b: usize, z: f64, tau: f64, dt: f64) -> usize {
        let mut hist_a = LineHistory::new(tau, dt);
        let mut hist_b = LineHistory::new(tau, dt);
        hist_a.push(0.0, 0.0);
        hist_b.push(0.0, 0.0);
        self.push(Branch::Line {
            a,
            b,
            z,
            tau,
            hist_a,
            hist_b,
            i_a: 0.0,
            i_b: 0.0,
        })
    }

    fn two_terminal(k: usize) -> ElementTaps {
        ElementTaps {
            current: Tap::Current(k),
            voltage: Tap::Voltage(k),
            flux: None,
            magnetizing: None,
        }
    }

    fn compile(&mut self, e: &Element, dt: f64) -> Result<ElementTaps> {
        let taps = match *e {
            Element::Resistor { n1, n2, r } => Self::two_terminal(self.conductance(n1.0, n2.0, r)),
            Element::Inductor { n1, n2, l, i0 } => {
                let k = self.inductor(n1.0, n2.0, l, i0);
                ElementTaps {
                    flux: Some(Tap::Flux(k)),
                    ..Self::two_terminal(k)
                }
            }
            Element::Capacitor { n1, n2, c, v0 } => {
                Self::two_terminal(self.push(Branch::Capacitor {
                    a: n1.0,
                    b: n2.0,
                    c,
                    i: 0.0,
                    v: v0,
                }))
            }
            Element::SaturableInductor {
                n1,
                n2,
                l_unsat,
                l_sat,
                flux_knee,
                flux0,
            } => {
                let curve = TwoSlope {
                    l_unsat,
                    l_sat,
                    flux_knee,
                };
                let k = self.push(Branch::Saturable {
                    a: n1.0,
                    b: n2.0,
                    curve,
                    flux: flux0,
                    i: curve.current(flux0),
                    v: 0.0,
                });
                ElementTaps {
                    flux: Some(Tap::Flux(k)),
                    ..Self::two_terminal(k)
                }
            }
            Element::VoltageSource {
                n_pos,
                amplitude,
                freq,
                phase,
                r_thev,
                l_thev,
                r_parallel,
            } => {
                let ideal = r_thev == 0.0 && l_thev == 0.0;
                let emf = if ideal { n_pos.0 } else { self.node() };
                let row = self.row();
                self.push(Branch::Source {
                    node: emf,
                    row,
                    amplitude,
                    freq,
                    phase,
                });
                if ideal {
                    ElementTaps {
                        current: Tap::Row(row),
                        voltage: Tap::Node(n_pos.0),
                        flux: None,
                        magnetizing: None,
                    }
                } else {
                    // emf -> [r_thev] -> mid -> [l_thev || r_parallel] -> n_pos
                    let mut delivered = Vec::new();
                    let mut from = emf;
                    if r_thev > 0.0 {
                        let to = if l_thev > 0.0 { self.node() } else { n_pos.0 };
                        delivered.push((-1.0, Tap::Current(self.conductance(from, to, r_thev))));
                        from = to;
                    }
                    if l_thev > 0.0 {
                        let k = self.inductor(from, n_pos.0, l_thev, 0.0);
                        let mut parallel = vec![(-1.0, Tap::Current(k))];
                        if let Some(rp) = r_parallel {
                            let kr = self.conductance(from, n_pos.0, rp);
                            parallel.push((-1.0, Tap::Current(kr)));
                        }
                        if delivered.is_empty() {
                            delivered = parallel;
                        }
                    }
                    ElementTaps {
                        current: Tap::Combo(delivered),
                        voltage: Tap::Node(n_pos.0),
                        flux: None,
                        magnetizing: None,
                    }
                }
            }
            Element::Switch { n1, n2, t_close } => Self::two_terminal(self.push(Branch::Switch {
                a: n1.0,
                b: n2.0,
                t_close,
                closed: false,
            })),
            Element::BergeronLine {
                n_send,
                n_recv,
                z_c,
                tau,
                r_total,
            } => {
                check_line_step(tau, dt)?;
                let k = if r_total == 0.0 {
                    self.line(n_send.0, n_recv.0, z_c, tau, dt)
                } else {
                    // r/4 | half line | r/2 | half line | r/4
                    let (s, m1, m2, r) = (self.node(), self.node(), self.node(), self.node());
                    let first = self.conductance(n_send.0, s, r_total / 4.0);
                    self.line(s, m1, z_c, tau / 2.0, dt);
                    self.conductance(m1, m2, r_total / 2.0);
                    self.line(m2, r, z_c, tau / 2.0, dt);
                    self.conductance(r, n_recv.0, r_total / 4.0);
                    first
                };
                ElementTaps {
                    current: Tap::Current(k),
                    voltage: Tap::Combo(vec![
                        (1.0, Tap::Node(n_send.0)),
                        (-1.0, Tap::Node(n_recv.0)),
                    ]),
                    flux: None,
                    magnetizing: None,
                }
            }
            Element::Transformer {
                hv,
                hv_neutral,
                lv,
                lv_neutral,
                ref model,
            } => {
                let x = self.node();
                let row = self.row();
                self.push(Branch::IdealTransformer {
                    p1: hv.0,
                    p2: hv_neutral.0,
                    s1: x,
                    s2: lv_neutral.0,
                    ratio: model.ratio,
                    row,
                });
                let mag = match model.saturation {
                    None => self.inductor(x, lv_neutral.0, model.l_mag_lv, 0.0),
                    Some(s) => {
                        let curve = TwoSlope {
                            l_unsat: model.l_mag_lv,
                            l_sat: s.l_sat,
                            flux_knee: s.flux_knee,
                        };
                        self.push(Branch::Saturable {
                            a: x,
                            b: lv_neutral.0,
                            curve,
                            flux: 0.0,
                            i: 0.0,
                            v: 0.0,
                        })
                    }
                };
                if let Some(r) = model.r_mag_lv {
                    self.conductance(x, lv_neutral.0, r);
                }
                if model.r_series_lv > 0.0 {
                    let y = self.node();
                    self.conductance(x, y, model.r_series_lv);
                    self.inductor(y, lv.0, model.l_leak_lv, 0.0);
                } else {
                    self.inductor(x, lv.0, model.l_leak_lv, 0.0);
                }
                let mut current = vec![(1.0, Tap::Row(row))];
                if let Some(cap) = model.capacitive {
                    if cap.c_hl > 0.0 {
                        let k = self.push(Branch::Capacitor {
                            a: hv.0,
                            b: lv.0,
                            c: cap.c_hl,
                            i: 0.0,
                            v: 0.0,
                        });
                        current.push((1.0, Tap::Current(k)));
                    }
                    if cap.c_surge > 0.0 {
                        self.push(Branch::Capacitor {
                            a: lv.0,
                            b: 0,
                            c: cap.c_surge,
                            i: 0.0,
                            v: 0.0,
                        });
                    }
                }
                ElementTaps {
                    current: Tap::Combo(current),
                    voltage: Tap::Combo(vec![
                        (1.0, Tap::Node(hv.0)),
                        (-1.0, Tap::Node(hv_neutral.0)),
                    ]),
                    flux: Some(Tap::Flux(mag)),
                    magnetizing: Some(Tap::Current(mag)),
                }
            }
        };
        Ok(taps)
    }
}

fn check_line_step(tau: f64, dt: f64) -> Result<()> {
    let max_dt = tau / MIN_STEPS_PER_TAU;
    if dt > max_dt * (1.0 + 1e-9) {
        return Err(Error::TimeStep { dt, tau, max_dt });
    }
    Ok(())
}

/// Largest step accepted for `circuit` (from its shortest line), if any.
pub fn max_dt(circuit: &Circuit) -> Option<f64> {
    circuit
        .elements()
        .iter()
        .filter_map(|e| match e {
            Element::BergeronLine { tau, .. } => Some(tau / MIN_STEPS_PER_TAU),
            _ => None,
        })
        .reduce(f64::min)
}

enum Attempt {
    Accepted,
    Chattering,
}

/// Time-marching engine for one circuit.
pub struct Solver {
    net: Compiled,
    state: SolverState,
    factor: Option<(MatrixKey, LU<f64, Dyn, Dyn>)>,
    probe_taps: Vec<Tap>,
    probe_names: Vec<String>,
}

impl Solver {
    pub fn new(circuit: &Circuit, dt: f64) -> Result<Self> {
        positive("dt", dt)?;
        let issues = circuit.validate();
        if !issues.is_empty() {
            let text: Vec<String> = issues.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidCircuit(text.join("; ")));
        }
        let net = Compiled::from_circuit(circuit, dt)?;
        let mut probe_taps = Vec::new();
        let mut probe_names = Vec::new();
        for p in circuit.probes() {
            let tap = match p.target {
                ProbeTarget::Voltage(n) => Tap::Node(n.0),
                ProbeTarget::Current(ElementId(k)) => net.taps[k].current.clone(),
                ProbeTarget::BranchVoltage(ElementId(k)) => net.taps[k].voltage.clone(),
                ProbeTarget::Flux(ElementId(k)) => {
                    net.taps[k].flux.clone().expect("validated probe target")
                }
                ProbeTarget::MagnetizingCurrent(ElementId(k)) => net.taps[k]
                    .magnetizing
                    .clone()
                    .expect("validated probe target"),
            };
            probe_taps.push(tap);
            probe_names.push(p.name.clone());
        }
        let state = SolverState {
            t: 0.0,
            dt,
            step: 0,
            node_voltages: vec![0.0; net.node_count],
            row_currents: vec![0.0; net.row_count],
        };
        let mut solver = Solver {
            net,
            state,
            factor: None,
            probe_taps,
            probe_names,
        };
        let floating = solver.floating_nodes();
        if !floating.is_empty() {
            return Err(Error::Singular { nodes: floating });
        }
        solver.initialize()?;
        Ok(solver)
    }

    /// Establishes a state consistent with the sources and switches at t = 0.
    ///
    /// Two vanishing backward-Euler steps: the first settles any charge
    /// redistribution forced by ideal sources across capacitive paths, the
    /// second recovers finite branch currents from the settled voltages.
    fn initialize(&mut self) -> Result<()> {
        let h = self.state.dt * INIT_STEP_FRACTION;
        for _ in 0..2 {
            let mut segments = self.current_segments();
            let (mut x, mut hist) = self.solve(Rule::BackwardEuler, h, 0.0, &segments)?;
            let implied = self.implied_segments(Rule::BackwardEuler, &x, h);
            if implied != segments {
                segments = implied;
                (x, hist) = self.solve(Rule::BackwardEuler, h, 0.0, &segments)?;
            }
            self.commit(Rule::BackwardEuler, &x, &hist, h, 0.0, false);
        }
        for b in &mut self.net.branches {
            if let Branch::Line {
                a,
                b,
                hist_a,
                hist_b,
                i_a,
                i_b,
                ..
            } = b
            {
                hist_a.set_latest(self.state.node_voltages[*a], *i_a);
                hist_b.set_latest(self.state.node_voltages[*b], *i_b);
            }
        }
        self.factor = None;
        Ok(())
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn node_voltage(&self, n: NodeRef) -> f64 {
        self.state.node_voltages[n.0]
    }

    /// Sum of 1/2 L i^2 and 1/2 C v^2 over lumped storage elements
    /// (line-internal energy excluded).
    pub fn stored_energy(&self) -> f64 {
        self.net
            .branches
            .iter()
            .map(|b| match *b {
                Branch::Inductor { l, i, .. } => 0.5 * l * i * i,
                Branch::Capacitor { c, v, .. } => 0.5 * c * v * v,
                Branch::Saturable { curve, flux, .. } => curve.energy(flux),
                _ => 0.0,
            })
            .sum()
    }

    fn unknowns(&self) -> usize {
        self.net.node_count - 1 + self.net.row_count
    }

    fn row_index(&self, row: usize) -> usize {
        self.net.node_count - 1 + row
    }

    fn matrix_key(&self, rule: Rule, h: f64, t_next: f64, segments: &[Segment]) -> MatrixKey {
        let closed = self
            .net
            .branches
            .iter()
            .filter_map(|b| match *b {
                Branch::Switch { t_close, .. } => Some(is_closed(t_close, t_next, self.state.dt)),
                _ => None,
            })
            .collect();
        MatrixKey {
            rule,
            h_bits: h.to_bits(),
            closed,
            segments: segments.to_vec(),
        }
    }

    fn assemble(&self, key: &MatrixKey, h: f64) -> DMatrix<f64> {
        let n = self.unknowns();
        let k = key.rule.k();
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut stamp = |a: usize, b: usize, g: f64| {
            if a > 0 {
                m[(a - 1, a - 1)] += g;
            }
            if b > 0 {
                m[(b - 1, b - 1)] += g;
            }
            if a > 0 && b > 0 {
                m[(a - 1, b - 1)] -= g;
                m[(b - 1, a - 1)] -= g;
            }
        };
        let mut sw = 0;
        let mut sat = 0;
        let mut rows: Vec<(usize, usize, f64)> = Vec::new();
        for b in &self.net.branches {
            match *b {
                Branch::Conductance { a, b, g } => stamp(a, b, g),
                Branch::Inductor { a, b, l, .. } => stamp(a, b, k * h / l),
                Branch::Capacitor { a, b, c, .. } => stamp(a, b, c / (k * h)),
                Branch::Saturable { a, b, curve, .. } => {
                    let (l, _) = curve.line(key.segments[sat]);
                    sat += 1;
                    stamp(a, b, k * h / l);
                }
                Branch::Switch { a, b, .. } => {
                    let g = if key.closed[sw] { G_CLOSED } else { G_OPEN };
                    sw += 1;
                    stamp(a, b, g);
                }
                Branch::Line { a, b, z, .. } => {
                    stamp(a, 0, 1.0 / z);
                    stamp(b, 0, 1.0 / z);
                }
                Branch::Source { node, row, .. } => {
                    rows.push((row, node, 1.0));
                }
                Branch::IdealTransformer {
                    p1,
                    p2,
                    s1,
                    s2,
                    ratio,
                    row,
                } => {
                    rows.push((row, p1, 1.0));
                    rows.push((row, p2, -1.0));
                    rows.push((row, s1, -ratio));
                    rows.push((row, s2, ratio));
                }
            }
        }
        for (row, node, coef) in rows {
            if node == 0 {
                continue;
            }
            let r = self.row_index(row);
            m[(r, node - 1)] += coef;
            m[(node - 1, r)] += coef;
        }
        m
    }

    fn factorize(&mut self, key: MatrixKey, h: f64) -> Result<()> {
        let reuse = matches!(&self.factor, Some((k, _)) if *k == key);
        if reuse {
            return Ok(());
        }
        let m = self.assemble(&key, h);
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular {
                nodes: self.floating_nodes(),
            });
        }
        self.factor = Some((key, lu));
        Ok(())
    }

    /// Nodes with no conductive path to ground in the compiled network.
    fn floating_nodes(&self) -> Vec<usize> {
        let n = self.net.node_count;
        let mut adj = vec![Vec::new(); n];
        for b in &self.net.branches {
            if !matches!(b, Branch::IdealTransformer { .. }) {
                let (a, c) = b.terminals();
                adj[a].push(c);
                adj[c].push(a);
            }
            match *b {
                Branch::Line { a, b, .. } => {
                    adj[a].push(0);
                    adj[0].push(a);
                    adj[b].push(0);
                    adj[0].push(b);
                }
                Branch::IdealTransformer { p1, p2, s1, s2, .. } => {
                    for (u, w) in [(p1, p2), (s1, s2)] {
                        adj[u].push(w);
                        adj[w].push(u);
                    }
                }
                _ => {}
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        (1..n).filter(|&k| !seen[k]).collect()
    }

    fn line_position(&self, t: f64, tau: f64) -> f64 {
        (t - tau) / self.state.dt
    }

    /// History injections for a step of length `h` ending at `t_next`.
    fn histories(&self, rule: Rule, h: f64, t_next: f64, segments: &[Segment]) -> Vec<(f64, f64)> {
        let mut sat = 0;
        let trap = rule == Rule::Trapezoidal;
        self.net
            .branches
            .iter()
            .map(|b| match *b {
                Branch::Inductor { l, i, v, .. } if trap => {
                    (companion_inductor_unchecked(l, h, v, i).i_hist, 0.0)
                }
                Branch::Inductor { i, .. } => (i, 0.0),
                Branch::Capacitor { c, i, v, .. } if trap => (-i - 2.0 * c / h * v, 0.0),
                Branch::Capacitor { c, v, .. } => (-c / h * v, 0.0),
                Branch::Saturable { curve, flux, v, .. } => {
                    let (l, off) = curve.line(segments[sat]);
                    sat += 1;
                    let carried = if trap { 0.5 * h * v } else { 0.0 };
                    ((flux + carried) / l + off, 0.0)
                }
                Branch::Line {
                    z,
                    tau,
                    ref hist_a,
                    ref hist_b,
                    ..
                } => {
                    let pos = self.line_position(t_next, tau);
                    let (vb, ib) = hist_b.at(pos);
                    let (va, ia) = hist_a.at(pos);
                    (bergeron_history(z, vb, ib), bergeron_history(z, va, ia))
                }
                _ => (0.0, 0.0),
            })
            .collect()
    }

    fn rhs(&self, t_next: f64, hist: &[(f64, f64)]) -> DVector<f64> {
        let mut rhs = DVector::<f64>::zeros(self.unknowns());
        let mut inject = |a: usize, b: usize, ih: f64| {
            if a > 0 {
                rhs[a - 1] -= ih;
            }
            if b > 0 {
                rhs[b - 1] += ih;
            }
        };
        for (b, &(h0, h1)) in self.net.branches.iter().zip(hist) {
            match *b {
                Branch::Inductor { a, b, .. }
                | Branch::Capacitor { a, b, .. }
                | Branch::Saturable { a, b, .. } => inject(a, b, h0),
                Branch::Line { a, b, .. } => {
                    inject(a, 0, h0);
                    inject(b, 0, h1);
                }
                _ => {}
            }
        }
        for b in &self.net.branches {
            if let Branch::Source {
                row,
                amplitude,
                freq,
                phase,
                ..
            } = *b
            {
                let r = self.row_index(row);
                rhs[r] = amplitude * (2.0 * PI * freq * t_next + phase).cos();
            }
        }
        rhs
    }

    fn solve(
        &mut self,
        rule: Rule,
        h: f64,
        t_next: f64,
        segments: &[Segment],
    ) -> Result<(DVector<f64>, Vec<(f64, f64)>)> {
        let key = self.matrix_key(rule, h, t_next, segments);
        self.factorize(key, h)?;
        let hist = self.histories(rule, h, t_next, segments);
        let rhs = self.rhs(t_next, &hist);
        let (_, lu) = self.factor.as_ref().expect("factorized above");
        let x = lu.solve(&rhs).ok_or_else(|| Error::Singular {
            nodes: self.floating_nodes(),
        })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                step: self.state.step + 1,
                message: "non-finite value in nodal solution".into(),
            });
        }
        Ok((x, hist))
    }

    fn voltage_of(x: &DVector<f64>, node: usize) -> f64 {
        if node == 0 {
            0.0
        } else {
            x[node - 1]
        }
    }

    fn current_segments(&self) -> Vec<Segment> {
        self.net
            .branches
            .iter()
            .filter_map(|b| match *b {
                Branch::Saturable { curve, flux, .. } => Some(curve.segment(flux)),
                _ => None,
            })
            .collect()
    }

    /// End-of-step segments implied by solution `x`.
    fn implied_segments(&self, rule: Rule, x: &DVector<f64>, h: f64) -> Vec<Segment> {
        self.net
            .branches
            .iter()
            .filter_map(|b| match *b {
                Branch::Saturable {
                    a,
                    b,
                    curve,
                    flux,
                    v,
                    ..
                } => {
                    let v_new = Self::voltage_of(x, a) - Self::voltage_of(x, b);
                    Some(curve.segment(flux + flux_increment(rule, h, v, v_new)))
                }
                _ => None,
            })
            .collect()
    }

    /// One sub-step of length `h`; saturable segments are re-stamped and the
    /// step re-solved on each flip, at most twice.
    fn attempt(&mut self, h: f64, t_next: f64, full_step_end: bool) -> Result<Attempt> {
        let mut segments = self.current_segments();
        let mut flips = 0;
        let (x, hist) = loop {
            let (x, hist) = self.solve(Rule::Trapezoidal, h, t_next, &segments)?;
            let implied = self.implied_segments(Rule::Trapezoidal, &x, h);
            if implied == segments {
                break (x, hist);
            }
            flips += 1;
            if flips > 2 {
                return Ok(Attempt::Chattering);
            }
            segments = implied;
        };
        self.commit(Rule::Trapezoidal, &x, &hist, h, t_next, full_step_end);
        Ok(Attempt::Accepted)
    }

    fn commit(
        &mut self,
        rule: Rule,
        x: &DVector<f64>,
        hist: &[(f64, f64)],
        h: f64,
        t_next: f64,
        push_lines: bool,
    ) {
        let dt = self.state.dt;
        let k = rule.k();
        for (b, &(h0, h1)) in self.net.branches.iter_mut().zip(hist) {
            match b {
                Branch::Inductor { a, b, l, i, v } => {
                    let vn = Self::voltage_of(x, *a) - Self::voltage_of(x, *b);
                    *i = k * h / *l * vn + h0;
                    *v = vn;
                }
                Branch::Capacitor { a, b, c, i, v } => {
                    let vn = Self::voltage_of(x, *a) - Self::voltage_of(x, *b);
                    *i = *c / (k * h) * vn + h0;
                    *v = vn;
                }
                Branch::Saturable {
                    a,
                    b,
                    curve,
                    flux,
                    i,
                    v,
                } => {
                    let vn = Self::voltage_of(x, *a) - Self::voltage_of(x, *b);
                    *flux += flux_increment(rule, h, *v, vn);
                    *i = curve.current(*flux);
                    *v = vn;
                }
                Branch::Switch {
                    t_close, closed, ..
                } => {
                    *closed = is_closed(*t_close, t_next, dt);
                }
                Branch::Line {
                    a,
                    b,
                    z,
                    hist_a,
                    hist_b,
                    i_a,
                    i_b,
                    ..
                } => {
                    let va = Self::voltage_of(x, *a);
                    let vb = Self::voltage_of(x, *b);
                    *i_a = va / *z + h0;
                    *i_b = vb / *z + h1;
                    if push_lines {
                        hist_a.push(va, *i_a);
                        hist_b.push(vb, *i_b);
                    }
                }
                _ => {}
            }
        }
        for k in 1..self.net.node_count {
            self.state.node_voltages[k] = x[k - 1];
        }
        for r in 0..self.net.row_count {
            self.state.row_currents[r] = x[self.row_index(r)];
        }
    }

    fn advance(&mut self, t: f64, h: f64, depth: u32, full_step_end: bool) -> Result<()> {
        let t_next = t + h;
        if depth >= MAX_HALVINGS {
            // accept whatever the last re-solve produced
            let segments = self.current_segments();
            let (x, hist) = self.solve(Rule::Trapezoidal, h, t_next, &segments)?;
            let implied = self.implied_segments(Rule::Trapezoidal, &x, h);
            let (x, hist) = if implied != segments {
                self.solve(Rule::Trapezoidal, h, t_next, &implied)?
            } else {
                (x, hist)
            };
            self.commit(Rule::Trapezoidal, &x, &hist, h, t_next, full_step_end);
            return Ok(());
        }
        match self.attempt(h, t_next, full_step_end)? {
            Attempt::Accepted => Ok(()),
            Attempt::Chattering => {
                self.advance(t, h / 2.0, depth + 1, false)?;
                self.advance(t + h / 2.0, h / 2.0, depth + 1, full_step_end)
            }
        }
    }

    /// Advances one full step and returns the new node voltages.
    pub fn assemble_and_solve(&mut self) -> Result<&[f64]> {
        let t = self.state.t;
        let step = self.state.step + 1;
        let t_next = step as f64 * self.state.dt;
        self.advance(t, t_next - t, 0, true)?;
        self.state.t = t_next;
        self.state.step = step;
        Ok(&self.state.node_voltages)
    }

    fn read(&self, tap: &Tap) -> f64 {
        match tap {
            Tap::Node(n) => self.state.node_voltages[*n],
            Tap::Row(r) => self.state.row_currents[*r],
            Tap::Current(k) => match self.net.branches[*k] {
                Branch::Conductance { a, b, g } => g * (self.v(a) - self.v(b)),
                Branch::Inductor { i, .. }
                | Branch::Capacitor { i, .. }
                | Branch::Saturable { i, .. } => i,
                Branch::Switch { a, b, closed, .. } => {
                    if !closed {
                        G_OPEN * (self.v(a) - self.v(b))
                    } else if b != 0 {
                        self.current_out_of(b, *k)
                    } else {
                        -self.current_out_of(a, *k)
                    }
                }
                Branch::Line { i_a, .. } => i_a,
                Branch::Source { row, .. } | Branch::IdealTransformer { row, .. } => {
                    self.state.row_currents[row]
                }
            },
            Tap::Voltage(k) => match self.net.branches[*k] {
                Branch::Inductor { v, .. }
                | Branch::Capacitor { v, .. }
                | Branch::Saturable { v, .. } => v,
                ref other => {
                    let (a, b) = other.terminals();
                    self.v(a) - self.v(b)
                }
            },
            Tap::Flux(k) => match self.net.branches[*k] {
                Branch::Inductor { l, i, .. } => l * i,
                Branch::Saturable { flux, .. } => flux,
                _ => f64::NAN,
            },
            Tap::Combo(parts) => parts.iter().map(|(c, t)| c * self.read(t)).sum(),
        }
    }

    /// Current leaving `node` through every branch except `skip`.
    ///
    /// Closed-switch currents are recovered this way; `G_CLOSED * dv` would
    /// lose most significant digits to cancellation.
    fn current_out_of(&self, node: usize, skip: usize) -> f64 {
        let mut total = 0.0;
        for (k, b) in self.net.branches.iter().enumerate() {
            if k == skip {
                continue;
            }
            total += match *b {
                Branch::Conductance { a, b, g } => {
                    g * (self.v(a) - self.v(b)) * orientation(node, a, b)
                }
                Branch::Inductor { a, b, i, .. }
                | Branch::Capacitor { a, b, i, .. }
                | Branch::Saturable { a, b, i, .. } => i * orientation(node, a, b),
                Branch::Switch { a, b, closed, .. } => {
                    let g = if closed { G_CLOSED } else { G_OPEN };
                    g * (self.v(a) - self.v(b)) * orientation(node, a, b)
                }
                Branch::Line { a, b, i_a, i_b, .. } => {
                    if node == a {
                        i_a
                    } else if node == b {
                        i_b
                    } else {
                        0.0
                    }
                }
                Branch::Source { node: n, row, .. } if n == node => self.state.row_currents[row],
                Branch::Source { .. } => 0.0,
                Branch::IdealTransformer {
                    p1,
                    p2,
                    s1,
                    s2,
                    ratio,
                    row,
                } => {
                    let j = self.state.row_currents[row];
                    [(p1, 1.0), (p2, -1.0), (s1, -ratio), (s2, ratio)]
                        .iter()
                        .filter(|(t, _)| *t == node)
                        .map(|(_, c)| c * j)
                        .sum()
                }
            };
        }
        total
    }

    fn v(&self, node: usize) -> f64 {
        self.state.node_voltages[node]
    }

    /// Current value of every probe, in circuit probe order.
    pub fn probe_values(&self) -> Vec<f64> {
        self.probe_taps.iter().map(|t| self.read(t)).collect()
    }

    pub fn probe_names(&self) -> &[String] {
        &self.probe_names
    }
}

fn companion_inductor_unchecked(l: f64, h: f64, v: f64, i: f64) -> CompanionStamp {
    let g = h / (2.0 * l);
    CompanionStamp {
        g,
        i_hist: i + g * v,
    }
}

/// +1 when `node` is the `a` end of a branch, -1 at the `b` end, else 0.
fn orientation(node: usize, a: usize, b: usize) -> f64 {
    (node == a) as u8 as f64 - (node == b) as u8 as f64
}

fn flux_increment(rule: Rule, h: f64, v_old: f64, v_new: f64) -> f64 {
    match rule {
        Rule::Trapezoidal => 0.5 * h * (v_old + v_new),
        Rule::BackwardEuler => h * v_new,
    }
}

fn is_closed(t_close: Option<f64>, t: f64, dt: f64) -> bool {
    match t_close {
        Some(tc) => t >= tc - 1e-9 * dt,
        None => false,
    }
}

/// Simulates `circuit` from 0 to `t_end` with fixed step `dt`, recording
/// every probe at every step (sample 0 is the initial state).
pub fn run(circuit: &Circuit, dt: f64, t_end: f64) -> Result<WaveformSet> {
    positive("dt", dt)?;
    if !(t_end > dt) {
        return Err(Error::param("t_end", "must exceed dt"));
    }
    let mut solver = Solver::new(circuit, dt)?;
    let steps = (t_end / dt - 1e-9).ceil() as usize;
    let mut columns: Vec<Vec<f64>> = solver
        .probe_names()
        .iter()
        .map(|_| Vec::with_capacity(steps + 1))
        .collect();
    let record = |solver: &Solver, columns: &mut Vec<Vec<f64>>| {
        for (col, v) in columns.iter_mut().zip(solver.probe_values()) {
            col.push(v);
        }
    };
    record(&solver, &mut columns);
    for _ in 0..steps {
        solver.assemble_and_solve()?;
        record(&solver, &mut columns);
    }
    Ok(WaveformSet::new(
        dt,
        0.0,
        solver.probe_names().to_vec(),
        columns,
    ))
}
