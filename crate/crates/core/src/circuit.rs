//! Netlist description: nodes, elements, probes and the switching schedule.
//!
//! A [`Circuit`] is a plain value. Parameter checks happen when elements are
//! added; structural checks (connectivity, probe targets) are reported by
//! [`Circuit::validate`] as data so callers can decide what is fatal.

use std::collections::HashSet;
use std::fmt;

use crate::error::{non_negative, positive, Error, Result};
use crate::transformer::TransformerModel;

/// Index of a circuit node. Index 0 is ground and is held at 0 V.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef(pub usize);

impl NodeRef {
    pub const GROUND: NodeRef = NodeRef(0);

    pub fn is_ground(self) -> bool {
        self.0 == 0
    }
}

/// Dense, insertion-ordered element identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Resistor {
        n1: NodeRef,
        n2: NodeRef,
        r: f64,
    },
    Inductor {
        n1: NodeRef,
        n2: NodeRef,
        l: f64,
        i0: f64,
    },
    Capacitor {
        n1: NodeRef,
        n2: NodeRef,
        c: f64,
        v0: f64,
    },
    /// Two-slope flux/current characteristic, symmetric about the origin.
    SaturableInductor {
        n1: NodeRef,
        n2: NodeRef,
        l_unsat: f64,
        l_sat: f64,
        flux_knee: f64,
        flux0: f64,
    },
    /// `amplitude * cos(2*pi*freq*t + phase)` from `n_pos` to ground, behind
    /// `r_thev` in series with `l_thev`. `r_parallel` shunts `l_thev` and
    /// represents the surge impedance of the rest of the network.
    VoltageSource {
        n_pos: NodeRef,
        amplitude: f64,
        freq: f64,
        phase: f64,
        r_thev: f64,
        l_thev: f64,
        r_parallel: Option<f64>,
    },
    /// Single pole; closes at the first time step >= `t_close`.
    Switch {
        n1: NodeRef,
        n2: NodeRef,
        t_close: Option<f64>,
    },
    BergeronLine {
        n_send: NodeRef,
        n_recv: NodeRef,
        z_c: f64,
        tau: f64,
        r_total: f64,
    },
    /// One phase of a two-winding transformer. Each winding sits between its
    /// phase terminal and its neutral terminal (ground when grounded).
    Transformer {
        hv: NodeRef,
        hv_neutral: NodeRef,
        lv: NodeRef,
        lv_neutral: NodeRef,
        model: TransformerModel,
    },
}

impl Element {
    pub fn terminals(&self) -> Vec<NodeRef> {
        match self {
            Element::Resistor { n1, n2, .. }
            | Element::Inductor { n1, n2, .. }
            | Element::Capacitor { n1, n2, .. }
            | Element::SaturableInductor { n1, n2, .. }
            | Element::Switch { n1, n2, .. } => vec![*n1, *n2],
            Element::VoltageSource { n_pos, .. } => vec![*n_pos, NodeRef::GROUND],
            Element::BergeronLine { n_send, n_recv, .. } => {
                vec![*n_send, *n_recv, NodeRef::GROUND]
            }
            Element::Transformer {
                hv,
                hv_neutral,
                lv,
                lv_neutral,
                ..
            } => vec![*hv, *hv_neutral, *lv, *lv_neutral],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Element::Resistor { .. } => "resistor",
            Element::Inductor { .. } => "inductor",
            Element::Capacitor { .. } => "capacitor",
            Element::SaturableInductor { .. } => "saturable inductor",
            Element::VoltageSource { .. } => "voltage source",
            Element::Switch { .. } => "switch",
            Element::BergeronLine { .. } => "bergeron line",
            Element::Transformer { .. } => "transformer",
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Element::Resistor { r, .. } => positive("r", *r),
            Element::Inductor { l, i0, .. } => {
                positive("l", *l)?;
                finite("i0", *i0)
            }
            Element::Capacitor { c, v0, .. } => {
                positive("c", *c)?;
                finite("v0", *v0)
            }
            Element::SaturableInductor {
                l_unsat,
                l_sat,
                flux_knee,
                flux0,
                ..
            } => {
                positive("l_unsat", *l_unsat)?;
                positive("l_sat", *l_sat)?;
                positive("flux_knee", *flux_knee)?;
                finite("flux0", *flux0)?;
                if l_sat > l_unsat {
                    return Err(Error::param("l_sat", "must be <= l_unsat"));
                }
                Ok(())
            }
            Element::VoltageSource {
                amplitude,
                freq,
                phase,
                r_thev,
                l_thev,
                r_parallel,
                ..
            } => {
                finite("amplitude", *amplitude)?;
                non_negative("freq", *freq)?;
                finite("phase", *phase)?;
                non_negative("r_thev", *r_thev)?;
                non_negative("l_thev", *l_thev)?;
                if let Some(rp) = r_parallel {
                    positive("r_parallel", *rp)?;
                    if *l_thev <= 0.0 {
                        return Err(Error::param("r_parallel", "requires l_thev > 0"));
                    }
                }
                Ok(())
            }
            Element::Switch { t_close, .. } => match t_close {
                Some(t) => finite("t_close", *t),
                None => Ok(()),
            },
            Element::BergeronLine {
                n_send,
                n_recv,
                z_c,
                tau,
                r_total,
            } => {
                positive("z_c", *z_c)?;
                positive("tau", *tau)?;
                non_negative("r_total", *r_total)?;
                if n_send.is_ground() || n_recv.is_ground() {
                    return Err(Error::param(
                        "n_send/n_recv",
                        "line ends must not be ground",
                    ));
                }
                Ok(())
            }
            Element::Transformer { hv, lv, model, .. } => {
                if hv.is_ground() || lv.is_ground() {
                    return Err(Error::param(
                        "hv/lv",
                        "winding terminals must not be ground",
                    ));
                }
                model.check()
            }
        }
    }
}

fn finite(field: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, "must be finite"))
    }
}

/// What a probe records each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeTarget {
    /// Node voltage to ground.
    Voltage(NodeRef),
    /// Branch current from the element's first terminal to its second. For a
    /// line this is the current entering at the sending end; for a
    /// transformer, the current entering the HV terminal.
    Current(ElementId),
    /// Branch voltage of a two-terminal element.
    BranchVoltage(ElementId),
    /// Flux linkage of an inductor or a transformer's magnetizing branch.
    Flux(ElementId),
    /// Current in a transformer's magnetizing inductance.
    MagnetizingCurrent(ElementId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    pub target: ProbeTarget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Issue {
    NoElements,
    DisconnectedNode(usize),
    DanglingProbe(String),
    DuplicateProbe(String),
    BadProbeTarget { probe: String, reason: String },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NoElements => write!(f, "no elements"),
            Issue::DisconnectedNode(n) => write!(f, "node {n} is not connected to ground"),
            Issue::DanglingProbe(p) => write!(f, "dangling probe `{p}`"),
            Issue::DuplicateProbe(p) => write!(f, "duplicate probe name `{p}`"),
            Issue::BadProbeTarget { probe, reason } => {
                write!(f, "probe `{probe}`: {reason}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    node_count: usize,
    elements: Vec<Element>,
    probes: Vec<Probe>,
    phase_count: usize,
}

impl Default for Circuit {
    fn default() -> Self {
        Self::new()
    }
}

impl Circuit {
    pub fn new() -> Self {
        Circuit {
            node_count: 1,
            elements: Vec::new(),
            probes: Vec::new(),
            phase_count: 1,
        }
    }

    pub fn with_phase_count(mut self, phases: usize) -> Self {
        self.phase_count = phases;
        self
    }

    /// Allocates a fresh node.
    pub fn add_node(&mut self) -> NodeRef {
        let n = NodeRef(self.node_count);
        self.node_count += 1;
        n
    }

    /// Appends an element, extending the node set to cover its terminals.
    pub fn add_element(&mut self, element: Element) -> Result<ElementId> {
        element.check()?;
        for t in element.terminals() {
            self.node_count = self.node_count.max(t.0 + 1);
        }
        self.elements.push(element);
        Ok(ElementId(self.elements.len() - 1))
    }

    pub fn add_probe(&mut self, name: impl Into<String>, target: ProbeTarget) {
        self.probes.push(Probe {
            name: name.into(),
            target,
        });
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, id: ElementId) -> Option<&Element> {
        self.elements.get(id.0)
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn phase_count(&self) -> usize {
        self.phase_count
    }

    /// Structural check. Returns every issue found; an empty list means the
    /// circuit can be handed to the solver.
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        if self.elements.is_empty() {
            issues.push(Issue::NoElements);
        }

        let mut touched = vec![false; self.node_count];
        let mut groups = DisjointSet::new(self.node_count);
        for e in &self.elements {
            let terms = e.terminals();
            for t in &terms {
                touched[t.0] = true;
            }
            for pair in terms.windows(2) {
                groups.union(pair[0].0, pair[1].0);
            }
        }
        let ground = groups.find(0);
        for n in 1..self.node_count {
            if groups.find(n) != ground {
                issues.push(Issue::DisconnectedNode(n));
            }
        }

        let mut seen = HashSet::new();
        for p in &self.probes {
            if !seen.insert(p.name.as_str()) {
                issues.push(Issue::DuplicateProbe(p.name.clone()));
            }
            if let Some(issue) = self.check_probe(p, &touched) {
                issues.push(issue);
            }
        }
        issues
    }

    fn check_probe(&self, p: &Probe, touched: &[bool]) -> Option<Issue> {
        let bad = |reason: &str| Issue::BadProbeTarget {
            probe: p.name.clone(),
            reason: reason.to_string(),
        };
        match p.target {
            ProbeTarget::Voltage(n) => {
                if n.0 >= touched.len() || (!n.is_ground() && !touched[n.0]) {
                    return Some(Issue::DanglingProbe(p.name.clone()));
                }
                None
            }
            ProbeTarget::Current(id) | ProbeTarget::BranchVoltage(id) => match self.element(id) {
                None => Some(Issue::DanglingProbe(p.name.clone())),
                Some(_) => None,
            },
            ProbeTarget::Flux(id) => match self.element(id) {
                None => Some(Issue::DanglingProbe(p.name.clone())),
                Some(Element::Inductor { .. })
                | Some(Element::SaturableInductor { .. })
                | Some(Element::Transformer { .. }) => None,
                Some(e) => Some(bad(&format!("{} has no flux", e.kind()))),
            },
            ProbeTarget::MagnetizingCurrent(id) => match self.element(id) {
                None => Some(Issue::DanglingProbe(p.name.clone())),
                Some(Element::Transformer { .. }) => None,
                Some(e) => Some(bad(&format!("{} has no magnetizing branch", e.kind()))),
            },
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: usize) -> NodeRef {
        NodeRef(i)
    }

    #[test]
    fn first_insertion_gets_id_zero() {
        let mut c = Circuit::new();
        c.add_node();
        let id = c
            .add_element(Element::Resistor {
                n1: n(1),
                n2: n(0),
                r: 200.0,
            })
            .unwrap();
        assert_eq!(id, ElementId(0));
        assert_eq!(c.elements().len(), 1);
        assert_eq!(c.node_count(), 2);
    }

    #[test]
    fn negative_inductance_is_rejected() {
        let mut c = Circuit::new();
        let err = c
            .add_element(Element::Inductor {
                n1: n(1),
                n2: n(2),
                l: -1.0,
                i0: 0.0,
            })
            .unwrap_err();
        assert_eq!(err.to_string(), "invalid parameter: l must be > 0");
        assert!(c.elements().is_empty());
    }

    #[test]
    fn line_registers_both_terminals() {
        let mut c = Circuit::new();
        // 7.1 km at 150 m/us
        let tau: f64 = 7100.0 / 150e6;
        assert!((tau - 47.33e-6).abs() < 0.01e-6);
        let id = c
            .add_element(Element::BergeronLine {
                n_send: n(1),
                n_recv: n(2),
                z_c: 40.0,
                tau,
                r_total: 0.0,
            })
            .unwrap();
        assert_eq!(id, ElementId(0));
        assert_eq!(c.node_count(), 3);
        assert!(c.validate().is_empty());
    }

    #[test]
    fn rejects_non_positive_parameters() {
        let mut c = Circuit::new();
        let cases = [
            (
                Element::Resistor {
                    n1: n(1),
                    n2: n(0),
                    r: 0.0,
                },
                "r",
            ),
            (
                Element::Capacitor {
                    n1: n(1),
                    n2: n(0),
                    c: -1e-9,
                    v0: 0.0,
                },
                "c",
            ),
            (
                Element::BergeronLine {
                    n_send: n(1),
                    n_recv: n(2),
                    z_c: 0.0,
                    tau: 1e-5,
                    r_total: 0.0,
                },
                "z_c",
            ),
            (
                Element::BergeronLine {
                    n_send: n(1),
                    n_recv: n(2),
                    z_c: 40.0,
                    tau: 0.0,
                    r_total: 0.0,
                },
                "tau",
            ),
        ];
        for (e, field) in cases {
            match c.add_element(e) {
                Err(Error::Parameter { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected parameter error for {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn saturated_inductance_cannot_exceed_unsaturated() {
        let mut c = Circuit::new();
        let err = c
            .add_element(Element::SaturableInductor {
                n1: n(1),
                n2: n(0),
                l_unsat: 1.0,
                l_sat: 2.0,
                flux_knee: 1.0,
                flux0: 0.0,
            })
            .unwrap_err();
        assert!(matches!(err, Error::Parameter { ref field, .. } if field == "l_sat"));
    }

    #[test]
    fn empty_circuit_reports_no_elements() {
        assert_eq!(Circuit::new().validate(), vec![Issue::NoElements]);
        assert_eq!(Issue::NoElements.to_string(), "no elements");
    }

    #[test]
    fn probe_on_unused_node_is_dangling() {
        let mut c = Circuit::new();
        c.add_element(Element::Resistor {
            n1: n(1),
            n2: n(0),
            r: 1.0,
        })
        .unwrap();
        c.add_probe("v3", ProbeTarget::Voltage(n(3)));
        let issues = c.validate();
        assert_eq!(issues, vec![Issue::DanglingProbe("v3".into())]);
        assert!(issues[0].to_string().contains("dangling probe"));
    }

    #[test]
    fn detects_disconnected_island_and_duplicate_probe() {
        let mut c = Circuit::new();
        c.add_element(Element::Resistor {
            n1: n(1),
            n2: n(0),
            r: 1.0,
        })
        .unwrap();
        c.add_element(Element::Capacitor {
            n1: n(2),
            n2: n(3),
            c: 1e-9,
            v0: 0.0,
        })
        .unwrap();
        c.add_probe("a", ProbeTarget::Voltage(n(1)));
        c.add_probe("a", ProbeTarget::Voltage(n(2)));
        let issues = c.validate();
        assert!(issues.contains(&Issue::DisconnectedNode(2)));
        assert!(issues.contains(&Issue::DisconnectedNode(3)));
        assert!(issues.contains(&Issue::DuplicateProbe("a".into())));
    }

    #[test]
    fn open_switch_still_connects_topology() {
        let mut c = Circuit::new();
        c.add_element(Element::Resistor {
            n1: n(1),
            n2: n(0),
            r: 1.0,
        })
        .unwrap();
        c.add_element(Element::Switch {
            n1: n(1),
            n2: n(2),
            t_close: None,
        })
        .unwrap();
        assert!(c.validate().is_empty());
    }

    #[test]
    fn validate_is_pure() {
        let mut c = Circuit::new();
        c.add_element(Element::Capacitor {
            n1: n(2),
            n2: n(3),
            c: 1e-9,
            v0: 0.0,
        })
        .unwrap();
        c.add_probe("x", ProbeTarget::Flux(ElementId(0)));
        let before = c.clone();
        let first = c.validate();
        let second = c.validate();
        assert_eq!(first, second);
        assert_eq!(before, c);
        assert!(first
            .iter()
            .any(|i| matches!(i, Issue::BadProbeTarget { .. })));
    }
}
