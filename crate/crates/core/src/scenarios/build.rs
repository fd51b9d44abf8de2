//! Circuit assembly for the cable-fed (Case A) and line-connected (Case B)
//! energizations.

use std::f64::consts::PI;

use crate::circuit::{Circuit, Element, ElementId, NodeRef, ProbeTarget};
use crate::error::{Error, Result};
use crate::transformer::{build_model, TransformerModel};

use super::config::{
    CaseKind, LineModel, LineSection, Neutral, ScenarioConfig, Secondary, SwitchingMode, Variant,
};
use super::thevenin_from_short_circuit;

/// Neutral-to-ground resistance standing in for an isolated star point.
pub const FLOATING_NEUTRAL_R: f64 = 1e9;

const PHASE_LETTERS: [char; 3] = ['a', 'b', 'c'];

/// A circuit ready to run plus the switching schedule it was built with.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub circuit: Circuit,
    /// Earliest pole closing of the switched object.
    pub event_time: f64,
    /// Per-pole closing time of the switched object.
    pub t_close: Vec<f64>,
    /// Per-pole closing time of the already-energized branch, if any.
    pub pre_energize: Option<Vec<f64>>,
    pub dt: f64,
    pub t_end: f64,
    pub settle: f64,
}

/// Angle of phase `p` relative to phase A (A leads B leads C).
pub fn phase_angle(p: usize) -> f64 {
    [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0][p]
}

/// Probe column name for `base` on phase `p`. Single-phase runs keep the
/// bare name.
pub fn probe_label(base: &str, p: usize, phases: usize) -> String {
    if phases == 1 {
        base.to_string()
    } else {
        format!("{base}_{}", PHASE_LETTERS[p])
    }
}

/// First `offset + k * period` (integer k) at or after `after`.
fn next_instant(after: f64, offset: f64, period: f64) -> f64 {
    let k = ((after - offset) / period - 1e-9).ceil().max(0.0);
    offset + k * period
}

/// Per-pole closing times of the switched object.
pub fn pole_times(cfg: &ScenarioConfig) -> Vec<f64> {
    let period = cfg.period();
    let base: Vec<f64> = match cfg.switching.mode {
        SwitchingMode::PhaseAPeak => {
            vec![next_instant(cfg.sim.settle_s, period / 4.0, period); cfg.phases]
        }
        SwitchingMode::PhaseAZero => vec![next_instant(cfg.sim.settle_s, 0.0, period); cfg.phases],
        SwitchingMode::Explicit => cfg
            .switching
            .t_close_s
            .clone()
            .unwrap_or_else(|| vec![cfg.sim.settle_s; cfg.phases]),
    };
    base.iter()
        .zip(&cfg.switching.pole_offsets_s)
        .map(|(t, d)| (t + d).max(0.0))
        .collect()
}

/// Earliest pole closing of the switched object.
pub fn event_time(cfg: &ScenarioConfig) -> f64 {
    pole_times(cfg).into_iter().fold(f64::INFINITY, f64::min)
}

/// Pre-energized branches close each pole at its first voltage zero.
fn zero_crossings(cfg: &ScenarioConfig) -> Vec<f64> {
    let half = cfg.period() / 2.0;
    (0..cfg.phases)
        .map(|p| {
            let w = 2.0 * PI * cfg.source.f_hz;
            next_instant(0.0, (-phase_angle(p) / w).rem_euclid(half), half)
        })
        .collect()
}

pub fn probe_available(cfg: &ScenarioConfig, name: &str) -> bool {
    let has_transformer = cfg.variant != Variant::CableOnly;
    match name {
        "bus" | "hv" | "i_breaker" => true,
        "lv" | "flux" | "i_mag" => has_transformer,
        "line_end" => {
            has_transformer
                && matches!(
                    cfg.secondary,
                    Secondary::Line {
                        model: LineModel::Bergeron,
                        ..
                    }
                )
        }
        _ => false,
    }
}

/// Builds the circuit for any resolved scenario.
pub fn build(cfg: &ScenarioConfig) -> Result<BuiltScenario> {
    match cfg.case_kind {
        CaseKind::CaseA => build_case_a(cfg),
        CaseKind::CaseB => build_case_b(cfg),
    }
}

struct PhaseNodes {
    bus: NodeRef,
    hv: NodeRef,
    lv: Option<NodeRef>,
    line_end: Option<NodeRef>,
    breaker: ElementId,
    transformer: Option<ElementId>,
}

struct Builder<'a> {
    cfg: &'a ScenarioConfig,
    circuit: Circuit,
    model: TransformerModel,
    l_thev: f64,
}

impl<'a> Builder<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        let t = &cfg.transformer;
        let model = build_model(&t.nameplate, t.tap, &t.options())?;
        let l_thev = thevenin_from_short_circuit(
            cfg.source.u_ll_rms_v,
            cfg.source.sc_current_a,
            cfg.source.f_hz,
        )?;
        Ok(Builder {
            cfg,
            circuit: Circuit::new().with_phase_count(cfg.phases),
            model,
            l_thev,
        })
    }

    fn add(&mut self, e: Element) -> Result<ElementId> {
        self.circuit.add_element(e)
    }

    fn source(&mut self, p: usize) -> Result<NodeRef> {
        let s = &self.cfg.source;
        let bus = self.circuit.add_node();
        self.add(Element::VoltageSource {
            n_pos: bus,
            amplitude: (2.0f64 / 3.0).sqrt() * s.u_ll_rms_v,
            freq: s.f_hz,
            // phase A follows sin(wt)
            phase: phase_angle(p) - PI / 2.0,
            r_thev: s.r_thev_ohm,
            l_thev: self.l_thev,
            r_parallel: (s.surge_impedance_ohm > 0.0).then_some(s.surge_impedance_ohm),
        })?;
        Ok(bus)
    }

    fn line(&mut self, from: NodeRef, section: &LineSection) -> Result<NodeRef> {
        let to = self.circuit.add_node();
        self.add(Element::BergeronLine {
            n_send: from,
            n_recv: to,
            z_c: section.z_c_ohm,
            tau: section.tau(),
            r_total: section.r_total_ohm,
        })?;
        Ok(to)
    }

    fn switch(&mut self, from: NodeRef, t_close: f64) -> Result<(ElementId, NodeRef)> {
        let to = self.circuit.add_node();
        let id = self.add(Element::Switch {
            n1: from,
            n2: to,
            t_close: Some(t_close),
        })?;
        Ok((id, to))
    }

    fn neutral(&mut self, kind: Neutral, shared: &mut Option<NodeRef>) -> Result<NodeRef> {
        match kind {
            Neutral::Grounded => Ok(NodeRef::GROUND),
            Neutral::Floating => {
                if let Some(n) = *shared {
                    return Ok(n);
                }
                let n = self.circuit.add_node();
                self.add(Element::Resistor {
                    n1: n,
                    n2: NodeRef::GROUND,
                    r: FLOATING_NEUTRAL_R,
                })?;
                *shared = Some(n);
                Ok(n)
            }
        }
    }

    /// One transformer per call; `neutrals` carries the star points shared by
    /// the phases of the same unit.
    fn transformer(
        &mut self,
        hv: NodeRef,
        neutrals: &mut (Option<NodeRef>, Option<NodeRef>),
    ) -> Result<(ElementId, NodeRef)> {
        let t = &self.cfg.transformer;
        let (hv_kind, lv_kind) = (t.hv_neutral, t.lv_neutral);
        let hv_neutral = self.neutral(hv_kind, &mut neutrals.0)?;
        let lv_neutral = self.neutral(lv_kind, &mut neutrals.1)?;
        let lv = self.circuit.add_node();
        let id = self.add(Element::Transformer {
            hv,
            hv_neutral,
            lv,
            lv_neutral,
            model: self.model.clone(),
        })?;
        Ok((id, lv))
    }

    /// Attaches the secondary to `lv`; returns the open line end if any.
    fn secondary(&mut self, lv: NodeRef) -> Result<Option<NodeRef>> {
        match self.cfg.secondary {
            Secondary::None => Ok(None),
            Secondary::Cable { capacitance_f } => {
                self.capacitor(lv, capacitance_f)?;
                Ok(None)
            }
            Secondary::Line { section, model } => match model {
                LineModel::Bergeron => Ok(Some(self.line(lv, &section)?)),
                LineModel::Lumped => {
                    self.capacitor(lv, section.capacitance())?;
                    Ok(None)
                }
            },
        }
    }

    fn capacitor(&mut self, n: NodeRef, c: f64) -> Result<()> {
        self.add(Element::Capacitor {
            n1: n,
            n2: NodeRef::GROUND,
            c,
            v0: 0.0,
        })?;
        Ok(())
    }

    fn probes(&mut self, phases: &[PhaseNodes]) -> Result<()> {
        let names = self.cfg.probes.clone();
        for (p, nodes) in phases.iter().enumerate() {
            for name in &names {
                let target = match name.as_str() {
                    "bus" => Some(ProbeTarget::Voltage(nodes.bus)),
                    "hv" => Some(ProbeTarget::Voltage(nodes.hv)),
                    "lv" => nodes.lv.map(ProbeTarget::Voltage),
                    "line_end" => nodes.line_end.map(ProbeTarget::Voltage),
                    "i_breaker" => Some(ProbeTarget::Current(nodes.breaker)),
                    "flux" => nodes.transformer.map(ProbeTarget::Flux),
                    "i_mag" => nodes.transformer.map(ProbeTarget::MagnetizingCurrent),
                    _ => None,
                };
                let target = target.ok_or_else(|| {
                    Error::config(
                        "probes",
                        format!("probe `{name}` does not exist in this topology"),
                    )
                })?;
                self.circuit
                    .add_probe(probe_label(name, p, self.cfg.phases), target);
            }
        }
        Ok(())
    }

    fn finish(mut self, phases: Vec<PhaseNodes>, pre: Option<Vec<f64>>) -> Result<BuiltScenario> {
        self.probes(&phases)?;
        let issues = self.circuit.validate();
        if !issues.is_empty() {
            return Err(Error::InvalidCircuit(format!("{issues:?}")));
        }
        let t_close = pole_times(self.cfg);
        Ok(BuiltScenario {
            event_time: event_time(self.cfg),
            t_close,
            pre_energize: pre,
            dt: self.cfg.sim.dt_s,
            t_end: self.cfg.sim.t_end_s,
            settle: self.cfg.sim.settle_s,
            circuit: self.circuit,
        })
    }
}

/// Source → bus → breaker → HV cable → transformer → LV secondary, with an
/// optional already-energized cable + transformer on the same bus.
pub fn build_case_a(cfg: &ScenarioConfig) -> Result<BuiltScenario> {
    if cfg.case_kind != CaseKind::CaseA {
        return Err(Error::config("case_kind", "build_case_a needs case_a"));
    }
    let cable = cfg
        .primary_cable
        .ok_or_else(|| Error::config("primary_cable", "missing required table"))?;
    let parallel = cfg.parallel_branch.filter(|p| p.enabled);
    let mut b = Builder::new(cfg)?;
    let poles = pole_times(cfg);
    let zeros = zero_crossings(cfg);
    let mut neutrals = (None, None);
    let mut parallel_neutrals = (None, None);
    let mut phases = Vec::with_capacity(cfg.phases);
    for p in 0..cfg.phases {
        let bus = b.source(p)?;
        let (breaker, sw) = b.switch(bus, poles[p])?;
        let hv = b.line(sw, &cable)?;
        let (transformer, lv, line_end) = if cfg.variant == Variant::CableOnly {
            (None, None, None)
        } else {
            let (id, lv) = b.transformer(hv, &mut neutrals)?;
            let end = b.secondary(lv)?;
            (Some(id), Some(lv), end)
        };
        if let Some(branch) = parallel {
            let section = LineSection {
                length_m: branch.length_m,
                ..cable
            };
            let (_, psw) = b.switch(bus, zeros[p])?;
            let phv = b.line(psw, &section)?;
            b.transformer(phv, &mut parallel_neutrals)?;
        }
        phases.push(PhaseNodes {
            bus,
            hv,
            lv,
            line_end,
            breaker,
            transformer,
        });
    }
    b.finish(phases, parallel.map(|_| zeros))
}

/// Source → bus → breaker → transformer → LV line (or lumped capacitance).
/// In the line-alone variant the breaker closes at the voltage zeros and an
/// LV switch connects the line at the event.
pub fn build_case_b(cfg: &ScenarioConfig) -> Result<BuiltScenario> {
    if cfg.case_kind != CaseKind::CaseB {
        return Err(Error::config("case_kind", "build_case_b needs case_b"));
    }
    let mut b = Builder::new(cfg)?;
    let poles = pole_times(cfg);
    let zeros = zero_crossings(cfg);
    let line_alone = cfg.variant == Variant::LineAlone;
    let mut neutrals = (None, None);
    let mut phases = Vec::with_capacity(cfg.phases);
    for p in 0..cfg.phases {
        let bus = b.source(p)?;
        let t_breaker = if line_alone { zeros[p] } else { poles[p] };
        let (breaker, hv) = b.switch(bus, t_breaker)?;
        let (id, lv) = b.transformer(hv, &mut neutrals)?;
        let attach = if line_alone {
            b.switch(lv, poles[p])?.1
        } else {
            lv
        };
        let line_end = b.secondary(attach)?;
        phases.push(PhaseNodes {
            bus,
            hv,
            lv: Some(lv),
            line_end,
            breaker,
            transformer: Some(id),
        });
    }
    b.finish(phases, line_alone.then_some(zeros))
}
