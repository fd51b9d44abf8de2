//! Scenario documents: TOML text to a fully resolved [`ScenarioConfig`].
//!
//! Every key is optional except `case_kind`; omitted keys take the case
//! defaults. The resolved configuration serializes back to a document that
//! spells out every value, so parse → serialize → parse is the identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transformer::{
    build_model, leakage_inductance, BuildOptions, Side, TransformerNameplate,
};

use super::PROBE_NAMES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Transformer energized through a long HV cable.
    CaseA,
    /// Transformer energized from the HV side with an open LV line attached.
    CaseB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Base,
    /// Case A with the transformer removed: the HV cable ends open.
    CableOnly,
    /// Case B with the transformer already energized; only the line is switched.
    LineAlone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neutral {
    Grounded,
    Floating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Zvd,
    Ddw,
}

impl Preset {
    pub fn nameplate(self) -> TransformerNameplate {
        match self {
            Preset::Zvd => TransformerNameplate::zvd(),
            Preset::Ddw => TransformerNameplate::ddw(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineModel {
    Bergeron,
    /// Total line capacitance lumped at the LV terminal.
    Lumped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingMode {
    PhaseAPeak,
    PhaseAZero,
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    pub u_ll_rms_v: f64,
    pub f_hz: f64,
    pub sc_current_a: f64,
    pub r_thev_ohm: f64,
    /// Background network surge impedance across the source inductance;
    /// 0 disables it.
    pub surge_impedance_ohm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSection {
    pub length_m: f64,
    pub velocity_m_per_s: f64,
    pub z_c_ohm: f64,
    pub r_total_ohm: f64,
}

impl LineSection {
    pub fn tau(&self) -> f64 {
        self.length_m / self.velocity_m_per_s
    }

    pub fn capacitance(&self) -> f64 {
        self.tau() / self.z_c_ohm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelBranch {
    pub enabled: bool,
    pub length_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Secondary {
    None,
    Cable {
        capacitance_f: f64,
    },
    Line {
        section: LineSection,
        model: LineModel,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerConfig {
    pub preset: Preset,
    pub nameplate: TransformerNameplate,
    pub tap: u32,
    pub saturable: bool,
    pub capacitive: bool,
    pub k_c: f64,
    pub c_total_f: f64,
    pub hv_neutral: Neutral,
    pub lv_neutral: Neutral,
}

impl TransformerConfig {
    pub fn options(&self) -> BuildOptions {
        BuildOptions {
            saturable: self.saturable,
            capacitive: self.capacitive,
            k_c: self.k_c,
            c_total: self.c_total_f,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Switching {
    pub mode: SwitchingMode,
    /// Per-pole closing times, explicit mode only.
    pub t_close_s: Option<Vec<f64>>,
    pub pole_offsets_s: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim {
    pub dt_s: f64,
    pub t_end_s: f64,
    /// Power-frequency settling before the switching event.
    pub settle_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub case_kind: CaseKind,
    pub variant: Variant,
    pub phases: usize,
    pub source: SourceConfig,
    /// Case A only.
    pub primary_cable: Option<LineSection>,
    /// Case A only.
    pub parallel_branch: Option<ParallelBranch>,
    pub secondary: Secondary,
    pub transformer: TransformerConfig,
    pub switching: Switching,
    pub sim: Sim,
    pub probes: Vec<String>,
}

impl ScenarioConfig {
    /// True when some branch is energized before the switching event and the
    /// run needs a settling period.
    pub fn has_pre_energized_branch(&self) -> bool {
        self.variant == Variant::LineAlone || self.parallel_branch.is_some_and(|p| p.enabled)
    }

    pub fn period(&self) -> f64 {
        1.0 / self.source.f_hz
    }
}

// ---------------------------------------------------------------------------
// Document form

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    case_kind: Option<CaseKind>,
    variant: Option<Variant>,
    phases: Option<usize>,
    source: Option<SourceDoc>,
    primary_cable: Option<LineDoc>,
    parallel_branch: Option<ParallelDoc>,
    secondary: Option<SecondaryDoc>,
    transformer: Option<TransformerDoc>,
    switching: Option<SwitchingDoc>,
    sim: Option<SimDoc>,
    probes: Option<Vec<String>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceDoc {
    u_ll_rms_v: Option<f64>,
    f_hz: Option<f64>,
    sc_current_a: Option<f64>,
    r_thev_ohm: Option<f64>,
    surge_impedance_ohm: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineDoc {
    length_m: Option<f64>,
    velocity_m_per_s: Option<f64>,
    z_c_ohm: Option<f64>,
    r_total_ohm: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParallelDoc {
    enabled: Option<bool>,
    length_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SecondaryKind {
    Cable,
    Line,
    None,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SecondaryDoc {
    kind: Option<SecondaryKind>,
    capacitance_f: Option<f64>,
    capacitance_per_m_f: Option<f64>,
    length_m: Option<f64>,
    velocity_m_per_s: Option<f64>,
    z_c_ohm: Option<f64>,
    r_total_ohm: Option<f64>,
    model: Option<LineModel>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformerDoc {
    preset: Option<Preset>,
    s_va: Option<f64>,
    u_hv_v: Option<f64>,
    u_lv_v: Option<f64>,
    u_hv_tap1_v: Option<f64>,
    u_hv_tap_max_v: Option<f64>,
    tap_count: Option<u32>,
    z_leak_pct: Option<f64>,
    z_leak_tap1_pct: Option<f64>,
    z_leak_tap_max_pct: Option<f64>,
    i_mag_pct: Option<f64>,
    p_noload_w: Option<f64>,
    p_shortcircuit_w: Option<f64>,
    f_rated_hz: Option<f64>,
    tap: Option<u32>,
    saturable: Option<bool>,
    capacitive: Option<bool>,
    k_c: Option<f64>,
    c_total_f: Option<f64>,
    hv_neutral: Option<Neutral>,
    lv_neutral: Option<Neutral>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SwitchingDoc {
    mode: Option<SwitchingMode>,
    t_close_s: Option<Vec<f64>>,
    pole_offsets_s: Option<Vec<f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimDoc {
    dt_s: Option<f64>,
    t_end_s: Option<f64>,
    settle_s: Option<f64>,
}

// ---------------------------------------------------------------------------
// Defaults

pub const DEFAULT_U_LL_RMS_V: f64 = 150e3;
pub const DEFAULT_F_HZ: f64 = 50.0;
/// Case A feeding substation short-circuit level.
pub const DEFAULT_SC_CURRENT_CASE_A: f64 = 33e3;
/// Case B feeding substation short-circuit level.
pub const DEFAULT_SC_CURRENT_CASE_B: f64 = 42e3;
pub const DEFAULT_SURGE_IMPEDANCE_OHM: f64 = 20.0;

pub const DEFAULT_HV_CABLE_LENGTH_M: f64 = 7100.0;
pub const DEFAULT_HV_CABLE_VELOCITY: f64 = 150e6;
pub const DEFAULT_HV_CABLE_Z_C: f64 = 40.0;

/// 13.2 nF per 60 m of 1200 mm2 Al XLPE cable.
pub const DEFAULT_LV_CABLE_C_PER_M: f64 = 13.2e-9 / 60.0;
pub const DEFAULT_LV_CABLE_LENGTH_M: f64 = 60.0;

pub const DEFAULT_OHL_LENGTH_M: f64 = 4000.0;
/// Gives the 14 us one-way travel time over 4 km.
pub const DEFAULT_OHL_VELOCITY: f64 = 285.7e6;
pub const DEFAULT_OHL_CAPACITANCE_F: f64 = 118e-9;

/// Extra simulated time after the switching event.
pub const DEFAULT_POST_EVENT_S: f64 = 40e-3;
pub const SETTLE_CYCLES: f64 = 3.0;

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::config(path, message)
}

fn positive(path: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(cfg_err(path, format!("must be > 0 (got {v})")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(cfg_err(path, format!("must be >= 0 (got {v})")))
    }
}

fn only_for(path: &str, present: bool, case: &str) -> Result<()> {
    if present {
        Err(cfg_err(path, format!("only valid for {case}")))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parsing

/// Parses and resolves a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    parse_scenario_with_overrides(text, &[])
}

/// Like [`parse_scenario`], applying dotted-path `key=value` overrides to the
/// document before resolution.
pub fn parse_scenario_with_overrides(
    text: &str,
    overrides: &[(String, String)],
) -> Result<ScenarioConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
            .unwrap_or(1);
        cfg_err(
            "<document>",
            format!("syntax error at line {line}: {}", e.message()),
        )
    })?;
    for (key, value) in overrides {
        apply_override(&mut table, key, value)?;
    }
    let doc: Document =
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            cfg_err(
                if path == "." { "<document>" } else { &path },
                e.into_inner().message().to_string(),
            )
        })?;
    resolve(doc)
}

/// Sets `key` (dotted path) to `value`, read as a TOML value when it parses
/// as one and as a plain string otherwise.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(cfg_err(key, "malformed override key"));
    }
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let mut cur = table;
    for (k, part) in parts.iter().enumerate() {
        if k + 1 == parts.len() {
            cur.insert(part.to_string(), parsed);
            return Ok(());
        }
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| cfg_err(&parts[..=k].join("."), "is not a table"))?;
    }
    unreachable!("split yields at least one part")
}

fn resolve(doc: Document) -> Result<ScenarioConfig> {
    let case_kind = doc
        .case_kind
        .ok_or_else(|| cfg_err("case_kind", "missing required key"))?;
    let is_a = case_kind == CaseKind::CaseA;

    let variant = doc.variant.unwrap_or(Variant::Base);
    match (case_kind, variant) {
        (_, Variant::Base)
        | (CaseKind::CaseA, Variant::CableOnly)
        | (CaseKind::CaseB, Variant::LineAlone) => {}
        _ => {
            return Err(cfg_err(
                "variant",
                format!("{variant:?} does not apply to {case_kind:?}"),
            ))
        }
    }

    let phases = doc.phases.unwrap_or(3);
    if phases != 1 && phases != 3 {
        return Err(cfg_err("phases", "must be 1 or 3"));
    }

    let s = doc.source.unwrap_or_default();
    let source = SourceConfig {
        u_ll_rms_v: positive(
            "source.u_ll_rms_v",
            s.u_ll_rms_v.unwrap_or(DEFAULT_U_LL_RMS_V),
        )?,
        f_hz: positive("source.f_hz", s.f_hz.unwrap_or(DEFAULT_F_HZ))?,
        sc_current_a: positive(
            "source.sc_current_a",
            s.sc_current_a.unwrap_or(if is_a {
                DEFAULT_SC_CURRENT_CASE_A
            } else {
                DEFAULT_SC_CURRENT_CASE_B
            }),
        )?,
        r_thev_ohm: non_negative("source.r_thev_ohm", s.r_thev_ohm.unwrap_or(0.0))?,
        surge_impedance_ohm: non_negative(
            "source.surge_impedance_ohm",
            s.surge_impedance_ohm.unwrap_or(DEFAULT_SURGE_IMPEDANCE_OHM),
        )?,
    };

    let (primary_cable, parallel_branch) = if is_a {
        let c = doc.primary_cable.unwrap_or_default();
        let cable = LineSection {
            length_m: positive(
                "primary_cable.length_m",
                c.length_m.unwrap_or(DEFAULT_HV_CABLE_LENGTH_M),
            )?,
            velocity_m_per_s: positive(
                "primary_cable.velocity_m_per_s",
                c.velocity_m_per_s.unwrap_or(DEFAULT_HV_CABLE_VELOCITY),
            )?,
            z_c_ohm: positive(
                "primary_cable.z_c_ohm",
                c.z_c_ohm.unwrap_or(DEFAULT_HV_CABLE_Z_C),
            )?,
            r_total_ohm: non_negative("primary_cable.r_total_ohm", c.r_total_ohm.unwrap_or(0.0))?,
        };
        let p = doc.parallel_branch.unwrap_or_default();
        let branch = ParallelBranch {
            enabled: p.enabled.unwrap_or(true),
            length_m: positive(
                "parallel_branch.length_m",
                p.length_m.unwrap_or(cable.length_m),
            )?,
        };
        (Some(cable), Some(branch))
    } else {
        only_for("primary_cable", doc.primary_cable.is_some(), "case_a")?;
        only_for("parallel_branch", doc.parallel_branch.is_some(), "case_a")?;
        (None, None)
    };

    let secondary = resolve_secondary(doc.secondary.unwrap_or_default(), case_kind)?;
    if variant == Variant::LineAlone && !matches!(secondary, Secondary::Line { .. }) {
        return Err(cfg_err(
            "secondary.kind",
            "line_alone requires kind = \"line\"",
        ));
    }

    let transformer = resolve_transformer(doc.transformer.unwrap_or_default(), case_kind)?;

    let w = doc.switching.unwrap_or_default();
    let mode = w.mode.unwrap_or(SwitchingMode::PhaseAPeak);
    let t_close_s = match (mode, w.t_close_s) {
        (SwitchingMode::Explicit, Some(t)) => {
            if t.len() != phases {
                return Err(cfg_err(
                    "switching.t_close_s",
                    format!("expected {phases} closing times, got {}", t.len()),
                ));
            }
            for (k, v) in t.iter().enumerate() {
                non_negative(&format!("switching.t_close_s[{k}]"), *v)?;
            }
            Some(t)
        }
        (SwitchingMode::Explicit, None) => {
            return Err(cfg_err(
                "switching.t_close_s",
                "required when mode = \"explicit\"",
            ))
        }
        (_, Some(_)) => {
            return Err(cfg_err(
                "switching.t_close_s",
                "only valid when mode = \"explicit\"",
            ))
        }
        (_, None) => None,
    };
    let pole_offsets_s = w.pole_offsets_s.unwrap_or_else(|| vec![0.0; phases]);
    if pole_offsets_s.len() != phases {
        return Err(cfg_err(
            "switching.pole_offsets_s",
            format!("expected {phases} offsets, got {}", pole_offsets_s.len()),
        ));
    }
    for (k, v) in pole_offsets_s.iter().enumerate() {
        if !v.is_finite() {
            return Err(cfg_err(
                &format!("switching.pole_offsets_s[{k}]"),
                "must be finite",
            ));
        }
    }
    let switching = Switching {
        mode,
        t_close_s,
        pole_offsets_s,
    };

    let mut cfg = ScenarioConfig {
        case_kind,
        variant,
        phases,
        source,
        primary_cable,
        parallel_branch,
        secondary,
        transformer,
        switching,
        sim: Sim {
            dt_s: 0.0,
            t_end_s: 0.0,
            settle_s: 0.0,
        },
        probes: Vec::new(),
    };

    let sim = doc.sim.unwrap_or_default();
    let settle_default = if cfg.has_pre_energized_branch() {
        SETTLE_CYCLES * cfg.period()
    } else {
        0.0
    };
    cfg.sim.settle_s = non_negative("sim.settle_s", sim.settle_s.unwrap_or(settle_default))?;
    cfg.sim.dt_s = match sim.dt_s {
        Some(dt) => positive("sim.dt_s", dt)?,
        None => default_dt(&cfg)?,
    };
    let event = super::build::event_time(&cfg);
    cfg.sim.t_end_s = positive(
        "sim.t_end_s",
        sim.t_end_s.unwrap_or(event + DEFAULT_POST_EVENT_S),
    )?;
    if cfg.sim.t_end_s <= cfg.sim.dt_s {
        return Err(cfg_err("sim.t_end_s", "must exceed sim.dt_s"));
    }

    cfg.probes = match doc.probes {
        Some(p) => {
            if p.is_empty() {
                return Err(cfg_err("probes", "at least one probe required"));
            }
            p
        }
        None => default_probes(&cfg),
    };
    for (k, name) in cfg.probes.iter().enumerate() {
        if !PROBE_NAMES.contains(&name.as_str()) {
            return Err(cfg_err(
                &format!("probes[{k}]"),
                format!("unknown probe `{name}` (known: {})", PROBE_NAMES.join(", ")),
            ));
        }
        if !super::build::probe_available(&cfg, name) {
            return Err(cfg_err(
                &format!("probes[{k}]"),
                format!("probe `{name}` does not exist in this topology"),
            ));
        }
        if cfg.probes[..k].contains(name) {
            return Err(cfg_err(
                &format!("probes[{k}]"),
                format!("duplicate probe `{name}`"),
            ));
        }
    }
    Ok(cfg)
}

fn resolve_secondary(d: SecondaryDoc, case_kind: CaseKind) -> Result<Secondary> {
    let kind = d.kind.unwrap_or(match case_kind {
        CaseKind::CaseA => SecondaryKind::Cable,
        CaseKind::CaseB => SecondaryKind::Line,
    });
    let cable_keys = [(
        "secondary.capacitance_per_m_f",
        d.capacitance_per_m_f.is_some(),
    )];
    let line_keys = [
        ("secondary.velocity_m_per_s", d.velocity_m_per_s.is_some()),
        ("secondary.z_c_ohm", d.z_c_ohm.is_some()),
        ("secondary.r_total_ohm", d.r_total_ohm.is_some()),
        ("secondary.model", d.model.is_some()),
    ];
    let reject = |keys: &[(&str, bool)], kind: &str| -> Result<()> {
        for (path, present) in keys {
            if *present {
                return Err(cfg_err(path, format!("not valid for kind = \"{kind}\"")));
            }
        }
        Ok(())
    };
    match kind {
        SecondaryKind::None => {
            reject(&cable_keys, "none")?;
            reject(&line_keys, "none")?;
            reject(
                &[
                    ("secondary.capacitance_f", d.capacitance_f.is_some()),
                    ("secondary.length_m", d.length_m.is_some()),
                ],
                "none",
            )?;
            Ok(Secondary::None)
        }
        SecondaryKind::Cable => {
            reject(&line_keys, "cable")?;
            let capacitance_f = match (d.capacitance_f, d.length_m, d.capacitance_per_m_f) {
                (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                    return Err(cfg_err(
                        "secondary.capacitance_f",
                        "give either capacitance_f or length_m/capacitance_per_m_f",
                    ))
                }
                (Some(c), None, None) => positive("secondary.capacitance_f", c)?,
                (None, len, per_m) => {
                    positive(
                        "secondary.length_m",
                        len.unwrap_or(DEFAULT_LV_CABLE_LENGTH_M),
                    )? * positive(
                        "secondary.capacitance_per_m_f",
                        per_m.unwrap_or(DEFAULT_LV_CABLE_C_PER_M),
                    )?
                }
            };
            Ok(Secondary::Cable { capacitance_f })
        }
        SecondaryKind::Line => {
            reject(&cable_keys, "line")?;
            let length_m = positive(
                "secondary.length_m",
                d.length_m.unwrap_or(DEFAULT_OHL_LENGTH_M),
            )?;
            let velocity_m_per_s = positive(
                "secondary.velocity_m_per_s",
                d.velocity_m_per_s.unwrap_or(DEFAULT_OHL_VELOCITY),
            )?;
            let tau = length_m / velocity_m_per_s;
            let z_c_ohm = match (d.z_c_ohm, d.capacitance_f) {
                (Some(_), Some(_)) => {
                    return Err(cfg_err(
                        "secondary.z_c_ohm",
                        "give either z_c_ohm or capacitance_f for a line",
                    ))
                }
                (Some(z), None) => positive("secondary.z_c_ohm", z)?,
                (None, c) => {
                    tau / positive(
                        "secondary.capacitance_f",
                        c.unwrap_or(DEFAULT_OHL_CAPACITANCE_F),
                    )?
                }
            };
            Ok(Secondary::Line {
                section: LineSection {
                    length_m,
                    velocity_m_per_s,
                    z_c_ohm,
                    r_total_ohm: non_negative(
                        "secondary.r_total_ohm",
                        d.r_total_ohm.unwrap_or(0.0),
                    )?,
                },
                model: d.model.unwrap_or(LineModel::Bergeron),
            })
        }
    }
}

fn resolve_transformer(d: TransformerDoc, case_kind: CaseKind) -> Result<TransformerConfig> {
    let preset = d.preset.unwrap_or(match case_kind {
        CaseKind::CaseA => Preset::Zvd,
        CaseKind::CaseB => Preset::Ddw,
    });
    let base = preset.nameplate();
    let nameplate = TransformerNameplate {
        s_rated: d.s_va.unwrap_or(base.s_rated),
        u_hv: d.u_hv_v.unwrap_or(base.u_hv),
        u_lv: d.u_lv_v.unwrap_or(base.u_lv),
        u_hv_tap1: d.u_hv_tap1_v.unwrap_or(base.u_hv_tap1),
        u_hv_tap_max: d.u_hv_tap_max_v.unwrap_or(base.u_hv_tap_max),
        tap_count: d.tap_count.unwrap_or(base.tap_count),
        z_leak_pct: d.z_leak_pct.unwrap_or(base.z_leak_pct),
        z_leak_tap1_pct: d.z_leak_tap1_pct.or(base.z_leak_tap1_pct),
        z_leak_tap_max_pct: d.z_leak_tap_max_pct.or(base.z_leak_tap_max_pct),
        i_mag_pct: d.i_mag_pct.unwrap_or(base.i_mag_pct),
        p_noload: d.p_noload_w.unwrap_or(base.p_noload),
        p_shortcircuit: d.p_shortcircuit_w.unwrap_or(base.p_shortcircuit),
        f_rated: d.f_rated_hz.unwrap_or(base.f_rated),
    };
    let tap = d
        .tap
        .unwrap_or_else(|| nameplate.neutral_tap().round() as u32);
    let cfg = TransformerConfig {
        preset,
        nameplate,
        tap,
        saturable: d.saturable.unwrap_or(false),
        capacitive: d.capacitive.unwrap_or(false),
        k_c: d.k_c.unwrap_or(0.2),
        c_total_f: d.c_total_f.unwrap_or(2e-9),
        hv_neutral: d.hv_neutral.unwrap_or(Neutral::Grounded),
        lv_neutral: d.lv_neutral.unwrap_or(Neutral::Grounded),
    };
    if tap == 0 || tap > cfg.nameplate.tap_count {
        return Err(cfg_err(
            "transformer.tap",
            format!("tap {tap} out of range (1..={})", cfg.nameplate.tap_count),
        ));
    }
    build_model(&cfg.nameplate, tap, &cfg.options()).map_err(|e| match e {
        Error::Parameter { field, reason } => {
            cfg_err(&format!("transformer.{}", document_key(&field)), reason)
        }
        other => other,
    })?;
    Ok(cfg)
}

/// Document key for a nameplate or model field name.
fn document_key(field: &str) -> &str {
    match field {
        "s_rated" => "s_va",
        "u_hv" => "u_hv_v",
        "u_lv" => "u_lv_v",
        "u_hv_tap1" => "u_hv_tap1_v",
        "u_hv_tap_max" => "u_hv_tap_max_v",
        "p_noload" => "p_noload_w",
        "p_shortcircuit" => "p_shortcircuit_w",
        "f_rated" => "f_rated_hz",
        "c_total" => "c_total_f",
        other => other,
    }
}

/// `min(tau_min / 20, T_natural / 200)` over the lines and the
/// leakage/secondary-capacitance resonance of the scenario.
pub fn default_dt(cfg: &ScenarioConfig) -> Result<f64> {
    let mut dt = f64::INFINITY;
    if let Some(c) = &cfg.primary_cable {
        dt = dt.min(c.tau() / 20.0);
    }
    let l_leak = leakage_inductance(&cfg.transformer.nameplate, cfg.transformer.tap, Side::Lv)?;
    let c_secondary = match cfg.secondary {
        Secondary::None => None,
        Secondary::Cable { capacitance_f } => Some(capacitance_f),
        Secondary::Line { section, model } => {
            if model == LineModel::Bergeron {
                dt = dt.min(section.tau() / 20.0);
            }
            Some(section.capacitance())
        }
    };
    if let (Some(c), true) = (c_secondary, cfg.variant != Variant::CableOnly) {
        let t_nat = 2.0 * std::f64::consts::PI * (l_leak * c).sqrt();
        dt = dt.min(t_nat / 200.0);
    }
    if !dt.is_finite() {
        // transformer alone: resolve the power-frequency cycle finely
        dt = cfg.period() / 2000.0;
    }
    Ok(dt)
}

fn default_probes(cfg: &ScenarioConfig) -> Vec<String> {
    let names: &[&str] = match (cfg.case_kind, cfg.variant, cfg.secondary) {
        (CaseKind::CaseA, Variant::CableOnly, _) => &["bus", "hv"],
        (CaseKind::CaseA, _, _) => &["bus", "hv", "lv"],
        (
            CaseKind::CaseB,
            _,
            Secondary::Line {
                model: LineModel::Bergeron,
                ..
            },
        ) => &["hv", "lv", "line_end"],
        (CaseKind::CaseB, _, Secondary::None) => &["hv", "lv", "flux", "i_mag"],
        (CaseKind::CaseB, _, _) => &["hv", "lv"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------------------
// Serialization

/// Canonical document spelling out every resolved value.
pub fn serialize_scenario(cfg: &ScenarioConfig) -> String {
    let t = &cfg.transformer;
    let np = &t.nameplate;
    let secondary = match cfg.secondary {
        Secondary::None => SecondaryDoc {
            kind: Some(SecondaryKind::None),
            ..SecondaryDoc::default()
        },
        Secondary::Cable { capacitance_f } => SecondaryDoc {
            kind: Some(SecondaryKind::Cable),
            capacitance_f: Some(capacitance_f),
            ..SecondaryDoc::default()
        },
        Secondary::Line { section, model } => SecondaryDoc {
            kind: Some(SecondaryKind::Line),
            length_m: Some(section.length_m),
            velocity_m_per_s: Some(section.velocity_m_per_s),
            z_c_ohm: Some(section.z_c_ohm),
            r_total_ohm: Some(section.r_total_ohm),
            model: Some(model),
            ..SecondaryDoc::default()
        },
    };
    let doc = Document {
        case_kind: Some(cfg.case_kind),
        variant: Some(cfg.variant),
        phases: Some(cfg.phases),
        source: Some(SourceDoc {
            u_ll_rms_v: Some(cfg.source.u_ll_rms_v),
            f_hz: Some(cfg.source.f_hz),
            sc_current_a: Some(cfg.source.sc_current_a),
            r_thev_ohm: Some(cfg.source.r_thev_ohm),
            surge_impedance_ohm: Some(cfg.source.surge_impedance_ohm),
        }),
        primary_cable: cfg.primary_cable.map(|c| LineDoc {
            length_m: Some(c.length_m),
            velocity_m_per_s: Some(c.velocity_m_per_s),
            z_c_ohm: Some(c.z_c_ohm),
            r_total_ohm: Some(c.r_total_ohm),
        }),
        parallel_branch: cfg.parallel_branch.map(|p| ParallelDoc {
            enabled: Some(p.enabled),
            length_m: Some(p.length_m),
        }),
        secondary: Some(secondary),
        transformer: Some(TransformerDoc {
            preset: Some(t.preset),
            s_va: Some(np.s_rated),
            u_hv_v: Some(np.u_hv),
            u_lv_v: Some(np.u_lv),
            u_hv_tap1_v: Some(np.u_hv_tap1),
            u_hv_tap_max_v: Some(np.u_hv_tap_max),
            tap_count: Some(np.tap_count),
            z_leak_pct: Some(np.z_leak_pct),
            z_leak_tap1_pct: np.z_leak_tap1_pct,
            z_leak_tap_max_pct: np.z_leak_tap_max_pct,
            i_mag_pct: Some(np.i_mag_pct),
            p_noload_w: Some(np.p_noload),
            p_shortcircuit_w: Some(np.p_shortcircuit),
            f_rated_hz: Some(np.f_rated),
            tap: Some(t.tap),
            saturable: Some(t.saturable),
            capacitive: Some(t.capacitive),
            k_c: Some(t.k_c),
            c_total_f: Some(t.c_total_f),
            hv_neutral: Some(t.hv_neutral),
            lv_neutral: Some(t.lv_neutral),
        }),
        switching: Some(SwitchingDoc {
            mode: Some(cfg.switching.mode),
            t_close_s: cfg.switching.t_close_s.clone(),
            pole_offsets_s: Some(cfg.switching.pole_offsets_s.clone()),
        }),
        sim: Some(SimDoc {
            dt_s: Some(cfg.sim.dt_s),
            t_end_s: Some(cfg.sim.t_end_s),
            settle_s: Some(cfg.sim.settle_s),
        }),
        probes: Some(cfg.probes.clone()),
    };
    toml::to_string(&doc).expect("scenario documents always serialize")
}
