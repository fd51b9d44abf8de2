//! Declarative scenarios and the Case A / Case B circuit builders.
//!
//! A scenario is a TOML document (see [`config`]) resolved into a
//! [`ScenarioConfig`], then assembled into a [`Circuit`](crate::Circuit) by
//! [`build`].

pub mod build;
pub mod config;

use std::f64::consts::PI;

use crate::error::{positive, Result};
use crate::solver::{self, WaveformSet};

pub use build::{
    build, build_case_a, build_case_b, event_time, phase_angle, pole_times, probe_label,
    BuiltScenario,
};
pub use config::{
    parse_scenario, parse_scenario_with_overrides, serialize_scenario, CaseKind, LineModel,
    Neutral, ScenarioConfig, Secondary, SwitchingMode, Variant,
};

/// Probe base names a scenario may request. Three-phase runs append
/// `_a`, `_b`, `_c`.
pub const PROBE_NAMES: [&str; 7] = ["bus", "hv", "lv", "line_end", "i_breaker", "flux", "i_mag"];

/// Source inductance from the three-phase short-circuit level:
/// `X = U / (sqrt(3) I)`, `L = X / (2 pi f)`.
pub fn thevenin_from_short_circuit(u_ll_rms: f64, i_sc_rms: f64, f: f64) -> Result<f64> {
    positive("u_ll_rms", u_ll_rms)?;
    positive("i_sc_rms", i_sc_rms)?;
    positive("f", f)?;
    Ok(u_ll_rms / (3f64.sqrt() * i_sc_rms) / (2.0 * PI * f))
}

/// Builds and runs a resolved scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<WaveformSet> {
    let built = build(cfg)?;
    solver::run(&built.circuit, built.dt, built.t_end)
}
