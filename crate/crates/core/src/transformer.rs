//! Nameplate data to per-phase two-winding transient model.
//!
//! The model is an ideal ratio (with tap) feeding an LV-referred magnetizing
//! branch, followed by the series leakage inductance and winding resistance.
//! An optional capacitive divider (inter-winding plus LV surge capacitance)
//! reproduces the fast capacitive step transfer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerNameplate {
    /// Rated three-phase power, VA.
    pub s_rated: f64,
    /// HV line-line rms voltage at the neutral tap, V.
    pub u_hv: f64,
    /// LV line-line rms voltage, V.
    pub u_lv: f64,
    pub u_hv_tap1: f64,
    pub u_hv_tap_max: f64,
    pub tap_count: u32,
    /// HV-LV short-circuit impedance at the neutral tap, %.
    pub z_leak_pct: f64,
    pub z_leak_tap1_pct: Option<f64>,
    pub z_leak_tap_max_pct: Option<f64>,
    pub i_mag_pct: f64,
    /// No-load losses, W (three-phase).
    pub p_noload: f64,
    /// HV-LV short-circuit losses, W (three-phase).
    pub p_shortcircuit: f64,
    pub f_rated: f64,
}

impl TransformerNameplate {
    /// 100 MVA 150/52.5 kV unit (cable-fed case) with leakage impedance
    /// tabulated at both tap extremes. The 11 kV tertiary is not modeled.
    pub fn zvd() -> Self {
        TransformerNameplate {
            s_rated: 100e6,
            u_hv: 150e3,
            u_lv: 52.5e3,
            u_hv_tap1: 172.5e3,
            u_hv_tap_max: 127.5e3,
            tap_count: 21,
            z_leak_pct: 14.19,
            z_leak_tap1_pct: Some(15.19),
            z_leak_tap_max_pct: Some(13.43),
            i_mag_pct: 0.3,
            p_noload: 38.2e3,
            p_shortcircuit: 267.4e3,
            f_rated: 50.0,
        }
    }

    /// 80 MVA 150/52.5 kV unit (line-connected case); leakage impedance is
    /// known only at the neutral tap.
    pub fn ddw() -> Self {
        TransformerNameplate {
            s_rated: 80e6,
            u_hv: 150e3,
            u_lv: 52.5e3,
            u_hv_tap1: 172.5e3,
            u_hv_tap_max: 127.5e3,
            tap_count: 21,
            z_leak_pct: 13.8,
            z_leak_tap1_pct: None,
            z_leak_tap_max_pct: None,
            i_mag_pct: 0.3,
            p_noload: 71e3,
            p_shortcircuit: 287e3,
            f_rated: 50.0,
        }
    }

    pub fn check(&self) -> Result<()> {
        positive("s_rated", self.s_rated)?;
        positive("u_hv", self.u_hv)?;
        positive("u_lv", self.u_lv)?;
        positive("u_hv_tap1", self.u_hv_tap1)?;
        positive("u_hv_tap_max", self.u_hv_tap_max)?;
        positive("i_mag_pct", self.i_mag_pct)?;
        non_negative("p_noload", self.p_noload)?;
        non_negative("p_shortcircuit", self.p_shortcircuit)?;
        positive("f_rated", self.f_rated)?;
        if self.tap_count == 0 {
            return Err(Error::param("tap_count", "must be >= 1"));
        }
        if (self.u_hv_tap1 - self.u_hv) * (self.u_hv - self.u_hv_tap_max) < 0.0 {
            return Err(Error::param(
                "u_hv",
                "must lie between u_hv_tap1 and u_hv_tap_max",
            ));
        }
        for (field, z) in [
            ("z_leak_pct", Some(self.z_leak_pct)),
            ("z_leak_tap1_pct", self.z_leak_tap1_pct),
            ("z_leak_tap_max_pct", self.z_leak_tap_max_pct),
        ] {
            if let Some(z) = z {
                if !(z > 0.0 && z < 100.0) {
                    return Err(Error::param(field, "must be within (0, 100)"));
                }
            }
        }
        if self.i_mag_pct >= 100.0 {
            return Err(Error::param("i_mag_pct", "must be < 100"));
        }
        Ok(())
    }

    pub fn neutral_tap(&self) -> f64 {
        (self.tap_count as f64 + 1.0) / 2.0
    }

    fn check_tap(&self, tap: u32) -> Result<()> {
        if tap == 0 || tap > self.tap_count {
            return Err(Error::param(
                "tap",
                format!("out of range (1..={})", self.tap_count),
            ));
        }
        Ok(())
    }

    /// HV rms line-line voltage at `tap`, linear across the tap range.
    pub fn hv_voltage_at_tap(&self, tap: u32) -> Result<f64> {
        self.check_tap(tap)?;
        if self.tap_count == 1 {
            return Ok(self.u_hv);
        }
        let step = (self.u_hv_tap_max - self.u_hv_tap1) / (self.tap_count as f64 - 1.0);
        Ok(self.u_hv_tap1 + (tap as f64 - 1.0) * step)
    }

    /// Short-circuit impedance at `tap`, piecewise linear through the
    /// tabulated tap-1 / neutral / last-tap values, constant when the
    /// extremes are not given.
    pub fn leakage_pct_at_tap(&self, tap: u32) -> Result<f64> {
        self.check_tap(tap)?;
        let t = tap as f64;
        let mid = self.neutral_tap();
        let z = match (self.z_leak_tap1_pct, self.z_leak_tap_max_pct) {
            (Some(z1), _) if t < mid => lerp(1.0, z1, mid, self.z_leak_pct, t),
            (_, Some(zmax)) if t > mid => {
                lerp(mid, self.z_leak_pct, self.tap_count as f64, zmax, t)
            }
            _ => self.z_leak_pct,
        };
        Ok(z)
    }

    /// Peak phase flux linkage at rated LV voltage, Wb.
    pub fn rated_peak_flux_lv(&self) -> f64 {
        (2.0f64 / 3.0).sqrt() * self.u_lv / (2.0 * PI * self.f_rated)
    }
}

fn lerp(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Hv,
    Lv,
}

/// Series leakage inductance per phase, referred to `side`.
pub fn leakage_inductance(np: &TransformerNameplate, tap: u32, side: Side) -> Result<f64> {
    let z = np.leakage_pct_at_tap(tap)?;
    let u = match side {
        Side::Hv => np.hv_voltage_at_tap(tap)?,
        Side::Lv => np.u_lv,
    };
    Ok(inductance_from_pct(z, u, np.s_rated, np.f_rated))
}

/// `(z/100) * U^2 / (S * 2*pi*f)`.
pub fn inductance_from_pct(z_pct: f64, u_rms_ll: f64, s: f64, f: f64) -> f64 {
    z_pct / 100.0 * u_rms_ll * u_rms_ll / (s * 2.0 * PI * f)
}

pub fn pct_from_inductance(l: f64, u_rms_ll: f64, s: f64, f: f64) -> f64 {
    100.0 * l * s * 2.0 * PI * f / (u_rms_ll * u_rms_ll)
}

/// HV/LV voltage ratio at `tap`.
pub fn tap_ratio(np: &TransformerNameplate, tap: u32) -> Result<f64> {
    Ok(np.hv_voltage_at_tap(tap)? / np.u_lv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub saturable: bool,
    pub capacitive: bool,
    /// Capacitive step-transfer ratio c_hl / (c_hl + c_surge).
    pub k_c: f64,
    /// c_hl + c_surge, F.
    pub c_total: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            saturable: false,
            capacitive: false,
            k_c: 0.2,
            c_total: 2e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub l_sat: f64,
    pub flux_knee: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitiveCoupling {
    /// HV terminal to LV terminal.
    pub c_hl: f64,
    /// LV terminal to ground.
    pub c_surge: f64,
}

impl CapacitiveCoupling {
    pub fn transfer_ratio(&self) -> f64 {
        self.c_hl / (self.c_hl + self.c_surge)
    }
}

/// Per-phase model, all branch values referred to the LV winding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerModel {
    pub ratio: f64,
    pub l_leak_lv: f64,
    pub r_series_lv: f64,
    pub l_mag_lv: f64,
    pub r_mag_lv: Option<f64>,
    pub saturation: Option<Saturation>,
    pub capacitive: Option<CapacitiveCoupling>,
}

impl TransformerModel {
    pub fn check(&self) -> Result<()> {
        positive("ratio", self.ratio)?;
        positive("l_leak_lv", self.l_leak_lv)?;
        non_negative("r_series_lv", self.r_series_lv)?;
        positive("l_mag_lv", self.l_mag_lv)?;
        if let Some(r) = self.r_mag_lv {
            positive("r_mag_lv", r)?;
        }
        if let Some(s) = self.saturation {
            positive("l_sat", s.l_sat)?;
            positive("flux_knee", s.flux_knee)?;
            if s.l_sat > self.l_mag_lv {
                return Err(Error::param("l_sat", "must be <= l_mag_lv"));
            }
        }
        if let Some(c) = self.capacitive {
            non_negative("c_hl", c.c_hl)?;
            non_negative("c_surge", c.c_surge)?;
            positive("c_hl + c_surge", c.c_hl + c.c_surge)?;
        }
        Ok(())
    }
}

/// Builds the LV-referred per-phase model for `tap`.
pub fn build_model(
    np: &TransformerNameplate,
    tap: u32,
    opts: &BuildOptions,
) -> Result<TransformerModel> {
    np.check()?;
    let ratio = tap_ratio(np, tap)?;
    let l_leak_lv = leakage_inductance(np, tap, Side::Lv)?;
    let w = 2.0 * PI * np.f_rated;
    let u2 = np.u_lv * np.u_lv;

    // Three-phase losses on a per-phase star equivalent: P = 3 I^2 R with
    // I = S / (sqrt(3) U), i.e. R = P U^2 / S^2.
    let r_series_lv = np.p_shortcircuit * u2 / (np.s_rated * np.s_rated);
    if r_series_lv >= w * l_leak_lv {
        return Err(Error::param(
            "p_shortcircuit",
            "implies a winding resistance above the leakage impedance",
        ));
    }
    let l_mag_lv = u2 / (np.s_rated * np.i_mag_pct / 100.0) / w;
    let r_mag_lv = (np.p_noload > 0.0).then(|| u2 / np.p_noload);

    let saturation = opts.saturable.then(|| Saturation {
        l_sat: 5.0 * l_leak_lv,
        flux_knee: np.rated_peak_flux_lv(),
    });
    let capacitive = if opts.capacitive {
        if !(0.0..=1.0).contains(&opts.k_c) {
            return Err(Error::param("k_c", "must be within [0, 1]"));
        }
        positive("c_total", opts.c_total)?;
        Some(CapacitiveCoupling {
            c_hl: opts.k_c * opts.c_total,
            c_surge: (1.0 - opts.k_c) * opts.c_total,
        })
    } else {
        None
    };

    let model = TransformerModel {
        ratio,
        l_leak_lv,
        r_series_lv,
        l_mag_lv,
        r_mag_lv,
        saturation,
        capacitive,
    };
    model.check()?;
    Ok(model)
}
