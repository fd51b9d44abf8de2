//! `analyze`: peak over-voltage and dominant oscillation frequency of one
//! probe, as readable text followed by a `key=value` block.

use std::io::Write;
use std::path::Path;

use transient_bench_core::analysis::{
    dominant_frequency, peak_overvoltage, OvervoltageReport, SpectrumPeak, Trace,
    DEFAULT_EXCLUDE_BELOW_HZ,
};

use crate::waveform_csv::read_waveforms;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub probe: String,
    pub window: (f64, f64),
    pub overvoltage: OvervoltageReport,
    pub spectrum: Option<SpectrumPeak>,
}

impl Report {
    /// Line-oriented machine block.
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        let ov = &self.overvoltage;
        let mut kv = vec![
            ("probe", self.probe.clone()),
            ("window_start_s", format!("{:e}", self.window.0)),
            ("window_end_s", format!("{:e}", self.window.1)),
            ("peak_abs", format!("{:e}", ov.peak_abs)),
            ("time_of_peak_s", format!("{:e}", ov.time_of_peak)),
            ("base_peak_v", format!("{:e}", ov.base_peak)),
            ("per_unit", format!("{:.6}", ov.per_unit)),
        ];
        match &self.spectrum {
            Some(p) => {
                kv.push(("dominant_freq_hz", format!("{:.3}", p.frequency)));
                kv.push(("dominant_amplitude", format!("{:e}", p.amplitude)));
                kv.push(("bin_width_hz", format!("{:.3}", p.bin_width)));
            }
            None => kv.push(("dominant_freq_hz", "none".into())),
        }
        kv
    }
}

pub fn report(
    csv: &Path,
    probe: &str,
    base_kv: f64,
    window: Option<(f64, f64)>,
) -> CliResult<Report> {
    if !(base_kv.is_finite() && base_kv > 0.0) {
        return Err(CliError::usage(format!(
            "--base-kv must be > 0 (got {base_kv})"
        )));
    }
    let set = read_waveforms(csv)?;
    let values = set.probe(probe).ok_or_else(|| {
        CliError::usage(format!(
            "unknown probe `{probe}` (available: {})",
            set.names().join(", ")
        ))
    })?;
    let (first, last) = (set.time(0), set.time(set.len() - 1));
    let (a, b) = window.unwrap_or((first, last));
    let lo = set.index_at(a.max(first));
    let hi = set.index_at(b.min(last));
    if a > last || b < first || hi < lo {
        return Err(CliError::usage(format!(
            "window {a}:{b} s holds no samples (record spans {first}:{last} s)"
        )));
    }
    let trace = Trace::new(set.time(lo), set.dt(), &values[lo..=hi]);
    let overvoltage = peak_overvoltage(&trace, base_kv * 1e3).map_err(CliError::from)?;
    let spectrum = if overvoltage.peak_abs == 0.0 {
        None
    } else {
        dominant_frequency(&trace, set.time(lo), set.time(hi), DEFAULT_EXCLUDE_BELOW_HZ)
            .map_err(CliError::from)?
    };
    Ok(Report {
        probe: probe.to_string(),
        window: (set.time(lo), set.time(hi)),
        overvoltage,
        spectrum,
    })
}

pub fn analyze(
    csv: &Path,
    probe: &str,
    base_kv: f64,
    window: Option<(f64, f64)>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let r = report(csv, probe, base_kv, window)?;
    let ov = &r.overvoltage;
    let mut text = format!(
        "probe {} over {:.6e} .. {:.6e} s\n",
        r.probe, r.window.0, r.window.1
    );
    if ov.peak_abs == 0.0 {
        text.push_str("peak: no peak (waveform is zero)\n");
    } else {
        text.push_str(&format!(
            "peak: {:.4e} at t = {:.6e} s = {:.3} p.u. (base {:.3} kV peak from {base_kv} kV rms line-line)\n",
            ov.peak_abs,
            ov.time_of_peak,
            ov.per_unit,
            ov.base_peak / 1e3
        ));
    }
    match &r.spectrum {
        Some(p) => text.push_str(&format!(
            "dominant frequency: {:.1} Hz (amplitude {:.4e}, bin {:.1} Hz, content below {DEFAULT_EXCLUDE_BELOW_HZ} Hz ignored)\n",
            p.frequency, p.amplitude, p.bin_width
        )),
        None => text.push_str("dominant frequency: none\n"),
    }
    text.push('\n');
    for (k, v) in r.key_values() {
        text.push_str(&format!("{k}={v}\n"));
    }
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io(e.to_string()))
}
