//! Waveform metrics and closed-form reference responses.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{non_negative, positive, Error, Result};
use crate::solver::WaveformSet;

/// A uniformly sampled single-probe signal.
#[derive(Debug, Clone, Copy)]
pub struct Trace<'a> {
    pub t0: f64,
    pub dt: f64,
    pub values: &'a [f64],
}

impl<'a> Trace<'a> {
    pub fn new(t0: f64, dt: f64, values: &'a [f64]) -> Self {
        Trace { t0, dt, values }
    }

    pub fn from_set(set: &'a WaveformSet, probe: &str) -> Option<Self> {
        set.probe(probe).map(|v| Trace::new(set.t0(), set.dt(), v))
    }

    fn index_range(&self, t_start: f64, t_end: f64) -> std::ops::Range<usize> {
        let n = self.values.len();
        let lo = ((t_start - self.t0) / self.dt - 1e-9).ceil().max(0.0) as usize;
        let hi = (((t_end - self.t0) / self.dt + 1e-9).floor() + 1.0).max(0.0) as usize;
        lo.min(n)..hi.min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPeak {
    pub frequency: f64,
    pub amplitude: f64,
    pub bin_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvervoltageReport {
    pub peak_abs: f64,
    pub base_peak: f64,
    pub per_unit: f64,
    pub time_of_peak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravelMetrics {
    /// One-way travel time, s.
    pub tau: f64,
    /// Square-wave period at an open end (four travel times), s.
    pub cycle: f64,
    pub frequency: f64,
}

/// Default floor below which spectral content is ignored (power frequency
/// and its low harmonics).
pub const DEFAULT_EXCLUDE_BELOW_HZ: f64 = 500.0;

/// `1 / (2 pi sqrt(l c))`.
pub fn natural_frequency(l: f64, c: f64) -> Result<f64> {
    positive("l", l)?;
    positive("c", c)?;
    Ok(1.0 / (2.0 * PI * (l * c).sqrt()))
}

pub fn travel_metrics(length: f64, velocity: f64) -> Result<TravelMetrics> {
    positive("length", length)?;
    positive("velocity", velocity)?;
    let tau = length / velocity;
    Ok(TravelMetrics {
        tau,
        cycle: 4.0 * tau,
        frequency: 1.0 / (4.0 * tau),
    })
}

/// Peak-phase voltage base for a rated line-line rms voltage.
pub fn base_peak(u_rated_rms_ll: f64) -> f64 {
    (2.0f64 / 3.0).sqrt() * u_rated_rms_ll
}

/// Largest |sample| expressed per unit of the peak phase voltage base.
pub fn peak_overvoltage(trace: &Trace<'_>, u_rated_rms_ll: f64) -> Result<OvervoltageReport> {
    positive("u_rated_rms_ll", u_rated_rms_ll)?;
    if trace.values.is_empty() {
        return Err(Error::Analysis("empty waveform".into()));
    }
    let (k, peak_abs) = trace.values.iter().map(|v| v.abs()).enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (k, v)| {
            if v > best.1 {
                (k, v)
            } else {
                best
            }
        },
    );
    let base = base_peak(u_rated_rms_ll);
    Ok(OvervoltageReport {
        peak_abs,
        base_peak: base,
        per_unit: peak_abs / base,
        time_of_peak: trace.t0 + k as f64 * trace.dt,
    })
}

/// Frequency of the strongest spectral line above `exclude_below` within
/// `[t_start, t_end]`.
///
/// The slice is mean-removed and Hann-windowed; the peak bin is refined by
/// fitting a parabola through the log-magnitudes of it and its two
/// neighbours. Returns `Ok(None)` when the slice carries no variation.
pub fn dominant_frequency(
    trace: &Trace<'_>,
    t_start: f64,
    t_end: f64,
    exclude_below: f64,
) -> Result<Option<SpectrumPeak>> {
    positive("dt", trace.dt)?;
    non_negative("exclude_below", exclude_below)?;
    let range = trace.index_range(t_start, t_end);
    let slice = &trace.values[range];
    if slice.is_empty() {
        return Err(Error::Analysis("empty window".into()));
    }
    if slice.len() < 16 {
        return Err(Error::Analysis(format!(
            "window holds {} samples; at least 16 required",
            slice.len()
        )));
    }
    let n = slice.len();
    let mean = slice.iter().sum::<f64>() / n as f64;
    if slice.iter().all(|v| (v - mean).abs() == 0.0) {
        return Ok(None);
    }

    let window: Vec<f64> = (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos())
        .collect();
    let window_sum: f64 = window.iter().sum();
    let mut buf: Vec<Complex<f64>> = slice
        .iter()
        .zip(&window)
        .map(|(v, w)| Complex::new((v - mean) * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf[..=n / 2].iter().map(|c| c.norm()).collect();

    let bin_width = 1.0 / (n as f64 * trace.dt);
    let first = ((exclude_below / bin_width).ceil() as usize).max(1);
    if first >= mag.len() {
        return Ok(None);
    }
    let (k, &peak) = mag
        .iter()
        .enumerate()
        .skip(first)
        .fold((first, &mag[first]), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    if !(peak > 0.0) {
        return Ok(None);
    }

    let (delta, peak_mag) = if k >= 1 && k + 1 < mag.len() && mag[k - 1] > 0.0 && mag[k + 1] > 0.0 {
        let (a, b, c) = (mag[k - 1].ln(), peak.ln(), mag[k + 1].ln());
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            let d = 0.5 * (a - c) / denom;
            (d, (b - 0.25 * (a - c) * d).exp())
        } else {
            (0.0, peak)
        }
    } else {
        (0.0, peak)
    };
    Ok(Some(SpectrumPeak {
        frequency: (k as f64 + delta) * bin_width,
        amplitude: 2.0 * peak_mag / window_sum,
        bin_width,
    }))
}

/// Open-ended line fed through `r_source` by a step: far-end voltage as the
/// sum of lattice arrivals up to time `t`.
pub fn lattice_oracle(z_c: f64, tau: f64, r_source: f64, v_step: f64, t: f64) -> f64 {
    let launch = v_step * z_c / (r_source + z_c);
    let rho_source = (r_source - z_c) / (r_source + z_c);
    let mut v = 0.0;
    let mut k = 0;
    // arrivals at tau, 3 tau, 5 tau, ...; each doubles at the open end
    while (2 * k + 1) as f64 * tau <= t {
        v += 2.0 * launch * rho_source.powi(k);
        k += 1;
    }
    v
}

/// Capacitor voltage of a series R-L-C circuit switched onto a step at t=0.
pub fn lc_step_oracle(v_step: f64, l: f64, c: f64, r: f64, t: f64) -> Result<f64> {
    positive("l", l)?;
    positive("c", c)?;
    non_negative("r", r)?;
    if r >= 2.0 * (l / c).sqrt() {
        return Err(Error::Analysis(
            "series RLC is not underdamped; oracle covers r < 2 sqrt(l/c)".into(),
        ));
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    let alpha = r / (2.0 * l);
    let w0 = 1.0 / (l * c).sqrt();
    let wd = (w0 * w0 - alpha * alpha).sqrt();
    let decay = (-alpha * t).exp();
    Ok(v_step * (1.0 - decay * ((wd * t).cos() + alpha / wd * (wd * t).sin())))
}

/// Voltage across `z` when a step drives `l` in series with `z`:
/// `v_step * (1 - exp(-t z / l))`.
pub fn rl_exp_oracle(v_step: f64, l: f64, z: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    v_step * (1.0 - (-t * z / l).exp())
}

pub fn rl_time_constant(l: f64, z: f64) -> f64 {
    l / z
}
