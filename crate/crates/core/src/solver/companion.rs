//! Trapezoidal-rule companion (Norton) equivalents.
//!
//! Every dynamic branch is replaced, for one step, by a conductance `g` in
//! parallel with a history current `i_hist`. The branch current from the
//! first terminal to the second is `g * v + i_hist`.

use crate::error::{positive, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompanionStamp {
    pub g: f64,
    pub i_hist: f64,
}

pub fn companion_inductor(l: f64, dt: f64, v_prev: f64, i_prev: f64) -> Result<CompanionStamp> {
    positive("l", l)?;
    positive("dt", dt)?;
    let g = dt / (2.0 * l);
    Ok(CompanionStamp {
        g,
        i_hist: i_prev + g * v_prev,
    })
}

pub fn companion_capacitor(c: f64, dt: f64, v_prev: f64, i_prev: f64) -> Result<CompanionStamp> {
    positive("c", c)?;
    positive("dt", dt)?;
    let g = 2.0 * c / dt;
    Ok(CompanionStamp {
        g,
        i_hist: -i_prev - g * v_prev,
    })
}

/// History current at one end of a lossless line, from the far-end voltage
/// and into-line current one travel time ago. The end is stamped as `1/z_c`
/// to ground in parallel with this injection.
pub fn bergeron_history(z_c: f64, v_far: f64, i_far: f64) -> f64 {
    -v_far / z_c - i_far
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inductor_stamp_zero_history() {
        let s = companion_inductor(12.45e-3, 1e-6, 0.0, 0.0).unwrap();
        assert!((s.g - 4.0161e-5).abs() < 1e-9);
        assert_eq!(s.i_hist, 0.0);
    }

    #[test]
    fn inductor_stamp_with_history() {
        let s = companion_inductor(10e-3, 10e-6, 100.0, 1.0).unwrap();
        assert!((s.g - 5e-4).abs() < 1e-15);
        assert!((s.i_hist - 1.05).abs() < 1e-12);
    }

    #[test]
    fn capacitor_stamps() {
        let s = companion_capacitor(13.2e-9, 1e-6, 0.0, 0.0).unwrap();
        assert!((s.g - 0.0264).abs() < 1e-15);
        assert_eq!(s.i_hist, 0.0);
        let s = companion_capacitor(1e-6, 1e-6, 100.0, 0.0).unwrap();
        assert!((s.g - 2.0).abs() < 1e-12);
        assert!((s.i_hist + 200.0).abs() < 1e-9);
        let s = companion_capacitor(118e-9, 1e-6, 0.0, 0.0).unwrap();
        assert!((s.g - 0.236).abs() < 1e-12);
    }

    #[test]
    fn non_positive_inputs_rejected() {
        assert!(companion_inductor(0.0, 1e-6, 0.0, 0.0).is_err());
        assert!(companion_inductor(1e-3, -1e-6, 0.0, 0.0).is_err());
        assert!(companion_capacitor(-1e-9, 1e-6, 0.0, 0.0).is_err());
        assert!(companion_capacitor(1e-9, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn line_history() {
        assert_eq!(bergeron_history(40.0, 0.0, 0.0), 0.0);
        assert_eq!(bergeron_history(123.0, 0.0, 0.0), 0.0);
        assert_eq!(bergeron_history(40.0, 100.0, 0.0), -2.5);
    }
}
