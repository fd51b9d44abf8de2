/// Symmetric two-slope flux/current characteristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSlope {
    pub l_unsat: f64,
    pub l_sat: f64,
    pub flux_knee: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    NegativeSaturated,
    Linear,
    PositiveSaturated,
}

impl Segment {
    pub fn is_saturated(self) -> bool {
        self != Segment::Linear
    }
}

impl TwoSlope {
    pub fn segment(&self, flux: f64) -> Segment {
        if flux > self.flux_knee {
            Segment::PositiveSaturated
        } else if flux < -self.flux_knee {
            Segment::NegativeSaturated
        } else {
            Segment::Linear
        }
    }

    /// Incremental inductance and current offset of `seg`, so that on that
    /// segment `i = flux / l + offset`.
    pub fn line(&self, seg: Segment) -> (f64, f64) {
        let knee_offset = self.flux_knee / self.l_unsat - self.flux_knee / self.l_sat;
        match seg {
            Segment::Linear => (self.l_unsat, 0.0),
            Segment::PositiveSaturated => (self.l_sat, knee_offset),
            Segment::NegativeSaturated => (self.l_sat, -knee_offset),
        }
    }

    pub fn current(&self, flux: f64) -> f64 {
        let (l, off) = self.line(self.segment(flux));
        flux / l + off
    }

    /// Stored magnetic energy, the integral of `i dflux` from zero flux.
    pub fn energy(&self, flux: f64) -> f64 {
        let a = flux.abs();
        if a <= self.flux_knee {
            0.5 * a * a / self.l_unsat
        } else {
            let k = self.flux_knee;
            let ik = k / self.l_unsat;
            0.5 * k * ik + ik * (a - k) + 0.5 * (a - k) * (a - k) / self.l_sat
        }
    }
}

/// Segment flag and effective (incremental) inductance for `flux`.
pub fn update_saturable_inductor(curve: &TwoSlope, flux: f64) -> (Segment, f64) {
    let seg = curve.segment(flux);
    (seg, curve.line(seg).0)
}
