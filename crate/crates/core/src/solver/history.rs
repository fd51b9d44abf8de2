use std::collections::VecDeque;

/// Uniformly sampled (voltage, current) record of one line end.
///
/// Sample `k` is taken at `k * dt`. Queries before the first sample return
/// the quiescent initial state (zeros).
#[derive(Debug, Clone)]
pub(crate) struct LineHistory {
    samples: VecDeque<(f64, f64)>,
    depth: usize,
    /// Index of the oldest retained sample.
    first: usize,
}

impl LineHistory {
    pub fn new(tau: f64, dt: f64) -> Self {
        let depth = (tau / dt).ceil() as usize + 2;
        LineHistory {
            samples: VecDeque::with_capacity(depth + 1),
            depth,
            first: 0,
        }
    }

    pub fn push(&mut self, v: f64, i: f64) {
        self.samples.push_back((v, i));
        if self.samples.len() > self.depth {
            self.samples.pop_front();
            self.first += 1;
        }
    }

    /// Replaces the newest sample.
    pub fn set_latest(&mut self, v: f64, i: f64) {
        if let Some(last) = self.samples.back_mut() {
            *last = (v, i);
        }
    }

    fn sample(&self, k: isize) -> (f64, f64) {
        if k < 0 {
            return (0.0, 0.0);
        }
        let k = k as usize;
        assert!(
            k >= self.first && k < self.first + self.samples.len(),
            "line history read outside the retained window"
        );
        self.samples[k - self.first]
    }

    /// Linearly interpolated value at fractional sample position `pos`.
    pub fn at(&self, pos: f64) -> (f64, f64) {
        let lo = pos.floor();
        let frac = pos - lo;
        let k = lo as isize;
        let a = self.sample(k);
        if frac < 1e-9 {
            return a;
        }
        let b = self.sample(k + 1);
        (a.0 + frac * (b.0 - a.0), a.1 + frac * (b.1 - a.1))
    }
}
