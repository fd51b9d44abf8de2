/// Uniformly sampled probe records produced by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSet {
    dt: f64,
    t0: f64,
    names: Vec<String>,
    samples: Vec<Vec<f64>>,
}

impl WaveformSet {
    /// Builds a set from equal-length columns.
    pub fn new(dt: f64, t0: f64, names: Vec<String>, samples: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), samples.len(), "one column per probe name");
        if let Some(first) = samples.first() {
            assert!(
                samples.iter().all(|s| s.len() == first.len()),
                "probe arrays must have equal length"
            );
        }
        WaveformSet {
            dt,
            t0,
            names,
            samples,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    pub fn probe(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.samples[k].as_slice())
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.samples.iter().map(Vec::as_slice))
    }

    /// Sample index nearest to `t`, clamped to the record.
    pub fn index_at(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt).round();
        k.clamp(0.0, self.len().saturating_sub(1) as f64) as usize
    }
}
