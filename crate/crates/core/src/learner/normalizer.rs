use serde::{Deserialize, Serialize};

/// Per-dimension running mean and variance of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    mean: Vec<f64>,
    var: Vec<f64>,
    count: f64,
    clip: f64,
    frozen: bool,
}

const EPS: f64 = 1e-8;

impl ObsNormalizer {
    pub fn new(dim: usize, clip: f64) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: EPS,
            clip,
            frozen: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Merges the statistics of `rows` (batch mean/variance combined with
    /// the running moments). No-op once frozen.
    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        if self.frozen {
            return;
        }
        let dim = self.dim();
        let mut n = 0.0;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for row in rows {
            debug_assert_eq!(row.len(), dim);
            n += 1.0;
            for (k, x) in row.iter().enumerate() {
                sum[k] += x;
                sq[k] += x * x;
            }
        }
        if n == 0.0 {
            return;
        }
        let total = self.count + n;
        for k in 0..dim {
            let batch_mean = sum[k] / n;
            let batch_var = (sq[k] / n - batch_mean * batch_mean).max(0.0);
            let delta = batch_mean - self.mean[k];
            let m2 = self.var[k] * self.count + batch_var * n + delta * delta * self.count * n / total;
            self.mean[k] += delta * n / total;
            self.var[k] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize_into(&self, row: &[f64], out: &mut [f64]) {
        for k in 0..row.len() {
            let std = (self.var[k] + EPS).sqrt();
            out[k] = ((row[k] - self.mean[k]) / std).clamp(-self.clip, self.clip);
        }
    }

    pub fn normalize(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; row.len()];
        self.normalize_into(row, &mut out);
        out
    }
}
