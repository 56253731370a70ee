use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::{Purpose, RngStream};

/// Labeled examples with binary labels in {0, 1}, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    d: usize,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: usize) -> Result<Self> {
        ensure(d >= 1, || "feature dimension must be at least 1".into())?;
        ensure(!y.is_empty(), || "a dataset needs at least one example".into())?;
        ensure(x.len() == y.len() * d, || {
            format!("expected {} feature values for {} examples, got {}", y.len() * d, y.len(), x.len())
        })?;
        ensure(y.iter().all(|&v| v == 0.0 || v == 1.0), || "labels must be 0 or 1".into())?;
        ensure(x.iter().all(|v| v.is_finite()), || "features must be finite".into())?;
        Ok(Self { x, y, d })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    /// Examples `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.x[range.start * self.d..range.end * self.d].to_vec(), self.y[range].to_vec(), self.d)
    }

    /// First `n_train` examples for training, the rest for testing.
    pub fn split(&self, n_train: usize) -> Result<(Self, Self)> {
        ensure(n_train >= 1 && n_train < self.len(), || {
            format!("train size must lie in [1, {}), got {n_train}", self.len())
        })?;
        Ok((self.slice(0..n_train)?, self.slice(n_train..self.len())?))
    }

    /// Splits into `users` contiguous shards of near-equal size.
    pub fn partition(&self, users: usize) -> Result<Vec<Self>> {
        ensure(users >= 1 && users <= self.len(), || {
            format!("cannot give {} examples to {users} users", self.len())
        })?;
        let n = self.len();
        (0..users).map(|u| self.slice(u * n / users..(u + 1) * n / users)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Balanced classes drawn from N(±μ, I) with ‖2μ‖ = 3.
    TwoGaussians,
    /// Standard normal features labeled by a random hyperplane through 0.
    LinearlySeparable,
}

/// Deterministic synthetic data.
pub fn synth_data(kind: SynthKind, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    ensure(n >= 1, || "N must be at least 1".into())?;
    ensure(d >= 1, || "d must be at least 1".into())?;
    let mut rng = RngStream::new(seed, Purpose::Data);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    match kind {
        SynthKind::TwoGaussians => {
            let m = 1.5 / (d as f64).sqrt();
            for _ in 0..n {
                let label = rng.bernoulli(0.5);
                let shift = if label { m } else { -m };
                x.extend((0..d).map(|_| shift + rng.standard_normal()));
                y.push(if label { 1.0 } else { 0.0 });
            }
        }
        SynthKind::LinearlySeparable => {
            let mut w: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            let norm = crate::mechanisms::l2_norm(&w);
            w.iter_mut().for_each(|v| *v /= norm);
            for _ in 0..n {
                let row: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
                let s: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
                x.extend(row);
                y.push(if s > 0.0 { 1.0 } else { 0.0 });
            }
        }
    }
    Dataset::new(x, y, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_an_error() {
        assert!(synth_data(SynthKind::TwoGaussians, 0, 3, 1).is_err());
        assert!(Dataset::new(vec![], vec![], 2).is_err());
    }

    #[test]
    fn seeded() {
        let a = synth_data(SynthKind::LinearlySeparable, 50, 4, 9).unwrap();
        assert_eq!(a, synth_data(SynthKind::LinearlySeparable, 50, 4, 9).unwrap());
        assert_ne!(a, synth_data(SynthKind::LinearlySeparable, 50, 4, 10).unwrap());
    }

    #[test]
    fn partition_covers_everything() {
        let a = synth_data(SynthKind::TwoGaussians, 10, 2, 0).unwrap();
        let parts = a.partition(3).unwrap();
        assert_eq!(parts.iter().map(Dataset::len).collect::<Vec<_>>(), vec![3, 3, 4]);
        assert_eq!(parts[2].features(3), a.features(9));
    }
}
