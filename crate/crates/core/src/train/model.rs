//! Binary classifiers with closed-form per-example gradients.
//!
//! Both models output a logit `z` and use the logistic loss
//! `L = softplus(z) − y·z`, whose derivative in `z` is `sigmoid(z) − y`.

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{ensure, Result};
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    /// θ = [w (d), b].
    Logistic,
    /// θ = [W1 (hidden × d, row-major), b1 (hidden), w2 (hidden), b2], tanh hidden layer.
    Mlp { hidden: usize },
}

impl ModelKind {
    pub fn num_params(self, d: usize) -> usize {
        match self {
            ModelKind::Logistic => d + 1,
            ModelKind::Mlp { hidden } => hidden * d + 2 * hidden + 1,
        }
    }
}

/// Flat model weights tagged with their architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub model: ModelKind,
    pub dim: usize,
    pub theta: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl ParamVector {
    pub fn new(model: ModelKind, dim: usize, theta: Vec<f64>) -> Result<Self> {
        ensure(dim >= 1, || "input dimension must be at least 1".into())?;
        if let ModelKind::Mlp { hidden } = model {
            ensure(hidden >= 1, || "an MLP needs at least one hidden unit".into())?;
        }
        ensure(theta.len() == model.num_params(dim), || {
            format!("expected {} parameters, got {}", model.num_params(dim), theta.len())
        })?;
        ensure(theta.iter().all(|v| v.is_finite()), || "parameters must be finite".into())?;
        Ok(Self { model, dim, theta })
    }

    /// Logistic weights start at zero; MLP weights are N(0, 1/fan_in) with
    /// zero biases, drawn from the `Init` stream.
    pub fn init(model: ModelKind, dim: usize, seed: u64) -> Result<Self> {
        let mut theta = vec![0.0; model.num_params(dim)];
        if let ModelKind::Mlp { hidden } = model {
            let mut rng = RngStream::new(seed, Purpose::Init);
            let s1 = 1.0 / (dim as f64).sqrt();
            let s2 = 1.0 / (hidden as f64).sqrt();
            for v in &mut theta[..hidden * dim] {
                *v = s1 * rng.standard_normal();
            }
            let w2 = hidden * dim + hidden;
            for v in &mut theta[w2..w2 + hidden] {
                *v = s2 * rng.standard_normal();
            }
        }
        Self::new(model, dim, theta)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        match self.model {
            ModelKind::Logistic => dot(&self.theta[..self.dim], x) + self.theta[self.dim],
            ModelKind::Mlp { hidden } => {
                let (w1, rest) = self.theta.split_at(hidden * self.dim);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                (0..hidden)
                    .map(|j| w2[j] * (dot(&w1[j * self.dim..(j + 1) * self.dim], x) + b1[j]).tanh())
                    .sum::<f64>()
                    + b2[0]
            }
        }
    }

    pub fn loss(&self, x: &[f64], y: f64) -> f64 {
        let z = self.logit(x);
        softplus(z) - y * z
    }

    /// Loss and gradient of one example.
    pub fn loss_and_grad(&self, x: &[f64], y: f64) -> (f64, Vec<f64>) {
        let d = self.dim;
        match self.model {
            ModelKind::Logistic => {
                let z = self.logit(x);
                let dz = sigmoid(z) - y;
                let mut g: Vec<f64> = x.iter().map(|v| dz * v).collect();
                g.push(dz);
                (softplus(z) - y * z, g)
            }
            ModelKind::Mlp { hidden } => {
                let (w1, rest) = self.theta.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let h: Vec<f64> = (0..hidden).map(|j| (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh()).collect();
                let z = dot(w2, &h) + b2[0];
                let dz = sigmoid(z) - y;
                let mut g = vec![0.0; self.theta.len()];
                for j in 0..hidden {
                    let da = dz * w2[j] * (1.0 - h[j] * h[j]);
                    for (gk, xk) in g[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *gk = da * xk;
                    }
                    g[hidden * d + j] = da;
                    g[hidden * d + hidden + j] = dz * h[j];
                }
                g[hidden * d + 2 * hidden] = dz;
                (softplus(z) - y * z, g)
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.logit(x) > 0.0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let hits = (0..data.len()).filter(|&i| self.predict(data.features(i)) == data.label(i)).count();
        hits as f64 / data.len() as f64
    }

    pub fn mean_loss(&self, data: &Dataset) -> f64 {
        (0..data.len()).map(|i| self.loss(data.features(i), data.label(i))).sum::<f64>() / data.len() as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
