//! Effective noise in the averaged gradient as a function of batch size.

use serde::{Deserialize, Serialize};

use super::calibrate::calibrate_sigma;
use super::guarantee::PrivacyGuarantee;
use super::AccountantKind;
use crate::error::{ensure, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub batch_size: u64,
    pub sigma: f64,
    /// `σ/B` with clipping norm 1.
    pub sigma_eff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub n: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub steps: u64,
    pub points: Vec<TradeoffPoint>,
    /// Smallest batch size whose σ_eff is within 5% of the value at the
    /// largest batch size.
    pub knee: Option<u64>,
    /// `n·sqrt(ε/T)`.
    pub reference_knee: f64,
}

impl TradeoffCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("batch_size,sigma,sigma_eff\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{}\n",
                p.batch_size,
                crate::report::sig6(p.sigma),
                crate::report::sig6(p.sigma_eff)
            ));
        }
        s
    }

    /// `σ_eff(B)/σ_eff(B')` for consecutive points.
    pub fn ratios(&self) -> Vec<(u64, f64)> {
        self.points
            .windows(2)
            .map(|w| (w[0].batch_size, w[0].sigma_eff / w[1].sigma_eff))
            .collect()
    }
}

/// Calibrates σ for each batch size at fixed (ε, δ, T) and reports `σ/B`.
pub fn tradeoff_curve(
    n: u64,
    eps: f64,
    delta: f64,
    steps: u64,
    batches: &[u64],
    kind: AccountantKind,
    exec: Execution,
) -> Result<TradeoffCurve> {
    ensure(!batches.is_empty(), || "no batch sizes given".into())?;
    ensure(batches.iter().all(|&b| b >= 1 && b < n), || format!("batch sizes must lie in [1, {n})"))?;
    let mut sorted = batches.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let target = PrivacyGuarantee::new(eps, delta)?;
    let sigmas = exec.map(&sorted, |&b| calibrate_sigma(&target, b as f64 / n as f64, steps, kind));
    let mut points = Vec::with_capacity(sorted.len());
    for (&b, s) in sorted.iter().zip(sigmas) {
        let sigma = s?;
        points.push(TradeoffPoint { batch_size: b, sigma, sigma_eff: sigma / b as f64 });
    }
    let floor = points.last().map(|p| p.sigma_eff).unwrap_or(0.0);
    let knee = if points.len() >= 2 {
        points.iter().find(|p| p.sigma_eff <= 1.05 * floor).map(|p| p.batch_size)
    } else {
        None
    };
    Ok(TradeoffCurve {
        n,
        epsilon: eps,
        delta,
        steps,
        points,
        knee,
        reference_knee: n as f64 * (eps / steps as f64).sqrt(),
    })
}
