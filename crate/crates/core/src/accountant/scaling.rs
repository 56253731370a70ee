//! Closed-form scaling estimates and conversions.

use serde::{Deserialize, Serialize};

use super::guarantee::PrivacyGuarantee;
use crate::error::{ensure, Result};

/// Inputs of the advanced-composition estimate of DP-SGD's cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchScalingParams {
    pub q: f64,
    pub k: u64,
    pub sigma: f64,
    pub c: f64,
    /// Per-step δ.
    pub delta: f64,
    /// Composition slack δ'.
    pub delta_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchScalingEstimate {
    /// Per-step ε of the amplified Gaussian mechanism.
    pub step_epsilon: f64,
    /// `A·q·sqrt(k)/σ`.
    pub first_term: f64,
    /// `B·k·q²/σ²`.
    pub second_term: f64,
    /// `first_term + second_term`.
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
}

/// Advanced-composition estimate of `k` subsampled Gaussian steps.
///
/// One step costs `ε = q·sqrt(2 ln(9q/(8δ)))/(σC)`. Composing with
/// `(e^ε − 1)/(e^ε + 1) ≈ ε/2` gives
/// `ε̃ = ε·sqrt(2k ln(1/δ')) + kε²/2 = A·q√k/σ + B·kq²/σ²`.
pub fn batch_scaling_epsilon(p: &BatchScalingParams) -> Result<BatchScalingEstimate> {
    ensure(p.q > 0.0 && p.q <= 1.0, || format!("q must lie in (0, 1], got {}", p.q))?;
    ensure(p.k >= 1, || "k must be at least 1".into())?;
    ensure(p.sigma > 0.0 && p.c > 0.0, || "sigma and C must be positive".into())?;
    ensure(p.delta > 0.0 && p.delta_prime > 0.0 && p.delta_prime < 1.0, || {
        "delta and delta_prime must be positive, delta_prime below 1".into()
    })?;
    let log_term = (9.0 * p.q / (8.0 * p.delta)).ln();
    ensure(log_term > 0.0, || format!("need 9q/(8 delta) > 1, got {}", 9.0 * p.q / (8.0 * p.delta)))?;
    let step_epsilon = p.q * (2.0 * log_term).sqrt() / (p.sigma * p.c);
    let a = (2.0 * log_term).sqrt() * (2.0 * (1.0 / p.delta_prime).ln()).sqrt() / p.c;
    let b = log_term / (p.c * p.c);
    let k = p.k as f64;
    let first_term = a * p.q * k.sqrt() / p.sigma;
    let second_term = b * k * p.q * p.q / (p.sigma * p.sigma);
    Ok(BatchScalingEstimate {
        step_epsilon,
        first_term,
        second_term,
        epsilon: first_term + second_term,
        a,
        b,
    })
}

/// ρ-zCDP to (ε, δ): `ε = ρ + 2·sqrt(ρ ln(1/δ))`.
pub fn zcdp_to_dp(rho: f64, delta: f64) -> Result<PrivacyGuarantee> {
    ensure(rho >= 0.0 && rho.is_finite(), || format!("rho must be nonnegative, got {rho}"))?;
    ensure(delta > 0.0 && delta < 1.0, || format!("delta must lie in (0, 1), got {delta}"))?;
    let eps = rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt();
    Ok(PrivacyGuarantee::new(eps, delta)?.accountant("zcdp"))
}

/// Conventional δ for `n` privacy units: `n^{-1.1}`.
pub fn delta_convention(n: f64) -> Result<f64> {
    ensure(n >= 1.0 && n.is_finite(), || format!("n must be at least 1, got {n}"))?;
    Ok(n.powf(-1.1))
}
