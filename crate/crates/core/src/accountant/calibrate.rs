use super::guarantee::PrivacyGuarantee;
use super::pld::{pld_epsilon, PldOptions};
use super::rdp::{default_orders, rdp_subsampled_gaussian, rdp_to_dp, ConversionRule, SubsampledGaussianSpec};
use super::AccountantKind;
use crate::error::{ensure, Error, Result};

/// Search interval for the noise multiplier.
pub const SIGMA_RANGE: (f64, f64) = (1e-3, 1e4);

/// Smallest noise multiplier whose accounted ε does not exceed
/// `target.epsilon` at `target.delta`.
///
/// The search is a log-space bisection to relative tolerance 1e-4 in σ,
/// continued until the accounted ε is also within 1e-3 of the target.
pub fn calibrate_sigma(target: &PrivacyGuarantee, q: f64, steps: u64, kind: AccountantKind) -> Result<f64> {
    ensure(target.epsilon > 0.0 && target.epsilon.is_finite(), || {
        format!("target epsilon must be positive and finite, got {}", target.epsilon)
    })?;
    ensure(target.delta > 0.0 && target.delta < 1.0, || {
        format!("target delta must lie in (0, 1), got {}", target.delta)
    })?;
    SubsampledGaussianSpec::new(1.0, q, steps)?;
    let delta = target.delta;
    let orders = default_orders();
    let eps_of = |sigma: f64| -> Result<f64> {
        let spec = SubsampledGaussianSpec { sigma, q, steps };
        match kind {
            AccountantKind::RdpClassic | AccountantKind::RdpImproved => {
                let rule = if kind == AccountantKind::RdpClassic {
                    ConversionRule::Classic
                } else {
                    ConversionRule::Improved
                };
                let curve = rdp_subsampled_gaussian(&spec, &orders)?;
                Ok(rdp_to_dp(&curve, delta, rule)?.0.epsilon)
            }
            // a grid too large to build means the loss range is enormous
            AccountantKind::Pld => Ok(pld_epsilon(&spec, delta, &PldOptions::default())
                .map(|g| g.epsilon)
                .unwrap_or(f64::INFINITY)),
        }
    };
    calibrate_sigma_with(target.epsilon, eps_of)
}

/// Calibration against an arbitrary nonincreasing `eps_of(σ)`.
pub fn calibrate_sigma_with<F>(target_eps: f64, mut eps_of: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = SIGMA_RANGE;
    let mut e_hi = eps_of(hi)?;
    if e_hi > target_eps {
        return Err(Error::Infeasible(format!(
            "epsilon {target_eps} is unreachable for sigma <= {hi:e} (accounted epsilon there is {e_hi:.6})"
        )));
    }
    if eps_of(lo)? <= target_eps {
        return Ok(lo);
    }
    loop {
        let close_in_sigma = hi / lo - 1.0 <= 1e-4;
        let close_in_eps = e_hi >= target_eps * (1.0 - 5e-4);
        if (close_in_sigma && close_in_eps) || hi / lo - 1.0 <= 1e-13 {
            return Ok(hi);
        }
        let mid = (lo * hi).sqrt();
        let e = eps_of(mid)?;
        if e <= target_eps {
            hi = mid;
            e_hi = e;
        } else {
            lo = mid;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_inverse() {
        // eps(σ) = 3/σ has the exact inverse σ = 3/eps
        let s = calibrate_sigma_with(0.7, |s| Ok(3.0 / s)).unwrap();
        assert!((s - 3.0 / 0.7).abs() / s < 1e-4);
        assert!(3.0 / s <= 0.7);
        assert!(matches!(calibrate_sigma_with(1e-6, |s| Ok(3.0 / s)), Err(Error::Infeasible(_))));
        assert_eq!(calibrate_sigma_with(1e6, |s| Ok(3.0 / s)).unwrap(), SIGMA_RANGE.0);
    }
}
