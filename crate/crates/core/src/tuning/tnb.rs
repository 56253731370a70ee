//! Truncated negative binomial trial counts for η ∈ {0, 1}.
//!
//! η = 0 is the logarithmic distribution, η = 1 the geometric distribution
//! on {1, 2, ...}.

use crate::error::{ensure, Result};
use crate::numeric::find_root;

fn check(eta: u8, gamma: f64) -> Result<()> {
    ensure(eta <= 1, || format!("only eta = 0 and eta = 1 are supported, got {eta}"))?;
    ensure(gamma > 0.0 && gamma < 1.0, || format!("gamma must lie in (0, 1), got {gamma}"))
}

/// `P[K = k]`.
pub fn tnb_pmf(eta: u8, gamma: f64, k: u64) -> Result<f64> {
    check(eta, gamma)?;
    if k == 0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    let log_surv = (-gamma).ln_1p();
    Ok(match eta {
        0 => (kf * log_surv).exp() / (kf * (1.0 / gamma).ln()),
        _ => gamma * ((kf - 1.0) * log_surv).exp(),
    })
}

/// `P[K ≤ k]`.
pub fn tnb_cdf(eta: u8, gamma: f64, k: u64) -> Result<f64> {
    check(eta, gamma)?;
    Ok(match eta {
        0 => {
            let mut acc = 0.0;
            for j in 1..=k {
                let p = tnb_pmf(0, gamma, j)?;
                acc += p;
                if p < 1e-18 * acc {
                    break;
                }
            }
            acc.min(1.0)
        }
        _ => -(k as f64 * (-gamma).ln_1p()).exp_m1(),
    })
}

pub fn tnb_mean(eta: u8, gamma: f64) -> Result<f64> {
    check(eta, gamma)?;
    Ok(match eta {
        0 => (1.0 / gamma - 1.0) / (1.0 / gamma).ln(),
        _ => 1.0 / gamma,
    })
}

/// γ giving mean `target_mean`, to 1e-8 relative accuracy.
pub fn solve_gamma_for_mean(eta: u8, target_mean: f64) -> Result<f64> {
    ensure(eta <= 1, || format!("only eta = 0 and eta = 1 are supported, got {eta}"))?;
    ensure(target_mean > 1.0 && target_mean.is_finite(), || {
        format!("target mean must exceed 1, got {target_mean}")
    })?;
    if eta == 1 {
        return Ok(1.0 / target_mean);
    }
    // the mean decreases in gamma; search over ln(gamma)
    let f = |t: f64| {
        let g = t.exp();
        (1.0 / g - 1.0) / (-t) - target_mean
    };
    let lo = (1e-300f64).ln();
    let hi = (1.0 - 1e-12f64).ln();
    find_root(f, lo, hi, 1e-13).map(f64::exp)
}
