//! Small numerical helpers shared by the accountants.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};

/// `ln(e^a + e^b)` without overflow.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^a - e^b)` for `a >= b`. Returns `-inf` when the difference is zero.
pub fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// `ln Σ exp(x_i)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln erfc(x)`, accurate deep into the upper tail.
pub fn log_erfc(x: f64) -> f64 {
    if x < 20.0 {
        return erfc(x).ln();
    }
    // asymptotic expansion: erfc(x) ~ e^{-x^2}/(x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4) - 15/(8x^6))
    let x2 = x * x;
    let series = 1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2);
    -x2 - x.ln() - 0.5 * std::f64::consts::PI.ln() + series.ln()
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 - Φ(z)`, computed without cancellation.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `P[a < Z ≤ b]` for a standard normal `Z`, accurate for narrow
/// intervals anywhere on the line.
pub fn norm_interval(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 1.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= -1.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        0.5 * (erf(b * r) - erf(a * r))
    }
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `ln C(n, k)` for real `n` and integer `k`, via the log-gamma function.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Finds a root of `f` on `[lo, hi]`, where `f(lo)` and `f(hi)` have opposite
/// signs. Secant (false-position) proposals are interleaved with bisection
/// so that the bracket at least halves every two iterations.
///
/// Stops when the bracket width falls below `rel_tol * |x|`.
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::NoRoot(format!(
            "no sign change on [{lo:e}, {hi:e}] (f={fa:e}, {fb:e})"
        )));
    }
    for iter in 0..500 {
        let secant = b - fb * (b - a) / (fb - fa);
        let mid = 0.5 * (a + b);
        let x = if iter % 2 == 0 && secant.is_finite() && secant > a.min(b) && secant < a.max(b) {
            secant
        } else {
            mid
        };
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        if (b - a).abs() <= rel_tol * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(0.5 * (a + b));
        }
    }
    Ok(0.5 * (a + b))
}

/// Bisection on a monotone predicate over a log-scaled interval.
///
/// Returns the smallest `x` in `[lo, hi]` (to relative tolerance `rel_tol`)
/// for which `pred(x)` holds, assuming `pred` is false below some threshold
/// and true above it. The caller must check `pred(hi)` beforehand.
pub fn bisect_log_threshold<P>(mut pred: P, lo: f64, hi: f64, rel_tol: f64) -> f64
where
    P: FnMut(f64) -> bool,
{
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let tol = rel_tol.ln_1p();
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if pred(mid.exp()) {
            b = mid;
        } else {
            a = mid;
        }
    }
    b.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_matches_direct() {
        let v = log_add(1.0_f64.ln(), 2.0_f64.ln());
        assert!((v - 3.0_f64.ln()).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, 0.5), 0.5);
    }

    #[test]
    fn log_sub_matches_direct() {
        let v = log_sub(3.0_f64.ln(), 1.0_f64.ln());
        assert!((v - 2.0_f64.ln()).abs() < 1e-15);
        assert_eq!(log_sub(1.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn log_erfc_is_continuous_across_switch() {
        let below = erfc(19.999_999).ln();
        let above = log_erfc(20.0);
        assert!((below - above).abs() < 1e-3);
        assert!(log_erfc(40.0).is_finite());
    }

    #[test]
    fn root_of_quadratic() {
        let r = find_root(|x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 2.0_f64.sqrt()).abs() < 1e-10);
        assert!(find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-9).is_err());
    }

    #[test]
    fn threshold_search() {
        let x = bisect_log_threshold(|x| x >= 3.7, 1e-3, 1e4, 1e-6);
        assert!(x >= 3.7 && x < 3.7 * (1.0 + 1e-6) + 1e-12);
    }
}
