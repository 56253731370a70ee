//! Rényi-DP accounting of the Poisson-subsampled Gaussian mechanism.

use serde::{Deserialize, Serialize};

use super::guarantee::PrivacyGuarantee;
use crate::error::{ensure, Error, Result};
use crate::numeric::{find_root, ln_binomial, log_add, log_erfc, log_sub};

/// Accounting description of one DP-SGD run: noise multiplier, sampling
/// probability and number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampledGaussianSpec {
    pub sigma: f64,
    pub q: f64,
    pub steps: u64,
}

impl SubsampledGaussianSpec {
    pub fn new(sigma: f64, q: f64, steps: u64) -> Result<Self> {
        let s = Self { sigma, q, steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.sigma > 0.0 && self.sigma.is_finite(), || {
            format!("noise multiplier must be positive, got {}", self.sigma)
        })?;
        ensure(self.q > 0.0 && self.q <= 1.0, || {
            format!("sampling probability must lie in (0, 1], got {}", self.q)
        })?;
        ensure(self.steps >= 1, || "steps must be at least 1".into())
    }
}

/// ε(α) over a grid of Rényi orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    orders: Vec<f64>,
    #[serde(with = "extended_vec")]
    eps: Vec<f64>,
}

mod extended_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct W(#[serde(with = "crate::accountant::guarantee::extended_f64")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| W(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<W>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}

impl RdpCurve {
    pub fn new(orders: Vec<f64>, eps: Vec<f64>) -> Result<Self> {
        ensure(orders.len() == eps.len(), || "orders and epsilons differ in length".into())?;
        ensure(orders.iter().all(|&a| a > 1.0 && a.is_finite()), || "all orders must exceed 1".into())?;
        ensure(orders.windows(2).all(|w| w[0] < w[1]), || "orders must be strictly increasing".into())?;
        ensure(eps.iter().all(|&e| e >= 0.0), || "RDP epsilons must be nonnegative".into())?;
        Ok(Self { orders, eps })
    }

    pub fn zero(orders: &[f64]) -> Result<Self> {
        Self::new(orders.to_vec(), vec![0.0; orders.len()])
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.eps
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            orders: self.orders.clone(),
            eps: self.eps.iter().map(|e| e * k).collect(),
        }
    }

    /// Applies `f(order, eps)` pointwise, keeping the grid.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            orders: self.orders.clone(),
            eps: self.orders.iter().zip(&self.eps).map(|(&a, &e)| f(a, e).max(0.0)).collect(),
        }
    }

    /// Writes `order,epsilon` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("order,epsilon\n");
        for (a, e) in self.orders.iter().zip(&self.eps) {
            s.push_str(&format!("{},{}\n", crate::report::sig6(*a), crate::report::sig6(*e)));
        }
        s
    }
}

/// Orders used when none are given: 1.1, 1.2, ..., 10.9, plus 1.75 and the
/// integers 2..=256.
pub fn default_orders() -> Vec<f64> {
    let mut v: Vec<f64> = (11..110).map(|i| f64::from(i) / 10.0).collect();
    v.push(1.75);
    v.extend((2..=256).map(f64::from));
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

/// Integer orders 2..=256 plus {1.5, 1.75}.
pub fn integer_orders() -> Vec<f64> {
    let mut v = vec![1.5, 1.75];
    v.extend((2..=256).map(f64::from));
    v
}

/// RDP of `spec.steps` compositions of the subsampled Gaussian mechanism.
///
/// Integer orders use the binomial expansion; other orders use the
/// two-sided erfc series. An order whose series overflows or fails to
/// converge gets `+inf`.
pub fn rdp_subsampled_gaussian(spec: &SubsampledGaussianSpec, orders: &[f64]) -> Result<RdpCurve> {
    spec.validate()?;
    ensure(!orders.is_empty(), || "order grid is empty".into())?;
    let eps = orders
        .iter()
        .map(|&a| {
            let per_step = rdp_single_step(spec.q, spec.sigma, a);
            if per_step.is_finite() {
                per_step * spec.steps as f64
            } else {
                f64::INFINITY
            }
        })
        .collect();
    RdpCurve::new(orders.to_vec(), eps)
}

/// Per-step RDP of the subsampled Gaussian at one order.
pub fn rdp_single_step(q: f64, sigma: f64, alpha: f64) -> f64 {
    if q == 1.0 {
        return alpha / (2.0 * sigma * sigma);
    }
    let log_a = if alpha.fract() == 0.0 && alpha <= 1e6 {
        log_a_int(q, sigma, alpha as u64)
    } else {
        log_a_frac(q, sigma, alpha)
    };
    if !log_a.is_finite() {
        return f64::INFINITY;
    }
    (log_a / (alpha - 1.0)).max(0.0)
}

fn log_a_int(q: f64, sigma: f64, alpha: u64) -> f64 {
    let lq = q.ln();
    let l1q = (-q).ln_1p();
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let mut acc = f64::NEG_INFINITY;
    for j in 0..=alpha {
        let jf = j as f64;
        let term = ln_binomial(alpha, j) + jf * lq + (alpha - j) as f64 * l1q + (jf * jf - jf) * inv2s2;
        acc = log_add(acc, term);
    }
    acc
}

fn log_a_frac(q: f64, sigma: f64, alpha: f64) -> f64 {
    let (mut a0, mut a1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let lq = q.ln();
    let l1q = (-q).ln_1p();
    let s2 = sigma * sigma;
    let half = 0.5f64.ln();
    // generalised binomial coefficient C(alpha, i), tracked as log|.| and sign
    let mut log_coef = 0.0;
    let mut positive = true;
    for i in 0..100_000u32 {
        let fi = f64::from(i);
        if i > 0 {
            let factor = (alpha - fi + 1.0) / fi;
            if factor == 0.0 {
                // integer order: the expansion terminates
                return log_add(a0, a1);
            }
            log_coef += factor.abs().ln();
            if factor < 0.0 {
                positive = !positive;
            }
        }
        let j = alpha - fi;
        let t0 = log_coef + fi * lq + j * l1q;
        let t1 = log_coef + j * lq + fi * l1q;
        let e0 = half + log_erfc((fi - z0) / (std::f64::consts::SQRT_2 * sigma));
        let e1 = half + log_erfc((z0 - j) / (std::f64::consts::SQRT_2 * sigma));
        let s0 = t0 + (fi * fi - fi) / (2.0 * s2) + e0;
        let s1 = t1 + (j * j - j) / (2.0 * s2) + e1;
        if positive {
            a0 = log_add(a0, s0);
            a1 = log_add(a1, s1);
        } else {
            if s0 > a0 || s1 > a1 {
                return f64::INFINITY;
            }
            a0 = log_sub(a0, s0);
            a1 = log_sub(a1, s1);
        }
        if a0.is_nan() || a1.is_nan() || a0 == f64::INFINITY || a1 == f64::INFINITY {
            return f64::INFINITY;
        }
        if s0.max(s1) < -30.0 {
            return log_add(a0, a1);
        }
    }
    f64::INFINITY
}

/// Pointwise sum of curves on identical grids.
pub fn compose_rdp(curves: &[RdpCurve]) -> Result<RdpCurve> {
    ensure(!curves.is_empty(), || "nothing to compose".into())?;
    let orders = &curves[0].orders;
    if curves.iter().any(|c| &c.orders != orders) {
        return Err(Error::MismatchedOrders);
    }
    let eps = (0..orders.len())
        .map(|i| curves.iter().map(|c| c.eps[i]).sum())
        .collect();
    RdpCurve::new(orders.clone(), eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConversionRule {
    /// `ε + ln(1/δ)/(α − 1)`.
    Classic,
    /// `ε + ln((α − 1)/α) − (ln δ + ln α)/(α − 1)`.
    Improved,
}

impl ConversionRule {
    pub fn label(self) -> &'static str {
        match self {
            ConversionRule::Classic => "rdp-classic",
            ConversionRule::Improved => "rdp-improved",
        }
    }

    /// (ε, δ)-DP epsilon implied by RDP `rdp` at a single order.
    pub fn epsilon_at(self, alpha: f64, rdp: f64, delta: f64) -> f64 {
        if !rdp.is_finite() {
            return f64::INFINITY;
        }
        let e = match self {
            ConversionRule::Classic => rdp + (1.0 / delta).ln() / (alpha - 1.0),
            ConversionRule::Improved => {
                rdp + ((alpha - 1.0) / alpha).ln() - (delta.ln() + alpha.ln()) / (alpha - 1.0)
            }
        };
        e.max(0.0)
    }

    /// δ implied by RDP `rdp` at order `alpha` for a target `eps`
    /// (the inverse of [`Self::epsilon_at`] in δ).
    pub fn delta_at(self, alpha: f64, rdp: f64, eps: f64) -> f64 {
        if !rdp.is_finite() {
            return 1.0;
        }
        let a1 = alpha - 1.0;
        let ln_delta = match self {
            ConversionRule::Classic => -a1 * (eps - rdp),
            ConversionRule::Improved => a1 * (rdp - eps + (a1 / alpha).ln()) - alpha.ln(),
        };
        ln_delta.exp().min(1.0)
    }
}

/// Converts an RDP curve to an (ε, δ) guarantee, minimising over orders.
/// Returns the guarantee and the optimal order.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64, rule: ConversionRule) -> Result<(PrivacyGuarantee, f64)> {
    ensure(!curve.is_empty(), || "cannot convert an empty RDP curve".into())?;
    ensure(delta > 0.0 && delta < 1.0, || format!("delta must lie in (0, 1), got {delta}"))?;
    let mut best = (f64::INFINITY, curve.orders[0]);
    for (&a, &r) in curve.orders.iter().zip(&curve.eps) {
        let e = rule.epsilon_at(a, r, delta);
        if e < best.0 {
            best = (e, a);
        }
    }
    Ok((PrivacyGuarantee::accounted(best.0, delta, rule.label()), best.1))
}

/// Smallest δ for which the curve certifies `eps`, minimised over orders.
pub fn rdp_delta(curve: &RdpCurve, eps: f64, rule: ConversionRule) -> f64 {
    curve
        .orders
        .iter()
        .zip(&curve.eps)
        .map(|(&a, &r)| rule.delta_at(a, r, eps))
        .fold(1.0, f64::min)
}

/// Inverts `rdp_to_dp` numerically: the δ at which the converted ε equals
/// `eps`. Used to cross-check [`rdp_delta`].
pub fn rdp_delta_by_search(curve: &RdpCurve, eps: f64, rule: ConversionRule) -> Result<f64> {
    let f = |ln_d: f64| rdp_to_dp(curve, ln_d.exp(), rule).map(|(g, _)| g.epsilon - eps).unwrap_or(f64::NAN);
    let lo = (1e-300f64).ln();
    let hi = (1.0 - 1e-12f64).ln();
    if f(hi) > 0.0 {
        return Ok(1.0);
    }
    if f(lo) <= 0.0 {
        return Ok(1e-300);
    }
    find_root(f, lo, hi, 1e-12).map(f64::exp)
}
