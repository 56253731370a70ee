//! Privacy-loss-distribution accounting of the Poisson-subsampled Gaussian
//! mechanism under add-or-remove adjacency.
//!
//! The two directions of the neighbouring relation have different loss
//! distributions, so one step is represented by a [`PldPair`]. Each side is
//! a pmf on the grid `{i·Δ}` plus a mass at `+inf`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::guarantee::PrivacyGuarantee;
use super::rdp::SubsampledGaussianSpec;
use crate::error::{ensure, Error, Result};
use crate::exec::Execution;
use crate::numeric::{log_add, norm_cdf, norm_interval, norm_quantile, norm_sf};

/// How the continuous loss distribution is mapped onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// Piecewise-linear interpolation of the exact δ(ε) curve at the grid
    /// points. Pessimistic, and free of per-step rounding bias.
    #[default]
    ConnectTheDots,
    /// Every loss rounded up to the next grid point.
    PessimisticRounding,
    /// Every loss rounded down to the previous grid point.
    OptimisticRounding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PldOptions {
    pub grid_step: f64,
    pub discretization: Discretization,
    /// Probability mass that may be cut from the tails per operation.
    /// [`pld_for_spec`] splits it evenly over the steps of a run.
    pub tail_mass: f64,
}

impl Default for PldOptions {
    fn default() -> Self {
        Self {
            grid_step: 1e-4,
            discretization: Discretization::ConnectTheDots,
            tail_mass: 1e-12,
        }
    }
}

impl PldOptions {
    pub fn with_discretization(discretization: Discretization) -> Self {
        Self { discretization, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        ensure(self.grid_step > 0.0 && self.grid_step.is_finite(), || {
            format!("grid step must be positive, got {}", self.grid_step)
        })?;
        ensure(self.tail_mass > 0.0 && self.tail_mass < 1e-3, || {
            format!("tail mass must lie in (0, 1e-3), got {}", self.tail_mass)
        })
    }
}

/// A discretized privacy-loss distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pld {
    grid_step: f64,
    /// Grid index of `masses[0]`.
    offset: i64,
    masses: Vec<f64>,
    infinity_mass: f64,
    pessimistic: bool,
    tail_mass: f64,
}

impl Pld {
    /// Builds a PLD from explicit masses. Masses plus `infinity_mass` must
    /// sum to one within 1e-10.
    pub fn from_masses(grid_step: f64, offset: i64, masses: Vec<f64>, infinity_mass: f64, pessimistic: bool) -> Result<Self> {
        ensure(grid_step > 0.0, || "grid step must be positive".into())?;
        ensure(!masses.is_empty(), || "a PLD needs at least one grid point".into())?;
        ensure(masses.iter().all(|&m| m >= 0.0) && (0.0..1.0).contains(&infinity_mass), || {
            "masses must be nonnegative and the infinity mass below one".into()
        })?;
        let total = masses.iter().sum::<f64>() + infinity_mass;
        ensure((total - 1.0).abs() <= 1e-10, || format!("masses sum to {total}, not 1"))?;
        Ok(Self {
            grid_step,
            offset,
            masses,
            infinity_mass,
            pessimistic,
            tail_mass: PldOptions::default().tail_mass,
        })
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn infinity_mass(&self) -> f64 {
        self.infinity_mass
    }

    /// Whether the discretization upper-bounds the true privacy loss.
    pub fn pessimistic_rounding(&self) -> bool {
        self.pessimistic
    }

    /// Privacy loss at `masses()[i]`.
    pub fn loss(&self, i: usize) -> f64 {
        (self.offset + i as i64) as f64 * self.grid_step
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.infinity_mass
    }

    /// Hockey-stick divergence `δ(ε) = P[L=∞] + E[(1 − e^{ε−L})₊]`.
    pub fn delta_for_epsilon(&self, eps: f64) -> f64 {
        let mut d = self.infinity_mass;
        for (i, &m) in self.masses.iter().enumerate().rev() {
            let l = self.loss(i);
            if l <= eps {
                break;
            }
            d -= m * (eps - l).exp_m1();
        }
        d.clamp(0.0, 1.0)
    }

    /// Smallest `ε ≥ 0` with `δ(ε) ≤ delta`; `+inf` if the infinity mass
    /// alone exceeds `delta`.
    pub fn epsilon_for_delta(&self, delta: f64) -> f64 {
        if self.infinity_mass > delta {
            return f64::INFINITY;
        }
        if self.delta_for_epsilon(0.0) <= delta {
            return 0.0;
        }
        // On [L_{k-1}, L_k], δ(ε) = A - e^ε·B with A, B summed over bins >= k.
        let mut a = self.infinity_mass;
        let mut b = 0.0;
        for k in (0..self.masses.len()).rev() {
            let lk = self.loss(k);
            a += self.masses[k];
            b += self.masses[k] * (-lk).exp();
            let lower = if k == 0 { 0.0 } else { self.loss(k - 1).max(0.0) };
            if a - lower.exp() * b > delta || lower == 0.0 {
                if b <= 0.0 {
                    return lk.max(0.0);
                }
                let eps = ((a - delta) / b).ln();
                return eps.clamp(lower, lk);
            }
        }
        0.0
    }

    /// Convolution with another PLD on the same grid.
    pub fn compose(&self, other: &Pld) -> Result<Pld> {
        self.compose_cut(other, self.tail_mass.max(other.tail_mass))
    }

    /// [`Pld::compose`] cutting at most `cut` from the tails.
    fn compose_cut(&self, other: &Pld, cut: f64) -> Result<Pld> {
        ensure((self.grid_step - other.grid_step).abs() <= 1e-15 * self.grid_step, || {
            format!("grid steps differ ({} vs {})", self.grid_step, other.grid_step)
        })?;
        let n = self.masses.len() + other.masses.len() - 1;
        ensure(n <= MAX_GRID_POINTS, || format!("composition needs {n} grid points, above {MAX_GRID_POINTS}"))?;
        let masses = convolve(&self.masses, &other.masses);
        let inf = 1.0 - (1.0 - self.infinity_mass) * (1.0 - other.infinity_mass);
        let mut out = Pld {
            grid_step: self.grid_step,
            offset: self.offset + other.offset,
            masses,
            infinity_mass: inf,
            pessimistic: self.pessimistic && other.pessimistic,
            tail_mass: self.tail_mass.max(other.tail_mass),
        };
        out.truncate_tails(cut);
        Ok(out)
    }

    /// `n`-fold self-composition by repeated squaring. `n = 1` returns a
    /// copy of `self`.
    ///
    /// Mass cut to `+inf` while forming `self^(2^j)` is carried into up to
    /// `n/2^j` later factors, so that cut is limited to `tail_mass·2^j/n`.
    pub fn self_compose(&self, n: u64) -> Result<Pld> {
        ensure(n >= 1, || "composition count must be at least 1".into())?;
        let mut result: Option<Pld> = None;
        let mut base = self.clone();
        let mut k = n;
        let mut power = 1u64;
        loop {
            if k & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => r.compose(&base)?,
                });
            }
            k >>= 1;
            if k == 0 {
                break;
            }
            power *= 2;
            let cut = self.tail_mass * (power as f64 / n as f64).min(1.0);
            base = base.compose_cut(&base, cut)?;
        }
        Ok(result.expect("n >= 1"))
    }

    /// Clamps FFT round-off and moves tail mass out of the support: the
    /// upper tail to `+inf`, the lower tail onto the lowest kept point.
    fn truncate_tails(&mut self, cut: f64) {
        for m in &mut self.masses {
            if *m < 0.0 || !m.is_finite() {
                *m = 0.0;
            }
        }
        let budget = cut / 2.0;
        let mut hi = self.masses.len();
        let mut cut = 0.0;
        while hi > 1 && cut + self.masses[hi - 1] <= budget {
            cut += self.masses[hi - 1];
            hi -= 1;
        }
        self.infinity_mass = (self.infinity_mass + cut).min(1.0);
        let mut lo = 0;
        let mut low_cut = 0.0;
        while lo + 1 < hi && low_cut + self.masses[lo] <= budget {
            low_cut += self.masses[lo];
            lo += 1;
        }
        self.masses.truncate(hi);
        self.masses.drain(..lo);
        self.masses[0] += low_cut;
        self.offset += lo as i64;
    }
}

/// Largest support a PLD may have, discretized or composed.
pub const MAX_GRID_POINTS: usize = 1 << 23;

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 64 {
        let mut out = vec![0.0; n];
        for (i, x) in a.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let size = n.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        buf
    };
    let mut fa = pad(a);
    fwd.process(&mut fa);
    if std::ptr::eq(a, b) {
        for x in &mut fa {
            *x = *x * *x;
        }
    } else {
        let mut fb = pad(b);
        fwd.process(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= y;
        }
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..n].iter().map(|c| c.re * scale).collect()
}

/// One direction of the add-or-remove relation for the subsampled Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Upper distribution is the mixture `(1−q)N(0,σ²) + qN(1,σ²)`.
    Remove,
    /// Upper distribution is `N(0,σ²)`.
    Add,
}

/// Exact privacy loss of one subsampled-Gaussian step in one direction.
#[derive(Debug, Clone, Copy)]
pub struct SubsampledGaussianLoss {
    pub sigma: f64,
    pub q: f64,
    pub direction: Direction,
}

impl SubsampledGaussianLoss {
    /// `ln((1−q) + q·e^{(2x−1)/(2σ²)})`, the remove-direction loss at `x`.
    fn mixture_log_ratio(&self, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let tail = self.q.ln() + (2.0 * x - 1.0) / (2.0 * s2);
        if self.q == 1.0 {
            tail
        } else {
            log_add((-self.q).ln_1p(), tail)
        }
    }

    /// Point `x` where the mixture log-ratio equals `t`, or `-inf` when `t`
    /// is below its range.
    fn inverse_mixture_log_ratio(&self, t: f64) -> f64 {
        let inner = t.exp() - (1.0 - self.q);
        if inner <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.sigma * self.sigma * (inner / self.q).ln() + 0.5
    }

    pub fn loss(&self, x: f64) -> f64 {
        match self.direction {
            Direction::Remove => self.mixture_log_ratio(x),
            Direction::Add => -self.mixture_log_ratio(x),
        }
    }

    /// `P[L > t]` under the upper distribution.
    pub fn survival(&self, t: f64) -> f64 {
        let s = self.sigma;
        match self.direction {
            Direction::Remove => {
                let x = self.inverse_mixture_log_ratio(t);
                if x == f64::NEG_INFINITY {
                    return 1.0;
                }
                (1.0 - self.q) * norm_sf(x / s) + self.q * norm_sf((x - 1.0) / s)
            }
            Direction::Add => {
                let x = self.inverse_mixture_log_ratio(-t);
                if x == f64::NEG_INFINITY {
                    return 0.0;
                }
                norm_cdf(x / s)
            }
        }
    }

    /// `(P[a < L ≤ b], Q[a < L ≤ b])` under the upper and lower
    /// distributions.
    fn interval_masses(&self, a: f64, b: f64) -> (f64, f64) {
        let (s, q) = (self.sigma, self.q);
        match self.direction {
            Direction::Remove => {
                let (xa, xb) = (self.inverse_mixture_log_ratio(a), self.inverse_mixture_log_ratio(b));
                let centre = norm_interval(xa / s, xb / s);
                let shifted = norm_interval((xa - 1.0) / s, (xb - 1.0) / s);
                ((1.0 - q) * centre + q * shifted, centre)
            }
            Direction::Add => {
                let (xa, xb) = (self.inverse_mixture_log_ratio(-b), self.inverse_mixture_log_ratio(-a));
                let centre = norm_interval(xa / s, xb / s);
                let shifted = norm_interval((xa - 1.0) / s, (xb - 1.0) / s);
                (centre, (1.0 - q) * centre + q * shifted)
            }
        }
    }

    /// `P[L > t]` under the lower distribution.
    fn lower_survival(&self, t: f64) -> f64 {
        let s = self.sigma;
        match self.direction {
            Direction::Remove => {
                let x = self.inverse_mixture_log_ratio(t);
                if x == f64::NEG_INFINITY { 1.0 } else { norm_sf(x / s) }
            }
            Direction::Add => {
                let x = self.inverse_mixture_log_ratio(-t);
                if x == f64::NEG_INFINITY {
                    0.0
                } else {
                    (1.0 - self.q) * norm_cdf(x / s) + self.q * norm_cdf((x - 1.0) / s)
                }
            }
        }
    }

    /// Exact hockey-stick divergence `δ(ε)`.
    pub fn delta(&self, eps: f64) -> f64 {
        let s = self.sigma;
        let q = self.q;
        let d = match self.direction {
            Direction::Remove => {
                let x = self.inverse_mixture_log_ratio(eps);
                if x == f64::NEG_INFINITY {
                    -eps.exp_m1()
                } else {
                    q * norm_sf((x - 1.0) / s) - (eps.exp_m1() + q) * norm_sf(x / s)
                }
            }
            Direction::Add => {
                let x = self.inverse_mixture_log_ratio(-eps);
                if x == f64::NEG_INFINITY {
                    0.0
                } else {
                    (1.0 - eps.exp() * (1.0 - q)) * norm_cdf(x / s) - eps.exp() * q * norm_cdf((x - 1.0) / s)
                }
            }
        };
        d.clamp(0.0, 1.0)
    }

    /// Loss interval holding all but `tail` of the upper distribution's mass.
    fn loss_range(&self, tail: f64) -> (f64, f64) {
        let z = -norm_quantile(tail / 2.0);
        let s = self.sigma;
        match self.direction {
            Direction::Remove => (self.loss(-z * s), self.loss(1.0 + z * s)),
            Direction::Add => (self.loss(z * s), self.loss(-z * s)),
        }
    }

    /// Discretizes the loss distribution onto the grid.
    pub fn discretize(&self, opts: &PldOptions) -> Result<Pld> {
        opts.validate()?;
        let step = opts.grid_step;
        let (lo, hi) = self.loss_range(opts.tail_mass);
        let i_lo = (lo / step).floor() as i64;
        let i_hi = ((hi / step).ceil() as i64).max(i_lo + 1);
        let n = (i_hi - i_lo + 1) as usize;
        ensure(n <= MAX_GRID_POINTS, || format!("grid step {step} gives {n} grid points, above {MAX_GRID_POINTS}"))?;
        let at = |i: i64| i as f64 * step;
        let (masses, infinity_mass, pessimistic) = match opts.discretization {
            Discretization::ConnectTheDots => {
                // Second differences of δ(ε) lose ~1e-16/Δ per point to
                // cancellation, so the masses are assembled from interval
                // probabilities instead. On I_k = (ε_k, ε_{k+1}],
                // R_k = P[L ∈ I_k] − e^{ε_k}·Q[L ∈ I_k] and
                // m_k = e^{ε_k}·Q[L ∈ I_k] + (e^Δ·R_{k−1} − R_k)/(e^Δ − 1).
                let (ed, em1) = (step.exp(), step.exp_m1());
                let mut q_int = vec![0.0; n - 1];
                let mut r = vec![0.0; n - 1];
                for k in 0..n - 1 {
                    let a = at(i_lo + k as i64);
                    let (p, qm) = self.interval_masses(a, a + step);
                    q_int[k] = qm;
                    r[k] = (p - a.exp() * qm).max(0.0);
                }
                let mut m = vec![0.0; n];
                for k in 1..n - 1 {
                    let a = at(i_lo + k as i64);
                    m[k] = (a.exp() * q_int[k] + (ed * r[k - 1] - r[k]) / em1).max(0.0);
                }
                // δ(ε_{n−2}) − δ(ε_{n−1})
                let top = at(i_hi - 1);
                let d_last = r[n - 2] + top.exp() * em1 * self.lower_survival(top + step);
                m[n - 1] = d_last / -(-step).exp_m1();
                let inf = self.delta(at(i_hi));
                let rest: f64 = m[1..].iter().sum();
                m[0] = (1.0 - inf - rest).max(0.0);
                (m, inf, true)
            }
            Discretization::PessimisticRounding => {
                // bin i holds L in ((i-1)Δ, iΔ]
                let surv: Vec<f64> = (i_lo..=i_hi).map(|i| self.survival(at(i))).collect();
                let mut m = vec![0.0; n];
                m[0] = 1.0 - surv[0];
                for k in 1..n {
                    m[k] = (surv[k - 1] - surv[k]).max(0.0);
                }
                (m, surv[n - 1], true)
            }
            Discretization::OptimisticRounding => {
                // bin i holds L in [iΔ, (i+1)Δ)
                let surv: Vec<f64> = (i_lo..=i_hi).map(|i| self.survival(at(i))).collect();
                let mut m = vec![0.0; n];
                m[0] = 1.0 - surv[1];
                for k in 1..n - 1 {
                    m[k] = (surv[k] - surv[k + 1]).max(0.0);
                }
                m[n - 1] = surv[n - 1];
                (m, 0.0, false)
            }
        };
        let mut pld = Pld {
            grid_step: step,
            offset: i_lo,
            masses,
            infinity_mass,
            pessimistic,
            tail_mass: opts.tail_mass,
        };
        pld.truncate_tails(opts.tail_mass);
        Ok(pld)
    }
}

/// Loss distributions of both adjacency directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PldPair {
    pub remove: Pld,
    pub add: Pld,
}

impl PldPair {
    pub fn epsilon_for_delta(&self, delta: f64) -> f64 {
        self.remove.epsilon_for_delta(delta).max(self.add.epsilon_for_delta(delta))
    }

    pub fn delta_for_epsilon(&self, eps: f64) -> f64 {
        self.remove.delta_for_epsilon(eps).max(self.add.delta_for_epsilon(eps))
    }

    pub fn pessimistic_rounding(&self) -> bool {
        self.remove.pessimistic && self.add.pessimistic
    }
}

/// One step of the subsampled Gaussian as a pair of discretized PLDs.
pub fn pld_subsampled_gaussian(sigma: f64, q: f64, opts: &PldOptions) -> Result<PldPair> {
    ensure(sigma > 0.0 && sigma.is_finite(), || format!("noise multiplier must be positive, got {sigma}"))?;
    ensure(q > 0.0 && q <= 1.0, || format!("sampling probability must lie in (0, 1], got {q}"))?;
    let side = |direction| SubsampledGaussianLoss { sigma, q, direction }.discretize(opts);
    let (remove, add) = Execution::default().join(|| side(Direction::Remove), || side(Direction::Add));
    Ok(PldPair { remove: remove?, add: add? })
}

/// `steps`-fold self-composition of both directions.
pub fn compose_pld(p: &PldPair, steps: u64) -> Result<PldPair> {
    let (remove, add) = Execution::default().join(|| p.remove.self_compose(steps), || p.add.self_compose(steps));
    Ok(PldPair { remove: remove?, add: add? })
}

pub fn pld_to_dp(p: &PldPair, delta: f64) -> Result<PrivacyGuarantee> {
    ensure(delta > 0.0 && delta < 1.0, || format!("delta must lie in (0, 1), got {delta}"))?;
    Ok(PrivacyGuarantee::accounted(p.epsilon_for_delta(delta), delta, "pld"))
}

/// PLD of a whole run described by `spec`. The single-step tails are cut
/// with `opts.tail_mass / steps`, so the mass they move to `+inf` does not
/// grow with the number of steps.
pub fn pld_for_spec(spec: &SubsampledGaussianSpec, opts: &PldOptions) -> Result<PldPair> {
    spec.validate()?;
    let per_step = PldOptions { tail_mass: opts.tail_mass / spec.steps as f64, ..*opts };
    let mut one = pld_subsampled_gaussian(spec.sigma, spec.q, &per_step)?;
    // composition truncates against the full budget; a smaller one sits
    // below the FFT round-off floor and stops the support from shrinking
    one.remove.tail_mass = opts.tail_mass;
    one.add.tail_mass = opts.tail_mass;
    compose_pld(&one, spec.steps)
}

/// ε of a run at `delta` under the given PLD options.
pub fn pld_epsilon(spec: &SubsampledGaussianSpec, delta: f64, opts: &PldOptions) -> Result<PrivacyGuarantee> {
    pld_to_dp(&pld_for_spec(spec, opts)?, delta)
}

/// Lower and upper ε obtained with optimistic and pessimistic rounding on
/// the same grid. The true ε lies between them.
pub fn pld_epsilon_bracket(spec: &SubsampledGaussianSpec, delta: f64, grid_step: f64) -> Result<(f64, f64)> {
    let opts = |discretization| PldOptions { grid_step, discretization, ..PldOptions::default() };
    let lo = pld_epsilon(spec, delta, &opts(Discretization::OptimisticRounding))?.epsilon;
    let hi = pld_epsilon(spec, delta, &opts(Discretization::PessimisticRounding))?.epsilon;
    Ok((lo, hi))
}

/// Like [`pld_epsilon`], but fails with [`Error::CoarseGrid`] when the
/// rounding bracket on the chosen grid is wider than `accuracy`.
pub fn pld_epsilon_checked(
    spec: &SubsampledGaussianSpec,
    delta: f64,
    opts: &PldOptions,
    accuracy: f64,
) -> Result<PrivacyGuarantee> {
    let (lo, hi) = pld_epsilon_bracket(spec, delta, opts.grid_step)?;
    let achieved = hi - lo;
    if !(achieved <= accuracy) {
        return Err(Error::CoarseGrid { achieved, requested: accuracy });
    }
    pld_epsilon(spec, delta, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss(direction: Direction) -> SubsampledGaussianLoss {
        SubsampledGaussianLoss { sigma: 1.0, q: 0.005, direction }
    }

    /// δ(ε) by midpoint quadrature of `E_P[(1 − e^{ε−L})₊]`.
    fn delta_by_quadrature(l: &SubsampledGaussianLoss, eps: f64) -> f64 {
        let s = l.sigma;
        let pdf = |x: f64, mu: f64| (-(x - mu) * (x - mu) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let n = 400_000;
        let (a, b) = (-12.0 * s, 1.0 + 12.0 * s);
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x = a + (i as f64 + 0.5) * h;
            let p = match l.direction {
                Direction::Remove => (1.0 - l.q) * pdf(x, 0.0) + l.q * pdf(x, 1.0),
                Direction::Add => pdf(x, 0.0),
            };
            let lx = l.loss(x);
            if lx > eps {
                acc += p * -(eps - lx).exp_m1() * h;
            }
        }
        acc
    }

    #[test]
    fn exact_delta_matches_quadrature() {
        for dir in [Direction::Remove, Direction::Add] {
            let l = loss(dir);
            for eps in [-0.001, 0.0, 0.001, 0.003, 0.01] {
                let exact = l.delta(eps);
                let quad = delta_by_quadrature(&l, eps);
                assert!((exact - quad).abs() < 1e-9, "{dir:?} {eps}: {exact} vs {quad}");
            }
        }
    }

    #[test]
    fn connect_the_dots_reproduces_grid_deltas() {
        let l = loss(Direction::Remove);
        let opts = PldOptions { grid_step: 1e-3, ..PldOptions::default() };
        let p = l.discretize(&opts).unwrap();
        assert!((p.total_mass() - 1.0).abs() < 1e-10);
        for i in (0..p.masses().len()).step_by(97) {
            let e = p.loss(i);
            let exact = l.delta(e);
            assert!((p.delta_for_epsilon(e) - exact).abs() < 1e-9 + 1e-6 * exact, "at {e}");
        }
    }

    #[test]
    fn rounding_brackets_exact_delta() {
        for dir in [Direction::Remove, Direction::Add] {
            let l = loss(dir);
            let pess = l.discretize(&PldOptions { grid_step: 1e-3, discretization: Discretization::PessimisticRounding, tail_mass: 1e-12 }).unwrap();
            let opt = l.discretize(&PldOptions { grid_step: 1e-3, discretization: Discretization::OptimisticRounding, tail_mass: 1e-12 }).unwrap();
            for eps in [0.0, 0.002, 0.01, 0.05] {
                let exact = l.delta(eps);
                assert!(pess.delta_for_epsilon(eps) >= exact - 1e-12);
                assert!(opt.delta_for_epsilon(eps) <= exact + 1e-12);
            }
        }
    }

    #[test]
    fn single_composition_is_identity() {
        let p = pld_subsampled_gaussian(1.0, 0.01, &PldOptions { grid_step: 1e-3, ..Default::default() }).unwrap();
        assert_eq!(compose_pld(&p, 1).unwrap(), p);
    }

    #[test]
    fn epsilon_and_delta_are_inverse() {
        let opts = PldOptions { grid_step: 1e-3, ..Default::default() };
        let p = compose_pld(&pld_subsampled_gaussian(1.0, 0.01, &opts).unwrap(), 100).unwrap();
        for delta in [1e-3, 1e-5, 1e-7] {
            let e = p.epsilon_for_delta(delta);
            assert!(p.delta_for_epsilon(e) <= delta * (1.0 + 1e-9));
            assert!(p.delta_for_epsilon(e - 1e-6) > delta);
        }
    }

    #[test]
    fn fft_matches_direct_convolution() {
        let a: Vec<f64> = (0..300).map(|i| ((i * 7919) % 101) as f64).collect();
        let b: Vec<f64> = (0..200).map(|i| ((i * 104_729) % 37) as f64).collect();
        let fast = convolve(&a, &b);
        let mut slow = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                slow[i + j] += x * y;
            }
        }
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f - s).abs() < 1e-8 * s.abs().max(1.0));
        }
    }

    #[test]
    fn infinity_mass_drives_epsilon_to_infinity() {
        let p = Pld::from_masses(0.1, 0, vec![0.5, 0.3], 0.2, true).unwrap();
        assert_eq!(p.epsilon_for_delta(0.1), f64::INFINITY);
        assert!(p.epsilon_for_delta(0.25).is_finite());
        assert!(Pld::from_masses(0.1, 0, vec![0.5], 0.2, true).is_err());
    }
}
