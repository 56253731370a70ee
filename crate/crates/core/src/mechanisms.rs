//! Building-block randomized mechanisms.
//!
//! Parameter computations (`laplace_scale`, `gaussian_sigma`,
//! `exp_mech_probabilities`) are pure functions. Sampling functions take an
//! explicit [`RngStream`] so that each caller owns its randomness.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::RngStream;

/// ℓ1 and ℓ2 sensitivities of a query, in units of the query output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub l1: f64,
    pub l2: f64,
}

impl Sensitivity {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        ensure(l1.is_finite() && l2.is_finite() && l1 >= 0.0 && l2 >= 0.0, || {
            format!("sensitivities must be finite and nonnegative (l1={l1}, l2={l2})")
        })?;
        ensure(l2 <= l1, || format!("l2 sensitivity {l2} exceeds l1 sensitivity {l1}"))?;
        Ok(Self { l1, l2 })
    }

    /// Sensitivity of a counting query: one record changes the count by one.
    pub fn counting() -> Self {
        Self { l1: 1.0, l2: 1.0 }
    }
}

/// Scores for a public candidate set, plus the maximum score sensitivity Δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidates {
    scores: Vec<f64>,
    delta_max: f64,
}

impl ScoredCandidates {
    pub fn new(scores: Vec<f64>, delta_max: f64) -> Result<Self> {
        ensure(!scores.is_empty(), || "candidate set is empty".into())?;
        ensure(scores.iter().all(|s| s.is_finite()), || "scores must be finite".into())?;
        ensure(delta_max > 0.0 && delta_max.is_finite(), || {
            format!("score sensitivity must be positive, got {delta_max}")
        })?;
        Ok(Self { scores, delta_max })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn delta_max(&self) -> f64 {
        self.delta_max
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Laplace,
    Gaussian,
    Gumbel,
}

/// Laplace scale `b = s1 / eps` for an `eps`-DP release of a query with
/// ℓ1-sensitivity `s1`.
pub fn laplace_scale(s1: f64, eps: f64) -> Result<f64> {
    ensure(s1 > 0.0 && s1.is_finite(), || format!("l1 sensitivity must be positive, got {s1}"))?;
    ensure(eps > 0.0 && eps.is_finite(), || format!("epsilon must be positive, got {eps}"))?;
    Ok(s1 / eps)
}

/// Standard deviation of the classical Gaussian mechanism,
/// `σ = s2·sqrt(2 ln(1.25/δ))/ε`.
///
/// Only valid for `0 < ε < 1`; larger ε needs an analytically calibrated
/// Gaussian mechanism, which this function does not provide.
pub fn gaussian_sigma(s2: f64, eps: f64, delta: f64) -> Result<f64> {
    ensure(s2 > 0.0 && s2.is_finite(), || format!("l2 sensitivity must be positive, got {s2}"))?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!(
            "the classical Gaussian mechanism requires 0 < epsilon < 1, got {eps}"
        )));
    }
    ensure(delta > 0.0 && delta < 1.0, || format!("delta must lie in (0, 1), got {delta}"))?;
    Ok(s2 * (2.0 * (1.25 / delta).ln()).sqrt() / eps)
}

/// Selection probabilities of the exponential mechanism,
/// `p(r) ∝ exp(ε·G(r) / (2Δ))`, normalised with the maximum score shifted to
/// zero so large `ε·G/Δ` cannot overflow.
pub fn exp_mech_probabilities(candidates: &ScoredCandidates, eps: f64) -> Result<Vec<f64>> {
    ensure(eps > 0.0 && eps.is_finite(), || format!("epsilon must be positive, got {eps}"))?;
    let scale = eps / (2.0 * candidates.delta_max);
    let max = candidates.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = candidates
        .scores
        .iter()
        .map(|s| ((s - max) * scale).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Draws one candidate index from the exponential mechanism.
pub fn exp_mech_sample(candidates: &ScoredCandidates, eps: f64, rng: &mut RngStream) -> Result<usize> {
    let probs = exp_mech_probabilities(candidates, eps)?;
    let u = rng.open01();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding slack above the last cumulative sum
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}

/// Draws one sample from `noise` with scale parameter `scale`
/// (Laplace `b`, Gaussian standard deviation, or Gumbel `β`).
pub fn sample_noise(noise: NoiseKind, scale: f64, rng: &mut RngStream) -> f64 {
    match noise {
        NoiseKind::Laplace => {
            let u = rng.open01() - 0.5;
            -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        }
        NoiseKind::Gaussian => scale * rng.standard_normal(),
        NoiseKind::Gumbel => -scale * (-rng.open01().ln()).ln(),
    }
}

/// Report-noisy-max: perturbs every score with i.i.d. noise of scale
/// `2Δ/ε` and returns the index of the largest noisy score.
///
/// With Gumbel noise the selection distribution equals
/// [`exp_mech_probabilities`] exactly.
pub fn report_noisy_max(
    scores: &[f64],
    eps: f64,
    noise: NoiseKind,
    sensitivity: f64,
    rng: &mut RngStream,
) -> Result<usize> {
    ensure(!scores.is_empty(), || "report-noisy-max needs at least one candidate".into())?;
    ensure(eps > 0.0 && eps.is_finite(), || format!("epsilon must be positive, got {eps}"))?;
    ensure(sensitivity > 0.0, || format!("sensitivity must be positive, got {sensitivity}"))?;
    let scale = 2.0 * sensitivity / eps;
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, s) in scores.iter().enumerate() {
        let v = s + sample_noise(noise, scale, rng);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    Ok(best)
}

/// Adds independent Laplace(`scale`) noise to every coordinate.
pub fn laplace_release(values: &[f64], scale: f64, rng: &mut RngStream) -> Vec<f64> {
    values
        .iter()
        .map(|v| v + sample_noise(NoiseKind::Laplace, scale, rng))
        .collect()
}

/// Adds independent N(0, σ²) noise to every coordinate.
pub fn gaussian_release(values: &[f64], sigma: f64, rng: &mut RngStream) -> Vec<f64> {
    values.iter().map(|v| v + sigma * rng.standard_normal()).collect()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` by `1 / max(1, ‖v‖₂ / c)`.
///
/// The output norm never exceeds `c` as computed by [`l2_norm`], which makes
/// clipping exactly idempotent.
pub fn clip_l2(v: &[f64], c: f64) -> Result<Vec<f64>> {
    ensure(c > 0.0, || format!("clipping norm must be positive, got {c}"))?;
    Ok(clip_l2_unchecked(v, c))
}

pub(crate) fn clip_l2_unchecked(v: &[f64], c: f64) -> Vec<f64> {
    let norm = l2_norm(v);
    if norm <= c {
        return v.to_vec();
    }
    let mut factor = c / norm;
    loop {
        let out: Vec<f64> = v.iter().map(|x| x * factor).collect();
        if l2_norm(&out) <= c {
            return out;
        }
        factor *= 1.0 - f64::EPSILON;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;
    use proptest::prelude::*;

    #[test]
    fn laplace_scale_examples() {
        assert_eq!(laplace_scale(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(laplace_scale(2.0, 0.5).unwrap(), 4.0);
        assert!((laplace_scale(1.0, 0.1).unwrap() - 10.0).abs() < 1e-12);
        assert!(laplace_scale(0.0, 1.0).is_err());
        assert!(laplace_scale(1.0, -1.0).is_err());
    }

    #[test]
    fn gaussian_sigma_examples() {
        // sqrt(2 ln(125000)) / 0.5 = 9.68995...
        assert!((gaussian_sigma(1.0, 0.5, 1e-5).unwrap() - 9.690).abs() < 1e-3);
        assert!((gaussian_sigma(2.0, 0.5, 1e-5).unwrap() - 19.38).abs() < 2e-3);
        assert!(gaussian_sigma(1.0, 0.999, 1e-5).unwrap().is_finite());
        let err = gaussian_sigma(1.0, 1.0, 1e-5).unwrap_err().to_string();
        assert!(err.contains("classical Gaussian"), "{err}");
    }

    #[test]
    fn scales_are_monotone() {
        let eps = [0.05, 0.1, 0.3, 0.6, 0.9];
        for w in eps.windows(2) {
            assert!(laplace_scale(1.0, w[0]).unwrap() > laplace_scale(1.0, w[1]).unwrap());
            assert!(gaussian_sigma(1.0, w[0], 1e-6).unwrap() > gaussian_sigma(1.0, w[1], 1e-6).unwrap());
        }
        for s in [0.5, 1.0, 2.0] {
            assert!(laplace_scale(s, 1.0).unwrap() < laplace_scale(s * 1.5, 1.0).unwrap());
            assert!(gaussian_sigma(s, 0.5, 1e-6).unwrap() < gaussian_sigma(s * 1.5, 0.5, 1e-6).unwrap());
        }
    }

    #[test]
    fn laplace_density_ratio_is_bounded_by_exp_eps() {
        // counting query: pdf_b(x) / pdf_b(x - 1) = exp((|x-1| - |x|)/b) ≤ exp(1/b) = exp(eps)
        let eps = 0.7;
        let b = laplace_scale(1.0, eps).unwrap();
        let pdf = |x: f64| (-(x.abs()) / b).exp() / (2.0 * b);
        let mut sup: f64 = 0.0;
        for i in -4000..=4000 {
            let x = i as f64 * 0.01;
            sup = sup.max(pdf(x) / pdf(x - 1.0));
        }
        assert!((sup - eps.exp()).abs() < 1e-12);
    }

    #[test]
    fn exp_mech_examples() {
        let c = ScoredCandidates::new(vec![3.0; 4], 1.0).unwrap();
        for p in exp_mech_probabilities(&c, 1.0).unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let c = ScoredCandidates::new(vec![0.0, 1.0], 1.0).unwrap();
        let p = exp_mech_probabilities(&c, 2.0).unwrap();
        // softmax of (0, 1): 1/(1+e), e/(1+e)
        assert!((p[0] - 0.2689).abs() < 1e-4);
        assert!((p[1] - 0.7311).abs() < 1e-4);
        let c = ScoredCandidates::new(vec![-5.0], 1.0).unwrap();
        assert_eq!(exp_mech_probabilities(&c, 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn exp_mech_large_scores_do_not_overflow() {
        let c = ScoredCandidates::new(vec![1e6, 1e6 - 1.0], 1.0).unwrap();
        let p = exp_mech_probabilities(&c, 1e3).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn candidate_validation() {
        assert!(ScoredCandidates::new(vec![], 1.0).is_err());
        assert!(ScoredCandidates::new(vec![1.0], 0.0).is_err());
        assert!(ScoredCandidates::new(vec![f64::NAN], 1.0).is_err());
        assert!(Sensitivity::new(1.0, 2.0).is_err());
        assert!(Sensitivity::new(2.0, 1.0).is_ok());
    }

    #[test]
    fn exp_mech_sample_is_deterministic() {
        let c = ScoredCandidates::new(vec![0.1, 0.5, 0.2], 1.0).unwrap();
        let draw = |seed| {
            let mut rng = RngStream::new(seed, Purpose::Selection);
            (0..20).map(|_| exp_mech_sample(&c, 1.0, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn exp_mech_limit_selects_argmax() {
        let c = ScoredCandidates::new(vec![0.0, 1.0, 0.5], 1.0).unwrap();
        let mut rng = RngStream::new(11, Purpose::Selection);
        let n = 10_000;
        let hits = (0..n).filter(|_| exp_mech_sample(&c, 1e3, &mut rng).unwrap() == 1).count();
        assert!(hits as f64 / n as f64 > 0.999);
    }

    #[test]
    fn report_noisy_max_edge_cases() {
        let mut rng = RngStream::new(3, Purpose::Selection);
        assert!(report_noisy_max(&[], 1.0, NoiseKind::Gumbel, 1.0, &mut rng).is_err());
        for _ in 0..100 {
            assert_eq!(report_noisy_max(&[4.2], 1.0, NoiseKind::Laplace, 1.0, &mut rng).unwrap(), 0);
        }
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| report_noisy_max(&[0.0, 1.0], 1e4, NoiseKind::Laplace, 1.0, &mut rng).unwrap() == 1)
            .count();
        assert!(hits as f64 / n as f64 > 0.999);
    }

    #[test]
    fn clip_examples() {
        let v = vec![0.3, 0.4];
        assert_eq!(clip_l2(&v, 1.0).unwrap(), v);
        let c = clip_l2(&[3.0, 4.0], 1.0).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        assert_eq!(clip_l2(&[0.0, 0.0], 0.5).unwrap(), vec![0.0, 0.0]);
        assert!(clip_l2(&[1.0], 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn clip_bounds_norm_and_is_idempotent(
            v in prop::collection::vec(-1e3f64..1e3, 1..16),
            c in 1e-3f64..1e2,
        ) {
            let once = clip_l2(&v, c).unwrap();
            prop_assert!(l2_norm(&once) <= c + 4.0 * f64::EPSILON * c);
            let twice = clip_l2(&once, c).unwrap();
            prop_assert_eq!(once, twice);
        }
    }

    proptest! {
        #[test]
        fn exp_mech_normalised_and_shift_invariant(
            scores in prop::collection::vec(-50f64..50.0, 1..10),
            shift in -100f64..100.0,
            eps in 0.01f64..10.0,
        ) {
            let a = ScoredCandidates::new(scores.clone(), 1.0).unwrap();
            let b = ScoredCandidates::new(scores.iter().map(|s| s + shift).collect(), 1.0).unwrap();
            let pa = exp_mech_probabilities(&a, eps).unwrap();
            let pb = exp_mech_probabilities(&b, eps).unwrap();
            prop_assert!((pa.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in pa.iter().zip(&pb) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
