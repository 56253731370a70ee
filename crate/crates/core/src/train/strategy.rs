//! Hyperparameter strategies: clipping-norm search with noise off, and
//! tuning the averaged-gradient noise level Σ̄ = σC/B on small batches
//! before scaling (B, σ) up to a privacy budget.

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::model::ParamVector;
use super::sgd::{dp_sgd, TrainConfig};
use crate::accountant::{account, calibrate_sigma, AccountantKind, PrivacyGuarantee, SubsampledGaussianSpec};
use crate::error::{ensure, Error, Result};

pub const DEFAULT_CLIP_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_UTILITY_DROP: f64 = 0.01;

/// Standard deviation of the noise in the averaged gradient, σC/B.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SigmaBar(f64);

impl SigmaBar {
    pub fn new(value: f64) -> Result<Self> {
        ensure(value >= 0.0 && value.is_finite(), || format!("sigma-bar must be nonnegative, got {value}"))?;
        Ok(Self(value))
    }

    pub fn of(sigma: f64, clip: f64, batch: f64) -> Result<Self> {
        Self::new(sigma * clip / batch)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipSearch {
    pub clip: f64,
    pub baseline: f64,
    /// (C, utility) in ascending C.
    pub utilities: Vec<(f64, f64)>,
    /// Set when no grid point came within the threshold.
    pub warning: Option<String>,
}

/// Smallest grid C whose utility is at least `baseline·(1 − threshold)`.
pub fn clip_search<F>(grid: &[f64], threshold: f64, baseline: f64, mut utility: F) -> Result<ClipSearch>
where
    F: FnMut(f64) -> Result<f64>,
{
    ensure(!grid.is_empty(), || "the clipping grid is empty".into())?;
    ensure(grid.iter().all(|&c| c > 0.0), || "clipping norms must be positive".into())?;
    ensure(threshold >= 0.0, || format!("threshold must be nonnegative, got {threshold}"))?;
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let floor = if threshold.is_infinite() { f64::NEG_INFINITY } else { baseline * (1.0 - threshold) };
    let mut utilities = Vec::with_capacity(sorted.len());
    for &c in &sorted {
        let u = utility(c)?;
        utilities.push((c, u));
        if u >= floor {
            return Ok(ClipSearch { clip: c, baseline, utilities, warning: None });
        }
    }
    let c = *sorted.last().expect("grid is nonempty");
    Ok(ClipSearch {
        clip: c,
        baseline,
        utilities,
        warning: Some(format!(
            "no clipping norm came within {threshold} relative utility of the unclipped baseline {baseline}; using the largest, {c}"
        )),
    })
}

/// [`clip_search`] with σ = 0 DP-SGD runs of `base`, scored by test accuracy
/// against the unclipped run.
pub fn clip_search_sgd(
    base: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    init: &ParamVector,
    grid: &[f64],
    threshold: f64,
) -> Result<ClipSearch> {
    let run = |clip: f64| -> Result<f64> {
        let cfg = TrainConfig { clip, sigma: 0.0, record_noise: false, ..*base };
        Ok(dp_sgd(&cfg, train, init)?.params.accuracy(test))
    };
    let baseline = run(f64::INFINITY)?;
    clip_search(grid, threshold, baseline, run)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBarPoint {
    pub sigma: f64,
    pub sigma_bar: f64,
    pub utility: f64,
}

/// Test accuracy against Σ̄ for each σ, at batch size `b_small`.
pub fn sigma_bar_sweep(
    base: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    init: &ParamVector,
    sigmas: &[f64],
    b_small: usize,
) -> Result<Vec<SigmaBarPoint>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let cfg = TrainConfig { sigma, batch: b_small, record_noise: false, ..*base };
            let acc = dp_sgd(&cfg, train, init)?.params.accuracy(test);
            Ok(SigmaBarPoint { sigma, sigma_bar: SigmaBar::of(sigma, base.clip, b_small as f64)?.value(), utility: acc })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledChoice {
    pub batch: usize,
    pub sigma: f64,
    pub guarantee: PrivacyGuarantee,
}

/// Default candidates: powers of two below `n`, then `n`.
pub fn batch_candidates(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = std::iter::successors(Some(1usize), |b| b.checked_mul(2)).take_while(|&b| b < n).collect();
    v.push(n);
    v
}

/// Smallest candidate batch size B for which σ = Σ̄*·B/C meets `target`
/// over `steps` Poisson-sampled steps on `n` examples.
///
/// For each B the accountant calibrates the least σ reaching the target;
/// B is feasible once Σ̄*·B/C is at least that σ.
pub fn scale_to_budget(
    sigma_bar_star: SigmaBar,
    target: &PrivacyGuarantee,
    clip: f64,
    n: usize,
    steps: u64,
    kind: AccountantKind,
    candidates: &[usize],
) -> Result<ScaledChoice> {
    ensure(clip > 0.0 && clip.is_finite(), || format!("clipping norm must be positive, got {clip}"))?;
    ensure(n >= 1 && steps >= 1, || "n and steps must be at least 1".into())?;
    ensure(!candidates.is_empty() && candidates.iter().all(|&b| b >= 1 && b <= n), || {
        format!("batch candidates must lie in [1, {n}]")
    })?;
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &b in &sorted {
        let sigma = sigma_bar_star.value() * b as f64 / clip;
        if sigma <= 0.0 {
            continue;
        }
        let q = b as f64 / n as f64;
        let needed = match calibrate_sigma(target, q, steps, kind) {
            Ok(s) => s,
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        };
        if sigma >= needed {
            let spec = SubsampledGaussianSpec::new(sigma, q, steps)?;
            let guarantee = account(&spec, target.delta, kind)?.guarantee;
            return Ok(ScaledChoice { batch: b, sigma, guarantee });
        }
    }
    let sigma_n = sigma_bar_star.value() * n as f64 / clip;
    let best = if sigma_n > 0.0 {
        account(&SubsampledGaussianSpec::new(sigma_n, 1.0, steps)?, target.delta, kind)?.guarantee.epsilon
    } else {
        f64::INFINITY
    };
    Err(Error::Infeasible(format!(
        "target epsilon {} is out of reach for sigma-bar {}; the smallest achievable epsilon, at B = n = {n}, is {}",
        target.epsilon,
        sigma_bar_star.value(),
        crate::report::sig6(best)
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_grids() {
        let r = clip_search(&[3.0], 0.01, 1.0, |_| Ok(0.0)).unwrap();
        assert_eq!(r.clip, 3.0);
        assert!(r.warning.is_some());
        let r = clip_search(&DEFAULT_CLIP_GRID, f64::INFINITY, 1.0, |_| Ok(0.0)).unwrap();
        assert_eq!(r.clip, 0.01);
        assert!(r.warning.is_none());
        let r = clip_search(&[10.0, 1.0], 0.01, 1.0, |c| Ok(if c >= 1.0 { 1.0 } else { 0.5 })).unwrap();
        assert_eq!(r.clip, 1.0);
    }

    #[test]
    fn candidates() {
        assert_eq!(batch_candidates(5), vec![1, 2, 4, 5]);
        assert_eq!(batch_candidates(1), vec![1]);
    }

    #[test]
    fn scaled_pair_meets_constraint() {
        let target = PrivacyGuarantee::new(2.0, 1e-5).unwrap();
        let sb = SigmaBar::new(1e-3).unwrap();
        let c = scale_to_budget(sb, &target, 1.0, 100_000, 1000, AccountantKind::RdpImproved, &batch_candidates(100_000))
            .unwrap();
        assert!((c.sigma / c.batch as f64 - 1e-3).abs() <= 1e-6 * 1e-3);
        assert!(c.guarantee.epsilon <= 2.0);
        let e = scale_to_budget(sb, &PrivacyGuarantee::new(1e-4, 1e-5).unwrap(), 1.0, 1000, 1000, AccountantKind::RdpImproved, &[1000]);
        assert!(matches!(e, Err(Error::Infeasible(m)) if m.contains("smallest achievable")));
    }
}
