//! Closed-form composition, group-privacy and amplification rules.

use super::guarantee::{AdjacencyKind, PrivacyGuarantee};
use crate::error::{ensure, Error, Result};

fn common_adjacency(gs: &[PrivacyGuarantee]) -> Result<AdjacencyKind> {
    ensure(!gs.is_empty(), || "cannot compose an empty list of guarantees".into())?;
    let first = gs[0].adjacency;
    if let Some(other) = gs.iter().find(|g| g.adjacency != first) {
        return Err(Error::MixedAdjacency(first.to_string(), other.adjacency.to_string()));
    }
    Ok(first)
}

fn merged_assumptions(gs: &[PrivacyGuarantee]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for a in gs.iter().flat_map(|g| &g.assumptions) {
        if !out.contains(a) {
            out.push(a.clone());
        }
    }
    out
}

/// Sequential composition: (Σε, Σδ) with δ capped at 1.
pub fn basic_composition(gs: &[PrivacyGuarantee]) -> Result<PrivacyGuarantee> {
    let adjacency = common_adjacency(gs)?;
    let eps = gs.iter().map(|g| g.epsilon).sum();
    let delta = gs.iter().map(|g| g.delta).sum::<f64>().min(1.0);
    Ok(PrivacyGuarantee {
        epsilon: eps,
        delta,
        adjacency,
        unit: gs[0].unit.clone(),
        accountant: "basic-composition".into(),
        assumptions: merged_assumptions(gs),
    })
}

/// Composition over disjoint partitions of the data: (max ε, max δ).
pub fn parallel_composition(gs: &[PrivacyGuarantee]) -> Result<PrivacyGuarantee> {
    let adjacency = common_adjacency(gs)?;
    let eps = gs.iter().map(|g| g.epsilon).fold(0.0, f64::max);
    let delta = gs.iter().map(|g| g.delta).fold(0.0, f64::max);
    Ok(PrivacyGuarantee {
        epsilon: eps,
        delta,
        adjacency,
        unit: gs[0].unit.clone(),
        accountant: "parallel-composition".into(),
        assumptions: merged_assumptions(gs),
    })
}

/// Advanced composition of `k` (ε, δ) steps with slack `delta_prime`:
/// `ε̃ = ε·sqrt(2k ln(1/δ')) + k·ε·(e^ε − 1)/(e^ε + 1)`, `δ̃ = kδ + δ'`.
pub fn advanced_composition(eps: f64, delta: f64, k: u64, delta_prime: f64) -> Result<PrivacyGuarantee> {
    ensure(eps > 0.0 && eps.is_finite(), || format!("epsilon must be positive, got {eps}"))?;
    ensure(k >= 1, || "advanced composition needs k >= 1".into())?;
    ensure(delta_prime > 0.0 && delta_prime < 1.0, || {
        format!("delta_prime must lie in (0, 1), got {delta_prime}")
    })?;
    ensure((0.0..=1.0).contains(&delta), || format!("delta must lie in [0, 1], got {delta}"))?;
    let (first, second) = advanced_terms(eps, k, delta_prime);
    let mut g = PrivacyGuarantee::with_adjacency(
        first + second,
        (k as f64 * delta + delta_prime).min(1.0),
        AdjacencyKind::AddRemove,
    )?;
    g.accountant = "advanced-composition".into();
    Ok(g)
}

/// The two summands of the advanced-composition bound.
pub fn advanced_terms(eps: f64, k: u64, delta_prime: f64) -> (f64, f64) {
    let k = k as f64;
    let first = eps * (2.0 * k * (1.0 / delta_prime).ln()).sqrt();
    // (e^ε − 1)/(e^ε + 1) = tanh(ε/2)
    let second = k * eps * (eps / 2.0).tanh();
    (first, second)
}

/// Lifts a guarantee to groups of `k` records: (kε, k·e^{kε}·δ), δ capped at 1.
pub fn group_privacy(g: &PrivacyGuarantee, k: u32) -> Result<PrivacyGuarantee> {
    ensure(k >= 1, || "group size must be at least 1".into())?;
    if k == 1 {
        return Ok(g.clone());
    }
    let kf = f64::from(k);
    let eps = kf * g.epsilon;
    let delta = if g.delta == 0.0 {
        0.0
    } else {
        // evaluate in log space; e^{kε} alone may overflow
        (kf.ln() + eps + g.delta.ln()).exp().min(1.0)
    };
    Ok(PrivacyGuarantee {
        epsilon: eps,
        delta,
        adjacency: g.adjacency,
        unit: format!("group of {k} x {}", g.unit),
        accountant: format!("group-privacy({})", g.accountant),
        assumptions: g.assumptions.clone(),
    })
}

/// Amplification by Poisson subsampling with rate `q`:
/// `(ln(1 + q(e^ε − 1)), qδ)`.
pub fn amplify_by_sampling(eps: f64, delta: f64, q: f64) -> Result<PrivacyGuarantee> {
    ensure(q > 0.0 && q <= 1.0, || format!("sampling rate must lie in (0, 1], got {q}"))?;
    ensure(eps >= 0.0, || format!("epsilon must be nonnegative, got {eps}"))?;
    ensure((0.0..=1.0).contains(&delta), || format!("delta must lie in [0, 1], got {delta}"))?;
    let (e, d) = if q == 1.0 {
        (eps, delta)
    } else {
        ((q * eps.exp_m1()).ln_1p(), q * delta)
    };
    let mut g = PrivacyGuarantee::new(e, d)?;
    g.accountant = "amplification-by-sampling".into();
    g.assumptions.push(super::guarantee::ASSUME_POISSON.into());
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(e: f64, d: f64) -> PrivacyGuarantee {
        PrivacyGuarantee::new(e, d).unwrap()
    }

    #[test]
    fn basic_examples() {
        let c = basic_composition(&[g(1.0, 1e-6), g(1.0, 1e-6)]).unwrap();
        assert_eq!((c.epsilon, c.delta), (2.0, 2e-6));
        let c = basic_composition(&[g(0.0, 0.0)]).unwrap();
        assert_eq!((c.epsilon, c.delta), (0.0, 0.0));
        let c = basic_composition(&[g(3.0, 0.6), g(3.0, 0.6)]).unwrap();
        assert_eq!((c.epsilon, c.delta), (6.0, 1.0));
    }

    #[test]
    fn mixed_adjacency_is_rejected() {
        let a = g(1.0, 0.0);
        let b = PrivacyGuarantee::with_adjacency(1.0, 0.0, AdjacencyKind::ReplaceOne).unwrap();
        assert!(matches!(basic_composition(&[a.clone(), b.clone()]), Err(Error::MixedAdjacency(..))));
        assert!(matches!(parallel_composition(&[a, b]), Err(Error::MixedAdjacency(..))));
        assert!(basic_composition(&[]).is_err());
    }

    #[test]
    fn parallel_examples() {
        let c = parallel_composition(&[g(1.0, 1e-6), g(2.0, 1e-7)]).unwrap();
        assert_eq!((c.epsilon, c.delta), (2.0, 1e-6));
        let r = parallel_composition(&[g(2.0, 1e-7), g(1.0, 1e-6)]).unwrap();
        assert_eq!((r.epsilon, r.delta), (c.epsilon, c.delta));
        let c = parallel_composition(&[g(0.0, 0.0)]).unwrap();
        assert_eq!((c.epsilon, c.delta), (0.0, 0.0));
    }

    #[test]
    fn advanced_examples() {
        let c = advanced_composition(0.01, 0.0, 10_000, 1e-6).unwrap();
        // 0.01*sqrt(2e4 ln 1e6) + 1e4*0.01*tanh(0.005)
        let oracle = 0.01 * (2e4 * 13.815_510_557_964_274_f64).sqrt() + 100.0 * 0.004_999_958_333_749_996;
        assert!((c.epsilon - oracle).abs() < 1e-9);
        assert!((c.epsilon - 5.757).abs() < 1e-3);
        assert!(advanced_composition(0.5, 0.0, 1, 1e-9).unwrap().epsilon >= 0.5);
        let (a1, _) = advanced_terms(0.1, 100, 1e-5);
        let (a2, _) = advanced_terms(0.1, 200, 1e-5);
        assert!((a2 / a1 - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn group_examples() {
        let out = group_privacy(&g(2.0, 1e-24), 20).unwrap();
        assert_eq!(out.epsilon, 40.0);
        assert!((out.delta / 4.7e-6 - 1.0).abs() < 0.02, "{}", out.delta);
        assert!(out.unit.contains("20"));
        assert_eq!(group_privacy(&g(1.5, 1e-7), 1).unwrap(), g(1.5, 1e-7));
        let z = group_privacy(&g(1.0, 0.0), 5).unwrap();
        assert_eq!((z.epsilon, z.delta), (5.0, 0.0));
    }

    #[test]
    fn amplification_examples() {
        let a = amplify_by_sampling(1.0, 1e-6, 0.01).unwrap();
        assert!((a.epsilon - 0.017_037).abs() < 1e-6);
        assert!((a.delta - 1e-8).abs() < 1e-20);
        let id = amplify_by_sampling(0.7, 1e-5, 1.0).unwrap();
        assert_eq!((id.epsilon, id.delta), (0.7, 1e-5));
        for eps in [0.01, 0.05, 0.09] {
            let a = amplify_by_sampling(eps, 0.0, 0.02).unwrap();
            assert!((a.epsilon / (0.02 * eps) - 1.0).abs() < 0.05);
        }
        // the first-order error is about eps/2, so eps = 0.1 sits just past 5%
        let a = amplify_by_sampling(0.1, 0.0, 0.02).unwrap();
        assert!((a.epsilon / 0.002 - 1.0).abs() < 0.051);
    }
}
