//! Privacy cost of hyperparameter tuning.
//!
//! A tuning run trains several models with the same base DP-SGD
//! configuration and releases the best one. The cost depends on how the
//! number of trials is chosen and how the trials are accounted. Schemes
//! fall into three families:
//!
//! * composition of a fixed number of trials ([`composed_tuning_cost`]),
//! * exponential-mechanism selection over slack samples
//!   ([`exp_mech_tuning_cost`]),
//! * randomized trial counts, truncated negative binomial
//!   ([`tnb_tuning_cost`]) or Poisson ([`poisson_tuning_cost`]).
//!
//! Adaptive (sequential model-based) tuning is not supported: the bounds for
//! randomized trial counts assume every trial is drawn independently of the
//! results of earlier ones.

mod report;
mod tnb;

use serde::{Deserialize, Serialize};

pub use report::{comparison_report, epsilon_vs_epochs, ComparisonRow, TuningConfig, TUNING_SCHEMA};
pub use tnb::{solve_gamma_for_mean, tnb_cdf, tnb_mean, tnb_pmf};

use crate::accountant::{
    advanced_composition, compose_pld, pld_for_spec, pld_to_dp, rdp_delta, rdp_subsampled_gaussian,
    rdp_to_dp, ConversionRule, Discretization, PldOptions, PldPair, PrivacyGuarantee, RdpCurve,
    SubsampledGaussianSpec,
};
use crate::error::{ensure, Error, Result};
use crate::numeric::find_root;

/// Where single-run (ε̂, δ̂) values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaProvider {
    /// RDP curve of the base run, converted with the base conversion rule.
    Rdp,
    /// PLD of the base run with the given discretization.
    Pld(Discretization),
}

/// How the single-run pair (λ̂, ε̂) is picked for the randomized-trial bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HatChoice {
    /// Order minimising the classic conversion of the base curve.
    #[default]
    ClassicOptimum,
    /// Order minimising the base conversion rule.
    RuleOptimum,
    /// Order minimising the final tuning ε.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositionMethod {
    /// Basic composition; δ is split evenly over the trials.
    Sequential,
    /// Advanced composition with slack δ/2; the other δ/2 is split over the
    /// trials.
    Advanced,
    RdpComposition,
    PldComposition,
}

/// One tuning scheme as it appears in configs and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum TuningScheme {
    Composition {
        method: CompositionMethod,
        trials: u64,
    },
    ExponentialSelection {
        slack_samples: f64,
        product_term: f64,
    },
    TruncatedNegBinomial {
        eta: u8,
        /// Either `gamma` or `mean` must be given.
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        mean: Option<f64>,
        #[serde(default)]
        hat: HatChoice,
    },
    PoissonTrials {
        mu: f64,
        provider: DeltaProvider,
    },
    /// Rejected with [`Error::Unsupported`].
    Adaptive,
}

impl TuningScheme {
    pub fn label(&self) -> String {
        use crate::report::sig6;
        match self {
            TuningScheme::Composition { method, trials } => {
                let m = match method {
                    CompositionMethod::Sequential => "sequential",
                    CompositionMethod::Advanced => "advanced",
                    CompositionMethod::RdpComposition => "rdp-composition",
                    CompositionMethod::PldComposition => "pld-composition",
                };
                format!("{m}(trials={trials})")
            }
            TuningScheme::ExponentialSelection { slack_samples, product_term } => {
                format!("exponential-selection(slack={}, product={})", sig6(*slack_samples), sig6(*product_term))
            }
            TuningScheme::TruncatedNegBinomial { eta, gamma, mean, hat } => {
                let param = match (gamma, mean) {
                    (Some(g), _) => format!(", gamma={}", sig6(*g)),
                    (None, Some(m)) => format!(", mean={}", sig6(*m)),
                    _ => String::new(),
                };
                let hat = match hat {
                    HatChoice::ClassicOptimum => "",
                    HatChoice::RuleOptimum => ", hat=rule-optimum",
                    HatChoice::Joint => ", hat=joint",
                };
                format!("tnb(eta={eta}{param}{hat})")
            }
            TuningScheme::PoissonTrials { mu, provider } => {
                let p = match provider {
                    DeltaProvider::Rdp => "rdp".to_string(),
                    DeltaProvider::Pld(d) => format!("pld/{}", discretization_label(*d)),
                };
                format!("poisson(mu={}, {p})", sig6(*mu))
            }
            TuningScheme::Adaptive => "adaptive".into(),
        }
    }

    /// Whether the released model is the best trial.
    pub fn returns_true_best(&self) -> bool {
        !matches!(self, TuningScheme::ExponentialSelection { .. })
    }
}

fn discretization_label(d: Discretization) -> &'static str {
    match d {
        Discretization::ConnectTheDots => "connect-the-dots",
        Discretization::PessimisticRounding => "pessimistic-rounding",
        Discretization::OptimisticRounding => "optimistic-rounding",
    }
}

/// Cost of one training run, shared by every scheme.
#[derive(Debug, Clone)]
pub struct BaseRunCost {
    spec: SubsampledGaussianSpec,
    curve: RdpCurve,
    rule: ConversionRule,
    pld_options: PldOptions,
}

impl BaseRunCost {
    pub fn new(spec: SubsampledGaussianSpec, orders: &[f64]) -> Result<Self> {
        Ok(Self {
            curve: rdp_subsampled_gaussian(&spec, orders)?,
            spec,
            rule: ConversionRule::Improved,
            pld_options: PldOptions::default(),
        })
    }

    pub fn with_rule(mut self, rule: ConversionRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_pld_options(mut self, options: PldOptions) -> Self {
        self.pld_options = options;
        self
    }

    pub fn spec(&self) -> &SubsampledGaussianSpec {
        &self.spec
    }

    pub fn curve(&self) -> &RdpCurve {
        &self.curve
    }

    pub fn rule(&self) -> ConversionRule {
        self.rule
    }

    /// (ε, δ) of one run under the base conversion rule.
    pub fn single_run(&self, delta: f64) -> Result<PrivacyGuarantee> {
        Ok(rdp_to_dp(&self.curve, delta, self.rule)?.0)
    }

    pub fn pld(&self, discretization: Discretization) -> Result<PldPair> {
        let opts = PldOptions { discretization, ..self.pld_options };
        pld_for_spec(&self.spec, &opts)
    }

    fn single_run_epsilon(&self, delta: f64, provider: DeltaProvider) -> Result<f64> {
        match provider {
            DeltaProvider::Rdp => Ok(self.single_run(delta)?.epsilon),
            DeltaProvider::Pld(d) => Ok(pld_to_dp(&self.pld(d)?, delta)?.epsilon),
        }
    }
}

/// Cost of running `trials` trials and releasing every result.
///
/// A single trial costs exactly the base run under every method.
pub fn composed_tuning_cost(
    base: &BaseRunCost,
    trials: u64,
    method: CompositionMethod,
    delta: f64,
) -> Result<PrivacyGuarantee> {
    ensure(trials >= 1, || "trials must be at least 1".into())?;
    ensure(delta > 0.0 && delta < 1.0, || format!("delta must lie in (0, 1), got {delta}"))?;
    let m = trials as f64;
    let g = match method {
        CompositionMethod::RdpComposition => rdp_to_dp(&base.curve.scale(m), delta, base.rule)?.0,
        CompositionMethod::PldComposition => {
            let one = base.pld(base.pld_options.discretization)?;
            pld_to_dp(&compose_pld(&one, trials)?, delta)?.accountant("pld-composition")
        }
        _ if trials == 1 => base.single_run(delta)?,
        CompositionMethod::Sequential => {
            let e = base.single_run_epsilon(delta / m, DeltaProvider::Rdp)?;
            let mut g = PrivacyGuarantee::new(m * e, delta)?;
            g.accountant = "basic-composition".into();
            g
        }
        CompositionMethod::Advanced => {
            let per_delta = delta / (2.0 * m);
            let e = base.single_run_epsilon(per_delta, DeltaProvider::Rdp)?;
            advanced_composition(e, per_delta, trials, delta / 2.0)?
        }
    };
    Ok(g)
}

/// Result of exponential-mechanism selection accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpMechCost {
    pub eps_prime: f64,
    pub tuning_epsilon: f64,
    pub total: PrivacyGuarantee,
}

/// Solves `slack = (4/ε')·ln(product/ε')` for ε', then charges
/// `max(ε_single, 8ε')`.
pub fn exp_mech_tuning_cost(slack_samples: f64, product_term: f64, single_run: &PrivacyGuarantee) -> Result<ExpMechCost> {
    ensure(slack_samples > 0.0 && slack_samples.is_finite(), || {
        format!("slack samples must be positive, got {slack_samples}")
    })?;
    ensure(product_term > 1e-9, || format!("product term must exceed 1e-9, got {product_term}"))?;
    let f = |ln_e: f64| {
        let e = ln_e.exp();
        4.0 / e * (product_term / e).ln() - slack_samples
    };
    let eps_prime = find_root(f, 1e-9f64.ln(), product_term.ln(), 1e-9)
        .map_err(|e| Error::NoRoot(format!("exponential-selection equation: {e}")))?
        .exp();
    let tuning_epsilon = 8.0 * eps_prime;
    let mut total = single_run.clone();
    total.epsilon = single_run.epsilon.max(tuning_epsilon);
    total.accountant = "exponential-selection".into();
    Ok(ExpMechCost { eps_prime, tuning_epsilon, total })
}

/// Tuning cost with an outcome on an RDP order grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedTrialCost {
    pub guarantee: PrivacyGuarantee,
    pub order: f64,
    pub curve: RdpCurve,
}

/// Randomized trial count drawn from a truncated negative binomial:
/// `ε'(λ) = ε(λ) + (1+η)(1 − 1/λ)ε̂ + (1+η)ln(1/γ)/λ̂ + ln(E[K])/(λ − 1)`.
pub fn tnb_tuning_cost(base: &BaseRunCost, eta: u8, gamma: f64, hat: HatChoice, delta: f64) -> Result<RandomizedTrialCost> {
    let mean = tnb_mean(eta, gamma)?;
    let eta_f = f64::from(eta);
    let build = |lam_hat: f64, eps_hat: f64| {
        let shift = (1.0 + eta_f) * (1.0 / gamma).ln() / lam_hat;
        base.curve.map(|lam, e| {
            e + (1.0 + eta_f) * (1.0 - 1.0 / lam) * eps_hat + shift + mean.ln() / (lam - 1.0)
        })
    };
    let convert = |c: RdpCurve| -> Result<RandomizedTrialCost> {
        let (g, order) = rdp_to_dp(&c, delta, base.rule)?;
        Ok(RandomizedTrialCost { guarantee: g.accountant(format!("tnb-eta{eta}/{}", base.rule.label())), order, curve: c })
    };
    let hat_at = |rule| -> Result<(f64, f64)> {
        let (_, lam) = rdp_to_dp(&base.curve, delta, rule)?;
        let i = base.curve.orders().iter().position(|&a| a == lam).expect("optimum lies on the grid");
        Ok((lam, base.curve.epsilons()[i]))
    };
    match hat {
        HatChoice::ClassicOptimum => {
            let (l, e) = hat_at(ConversionRule::Classic)?;
            convert(build(l, e))
        }
        HatChoice::RuleOptimum => {
            let (l, e) = hat_at(base.rule)?;
            convert(build(l, e))
        }
        HatChoice::Joint => {
            let mut best: Option<RandomizedTrialCost> = None;
            for (&l, &e) in base.curve.orders().iter().zip(base.curve.epsilons()) {
                if !e.is_finite() {
                    continue;
                }
                let c = convert(build(l, e))?;
                if best.as_ref().is_none_or(|b| c.guarantee.epsilon < b.guarantee.epsilon) {
                    best = Some(c);
                }
            }
            best.ok_or_else(|| Error::Infeasible("base curve is infinite at every order".into()))
        }
    }
}

/// Poisson-distributed trial count with mean `mu`:
/// `ε'(λ) = ε(λ) + μ·δ̂(λ) + ln(μ)/(λ − 1)`, where `δ̂(λ)` is the single-run
/// δ at `ε̂ = ln(1 + 1/(λ − 1))`.
pub fn poisson_tuning_cost(base: &BaseRunCost, mu: f64, provider: DeltaProvider, delta: f64) -> Result<RandomizedTrialCost> {
    ensure(mu > 0.0 && mu.is_finite(), || format!("mu must be positive, got {mu}"))?;
    let pld = match provider {
        DeltaProvider::Pld(d) => Some(base.pld(d)?),
        DeltaProvider::Rdp => None,
    };
    let delta_hat = |lam: f64| {
        let eps_hat = (1.0 / (lam - 1.0)).ln_1p();
        let d = match &pld {
            Some(p) => p.delta_for_epsilon(eps_hat),
            None => rdp_delta(&base.curve, eps_hat, base.rule),
        };
        if d.is_finite() {
            d
        } else {
            f64::INFINITY
        }
    };
    let curve = base.curve.map(|lam, e| e + mu * delta_hat(lam) + mu.ln() / (lam - 1.0));
    let (g, order) = rdp_to_dp(&curve, delta, base.rule)?;
    let tag = match provider {
        DeltaProvider::Rdp => "rdp".to_string(),
        DeltaProvider::Pld(d) => format!("pld/{}", discretization_label(d)),
    };
    Ok(RandomizedTrialCost { guarantee: g.accountant(format!("poisson-trials/{tag}")), order, curve })
}

/// Evaluates one scheme on a base run.
pub fn scheme_cost(base: &BaseRunCost, scheme: &TuningScheme, delta: f64) -> Result<PrivacyGuarantee> {
    match scheme {
        TuningScheme::Composition { method, trials } => composed_tuning_cost(base, *trials, *method, delta),
        TuningScheme::ExponentialSelection { slack_samples, product_term } => {
            Ok(exp_mech_tuning_cost(*slack_samples, *product_term, &base.single_run(delta)?)?.total)
        }
        TuningScheme::TruncatedNegBinomial { eta, gamma, mean, hat } => {
            let gamma = resolve_gamma(*eta, *gamma, *mean)?;
            Ok(tnb_tuning_cost(base, *eta, gamma, *hat, delta)?.guarantee)
        }
        TuningScheme::PoissonTrials { mu, provider } => Ok(poisson_tuning_cost(base, *mu, *provider, delta)?.guarantee),
        TuningScheme::Adaptive => Err(Error::Unsupported(
            "adaptive tuning chooses later trials from earlier results, so the randomized-trial bounds \
             no longer hold"
                .into(),
        )),
    }
}

pub(crate) fn resolve_gamma(eta: u8, gamma: Option<f64>, mean: Option<f64>) -> Result<f64> {
    match (gamma, mean) {
        (Some(g), _) => Ok(g),
        (None, Some(m)) => solve_gamma_for_mean(eta, m),
        (None, None) => Err(Error::domain("truncated negative binomial needs gamma or mean")),
    }
}
