//! Privacy accounting.
//!
//! Every accountant here assumes Poisson subsampling and add-or-remove
//! adjacency, and stamps its output with those assumptions. Post-processing
//! a guaranteed output never weakens the guarantee, so none of these
//! functions needs to know what happens to the released values afterwards.

mod calibrate;
mod composition;
mod guarantee;
pub mod pld;
pub mod rdp;
mod scaling;
mod tradeoff;

use serde::{Deserialize, Serialize};

pub use calibrate::{calibrate_sigma, calibrate_sigma_with, SIGMA_RANGE};
pub use composition::{
    advanced_composition, advanced_terms, amplify_by_sampling, basic_composition, group_privacy,
    parallel_composition,
};
pub use guarantee::{extended_f64, AdjacencyKind, PrivacyGuarantee, ASSUME_ADD_REMOVE, ASSUME_POISSON};
pub use pld::{
    compose_pld, pld_epsilon, pld_epsilon_bracket, pld_epsilon_checked, pld_for_spec, pld_subsampled_gaussian,
    pld_to_dp, Discretization, Pld, PldOptions, PldPair, MAX_GRID_POINTS,
};
pub use rdp::{
    compose_rdp, default_orders, integer_orders, rdp_delta, rdp_subsampled_gaussian, rdp_to_dp, ConversionRule,
    RdpCurve, SubsampledGaussianSpec,
};
pub use scaling::{batch_scaling_epsilon, delta_convention, zcdp_to_dp, BatchScalingEstimate, BatchScalingParams};
pub use tradeoff::{tradeoff_curve, TradeoffCurve, TradeoffPoint};

use crate::error::Result;

/// Which accountant turns a [`SubsampledGaussianSpec`] into (ε, δ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccountantKind {
    RdpClassic,
    #[default]
    RdpImproved,
    Pld,
}

impl AccountantKind {
    pub fn label(self) -> &'static str {
        match self {
            AccountantKind::RdpClassic => "rdp-classic",
            AccountantKind::RdpImproved => "rdp-improved",
            AccountantKind::Pld => "pld",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rdp-classic" | "rdp" => Some(AccountantKind::RdpClassic),
            "rdp-improved" => Some(AccountantKind::RdpImproved),
            "pld" => Some(AccountantKind::Pld),
            _ => None,
        }
    }
}

/// Outcome of accounting one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Accounted {
    pub guarantee: PrivacyGuarantee,
    /// Optimal Rényi order, for the RDP accountants.
    pub order: Option<f64>,
}

/// Accounts a run with the default order grid or PLD options.
pub fn account(spec: &SubsampledGaussianSpec, delta: f64, kind: AccountantKind) -> Result<Accounted> {
    match kind {
        AccountantKind::RdpClassic | AccountantKind::RdpImproved => {
            let rule = if kind == AccountantKind::RdpClassic {
                ConversionRule::Classic
            } else {
                ConversionRule::Improved
            };
            let curve = rdp_subsampled_gaussian(spec, &default_orders())?;
            let (guarantee, order) = rdp_to_dp(&curve, delta, rule)?;
            Ok(Accounted { guarantee, order: Some(order) })
        }
        AccountantKind::Pld => Ok(Accounted {
            guarantee: pld_epsilon(spec, delta, &PldOptions::default())?,
            order: None,
        }),
    }
}
