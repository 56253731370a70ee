//! Number formatting and structured guarantee reports.

use serde::{Deserialize, Serialize};

use crate::accountant::{AccountantKind, AdjacencyKind, PrivacyGuarantee};
use crate::error::{ensure, Result};
use crate::train::RunArtifact;

/// Formats a real with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.5e}");
        let (mant, e) = s.split_once('e').unwrap();
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{e}")
    }
}

/// Where noise is added and who is trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Central,
    Local,
    Distributed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccountingMethod {
    #[serde(rename = "RDP-Classic")]
    RdpClassic,
    #[serde(rename = "RDP-Improved")]
    RdpImproved,
    #[serde(rename = "PLD")]
    Pld,
    #[serde(rename = "AdvancedComposition")]
    AdvancedComposition,
}

impl AccountingMethod {
    pub fn label(self) -> &'static str {
        match self {
            AccountingMethod::RdpClassic => "RDP-Classic",
            AccountingMethod::RdpImproved => "RDP-Improved",
            AccountingMethod::Pld => "PLD",
            AccountingMethod::AdvancedComposition => "AdvancedComposition",
        }
    }
}

impl From<AccountantKind> for AccountingMethod {
    fn from(k: AccountantKind) -> Self {
        match k {
            AccountantKind::RdpClassic => AccountingMethod::RdpClassic,
            AccountantKind::RdpImproved => AccountingMethod::RdpImproved,
            AccountantKind::Pld => AccountingMethod::Pld,
        }
    }
}

/// A structured statement of what a guarantee covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuaranteeReport {
    pub setting: Setting,
    pub setting_detail: String,
    pub data_accesses_covered: String,
    pub mechanism_output: String,
    pub unit_of_privacy: String,
    pub adjacency: AdjacencyKind,
    pub accounting: AccountingMethod,
    pub assumptions: Vec<String>,
    pub statement: PrivacyGuarantee,
    pub zcdp_rho: Option<f64>,
}

impl GuaranteeReport {
    /// Report for a training run. Assumption lines are copied verbatim from
    /// the artifact's guarantee.
    pub fn from_artifact(a: &RunArtifact) -> Result<Self> {
        let user_level = a.algorithm == "dp-fedavg";
        let (setting_detail, mechanism_output) = if user_level {
            (
                "trusted server; clients send clipped model deltas and the server adds Gaussian noise to their sum",
                "final global model; every intermediate global model is covered as well",
            )
        } else {
            (
                "trusted curator trains on the raw data and adds Gaussian noise to clipped gradient sums",
                "final model parameters; every intermediate iterate is covered as well",
            )
        };
        let steps = if user_level { "rounds" } else { "steps" };
        // unsubsampled Gaussian steps are ρ = 1/(2σ²) each
        let zcdp_rho = (a.spec.q == 1.0 && a.spec.sigma > 0.0)
            .then(|| a.spec.steps as f64 / (2.0 * a.spec.sigma * a.spec.sigma));
        let r = Self {
            setting: Setting::Central,
            setting_detail: setting_detail.into(),
            data_accesses_covered: format!(
                "all {} {steps} of {} on the {} training examples; hyperparameter tuning runs are not covered",
                a.spec.steps, a.algorithm, a.data.n
            ),
            mechanism_output: mechanism_output.into(),
            unit_of_privacy: a.guarantee.unit.clone(),
            adjacency: a.guarantee.adjacency,
            accounting: a.accountant.into(),
            assumptions: a.guarantee.assumptions.clone(),
            statement: a.guarantee.clone(),
            zcdp_rho,
        };
        r.validate()?;
        Ok(r)
    }

    /// Every text field and the assumption list must be non-empty.
    pub fn validate(&self) -> Result<()> {
        let texts = [
            ("setting_detail", &self.setting_detail),
            ("data_accesses_covered", &self.data_accesses_covered),
            ("mechanism_output", &self.mechanism_output),
            ("unit_of_privacy", &self.unit_of_privacy),
        ];
        for (name, t) in texts {
            ensure(!t.trim().is_empty(), || format!("report field {name} is empty"))?;
        }
        ensure(!self.assumptions.is_empty(), || "report has no assumptions".into())
    }

    pub fn to_text(&self) -> String {
        let s = match self.setting {
            Setting::Central => "central",
            Setting::Local => "local",
            Setting::Distributed => "distributed",
        };
        let mut out = String::new();
        out.push_str(&format!("setting: {s} ({})\n", self.setting_detail));
        out.push_str(&format!("data accesses covered: {}\n", self.data_accesses_covered));
        out.push_str(&format!("mechanism output: {}\n", self.mechanism_output));
        out.push_str(&format!("unit of privacy: {}\n", self.unit_of_privacy));
        out.push_str(&format!("adjacency: {}\n", self.adjacency));
        out.push_str(&format!("accounting: {}\n", self.accounting.label()));
        out.push_str("assumptions:\n");
        for a in &self.assumptions {
            out.push_str(&format!("  - {a}\n"));
        }
        out.push_str(&format!(
            "statement: epsilon={} delta={}\n",
            sig6(self.statement.epsilon),
            sig6(self.statement.delta)
        ));
        if let Some(rho) = self.zcdp_rho {
            out.push_str(&format!("zcdp rho: {}\n", sig6(rho)));
        }
        out
    }
}
