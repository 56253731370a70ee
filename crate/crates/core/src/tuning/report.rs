use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use super::{resolve_gamma, scheme_cost, tnb_cdf, tnb_mean, tnb_pmf, BaseRunCost, TuningScheme};
use crate::accountant::{account, default_orders, AccountantKind, ConversionRule, SubsampledGaussianSpec};
use crate::config::check_schema;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::report::sig6;

pub const TUNING_SCHEMA: &str = "dp-budget/tuning-cost/v1";

/// A tuning-cost comparison as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    pub schema: String,
    pub base: SubsampledGaussianSpec,
    pub delta: f64,
    #[serde(default = "default_rule")]
    pub conversion: ConversionRule,
    pub schemes: Vec<TuningScheme>,
}

fn default_rule() -> ConversionRule {
    ConversionRule::Improved
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema, TUNING_SCHEMA)?;
        self.base.validate().map_err(|e| Error::Config { path: "base".into(), message: e.to_string() })?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config { path: "delta".into(), message: format!("must lie in (0, 1), got {}", self.delta) });
        }
        Ok(())
    }

    pub fn base_cost(&self) -> Result<BaseRunCost> {
        Ok(BaseRunCost::new(self.base, &default_orders())?.with_rule(self.conversion))
    }
}

/// Distribution of the number of trials for randomized schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub mean: f64,
    pub mode: u64,
    pub p_k_eq_1: f64,
    pub p_k_lt_10: f64,
    pub p_k_lt_50: f64,
    pub p_k_lt_100: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheme: String,
    #[serde(with = "crate::accountant::extended_f64")]
    pub epsilon: f64,
    pub delta: f64,
    pub returns_true_best: bool,
    pub trials: Option<TrialStats>,
    pub error: Option<String>,
}

fn trial_stats(scheme: &TuningScheme) -> Result<Option<TrialStats>> {
    Ok(match scheme {
        TuningScheme::TruncatedNegBinomial { eta, gamma, mean, .. } => {
            let g = resolve_gamma(*eta, *gamma, *mean)?;
            Some(TrialStats {
                mean: tnb_mean(*eta, g)?,
                mode: 1,
                p_k_eq_1: tnb_pmf(*eta, g, 1)?,
                p_k_lt_10: tnb_cdf(*eta, g, 9)?,
                p_k_lt_50: tnb_cdf(*eta, g, 49)?,
                p_k_lt_100: tnb_cdf(*eta, g, 99)?,
            })
        }
        TuningScheme::PoissonTrials { mu, .. } => {
            let p = Poisson::new(*mu).map_err(|e| Error::domain(e.to_string()))?;
            Some(TrialStats {
                mean: *mu,
                mode: mu.floor() as u64,
                p_k_eq_1: p.pmf(1),
                p_k_lt_10: p.cdf(9),
                p_k_lt_50: p.cdf(49),
                p_k_lt_100: p.cdf(99),
            })
        }
        _ => None,
    })
}

/// Evaluates every scheme on one base run. Rows come back in input order;
/// a failing scheme yields a row carrying its error.
pub fn comparison_report(base: &BaseRunCost, schemes: &[TuningScheme], delta: f64, exec: Execution) -> Vec<ComparisonRow> {
    exec.map(schemes, |s| {
        let cost = scheme_cost(base, s, delta);
        let stats = trial_stats(s);
        let (epsilon, error) = match (&cost, &stats) {
            (Ok(g), Ok(_)) => (g.epsilon, None),
            (Err(e), _) | (_, Err(e)) => (f64::NAN, Some(e.to_string())),
        };
        ComparisonRow {
            scheme: s.label(),
            epsilon,
            delta,
            returns_true_best: s.returns_true_best(),
            trials: stats.ok().flatten(),
            error,
        }
    })
}

const HEADER: [&str; 10] = [
    "scheme",
    "epsilon",
    "delta",
    "returns_true_best",
    "mean_trials",
    "mode_trials",
    "p_k_eq_1",
    "p_k_lt_10",
    "p_k_lt_50",
    "p_k_lt_100",
];

fn row_cells(r: &ComparisonRow) -> Vec<String> {
    let opt = |f: fn(&TrialStats) -> String| r.trials.as_ref().map(f).unwrap_or_else(|| "-".into());
    vec![
        r.scheme.clone(),
        match &r.error {
            Some(e) => format!("error: {e}"),
            None => sig6(r.epsilon),
        },
        sig6(r.delta),
        r.returns_true_best.to_string(),
        opt(|t| sig6(t.mean)),
        opt(|t| t.mode.to_string()),
        opt(|t| sig6(t.p_k_eq_1)),
        opt(|t| sig6(t.p_k_lt_10)),
        opt(|t| sig6(t.p_k_lt_50)),
        opt(|t| sig6(t.p_k_lt_100)),
    ]
}

impl ComparisonRow {
    pub fn to_csv(rows: &[ComparisonRow]) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(HEADER).map_err(io)?;
        for r in rows {
            w.write_record(row_cells(r)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Plain-text table with left-aligned, space-padded columns.
    pub fn to_table(rows: &[ComparisonRow]) -> String {
        let cells: Vec<Vec<String>> = std::iter::once(HEADER.iter().map(|s| s.to_string()).collect())
            .chain(rows.iter().map(row_cells))
            .collect();
        let widths: Vec<usize> = (0..HEADER.len())
            .map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &cells {
            let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// ε after each number of epochs for several batch sizes, as CSV rows
/// `batch_size,epochs,steps,epsilon`.
pub fn epsilon_vs_epochs(
    n: u64,
    sigma: f64,
    batch_sizes: &[u64],
    epochs: &[u64],
    delta: f64,
    kind: AccountantKind,
    exec: Execution,
) -> Result<String> {
    let pairs: Vec<(u64, u64)> = batch_sizes.iter().flat_map(|&b| epochs.iter().map(move |&e| (b, e))).collect();
    let eps = exec.map(&pairs, |&(b, e)| {
        let steps = (e * n).div_ceil(b);
        let spec = SubsampledGaussianSpec::new(sigma, b as f64 / n as f64, steps)?;
        Ok::<_, Error>((steps, account(&spec, delta, kind)?.guarantee.epsilon))
    });
    let mut s = String::from("batch_size,epochs,steps,epsilon\n");
    for ((b, e), r) in pairs.iter().zip(eps) {
        let (steps, eps) = r?;
        s.push_str(&format!("{b},{e},{steps},{}\n", sig6(eps)));
    }
    Ok(s)
}
