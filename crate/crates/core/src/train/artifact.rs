//! JSON training jobs and the run artifacts they produce.

use serde::{Deserialize, Serialize};

use super::data::{synth_data, Dataset, SynthKind};
use super::fed::{dp_fedavg, FedConfig, UserSampling};
use super::model::{ModelKind, ParamVector};
use super::sgd::{dp_sgd, dp_sgd_accumulated, dp_sgd_microbatch, MicrobatchConfig, Sampling, TrainConfig};
use super::trace::Trace;
use crate::accountant::{account, AccountantKind, PrivacyGuarantee, SubsampledGaussianSpec, ASSUME_POISSON};
use crate::config::check_schema;
use crate::error::{ensure, Error, Result};

pub const TRAIN_SCHEMA: &str = "dp-budget/train/v1";
pub const RUN_SCHEMA: &str = "dp-budget/run/v1";

pub const POISSON_USED: &str = "Poisson sampling assumed and used";
pub const SHUFFLE_CAVEAT: &str = "Poisson sampling assumed for amplification; shuffling used in training";
pub const FIXED_USERS_CAVEAT: &str =
    "Poisson sampling assumed for amplification; fixed-size user sampling used in training";
pub const FULL_BATCH_NOTE: &str = "full-batch training; no amplification by sampling";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub kind: SynthKind,
    /// Training examples.
    pub n: usize,
    pub d: usize,
    /// Held-out examples drawn after the training set.
    pub test: usize,
    pub seed: u64,
}

impl DataSpec {
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        ensure(self.test >= 1, || "at least one held-out example is required".into())?;
        synth_data(self.kind, self.n + self.test, self.d, self.seed)?.split(self.n)
    }
}

/// Externally tagged in JSON, e.g. `{"dp-sgd": {"train": {...}}}`, so that
/// config errors carry their full key path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Algorithm {
    DpSgd { train: TrainConfig },
    Microbatch { train: TrainConfig, microbatches: usize },
    Accumulated { train: TrainConfig, micro_step_size: usize },
    /// The training set is split into `users` equal shards.
    Fedavg { fed: FedConfig, users: usize },
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::DpSgd { .. } => "dp-sgd",
            Algorithm::Microbatch { .. } => "dp-sgd-microbatch",
            Algorithm::Accumulated { .. } => "dp-sgd-accumulated",
            Algorithm::Fedavg { .. } => "dp-fedavg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    pub schema: String,
    pub data: DataSpec,
    pub model: ModelKind,
    pub algorithm: Algorithm,
    pub delta: f64,
    #[serde(default)]
    pub accountant: AccountantKind,
}

impl TrainJob {
    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema, TRAIN_SCHEMA)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config { path: "delta".into(), message: format!("must lie in (0, 1), got {}", self.delta) });
        }
        Ok(())
    }
}

/// Everything needed to report on a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArtifact {
    pub schema: String,
    pub algorithm: String,
    pub model: ModelKind,
    pub data: DataSpec,
    /// The run's accounting description; `sigma` is 0 for noiseless runs.
    pub spec: SubsampledGaussianSpec,
    pub sampling: String,
    pub amplification_assumption_violated: bool,
    pub accountant: AccountantKind,
    /// Optimal Rényi order, for the RDP accountants.
    pub order: Option<f64>,
    pub guarantee: PrivacyGuarantee,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub params: ParamVector,
}

/// Accounts `spec`; noiseless runs get ε = ∞.
pub fn account_run(
    spec: &SubsampledGaussianSpec,
    delta: f64,
    kind: AccountantKind,
) -> Result<(PrivacyGuarantee, Option<f64>)> {
    if spec.sigma == 0.0 {
        let g = PrivacyGuarantee::new(f64::INFINITY, delta)?.accountant(kind.label()).assumption(ASSUME_POISSON);
        return Ok((g, None));
    }
    let a = account(spec, delta, kind)?;
    Ok((a.guarantee, a.order))
}

fn restamp(mut g: PrivacyGuarantee, line: &str) -> PrivacyGuarantee {
    g.assumptions.retain(|a| a != ASSUME_POISSON);
    g.assumptions.insert(0, line.to_string());
    g
}

/// Runs a job and returns its artifact and trace.
pub fn run_job(job: &TrainJob) -> Result<(RunArtifact, Trace)> {
    job.validate()?;
    let (train, test) = job.data.generate()?;
    let seed = match &job.algorithm {
        Algorithm::DpSgd { train } | Algorithm::Microbatch { train, .. } | Algorithm::Accumulated { train, .. } => {
            train.seed
        }
        Algorithm::Fedavg { fed, .. } => fed.seed,
    };
    let init = ParamVector::init(job.model, job.data.d, seed)?;
    let (params, trace, spec, sampling_label, line, user_level) = match &job.algorithm {
        Algorithm::Fedavg { fed, users } => {
            let shards = train.partition(*users)?;
            let run = dp_fedavg(fed, &shards, &init)?;
            let (label, line) = match run.user_sampling {
                UserSampling::Poisson => ("poisson", POISSON_USED),
                UserSampling::Fixed => ("fixed", FIXED_USERS_CAVEAT),
            };
            (run.params, run.trace, run.spec, label, line, true)
        }
        alg => {
            let run = match alg {
                Algorithm::DpSgd { train: c } => dp_sgd(c, &train, &init)?,
                Algorithm::Microbatch { train: c, microbatches } => {
                    dp_sgd_microbatch(&MicrobatchConfig { train: *c, microbatches: *microbatches }, &train, &init)?
                }
                Algorithm::Accumulated { train: c, micro_step_size } => {
                    dp_sgd_accumulated(c, *micro_step_size, &train, &init)?
                }
                Algorithm::Fedavg { .. } => unreachable!(),
            };
            let (label, line) = match run.sampling {
                Sampling::Poisson => ("poisson", POISSON_USED),
                Sampling::Shuffle => ("shuffle", SHUFFLE_CAVEAT),
                Sampling::FullBatch => ("full-batch", FULL_BATCH_NOTE),
            };
            (run.params, run.trace, run.spec, label, line, false)
        }
    };
    let (g, order) = account_run(&spec, job.delta, job.accountant)?;
    let mut g = restamp(g, line);
    if user_level {
        g = g.unit("user");
    }
    let violated = line == SHUFFLE_CAVEAT || line == FIXED_USERS_CAVEAT;
    let artifact = RunArtifact {
        schema: RUN_SCHEMA.into(),
        algorithm: job.algorithm.label().into(),
        model: job.model,
        data: job.data,
        spec,
        sampling: sampling_label.into(),
        amplification_assumption_violated: violated,
        accountant: job.accountant,
        order,
        guarantee: g,
        train_accuracy: params.accuracy(&train),
        test_accuracy: params.accuracy(&test),
        params,
    };
    Ok((artifact, trace))
}
