//! Reference DP training loops on small analytic-gradient models.
//!
//! Every run is a pure function of its config, data and seed. Per-example
//! gradients may be computed in parallel; clipped gradients are always
//! summed in a fixed pairwise order, so results do not depend on the
//! execution mode.

mod artifact;
mod data;
mod fed;
mod model;
mod sgd;
mod strategy;
mod trace;

pub use artifact::{
    account_run, run_job, Algorithm, DataSpec, RunArtifact, TrainJob, FIXED_USERS_CAVEAT, FULL_BATCH_NOTE,
    POISSON_USED, RUN_SCHEMA, SHUFFLE_CAVEAT, TRAIN_SCHEMA,
};
pub use data::{synth_data, Dataset, SynthKind};
pub use fed::{dp_fedavg, FedConfig, FedRun, UserSampling};
pub use model::{ModelKind, ParamVector};
pub use sgd::{dp_sgd, dp_sgd_accumulated, dp_sgd_microbatch, sgd, MicrobatchConfig, Sampling, TrainConfig, TrainRun};
pub use strategy::{
    batch_candidates, clip_search, clip_search_sgd, scale_to_budget, sigma_bar_sweep, ClipSearch, ScaledChoice,
    SigmaBar, SigmaBarPoint, DEFAULT_CLIP_GRID, DEFAULT_UTILITY_DROP,
};
pub use trace::{Trace, TraceRow};
