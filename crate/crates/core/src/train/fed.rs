use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::model::ParamVector;
use super::sgd::Aggregate;
use super::trace::{Trace, TraceRow};
use crate::accountant::SubsampledGaussianSpec;
use crate::error::{ensure, Result};
use crate::exec::{pairwise_sum, Execution};
use crate::mechanisms::{clip_l2_unchecked, l2_norm};
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UserSampling {
    /// Each user joins each round independently with probability B_c/U.
    #[default]
    Poisson,
    /// Exactly B_c distinct users per round.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    pub eta_s: f64,
    pub eta_c: f64,
    pub rounds: u64,
    pub local_iters: u64,
    pub clients_per_round: usize,
    /// Local minibatch size; a value at least a user's example count means
    /// full local batches.
    pub local_batch: usize,
    #[serde(with = "crate::accountant::extended_f64")]
    pub clip: f64,
    pub sigma: f64,
    #[serde(default)]
    pub user_sampling: UserSampling,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub record_noise: bool,
}

impl FedConfig {
    pub fn validate(&self, users: usize) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        ensure(pos(self.eta_s) && pos(self.eta_c), || "learning rates must be positive".into())?;
        ensure(self.rounds >= 1 && self.local_iters >= 1 && self.local_batch >= 1, || {
            "rounds, local iterations and local batch must be at least 1".into()
        })?;
        ensure(self.clients_per_round >= 1 && self.clients_per_round <= users, || {
            format!("clients per round must lie in [1, {users}], got {}", self.clients_per_round)
        })?;
        ensure(self.clip > 0.0, || format!("clipping norm must be positive, got {}", self.clip))?;
        ensure(self.sigma >= 0.0 && self.sigma.is_finite(), || format!("sigma must be nonnegative, got {}", self.sigma))?;
        ensure(self.sigma == 0.0 || self.clip.is_finite(), || "noise needs a finite clipping norm".into())
    }

    /// User-level accounting description.
    pub fn spec(&self, users: usize) -> SubsampledGaussianSpec {
        SubsampledGaussianSpec { sigma: self.sigma, q: self.clients_per_round as f64 / users as f64, steps: self.rounds }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedRun {
    pub params: ParamVector,
    pub trace: Trace,
    pub spec: SubsampledGaussianSpec,
    pub user_sampling: UserSampling,
    /// Clipped deltas of the last round, in user order.
    pub last_deltas: Vec<Vec<f64>>,
}

/// Local training of one user. Returns (initial mean loss, model delta).
///
/// The delta is accumulated as `Σ_k η_c·ḡ_k`, which equals `ω⁰ − ω^K` and
/// keeps the K = 1, η_c = 1 case exactly equal to the user's mean gradient.
fn local_update(cfg: &FedConfig, global: &ParamVector, data: &Dataset, rng: &mut RngStream) -> (f64, Vec<f64>) {
    let dim = global.len();
    let mut omega = global.clone();
    let mut delta = vec![0.0; dim];
    let mut first_loss = 0.0;
    let n = data.len();
    for k in 0..cfg.local_iters {
        let idx: Vec<usize> = if cfg.local_batch >= n {
            (0..n).collect()
        } else {
            let mut v = rand::seq::index::sample(rng, n, cfg.local_batch).into_vec();
            v.sort_unstable();
            v
        };
        let mut loss = 0.0;
        let grads: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| {
                let (l, g) = omega.loss_and_grad(data.features(i), data.label(i));
                loss += l;
                g
            })
            .collect();
        if k == 0 {
            first_loss = loss / idx.len() as f64;
        }
        let g = pairwise_sum(&grads, dim);
        for j in 0..dim {
            let step = cfg.eta_c * (g[j] / idx.len() as f64);
            omega.theta[j] -= step;
            delta[j] += step;
        }
    }
    (first_loss, delta)
}

/// DP-FedAvg: per round, sample users, run K local steps on each, clip
/// each model delta to C, average with N(0, σ²C²I)/B_c noise and take a
/// server step. K = 1 with full local batches is DP-FedSGD.
pub fn dp_fedavg(cfg: &FedConfig, users: &[Dataset], init: &ParamVector) -> Result<FedRun> {
    ensure(!users.is_empty(), || "at least one user is required".into())?;
    cfg.validate(users.len())?;
    ensure(users.iter().all(|u| u.dim() == init.dim), || "user data and model dimensions differ".into())?;
    let u_count = users.len();
    let dim = init.len();
    let mut params = init.clone();
    let mut user_rng = RngStream::new(cfg.seed, Purpose::UserSampling);
    let mut noise_rng = RngStream::new(cfg.seed, Purpose::Noise);
    let noise_sd = cfg.sigma * cfg.clip;
    let denom = cfg.clients_per_round as f64;
    let mut trace = Trace::default();
    let mut last_deltas = Vec::new();
    for round in 0..cfg.rounds {
        let chosen: Vec<usize> = match cfg.user_sampling {
            UserSampling::Poisson => {
                let q = cfg.clients_per_round as f64 / u_count as f64;
                (0..u_count).filter(|_| user_rng.bernoulli(q)).collect()
            }
            UserSampling::Fixed => {
                let mut v = rand::seq::index::sample(&mut user_rng, u_count, cfg.clients_per_round).into_vec();
                v.sort_unstable();
                v
            }
        };
        let results = cfg.execution.map(&chosen, |&u| {
            let mut rng = RngStream::substream(cfg.seed, Purpose::LocalSampling, round * u_count as u64 + u as u64);
            let (loss, delta) = local_update(cfg, &params, &users[u], &mut rng);
            (loss, l2_norm(&delta), clip_l2_unchecked(&delta, cfg.clip))
        });
        let clipped: Vec<Vec<f64>> = results.iter().map(|r| r.2.clone()).collect();
        let agg = Aggregate {
            sum: pairwise_sum(&clipped, dim),
            loss_sum: results.iter().map(|r| r.0).sum(),
            examples: results.len(),
            pre_norms: results.iter().map(|r| r.1).collect(),
            post_norms: clipped.iter().map(|d| l2_norm(d)).collect(),
            clip: cfg.clip,
        };
        let mut noisy = agg.sum.clone();
        if cfg.sigma > 0.0 {
            for v in noisy.iter_mut() {
                let z = noise_sd * noise_rng.standard_normal();
                if cfg.record_noise {
                    trace.noise_draws.push(z);
                }
                *v += z;
            }
        }
        for (t, s) in params.theta.iter_mut().zip(&noisy) {
            *t -= cfg.eta_s * (s / denom);
        }
        trace.rows.push(TraceRow::new(round, chosen.len(), &agg, if cfg.sigma > 0.0 { noise_sd / denom } else { 0.0 }));
        last_deltas = clipped;
    }
    ensure(params.theta.iter().all(|v| v.is_finite()), || "training diverged to non-finite parameters".into())?;
    Ok(FedRun { params, trace, spec: cfg.spec(u_count), user_sampling: cfg.user_sampling, last_deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{synth_data, ModelKind, SynthKind};

    fn cfg() -> FedConfig {
        FedConfig {
            eta_s: 1.0,
            eta_c: 0.1,
            rounds: 5,
            local_iters: 3,
            clients_per_round: 4,
            local_batch: 8,
            clip: 0.5,
            sigma: 0.0,
            user_sampling: UserSampling::Fixed,
            seed: 2,
            execution: Execution::Sequential,
            record_noise: false,
        }
    }

    #[test]
    fn too_many_clients_is_an_error() {
        let users = synth_data(SynthKind::TwoGaussians, 40, 2, 0).unwrap().partition(4).unwrap();
        let p = ParamVector::init(ModelKind::Logistic, 2, 0).unwrap();
        assert!(dp_fedavg(&FedConfig { clients_per_round: 5, ..cfg() }, &users, &p).is_err());
        assert!(dp_fedavg(&cfg(), &users, &p).is_ok());
    }

    #[test]
    fn modes_agree() {
        let users = synth_data(SynthKind::TwoGaussians, 80, 2, 0).unwrap().partition(8).unwrap();
        let p = ParamVector::init(ModelKind::Mlp { hidden: 3 }, 2, 1).unwrap();
        let c = FedConfig { sigma: 1.0, user_sampling: UserSampling::Poisson, ..cfg() };
        let a = dp_fedavg(&c, &users, &p).unwrap();
        let b = dp_fedavg(&FedConfig { execution: Execution::Parallel, ..c }, &users, &p).unwrap();
        assert_eq!(a.params, b.params);
    }
}
