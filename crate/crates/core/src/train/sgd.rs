use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::model::ParamVector;
use super::trace::{Trace, TraceRow};
use crate::accountant::SubsampledGaussianSpec;
use crate::error::{ensure, Result};
use crate::exec::{pairwise_sum, Execution};
use crate::mechanisms::{clip_l2_unchecked, l2_norm};
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Each example joins each batch independently with probability B/N.
    #[default]
    Poisson,
    /// Fixed-size batches from a reshuffled permutation. The accountant's
    /// Poisson assumption does not hold for these runs.
    Shuffle,
    /// Every example in every step; requires B = N.
    FullBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub eta: f64,
    pub steps: u64,
    pub batch: usize,
    /// `"inf"` disables clipping.
    #[serde(with = "crate::accountant::extended_f64")]
    pub clip: f64,
    pub sigma: f64,
    #[serde(default)]
    pub sampling: Sampling,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
    /// Keep every noise coordinate drawn, for auditing.
    #[serde(default)]
    pub record_noise: bool,
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        ensure(self.eta > 0.0 && self.eta.is_finite(), || format!("eta must be positive, got {}", self.eta))?;
        ensure(self.steps >= 1, || "steps must be at least 1".into())?;
        ensure(self.batch >= 1 && self.batch <= n, || {
            format!("batch size must lie in [1, {n}], got {}", self.batch)
        })?;
        ensure(self.clip > 0.0, || format!("clipping norm must be positive, got {}", self.clip))?;
        ensure(self.sigma >= 0.0 && self.sigma.is_finite(), || {
            format!("sigma must be nonnegative, got {}", self.sigma)
        })?;
        ensure(self.sigma == 0.0 || self.clip.is_finite(), || "noise needs a finite clipping norm".into())?;
        if self.sampling == Sampling::FullBatch {
            ensure(self.batch == n, || format!("full-batch sampling needs batch = {n}, got {}", self.batch))?;
        }
        Ok(())
    }

    /// The accounting description of a run with this config on `n` examples.
    /// `sigma` is copied as is and may be 0.
    pub fn spec(&self, n: usize) -> SubsampledGaussianSpec {
        let q = match self.sampling {
            Sampling::FullBatch => 1.0,
            _ => self.batch as f64 / n as f64,
        };
        SubsampledGaussianSpec { sigma: self.sigma, q, steps: self.steps }
    }
}

/// Microbatch settings: `microbatches` must divide `batch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicrobatchConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub microbatches: usize,
}

impl MicrobatchConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        self.train.validate(n)?;
        ensure(self.microbatches >= 1 && self.train.batch % self.microbatches == 0, || {
            format!("{} microbatches do not divide batch size {}", self.microbatches, self.train.batch)
        })
    }

    pub fn microbatch_size(&self) -> usize {
        self.train.batch / self.microbatches
    }
}

/// Output of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub params: ParamVector,
    pub trace: Trace,
    pub spec: SubsampledGaussianSpec,
    pub sampling: Sampling,
}

pub(crate) struct BatchSampler {
    sampling: Sampling,
    n: usize,
    batch: usize,
    rng: RngStream,
    perm: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub(crate) fn new(sampling: Sampling, n: usize, batch: usize, seed: u64) -> Self {
        Self { sampling, n, batch, rng: RngStream::new(seed, Purpose::BatchSampling), perm: Vec::new(), cursor: 0 }
    }

    /// Indices of the next batch, ascending for Poisson and full batches.
    pub(crate) fn next_batch(&mut self) -> Vec<usize> {
        match self.sampling {
            Sampling::Poisson => {
                let q = self.batch as f64 / self.n as f64;
                (0..self.n).filter(|_| self.rng.bernoulli(q)).collect()
            }
            Sampling::FullBatch => (0..self.n).collect(),
            Sampling::Shuffle => {
                if self.perm.is_empty() || self.cursor + self.batch > self.n {
                    self.perm = (0..self.n).collect();
                    self.perm.shuffle(&mut self.rng);
                    self.cursor = 0;
                }
                let b = self.perm[self.cursor..self.cursor + self.batch].to_vec();
                self.cursor += self.batch;
                b
            }
        }
    }
}

/// One clipped contribution (an example or a microbatch mean).
struct Unit {
    loss_sum: f64,
    examples: usize,
    pre_norm: f64,
    clipped: Vec<f64>,
}

/// Clipped sum of a step plus the statistics the trace needs.
pub(crate) struct Aggregate {
    pub sum: Vec<f64>,
    pub loss_sum: f64,
    pub examples: usize,
    pub pre_norms: Vec<f64>,
    pub post_norms: Vec<f64>,
    pub clip: f64,
}

impl Aggregate {
    fn from_units(units: Vec<Unit>, dim: usize, clip: f64) -> Self {
        let sum = pairwise_sum(&units.iter().map(|u| u.clipped.clone()).collect::<Vec<_>>(), dim);
        Self::with_sum(sum, &units, clip)
    }

    fn with_sum(sum: Vec<f64>, units: &[Unit], clip: f64) -> Self {
        Self {
            sum,
            loss_sum: units.iter().map(|u| u.loss_sum).sum(),
            examples: units.iter().map(|u| u.examples).sum(),
            pre_norms: units.iter().map(|u| u.pre_norm).collect(),
            post_norms: units.iter().map(|u| l2_norm(&u.clipped)).collect(),
            clip,
        }
    }

    fn merge(parts: Vec<Aggregate>, dim: usize, clip: f64) -> Self {
        let sums: Vec<Vec<f64>> = parts.iter().map(|p| p.sum.clone()).collect();
        Self {
            sum: pairwise_sum(&sums, dim),
            loss_sum: parts.iter().map(|p| p.loss_sum).sum(),
            examples: parts.iter().map(|p| p.examples).sum(),
            pre_norms: parts.iter().flat_map(|p| p.pre_norms.iter().copied()).collect(),
            post_norms: parts.iter().flat_map(|p| p.post_norms.iter().copied()).collect(),
            clip,
        }
    }
}

fn example_units(params: &ParamVector, data: &Dataset, idx: &[usize], clip: f64, exec: Execution) -> Vec<Unit> {
    exec.map(idx, |&i| {
        let (loss, g) = params.loss_and_grad(data.features(i), data.label(i));
        Unit { loss_sum: loss, examples: 1, pre_norm: l2_norm(&g), clipped: clip_l2_unchecked(&g, clip) }
    })
}

/// Shared loop: sample, aggregate, add `noise_mult·σ·C` Gaussian noise to the
/// sum, divide by `denom`, step.
pub(crate) fn noisy_loop<F>(
    cfg: &TrainConfig,
    data: &Dataset,
    init: &ParamVector,
    noise_mult: f64,
    denom: f64,
    mut aggregate: F,
) -> Result<TrainRun>
where
    F: FnMut(&ParamVector, &[usize]) -> Aggregate,
{
    cfg.validate(data.len())?;
    ensure(init.dim == data.dim(), || {
        format!("model expects {} features, data has {}", init.dim, data.dim())
    })?;
    let mut params = init.clone();
    let mut sampler = BatchSampler::new(cfg.sampling, data.len(), cfg.batch, cfg.seed);
    let mut noise_rng = RngStream::new(cfg.seed, Purpose::Noise);
    let noise_sd = noise_mult * cfg.sigma * cfg.clip;
    let mut trace = Trace::default();
    for step in 0..cfg.steps {
        let idx = sampler.next_batch();
        let agg = aggregate(&params, &idx);
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
            *t -= cfg.eta * (s / denom);
        }
        trace.rows.push(TraceRow::new(step, idx.len(), &agg, if cfg.sigma > 0.0 { noise_sd / denom } else { 0.0 }));
    }
    ensure(params.theta.iter().all(|v| v.is_finite()), || "training diverged to non-finite parameters".into())?;
    Ok(TrainRun { params, trace, spec: cfg.spec(data.len()), sampling: cfg.sampling })
}

/// DP-SGD: clip each per-example gradient to C, sum, add N(0, σ²C²I), divide
/// by B and step. An empty Poisson batch gives a noise-only step.
pub fn dp_sgd(cfg: &TrainConfig, data: &Dataset, init: &ParamVector) -> Result<TrainRun> {
    let dim = init.len();
    noisy_loop(cfg, data, init, 1.0, cfg.batch as f64, |p, idx| {
        Aggregate::from_units(example_units(p, data, idx, cfg.clip, cfg.execution), dim, cfg.clip)
    })
}

/// DP-SGD with microbatches: the batch is cut into consecutive groups of
/// k = B/M examples, each group's mean gradient (sum over the group divided
/// by k) is clipped to C, and the sum of clipped means gets N(0, 4σ²C²I)
/// before dividing by M. A Poisson batch yields ⌈|batch|/k⌉ groups.
pub fn dp_sgd_microbatch(cfg: &MicrobatchConfig, data: &Dataset, init: &ParamVector) -> Result<TrainRun> {
    cfg.validate(data.len())?;
    let k = cfg.microbatch_size();
    let dim = init.len();
    let clip = cfg.train.clip;
    noisy_loop(&cfg.train, data, init, 2.0, cfg.microbatches as f64, |p, idx| {
        let groups: Vec<&[usize]> = idx.chunks(k).collect();
        let units = cfg.train.execution.map(&groups, |g| {
            let mut loss_sum = 0.0;
            let grads: Vec<Vec<f64>> = g
                .iter()
                .map(|&i| {
                    let (l, grad) = p.loss_and_grad(data.features(i), data.label(i));
                    loss_sum += l;
                    grad
                })
                .collect();
            let mean: Vec<f64> = pairwise_sum(&grads, dim).into_iter().map(|v| v / k as f64).collect();
            Unit { loss_sum, examples: g.len(), pre_norm: l2_norm(&mean), clipped: clip_l2_unchecked(&mean, clip) }
        });
        Aggregate::from_units(units, dim, clip)
    })
}

/// Gradient accumulation: the batch is processed in consecutive sub-steps of
/// `micro_step_size` examples whose clipped sums are accumulated, and noise
/// is added once per batch.
///
/// With a power-of-two `micro_step_size` the accumulated sum, and hence the
/// whole trajectory, is bit-identical to [`dp_sgd`] with the same config.
pub fn dp_sgd_accumulated(
    cfg: &TrainConfig,
    micro_step_size: usize,
    data: &Dataset,
    init: &ParamVector,
) -> Result<TrainRun> {
    ensure(micro_step_size >= 1, || "micro-step size must be at least 1".into())?;
    let dim = init.len();
    noisy_loop(cfg, data, init, 1.0, cfg.batch as f64, |p, idx| {
        let parts: Vec<Aggregate> = idx
            .chunks(micro_step_size)
            .map(|c| {
                let units = example_units(p, data, c, cfg.clip, cfg.execution);
                let sum = pairwise_sum(&units.iter().map(|u| u.clipped.clone()).collect::<Vec<_>>(), dim);
                Aggregate::with_sum(sum, &units, cfg.clip)
            })
            .collect();
        Aggregate::merge(parts, dim, cfg.clip)
    })
}

/// Non-private minibatch SGD with the sampling, summation order and update
/// formula of [`dp_sgd`]. `clip`, `sigma` and `record_noise` are ignored.
pub fn sgd(cfg: &TrainConfig, data: &Dataset, init: &ParamVector) -> Result<ParamVector> {
    cfg.validate(data.len())?;
    let mut params = init.clone();
    let mut sampler = BatchSampler::new(cfg.sampling, data.len(), cfg.batch, cfg.seed);
    for _ in 0..cfg.steps {
        let idx = sampler.next_batch();
        let grads = cfg.execution.map(&idx, |&i| params.loss_and_grad(data.features(i), data.label(i)).1);
        let g = pairwise_sum(&grads, params.len());
        for (t, s) in params.theta.iter_mut().zip(&g) {
            *t -= cfg.eta * (s / cfg.batch as f64);
        }
    }
    Ok(params)
}
