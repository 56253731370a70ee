use dp_budget::exec::{pairwise_sum, Execution};
use dp_budget::train::*;
use proptest::prelude::*;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

fn two_gaussians(n: usize, d: usize, seed: u64) -> Dataset {
    synth_data(SynthKind::TwoGaussians, n, d, seed).unwrap()
}

fn base(steps: u64, batch: usize) -> TrainConfig {
    TrainConfig {
        eta: 0.5,
        steps,
        batch,
        clip: 1.0,
        sigma: 1.0,
        sampling: Sampling::Poisson,
        seed: 17,
        execution: Execution::Parallel,
        record_noise: false,
    }
}

fn logistic(d: usize) -> ParamVector {
    ParamVector::init(ModelKind::Logistic, d, 0).unwrap()
}

#[test]
fn gradients_match_central_differences() {
    let data = two_gaussians(50, 4, 2);
    let mut rng = dp_budget::rng::RngStream::new(5, dp_budget::rng::Purpose::Custom(0));
    for model in [ModelKind::Logistic, ModelKind::Mlp { hidden: 6 }] {
        let mut p = ParamVector::init(model, 4, 3).unwrap();
        for v in p.theta.iter_mut() {
            *v += 0.3 * rng.standard_normal();
        }
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let i = rng.below(data.len());
            let j = rng.below(p.len());
            let (x, y) = (data.features(i), data.label(i));
            let g = p.loss_and_grad(x, y).1[j];
            let (mut up, mut down) = (p.clone(), p.clone());
            up.theta[j] += h;
            down.theta[j] -= h;
            let fd = (up.loss(x, y) - down.loss(x, y)) / (2.0 * h);
            worst = worst.max((g - fd).abs());
        }
        assert!(worst < 1e-6, "{model:?}: {worst}");
    }
}

/// Full-batch gradient descent written out directly.
fn plain_gd(data: &Dataset, init: &ParamVector, eta: f64, steps: u64) -> ParamVector {
    let mut p = init.clone();
    for _ in 0..steps {
        let grads: Vec<Vec<f64>> = (0..data.len()).map(|i| p.loss_and_grad(data.features(i), data.label(i)).1).collect();
        let g = pairwise_sum(&grads, p.len());
        for (t, s) in p.theta.iter_mut().zip(&g) {
            *t -= eta * (s / data.len() as f64);
        }
    }
    p
}

#[test]
fn noiseless_unclipped_full_batch_is_plain_gradient_descent() {
    let data = two_gaussians(300, 5, 1);
    for model in [ModelKind::Logistic, ModelKind::Mlp { hidden: 4 }] {
        let init = ParamVector::init(model, 5, 9).unwrap();
        let cfg = TrainConfig { sigma: 0.0, clip: 1e9, sampling: Sampling::FullBatch, batch: 300, steps: 40, ..base(0, 0) };
        let run = dp_sgd(&cfg, &data, &init).unwrap();
        assert_eq!(run.params, plain_gd(&data, &init, cfg.eta, 40));
        assert_eq!(run.params, sgd(&cfg, &data, &init).unwrap());
        let inf = TrainConfig { clip: f64::INFINITY, ..cfg };
        assert_eq!(dp_sgd(&inf, &data, &init).unwrap().params, run.params);
    }
}

#[test]
fn private_logistic_regression_tracks_the_non_private_baseline() {
    let all = two_gaussians(4096 + 2048, 10, 21);
    let (train, test) = all.split(4096).unwrap();
    let init = logistic(10);
    let cfg = base(500, 256);
    let private = dp_sgd(&cfg, &train, &init).unwrap().params.accuracy(&test);
    let public = sgd(&cfg, &train, &init).unwrap().accuracy(&test);
    assert!((public - private).abs() <= 0.05, "private {private}, non-private {public}");
}

#[test]
fn clipped_norms_never_exceed_c() {
    let data = two_gaussians(500, 6, 3);
    let init = ParamVector::init(ModelKind::Mlp { hidden: 5 }, 6, 1).unwrap();
    for clip in [1e-3, 0.1, 0.7, 3.0] {
        let cfg = TrainConfig { clip, eta: 2.0, ..base(60, 50) };
        let tol = clip + 4.0 * f64::EPSILON * clip;
        assert!(dp_sgd(&cfg, &data, &init).unwrap().trace.max_clipped_norm() <= tol);
        let m = MicrobatchConfig { train: cfg, microbatches: 10 };
        assert!(dp_sgd_microbatch(&m, &data, &init).unwrap().trace.max_clipped_norm() <= tol);
        assert!(dp_sgd_accumulated(&cfg, 8, &data, &init).unwrap().trace.max_clipped_norm() <= tol);
    }
}

#[test]
fn accumulation_is_bit_identical_to_dp_sgd() {
    let data = two_gaussians(2048, 8, 4);
    let init = logistic(8);
    for sigma in [0.0, 1.3] {
        let cfg = TrainConfig { sigma, ..base(50, 256) };
        let whole = dp_sgd(&cfg, &data, &init).unwrap();
        for micro in [1, 64, 256, 4096] {
            let acc = dp_sgd_accumulated(&cfg, micro, &data, &init).unwrap();
            assert_eq!(acc.params, whole.params, "sigma {sigma}, micro-step {micro}");
        }
    }
    let fixed = TrainConfig { sampling: Sampling::Shuffle, ..base(20, 256) };
    assert_eq!(
        dp_sgd_accumulated(&fixed, 64, &data, &init).unwrap().params,
        dp_sgd(&fixed, &data, &init).unwrap().params
    );
}

#[test]
fn one_example_microbatches_follow_dp_sgd_without_noise() {
    let data = two_gaussians(400, 3, 8);
    let init = ParamVector::init(ModelKind::Mlp { hidden: 3 }, 3, 2).unwrap();
    for sampling in [Sampling::Poisson, Sampling::Shuffle] {
        let cfg = TrainConfig { sigma: 0.0, sampling, ..base(30, 40) };
        let m = MicrobatchConfig { train: cfg, microbatches: 40 };
        let a = dp_sgd_microbatch(&m, &data, &init).unwrap();
        let b = dp_sgd(&cfg, &data, &init).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace.rows, b.trace.rows);
    }
}

#[test]
fn single_microbatch_is_a_clipped_mean_step() {
    let data = two_gaussians(64, 3, 5);
    let init = logistic(3);
    let cfg = TrainConfig { sigma: 0.0, sampling: Sampling::FullBatch, batch: 64, steps: 1, clip: 0.05, ..base(0, 0) };
    let run = dp_sgd_microbatch(&MicrobatchConfig { train: cfg, microbatches: 1 }, &data, &init).unwrap();
    let grads: Vec<Vec<f64>> = (0..64).map(|i| init.loss_and_grad(data.features(i), data.label(i)).1).collect();
    let mean: Vec<f64> = pairwise_sum(&grads, 4).iter().map(|g| g / 64.0).collect();
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm > 0.05);
    for j in 0..4 {
        let expected = init.theta[j] - cfg.eta * mean[j] * 0.05 / norm;
        assert!((run.params.theta[j] - expected).abs() < 1e-15);
    }
    let bad = MicrobatchConfig { train: TrainConfig { batch: 64, ..cfg }, microbatches: 5 };
    assert!(dp_sgd_microbatch(&bad, &data, &init).is_err());
}

fn sample_sd(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[test]
fn noise_scales_match_their_mechanisms() {
    let data = two_gaussians(1000, 10, 6);
    let init = ParamVector::init(ModelKind::Mlp { hidden: 16 }, 10, 0).unwrap();
    let cfg = TrainConfig { sigma: 1.5, clip: 0.8, eta: 0.05, record_noise: true, ..base(100, 64) };
    let run = dp_sgd(&cfg, &data, &init).unwrap();
    assert!(run.trace.noise_draws.len() >= 10_000);
    let sd = sample_sd(&run.trace.noise_draws);
    assert!((sd / (1.5 * 0.8) - 1.0).abs() < 0.02, "{sd}");
    assert!(run.trace.rows.iter().all(|r| r.noise_std == 1.5 * 0.8 / 64.0));

    let m = MicrobatchConfig { train: cfg, microbatches: 16 };
    let run = dp_sgd_microbatch(&m, &data, &init).unwrap();
    let sd = sample_sd(&run.trace.noise_draws);
    assert!((sd / (2.0 * 1.5 * 0.8) - 1.0).abs() < 0.02, "{sd}");
    assert!(run.trace.rows.iter().all(|r| (r.noise_std - 2.0 * 1.5 * 0.8 / 16.0).abs() < 1e-15));
}

#[test]
fn poisson_batch_sizes_are_binomial() {
    let data = two_gaussians(200, 2, 0);
    let init = logistic(2);
    let binom = Binomial::new(0.1, 200).unwrap();
    for seed in [1, 2, 3] {
        let cfg = TrainConfig { seed, sigma: 0.0, ..base(4000, 20) };
        let sizes: Vec<usize> = dp_sgd(&cfg, &data, &init).unwrap().trace.rows.iter().map(|r| r.batch_size).collect();
        // bins 0..=11, 12..=28 one each, 29.. merged; all expected counts >= 5
        let bin = |k: usize| k.clamp(11, 29);
        let mut observed = [0.0f64; 30];
        for s in &sizes {
            observed[bin(*s)] += 1.0;
        }
        let mut expected = [0.0f64; 30];
        for k in 0..=200u64 {
            expected[bin(k as usize)] += binom.pmf(k) * sizes.len() as f64;
        }
        let chi2: f64 = (11..30).map(|b| (observed[b] - expected[b]).powi(2) / expected[b]).sum();
        let crit = ChiSquared::new(18.0).unwrap().inverse_cdf(0.999);
        assert!(chi2 < crit, "seed {seed}: chi2 {chi2} >= {crit}");
    }
}

#[test]
fn fedsgd_round_is_the_mean_user_gradient() {
    let data = two_gaussians(120, 3, 7);
    let users = data.partition(6).unwrap();
    let init = ParamVector::init(ModelKind::Mlp { hidden: 2 }, 3, 4).unwrap();
    let cfg = FedConfig {
        eta_s: 1.0,
        eta_c: 1.0,
        rounds: 1,
        local_iters: 1,
        clients_per_round: 6,
        local_batch: usize::MAX,
        clip: 1e12,
        sigma: 0.0,
        user_sampling: UserSampling::Fixed,
        seed: 0,
        execution: Execution::Parallel,
        record_noise: false,
    };
    let run = dp_fedavg(&cfg, &users, &init).unwrap();
    let user_grads: Vec<Vec<f64>> = users
        .iter()
        .map(|u| {
            let g: Vec<Vec<f64>> = (0..u.len()).map(|i| init.loss_and_grad(u.features(i), u.label(i)).1).collect();
            pairwise_sum(&g, init.len()).iter().map(|v| v / u.len() as f64).collect()
        })
        .collect();
    assert_eq!(run.last_deltas, user_grads);
    let mean: Vec<f64> = pairwise_sum(&user_grads, init.len()).iter().map(|v| v / 6.0).collect();
    let expected: Vec<f64> = init.theta.iter().zip(&mean).map(|(t, m)| t - m).collect();
    assert_eq!(run.params.theta, expected);
}

#[test]
fn identical_users_give_identical_deltas() {
    let one = two_gaussians(30, 2, 1);
    let users = vec![one.clone(), one];
    let init = logistic(2);
    let cfg = FedConfig {
        eta_s: 1.0,
        eta_c: 0.3,
        rounds: 1,
        local_iters: 4,
        clients_per_round: 2,
        local_batch: 30,
        clip: 0.1,
        sigma: 0.0,
        user_sampling: UserSampling::Fixed,
        seed: 0,
        execution: Execution::Sequential,
        record_noise: false,
    };
    let run = dp_fedavg(&cfg, &users, &init).unwrap();
    assert_eq!(run.last_deltas[0], run.last_deltas[1]);
    let expected: Vec<f64> = init.theta.iter().zip(&run.last_deltas[0]).map(|(t, d)| t - d).collect();
    for (a, b) in run.params.theta.iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
    }
}

#[test]
fn user_deltas_are_clipped_and_runs_are_user_level() {
    let data = two_gaussians(800, 4, 2);
    let users = data.partition(80).unwrap();
    let init = ParamVector::init(ModelKind::Mlp { hidden: 4 }, 4, 0).unwrap();
    let cfg = FedConfig {
        eta_s: 1.0,
        eta_c: 0.5,
        rounds: 30,
        local_iters: 3,
        clients_per_round: 10,
        local_batch: 4,
        clip: 0.2,
        sigma: 0.8,
        user_sampling: UserSampling::Poisson,
        seed: 4,
        execution: Execution::Parallel,
        record_noise: true,
    };
    let run = dp_fedavg(&cfg, &users, &init).unwrap();
    assert!(run.trace.max_clipped_norm() <= 0.2 * (1.0 + 4.0 * f64::EPSILON));
    assert_eq!(run.spec.q, 10.0 / 80.0);
    assert!(dp_fedavg(&FedConfig { clients_per_round: 81, ..cfg }, &users, &init).is_err());
}

/// Points on a circle of radius √15, so that every per-example gradient of a
/// zero-initialised logistic model has norm 0.5·sqrt(15 + 1) = 2. The
/// positive class is the arc x₁ > 2.4; a gap around the boundary keeps the
/// classes separable.
fn circle_task(n: usize, seed: u64) -> Dataset {
    let r = 15f64.sqrt();
    let mut rng = dp_budget::rng::RngStream::new(seed, dp_budget::rng::Purpose::Data);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    while y.len() < n {
        let a = std::f64::consts::TAU * rng.open01();
        let (c, s) = (r * a.cos(), r * a.sin());
        if (c - 2.4).abs() < 0.15 {
            continue;
        }
        x.extend([c, s]);
        y.push(if c > 2.4 { 1.0 } else { 0.0 });
    }
    Dataset::new(x, y, 2).unwrap()
}

#[test]
fn clip_search_picks_the_first_mildly_clipping_norm() {
    let train = circle_task(2000, 1);
    let test = circle_task(2000, 2);
    let init = logistic(2);
    let (_, g) = init.loss_and_grad(train.features(0), train.label(0));
    assert!((g.iter().map(|v| v * v).sum::<f64>().sqrt() - 2.0).abs() < 1e-12);
    let cfg = TrainConfig { eta: 1.0, ..base(300, 200) };
    let r = clip_search_sgd(&cfg, &train, &test, &init, &DEFAULT_CLIP_GRID, DEFAULT_UTILITY_DROP).unwrap();
    // oracle: direct sweep
    let floor = r.baseline * (1.0 - DEFAULT_UTILITY_DROP);
    let passing: Vec<f64> = DEFAULT_CLIP_GRID
        .iter()
        .copied()
        .filter(|&c| {
            let c = TrainConfig { clip: c, sigma: 0.0, ..cfg };
            dp_sgd(&c, &train, &init).unwrap().params.accuracy(&test) >= floor
        })
        .collect();
    assert_eq!(passing.first(), Some(&1.0), "{:?}", r.utilities);
    assert_eq!(r.clip, 1.0);
    assert!(r.warning.is_none());
}

#[test]
fn zero_sigma_bar_recovers_the_non_private_model() {
    let all = two_gaussians(3000, 5, 2);
    let (train, test) = all.split(2000).unwrap();
    let init = logistic(5);
    let cfg = TrainConfig { clip: 1e9, ..base(100, 64) };
    let sweep = sigma_bar_sweep(&cfg, &train, &test, &init, &[0.0], 64).unwrap();
    assert_eq!(sweep[0].sigma_bar, 0.0);
    assert_eq!(sweep[0].utility, sgd(&TrainConfig { batch: 64, ..cfg }, &train, &init).unwrap().accuracy(&test));
}

fn mean_and_halfwidth(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = sample_sd(xs);
    // t quantile for 9 degrees of freedom at 97.5%
    (m, 2.262 * sd / (xs.len() as f64).sqrt())
}

#[test]
fn utility_is_determined_by_sigma_bar() {
    let all = two_gaussians(8192 + 4096, 10, 30);
    let (train, test) = all.split(8192).unwrap();
    let init = logistic(10);
    let run = |sigma: f64, batch: usize| -> Vec<f64> {
        (0..10)
            .map(|seed| {
                let cfg = TrainConfig { sigma, seed, eta: 0.3, ..base(200, batch) };
                dp_sgd(&cfg, &train, &init).unwrap().params.accuracy(&test)
            })
            .collect()
    };
    let (m1, h1) = mean_and_halfwidth(&run(4.0, 64));
    let (m2, h2) = mean_and_halfwidth(&run(8.0, 128));
    assert!((m1 - m2).abs() <= h1 + h2, "{m1}±{h1} vs {m2}±{h2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_are_deterministic(seed in 0u64..1000, sampling in prop_oneof![Just(Sampling::Poisson), Just(Sampling::Shuffle)]) {
        let data = two_gaussians(200, 3, seed);
        let init = ParamVector::init(ModelKind::Mlp { hidden: 3 }, 3, seed).unwrap();
        let cfg = TrainConfig { seed, sampling, ..base(15, 20) };
        let a = dp_sgd(&cfg, &data, &init).unwrap();
        let b = dp_sgd(&TrainConfig { execution: Execution::Sequential, ..cfg }, &data, &init).unwrap();
        prop_assert_eq!(&a.params, &b.params);
        prop_assert_eq!(a.trace.to_csv(), b.trace.to_csv());
    }

    #[test]
    fn accumulation_matches_for_any_power_of_two(log2 in 0u32..8, sigma in 0.0f64..3.0, seed in 0u64..100) {
        let data = two_gaussians(300, 3, seed);
        let init = logistic(3);
        let cfg = TrainConfig { seed, sigma, ..base(10, 60) };
        prop_assert_eq!(
            dp_sgd_accumulated(&cfg, 1 << log2, &data, &init).unwrap().params,
            dp_sgd(&cfg, &data, &init).unwrap().params
        );
    }

    #[test]
    fn clipping_holds_at_every_step(clip in 1e-3f64..5.0, seed in 0u64..100) {
        let data = two_gaussians(200, 4, seed);
        let init = ParamVector::init(ModelKind::Mlp { hidden: 4 }, 4, seed).unwrap();
        let cfg = TrainConfig { seed, clip, eta: 1.0, ..base(20, 30) };
        let run = dp_sgd(&cfg, &data, &init).unwrap();
        for row in &run.trace.rows {
            prop_assert!(row.max_clipped_norm <= clip + 4.0 * f64::EPSILON * clip);
        }
    }
}
