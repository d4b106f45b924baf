use nalgebra::DMatrix;
use psimkl::experiments::{
    generalization_error, linear_grid, log_grid, run_lp_sweep, sample_dataset, sample_truth,
    AdditiveGaussian, ErrorMethod, SyntheticSpec, TruthFunction,
};
use psimkl::kernels::gram_bank;
use psimkl::norms::NormSpec;
use psimkl::solver::{fit, MklModel, MklProblem, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain Monte Carlo of `(f̂ - f*)²`, evaluating the model from its dual
/// coefficients directly.
fn monte_carlo_error(
    model: &MklModel,
    train: &DMatrix<f64>,
    widths: &[f64],
    truth: &TruthFunction,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = widths.len();
    let mut values = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let mut f = model.bias;
        for (m, alpha) in model.dual_coeffs.iter().enumerate() {
            for (i, a) in alpha.iter().enumerate() {
                let t = x[m] - train[(i, m)];
                f += a * (-t * t / (2.0 * widths[m] * widths[m])).exp();
            }
        }
        values.push((f - truth.eval(&x)).powi(2));
    }
    let k = samples as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[test]
fn exact_error_agrees_with_monte_carlo_on_fitted_models() {
    for pair in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + pair);
        let d = 1 + (pair % 3) as usize;
        let widths: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..0.8)).collect();
        let spec = SyntheticSpec {
            d,
            widths: widths.clone(),
            centers_per_kernel: 5,
            noise_std: 0.3,
            n_train: 25,
            seed: pair,
        };
        let truth = sample_truth(&spec, &mut rng);
        let data = sample_dataset(&spec, &truth, &mut rng).unwrap();
        let specs = spec.kernel_specs().unwrap();
        let bank = gram_bank(&data, &specs).unwrap();
        let model = fit(
            &MklProblem {
                bank: &bank,
                outputs: &data.outputs,
                norm: NormSpec::lp(1.5).unwrap(),
                lambda: 10f64.powf(rng.random_range(-4.0..-1.0)),
                with_bias: true,
            },
            &SolverOptions::default(),
        )
        .unwrap();
        let exact = generalization_error(&model, &data.inputs, &specs, &truth, ErrorMethod::Exact)
            .unwrap()
            .value;
        let (mc, se) = monte_carlo_error(&model, &data.inputs, &widths, &truth, 20_000, pair);
        assert!(
            (exact - mc).abs() <= 3.0 * se,
            "pair {pair}: exact {exact} vs {mc} ± {se}"
        );
    }
}

#[test]
fn single_bump_second_moment_matches_large_monte_carlo() {
    let truth = TruthFunction {
        centers: DMatrix::from_element(1, 1, 0.3),
        coeffs: DMatrix::from_element(1, 1, 1.7),
        widths: vec![0.2],
    };
    let exact = AdditiveGaussian::from_truth(&truth).second_moment();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1_000_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let v = truth.eval(&[rng.random::<f64>()]).powi(2);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((exact - mean).abs() <= 3.0 * se, "{exact} vs {mean} ± {se}");
}

#[test]
fn library_monte_carlo_is_unbiased_for_the_exact_value() {
    let spec = SyntheticSpec {
        d: 4,
        widths: vec![0.1, 0.3, 0.5, 0.05],
        centers_per_kernel: 5,
        noise_std: 0.0,
        n_train: 1,
        seed: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = AdditiveGaussian::from_truth(&sample_truth(&spec, &mut rng));
    let b = AdditiveGaussian::from_truth(&sample_truth(&spec, &mut rng));
    let diff = a.minus(&b);
    let exact = diff.second_moment();
    let mc = psimkl::experiments::error_of(
        &diff,
        ErrorMethod::MonteCarlo {
            samples: 200_000,
            seed: 3,
        },
    )
    .unwrap();
    assert!(
        (exact - mc.value).abs() <= 3.0 * mc.std_error,
        "{exact} vs {} ± {}",
        mc.value,
        mc.std_error
    );
}

#[test]
fn noise_free_single_kernel_nearly_interpolates() {
    let spec = SyntheticSpec {
        d: 1,
        widths: vec![0.5],
        centers_per_kernel: 5,
        noise_std: 0.0,
        n_train: 100,
        seed: 42,
    };
    let p_grid = linear_grid(1.0, 2.0, 1.0).unwrap();
    let result = run_lp_sweep(
        &spec,
        &p_grid,
        &log_grid(-9.0, -5.0, 5),
        2,
        &SolverOptions::default(),
    )
    .unwrap();
    let best = result.argmin().unwrap();
    assert!(best.mean_error < 1e-3, "best error {}", best.mean_error);
}

#[test]
fn exact_error_is_nonnegative_and_zero_only_at_the_truth() {
    let spec = SyntheticSpec::homogeneous(1, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth = sample_truth(&spec, &mut rng);
    let g = AdditiveGaussian::from_truth(&truth);
    assert!(g.minus(&g).second_moment().abs() <= 1e-10);
    let other = AdditiveGaussian::from_truth(&sample_truth(&spec, &mut rng));
    assert!(g.minus(&other).second_moment() > 0.0);
}
