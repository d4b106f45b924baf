use super::*;
use crate::kernels::{gram_bank, Dataset, KernelSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(seed: u64, n: usize, m: usize) -> (GramBank, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>());
    let y = DVector::from_fn(n, |i, _| {
        (3.0 * x[(i, 0)]).sin() + 0.1 * rng.random::<f64>()
    });
    let specs: Vec<KernelSpec> = (0..m)
        .map(|c| KernelSpec::new(c, 0.3 + 0.1 * c as f64).unwrap())
        .collect();
    let data = Dataset::new(x, y.clone()).unwrap();
    (gram_bank(&data, &specs).unwrap(), y)
}

fn fitted(model: &MklModel, bank: &GramBank) -> DVector<f64> {
    predict(model, bank.grams()).unwrap()
}

fn rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[test]
fn ridge_interpolates_identity_gram_as_lambda_vanishes() {
    let g = DMatrix::identity(3, 3);
    let y = DVector::from_element(3, 1.0);
    let (c, b) = kernel_ridge_solve(&g, &y, 1e-12, false).unwrap();
    assert_eq!(b, 0.0);
    for v in c.iter() {
        assert!((v - 1.0).abs() < 1e-9);
    }
}

#[test]
fn ridge_on_zero_data_is_zero() {
    let (bank, _) = random_problem(1, 10, 1);
    let (c, b) = kernel_ridge_solve(&bank.grams()[0], &DVector::zeros(10), 0.1, true).unwrap();
    assert_eq!(c.norm(), 0.0);
    assert_eq!(b, 0.0);
}

#[test]
fn ridge_satisfies_normal_equations() {
    let (bank, y) = random_problem(2, 20, 1);
    let g = &bank.grams()[0];
    let lambda = 0.1;
    let (c, _) = kernel_ridge_solve(g, &y, lambda, false).unwrap();
    // gradient of the objective: (2/n) G ((G + nλ I) c - y)
    let n = 20.0;
    let resid = g * (g * &c + &c * (n * lambda) - &y);
    assert!(resid.norm() <= 1e-8 * y.norm(), "{}", resid.norm());
}

#[test]
fn ridge_rejects_bad_lambda() {
    let g = DMatrix::identity(2, 2);
    let y = DVector::from_element(2, 1.0);
    assert!(kernel_ridge_solve(&g, &y, 0.0, true).is_err());
    assert!(kernel_ridge_solve(&g, &y, -1.0, true).is_err());
    assert!(kernel_ridge_solve(&g, &y, 1e-15, true).is_err());
}

#[test]
fn weights_are_uniform_for_equal_norms() {
    for p in [1.0, 1.3, 2.0, 3.0, 7.0] {
        let w = lp_weight_update(&[0.7; 4], p, 1e-8).unwrap();
        for v in &w {
            assert!((v - w[0]).abs() < 1e-14);
        }
    }
}

#[test]
fn p2_weights_ignore_norms() {
    assert_eq!(
        lp_weight_update(&[1.0, 5.0, 0.0], 2.0, 1e-8).unwrap(),
        vec![1.0; 3]
    );
}

#[test]
fn l1_weights_floor_the_zero_norm() {
    let w = lp_weight_update(&[1.0, 0.0], 1.0, 1e-8).unwrap();
    // raw (1, 1e-8) normalized in ℓ1
    let s = 1.0 + 1e-8;
    assert!((w[0] - 1.0 / s).abs() < 1e-15);
    assert!((w[1] - 1e-8 / s).abs() < 1e-22);
    // the variational value Σ a²/θ recovers ‖a‖₁² (up to the floor)
    let v: f64 = [1.0f64, 0.0].iter().zip(&w).map(|(a, t)| a * a / t).sum();
    assert!((v - 1.0).abs() < 1e-7);
}

#[test]
fn weight_update_errors() {
    assert!(lp_weight_update(&[1.0], 0.5, 1e-8).is_err());
    assert!(lp_weight_update(&[1.0], f64::INFINITY, 1e-8).is_err());
    assert!(lp_weight_update(&[-1.0], 1.5, 1e-8).is_err());
    assert_eq!(lp_weight_update(&[0.0, 0.0], 1.5, 1e-8).unwrap().len(), 2);
}

#[test]
fn single_kernel_matches_ridge_for_every_norm() {
    let (bank, y) = random_problem(3, 30, 1);
    let lambda = 0.05;
    let (c, b) = kernel_ridge_solve(&bank.grams()[0], &y, lambda, true).unwrap();
    let reference = &bank.grams()[0] * &c + DVector::from_element(30, b);
    for norm in [
        NormSpec::lp(1.0).unwrap(),
        NormSpec::lp(1.5).unwrap(),
        NormSpec::lp(f64::INFINITY).unwrap(),
        NormSpec::elastic_net(0.4).unwrap(),
    ] {
        for backend in [Backend::ProximalGradient, Backend::AlternatingWeights] {
            let opts = SolverOptions {
                backend,
                tol: 1e-11,
                max_iters: 20000,
                ..Default::default()
            };
            let model = fit(
                &MklProblem {
                    bank: &bank,
                    outputs: &y,
                    norm: norm.clone(),
                    lambda,
                    with_bias: true,
                },
                &opts,
            )
            .unwrap();
            let d = rel_diff(&fitted(&model, &bank), &reference);
            assert!(d < 1e-8, "{} {:?}: {d}", norm.label(), backend);
        }
    }
}

#[test]
fn zero_outputs_give_zero_model() {
    let (bank, _) = random_problem(4, 15, 3);
    let y = DVector::zeros(15);
    for backend in [Backend::ProximalGradient, Backend::AlternatingWeights] {
        let model = fit(
            &MklProblem {
                bank: &bank,
                outputs: &y,
                norm: NormSpec::lp(1.2).unwrap(),
                lambda: 0.1,
                with_bias: true,
            },
            &SolverOptions {
                backend,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(model.dual_coeffs.iter().flatten().all(|a| *a == 0.0));
        assert_eq!(model.bias, 0.0);
        assert_eq!(model.objective, 0.0);
        assert!(model.diagnostics.converged);
    }
}

#[test]
fn predict_hand_built_expansion() {
    let k1 = DMatrix::from_row_slice(1, 2, &[0.5, 0.25]);
    let k2 = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
    let model = MklModel {
        dual_coeffs: vec![vec![2.0, 4.0], vec![-1.0, 0.5]],
        bias: 0.125,
        rkhs_norms: vec![0.0, 0.0],
        objective: 0.0,
        norm: NormSpec::lp(1.0).unwrap(),
        lambda: 1.0,
        diagnostics: Diagnostics {
            iterations: 0,
            residual: 0.0,
            converged: true,
            backend: Backend::ProximalGradient,
            objective_history: vec![],
        },
    };
    let out = predict(&model, &[k1, k2]).unwrap();
    // 0.5·2 + 0.25·4 + 1·(−1) + 2·0.5 + 0.125
    assert_eq!(out[0], 2.125);
    assert!(predict(&model, &[DMatrix::zeros(1, 2)]).is_err());
    assert!(predict(&model, &[DMatrix::zeros(1, 3), DMatrix::zeros(1, 3)]).is_err());
}

#[test]
fn zero_model_predicts_the_bias() {
    let (bank, _) = random_problem(5, 8, 2);
    let y = DVector::from_element(8, 3.0);
    let model = fit(
        &MklProblem {
            bank: &bank,
            outputs: &y,
            norm: NormSpec::lp(1.0).unwrap(),
            lambda: 1.0,
            with_bias: true,
        },
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(model.rkhs_norms.iter().all(|v| *v == 0.0));
    let out = predict(&model, bank.grams()).unwrap();
    assert!(out.iter().all(|v| (v - 3.0).abs() < 1e-12));
}

#[test]
fn reported_quantities_are_consistent() {
    let (bank, y) = random_problem(6, 40, 3);
    let model = fit(
        &MklProblem {
            bank: &bank,
            outputs: &y,
            norm: NormSpec::lp(1.5).unwrap(),
            lambda: 0.01,
            with_bias: true,
        },
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(model.diagnostics.converged);
    for (m, g) in bank.grams().iter().enumerate() {
        let a = DVector::from_column_slice(&model.dual_coeffs[m]);
        let q = a.dot(&(g * &a));
        let r2 = model.rkhs_norms[m].powi(2);
        assert!((q - r2).abs() <= 1e-8 * r2.max(1e-300), "{q} vs {r2}");
    }
    let f = fitted(&model, &bank);
    let loss = (&y - f).norm_squared() / 40.0;
    let pen = norms::psi_norm(&model.rkhs_norms, &model.norm).unwrap();
    let expect = loss + 0.01 * pen * pen;
    assert!((model.objective - expect).abs() <= 1e-10 * expect);
}

#[test]
fn l2_matches_uniform_kernel_ridge() {
    let (bank, y) = random_problem(7, 50, 4);
    let lambda = 0.02;
    let (c, b) = kernel_ridge_solve(&bank.weighted_sum(&[1.0; 4]), &y, lambda, true).unwrap();
    let reference = bank.weighted_sum(&[1.0; 4]) * c + DVector::from_element(50, b);
    for backend in [Backend::ProximalGradient, Backend::AlternatingWeights] {
        let model = fit(
            &MklProblem {
                bank: &bank,
                outputs: &y,
                norm: NormSpec::lp(2.0).unwrap(),
                lambda,
                with_bias: true,
            },
            &SolverOptions {
                backend,
                ..Default::default()
            },
        )
        .unwrap();
        let d = rel_diff(&fitted(&model, &bank), &reference);
        assert!(d < 1e-6, "{backend:?}: {d}");
    }
}

#[test]
fn objective_history_never_increases() {
    for seed in 0..5 {
        let (bank, y) = random_problem(100 + seed, 30, 3);
        for (norm, backend) in [
            (NormSpec::lp(1.0).unwrap(), Backend::ProximalGradient),
            (NormSpec::lp(1.0).unwrap(), Backend::AlternatingWeights),
            (NormSpec::lp(1.5).unwrap(), Backend::AlternatingWeights),
            (
                NormSpec::lp(f64::INFINITY).unwrap(),
                Backend::ProximalGradient,
            ),
            (
                NormSpec::elastic_net(0.5).unwrap(),
                Backend::ProximalGradient,
            ),
        ] {
            let model = fit(
                &MklProblem {
                    bank: &bank,
                    outputs: &y,
                    norm,
                    lambda: 0.01,
                    with_bias: true,
                },
                &SolverOptions {
                    backend,
                    ..Default::default()
                },
            )
            .unwrap();
            for w in model.diagnostics.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{backend:?}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn elastic_net_limits_match_lp() {
    let (bank, y) = random_problem(8, 30, 3);
    let run = |norm: NormSpec| {
        let model = fit(
            &MklProblem {
                bank: &bank,
                outputs: &y,
                norm,
                lambda: 0.01,
                with_bias: true,
            },
            &SolverOptions {
                tol: 1e-11,
                max_iters: 50000,
                ..Default::default()
            },
        )
        .unwrap();
        fitted(&model, &bank)
    };
    let d1 = rel_diff(
        &run(NormSpec::elastic_net(1.0).unwrap()),
        &run(NormSpec::lp(1.0).unwrap()),
    );
    let d0 = rel_diff(
        &run(NormSpec::elastic_net(0.0).unwrap()),
        &run(NormSpec::lp(2.0).unwrap()),
    );
    assert!(d1 < 1e-6, "{d1}");
    assert!(d0 < 1e-6, "{d0}");
}

#[test]
fn permuting_kernels_permutes_the_model() {
    let (bank, y) = random_problem(9, 25, 3);
    let order = [2, 0, 1];
    let permuted = bank.permuted(&order).unwrap();
    let opts = SolverOptions {
        tol: 1e-11,
        max_iters: 50000,
        ..Default::default()
    };
    let problem = |b| MklProblem {
        bank: b,
        outputs: &y,
        norm: NormSpec::lp(1.3).unwrap(),
        lambda: 0.01,
        with_bias: true,
    };
    let a = fit(&problem(&bank), &opts).unwrap();
    let b = fit(&problem(&permuted), &opts).unwrap();
    for (k, &src) in order.iter().enumerate() {
        let scale = a.rkhs_norms.iter().copied().fold(0.0, f64::max);
        assert!((b.rkhs_norms[k] - a.rkhs_norms[src]).abs() <= 1e-6 * scale);
    }
}

#[test]
fn psi_norm_shrinks_along_lambda_path() {
    let (bank, y) = random_problem(10, 30, 3);
    let prepared = PreparedBank::new(&bank, true);
    let lambdas: Vec<f64> = (0..10).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect();
    for norm in [NormSpec::lp(1.0).unwrap(), NormSpec::lp(2.5).unwrap()] {
        let models = prepared
            .fit_path(&y, &norm, &lambdas, &SolverOptions::default())
            .unwrap();
        let values: Vec<f64> = models
            .iter()
            .map(|m| norms::psi_norm(&m.rkhs_norms, &norm).unwrap())
            .collect();
        for w in values.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6) + 1e-12, "{values:?}");
        }
    }
}

#[test]
fn path_fit_agrees_with_cold_start() {
    let (bank, y) = random_problem(11, 30, 3);
    let prepared = PreparedBank::new(&bank, true);
    let norm = NormSpec::lp(1.2).unwrap();
    let lambdas = [0.1, 0.001, 0.01];
    let opts = SolverOptions::default();
    let path = prepared.fit_path(&y, &norm, &lambdas, &opts).unwrap();
    for (model, &lambda) in path.iter().zip(&lambdas) {
        let cold = prepared.fit(&y, &norm, lambda, &opts).unwrap();
        assert_eq!(model.lambda, lambda);
        assert!((model.objective - cold.objective).abs() <= 1e-6 * cold.objective);
    }
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let (bank, y) = random_problem(12, 30, 3);
    let model = fit(
        &MklProblem {
            bank: &bank,
            outputs: &y,
            norm: NormSpec::lp(1.0).unwrap(),
            lambda: 1e-4,
            with_bias: true,
        },
        &SolverOptions {
            max_iters: 1,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(!model.diagnostics.converged);
    assert!(model.diagnostics.residual > 0.0);
    assert_eq!(model.diagnostics.iterations, 1);
}

#[test]
fn invalid_problems_are_rejected() {
    let (bank, y) = random_problem(13, 10, 2);
    let base = MklProblem {
        bank: &bank,
        outputs: &y,
        norm: NormSpec::lp(1.0).unwrap(),
        lambda: 0.0,
        with_bias: true,
    };
    assert!(fit(&base, &SolverOptions::default()).is_err());
    let short = DVector::zeros(3);
    let p = MklProblem {
        outputs: &short,
        lambda: 0.1,
        ..base.clone()
    };
    assert!(matches!(
        fit(&p, &SolverOptions::default()),
        Err(crate::MklError::Dimension(_))
    ));
    let p = MklProblem {
        norm: NormSpec::lp(1.0).unwrap(),
        lambda: 0.1,
        ..base.clone()
    };
    let opts = SolverOptions {
        tol: 0.0,
        ..Default::default()
    };
    assert!(fit(&p, &opts).is_err());
    let p = MklProblem {
        norm: NormSpec::block(3.0, 1.5, vec![vec![0, 1]]).unwrap(),
        lambda: 0.1,
        ..base
    };
    assert!(matches!(
        fit(&p, &SolverOptions::default()),
        Err(crate::MklError::Unsupported(_))
    ));
}
