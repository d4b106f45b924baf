use nalgebra::{DMatrix, DVector, SymmetricEigen};
use psimkl::kernels::{estimate_kappa, gram_bank, Dataset, KernelSpec, KAPPA_JITTER};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn centered(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let p = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    &p * g * &p
}

/// Orthonormal basis of the retained range, computed from scratch.
fn range_basis(g: &DMatrix<f64>) -> DMatrix<f64> {
    let c = centered(g);
    let tr = c.trace();
    let eig = SymmetricEigen::new(c);
    let cols: Vec<DVector<f64>> = (0..g.nrows())
        .filter(|&k| eig.eigenvalues[k] > KAPPA_JITTER * tr)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// For two subspaces the ratio ‖u + v‖² / (‖u‖² + ‖v‖²) is minimized at
/// `1 - cos θ_min`, θ_min the smallest principal angle.
fn principal_angle_kappa(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let cross = a.transpose() * b;
    let svd = cross.svd(false, false);
    1.0 - svd.singular_values.max()
}

/// Dense generalized eigenproblem `A v = μ B v` on the stacked
/// 2n-dimensional coefficient space, `f_m = G̃_m α_m`, with A the summed
/// and B the block-diagonal quadratic form, restricted to the retained
/// ranges.
fn generalized_kappa(g1: &DMatrix<f64>, g2: &DMatrix<f64>) -> f64 {
    let n = g1.nrows();
    let (c1, c2) = (centered(g1), centered(g2));
    let mut f = DMatrix::zeros(n, 2 * n);
    f.view_mut((0, 0), (n, n)).copy_from(&c1);
    f.view_mut((0, n), (n, n)).copy_from(&c2);
    // B = blockdiag(G̃_m²) has eigenpairs (λ², u) for each eigenpair (λ, u)
    // of G̃_m; whiten it on the retained range with columns u/λ
    let mut w_cols = Vec::new();
    for (offset, c) in [(0, &c1), (n, &c2)] {
        let tr = c.trace();
        let eig = SymmetricEigen::new(c.clone());
        for k in 0..n {
            let lam = eig.eigenvalues[k];
            if lam > KAPPA_JITTER * tr {
                let mut col = DVector::zeros(2 * n);
                col.rows_mut(offset, n)
                    .copy_from(&(eig.eigenvectors.column(k) / lam));
                w_cols.push(col);
            }
        }
    }
    let w = DMatrix::from_columns(&w_cols);
    // (FW)ᵀ(FW) rather than Wᵀ(FᵀF)W: W carries 1/λ factors
    let fw = &f * &w;
    let reduced = fw.transpose() * &fw;
    SymmetricEigen::new(reduced).eigenvalues.min()
}

fn bank_on_two_coordinates(seed: u64, width: f64) -> psimkl::GramBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 100;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
    let data = Dataset::new(x, DVector::zeros(n)).unwrap();
    let specs = [
        KernelSpec::new(0, width).unwrap(),
        KernelSpec::new(1, width).unwrap(),
    ];
    gram_bank(&data, &specs).unwrap()
}

#[test]
fn kappa_of_independent_coordinates_matches_dense_oracles() {
    for width in [0.5, 1.0] {
        let bank = bank_on_two_coordinates(2024, width);
        let est = estimate_kappa(&bank);
        let g = bank.grams();
        let angle = principal_angle_kappa(&range_basis(&g[0]), &range_basis(&g[1]));
        let dense = generalized_kappa(&g[0], &g[1]);
        assert!(!est.rank_deficient);
        assert!((est.value - angle).abs() < 1e-8, "{} vs {angle}", est.value);
        assert!((est.value - dense).abs() < 1e-5, "{} vs {dense}", est.value);
    }
}

#[test]
fn kappa_of_independent_wide_kernels_exceeds_half() {
    for seed in 0..5 {
        let est = estimate_kappa(&bank_on_two_coordinates(seed, 1.0));
        assert!(
            est.value > 0.5 && est.value <= 1.0,
            "seed {seed}: kappa {}",
            est.value
        );
    }
}

#[test]
fn narrower_kernels_have_smaller_kappa() {
    // more retained directions per kernel leave more room for cancellation
    let wide = estimate_kappa(&bank_on_two_coordinates(7, 1.0));
    let narrow = estimate_kappa(&bank_on_two_coordinates(7, 0.2));
    assert!(narrow.value < wide.value);
    assert!(narrow.ranks[0] > wide.ranks[0]);
}
