//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{MklError, Result};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// ascending order (columns of `vectors` follow the same order).
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SortedEigen { values, vectors }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `P G P` with `P = I - 11ᵀ/n`.
pub fn double_center(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    if n == 0 {
        return g.clone();
    }
    let row_means: Vec<f64> = (0..n).map(|i| g.row(i).sum() / n as f64).collect();
    let col_means: Vec<f64> = (0..n).map(|j| g.column(j).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    DMatrix::from_fn(n, n, |i, j| g[(i, j)] - row_means[i] - col_means[j] + grand)
}

pub fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

pub fn center_vector(v: &DVector<f64>) -> DVector<f64> {
    if v.is_empty() {
        return v.clone();
    }
    v.add_scalar(-v.mean())
}

/// Columns `U_k sqrt(λ_k)` for every eigenvalue above `rel_floor · max(λ)`.
/// `Φ Φᵀ` reproduces the matrix up to the discarded spectrum.
#[derive(Debug, Clone)]
pub struct Factor {
    /// n × r, `Φ = U Λ^{1/2}`.
    pub features: DMatrix<f64>,
    /// n × r, orthonormal eigenvectors.
    pub basis: DMatrix<f64>,
    /// The r retained eigenvalues.
    pub values: DVector<f64>,
}

impl Factor {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// Coefficients `α = U Λ^{-1/2} β` of the expansion whose values at the
    /// data are `Φ β`.
    pub fn coeffs_from_features(&self, beta: &DVector<f64>) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            beta.len(),
            beta.iter()
                .zip(self.values.iter())
                .map(|(b, l)| b / l.sqrt()),
        );
        &self.basis * scaled
    }
}

pub fn psd_factor(g: &DMatrix<f64>, rel_floor: f64) -> Factor {
    let eig = sym_eigen(g);
    let top = eig.values.iter().copied().fold(0.0f64, f64::max);
    let cut = rel_floor * top;
    let keep: Vec<usize> = (0..eig.values.len())
        .rev()
        .filter(|&k| top > 0.0 && eig.values[k] > cut)
        .collect();
    let n = g.nrows();
    let r = keep.len();
    let mut features = DMatrix::zeros(n, r);
    let mut basis = DMatrix::zeros(n, r);
    let mut values = DVector::zeros(r);
    for (dst, &k) in keep.iter().enumerate() {
        let lam = eig.values[k];
        values[dst] = lam;
        basis.set_column(dst, &eig.vectors.column(k));
        features.set_column(dst, &(eig.vectors.column(k) * lam.sqrt()));
    }
    Factor {
        features,
        basis,
        values,
    }
}

/// Solves `A x = b` for symmetric positive definite `A`, retrying with
/// growing diagonal jitter before giving up.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = (a.trace().abs() / a.nrows().max(1) as f64).max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    for attempt in 0..6 {
        let mut m = symmetrize(a);
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = m.cholesky() {
            let x = chol.solve(b);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
        jitter = scale * 1e-14 * 100f64.powi(attempt);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let hi = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let lo = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    Err(MklError::Numerical {
        message: "linear system is singular after jitter".into(),
        condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
    })
}

/// Largest eigenvalue of a symmetric PSD matrix.
pub fn spectral_norm_psd(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0f64, f64::max)
}
