//! ψ-norm MKL for squared loss:
//!
//! ```text
//! min_{f_m ∈ H_m, b}  (1/n) Σ_i (y_i - Σ_m f_m(x_i) - b)² + λ ‖(‖f_m‖_{H_m})_m‖_ψ²
//! ```
//!
//! By the representer theorem each `f_m` is a kernel expansion over the
//! training points. Internally every Gram matrix is factored as
//! `G_m ≈ Φ_m Φ_mᵀ`, turning the problem into a group-structured one over
//! `β_m` with `‖f_m‖ = ‖β_m‖₂`. The bias is removed by centering.

mod prox;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dimension, invalid, Result};
use crate::kernels::GramBank;
use crate::linalg::{self, Factor};
use crate::norms::{self, Exponent, NormSpec};

pub(crate) use prox::prox_squared;

/// Smallest accepted regularization parameter.
pub const MIN_LAMBDA: f64 = 1e-14;
/// Eigen-directions of a Gram matrix below this fraction of its largest
/// eigenvalue are dropped from the factorization.
pub const RANK_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Alternate kernel ridge on `Σ θ_m G_m` with the closed-form weight
    /// update. Applies to ℓp with `1 ≤ p ≤ 2`.
    AlternatingWeights,
    /// Accelerated proximal gradient with monotone safeguard and restarts.
    ProximalGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub weight_floor: f64,
    pub backend: Backend,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-8,
            weight_floor: 1e-8,
            backend: Backend::ProximalGradient,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if !(self.weight_floor > 0.0) {
            return Err(invalid(format!(
                "weight floor must be positive, got {}",
                self.weight_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MklProblem<'a> {
    pub bank: &'a GramBank,
    pub outputs: &'a DVector<f64>,
    pub norm: NormSpec,
    pub lambda: f64,
    pub with_bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Norm of the proximal-gradient mapping at the returned point.
    pub residual: f64,
    pub converged: bool,
    pub backend: Backend,
    /// Objective after every iteration (index 0 is the starting point).
    pub objective_history: Vec<f64>,
}

/// A fitted estimator: `f(x) = Σ_m Σ_i α_{m,i} k_m(x_i, x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MklModel {
    /// `dual_coeffs[m][i] = α_{m,i}`.
    pub dual_coeffs: Vec<Vec<f64>>,
    pub bias: f64,
    /// `‖f_m‖_{H_m} = √(α_mᵀ G_m α_m)`.
    pub rkhs_norms: Vec<f64>,
    pub objective: f64,
    pub norm: NormSpec,
    pub lambda: f64,
    pub diagnostics: Diagnostics,
}

impl MklModel {
    pub fn num_kernels(&self) -> usize {
        self.dual_coeffs.len()
    }

    pub fn num_points(&self) -> usize {
        self.dual_coeffs.first().map_or(0, Vec::len)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= MIN_LAMBDA) || !lambda.is_finite() {
        return Err(invalid(format!(
            "lambda must be at least {MIN_LAMBDA:e}, got {lambda}"
        )));
    }
    Ok(())
}

/// Kernel ridge regression
/// `min_{c,b} (1/n)‖y - Gc - b1‖² + λ cᵀGc` by a direct solve.
///
/// With a bias the minimizer satisfies `1ᵀc = 0` and
/// `(PGP + nλI) c = Py` with the centering projector `P`.
pub fn kernel_ridge_solve(
    gram: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    with_bias: bool,
) -> Result<(DVector<f64>, f64)> {
    let n = y.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(dimension(format!(
            "gram is {}x{}, outputs have length {n}",
            gram.nrows(),
            gram.ncols()
        )));
    }
    if n == 0 {
        return Err(invalid("kernel ridge needs at least one point"));
    }
    check_lambda(lambda)?;
    let nl = n as f64 * lambda;
    let (mut a, rhs) = if with_bias {
        (linalg::double_center(gram), linalg::center_vector(y))
    } else {
        (linalg::symmetrize(gram), y.clone())
    };
    for i in 0..n {
        a[(i, i)] += nl;
    }
    let c = linalg::spd_solve(&a, &rhs)?;
    let bias = if with_bias {
        (y - gram * &c).mean()
    } else {
        0.0
    };
    Ok((c, bias))
}

/// Kernel weights from the variational form of the squared ℓp norm.
///
/// For `1 ≤ p ≤ 2`, `‖a‖_p² = min { Σ a_m²/θ_m : θ ≥ 0, ‖θ‖_{p/(2-p)} ≤ 1 }`
/// with minimizer `θ_m ∝ a_m^{2-p}`. For `p > 2` the squared norm is the
/// maximum of `Σ θ_m a_m²` over `‖θ‖_{p/(p-2)} ≤ 1`, attained at
/// `θ_m ∝ a_m^{p-2}`. Raw weights are floored at `floor` before
/// normalization; all-zero norms give uniform weights.
pub fn lp_weight_update(rkhs_norms: &[f64], p: f64, floor: f64) -> Result<Vec<f64>> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!(
            "weight update needs 1 <= p < inf, got {p}"
        )));
    }
    if !(floor > 0.0) {
        return Err(invalid("weight floor must be positive"));
    }
    if rkhs_norms.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
        return Err(invalid("rkhs norms must be finite and nonnegative"));
    }
    let m = rkhs_norms.len();
    if p == 2.0 {
        return Ok(vec![1.0; m]);
    }
    let all_zero = rkhs_norms.iter().all(|a| *a == 0.0);
    let raw: Vec<f64> = if all_zero {
        vec![1.0; m]
    } else {
        let e = (2.0 - p).abs();
        rkhs_norms.iter().map(|a| a.powf(e).max(floor)).collect()
    };
    // ‖θ‖_r = 1 with r = p/|2-p|; r = ∞ never happens here
    let r = p / (2.0 - p).abs();
    let scale = norms::lp_norm(&raw, Exponent::new(r)?);
    Ok(raw.into_iter().map(|t| t / scale).collect())
}

/// Gram factorizations and centered features shared by every fit on the
/// same bank.
#[derive(Debug, Clone)]
pub struct PreparedBank<'a> {
    bank: &'a GramBank,
    with_bias: bool,
    factors: Vec<Factor>,
    /// Block offsets into the stacked coefficient vector.
    offsets: Vec<usize>,
    /// n × D, columns of every (centered) Φ_m side by side.
    design: DMatrix<f64>,
    /// Lipschitz constant of the loss gradient.
    lipschitz: f64,
}

impl<'a> PreparedBank<'a> {
    pub fn new(bank: &'a GramBank, with_bias: bool) -> Self {
        let factors: Vec<Factor> = bank
            .grams()
            .iter()
            .map(|g| linalg::psd_factor(g, RANK_FLOOR))
            .collect();
        let mut offsets = Vec::with_capacity(factors.len() + 1);
        offsets.push(0);
        for f in &factors {
            offsets.push(offsets.last().unwrap() + f.rank());
        }
        let n = bank.num_points();
        let total = *offsets.last().unwrap();
        let mut design = DMatrix::zeros(n, total);
        for (m, f) in factors.iter().enumerate() {
            let block = if with_bias {
                linalg::center_columns(&f.features)
            } else {
                f.features.clone()
            };
            design
                .view_mut((0, offsets[m]), (n, f.rank()))
                .copy_from(&block);
        }
        let gram_sum = &design * design.transpose();
        let lipschitz =
            (2.0 / n as f64 * linalg::spectral_norm_psd(&gram_sum)).max(f64::MIN_POSITIVE);
        Self {
            bank,
            with_bias,
            factors,
            offsets,
            design,
            lipschitz,
        }
    }

    pub fn bank(&self) -> &GramBank {
        self.bank
    }

    fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn block<'v>(&self, x: &'v DVector<f64>, m: usize) -> nalgebra::DVectorView<'v, f64> {
        x.rows(self.offsets[m], self.offsets[m + 1] - self.offsets[m])
    }

    fn block_norms(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.factors.len())
            .map(|m| self.block(x, m).norm())
            .collect()
    }

    fn target(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.with_bias {
            linalg::center_vector(y)
        } else {
            y.clone()
        }
    }

    /// Smooth loss and its gradient at `x`.
    fn loss_grad(&self, x: &DVector<f64>, yt: &DVector<f64>) -> (f64, DVector<f64>) {
        let n = yt.len() as f64;
        let resid = yt - &self.design * x;
        let loss = resid.norm_squared() / n;
        let grad = self.design.tr_mul(&resid) * (-2.0 / n);
        (loss, grad)
    }

    fn loss(&self, x: &DVector<f64>, yt: &DVector<f64>) -> f64 {
        (yt - &self.design * x).norm_squared() / yt.len() as f64
    }

    fn penalty(&self, x: &DVector<f64>, norm: &NormSpec, lambda: f64) -> f64 {
        let v = norms::psi_norm_unchecked(&self.block_norms(x), norm);
        lambda * v * v
    }

    fn prox(&self, u: &DVector<f64>, c: f64, norm: &NormSpec) -> DVector<f64> {
        let w = self.block_norms(u);
        let v = prox_squared(&w, c, norm);
        let mut out = DVector::zeros(u.len());
        for m in 0..self.factors.len() {
            if w[m] > 0.0 && v[m] > 0.0 {
                let s = v[m] / w[m];
                let (a, b) = (self.offsets[m], self.offsets[m + 1]);
                out.rows_mut(a, b - a).copy_from(&(u.rows(a, b - a) * s));
            }
        }
        out
    }

    /// `L ‖x - prox(x - ∇f(x)/L)‖`: zero exactly at the minimizer.
    fn stationarity(
        &self,
        x: &DVector<f64>,
        yt: &DVector<f64>,
        norm: &NormSpec,
        lambda: f64,
    ) -> f64 {
        let (_, g) = self.loss_grad(x, yt);
        let step = 1.0 / self.lipschitz;
        let next = self.prox(&(x - g * step), lambda * step, norm);
        (x - next).norm() * self.lipschitz
    }

    fn validate(
        &self,
        y: &DVector<f64>,
        norm: &NormSpec,
        lambda: f64,
        opts: &SolverOptions,
    ) -> Result<()> {
        if y.len() != self.bank.num_points() {
            return Err(dimension(format!(
                "{} outputs for {} points",
                y.len(),
                self.bank.num_points()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("outputs must be finite"));
        }
        check_lambda(lambda)?;
        opts.validate()?;
        norm.validate(self.bank.num_kernels())
    }

    /// Fits one model.
    pub fn fit(
        &self,
        y: &DVector<f64>,
        norm: &NormSpec,
        lambda: f64,
        opts: &SolverOptions,
    ) -> Result<MklModel> {
        self.fit_warm(y, norm, lambda, opts, None).map(|(m, _)| m)
    }

    /// Fits along a λ path (solved in decreasing λ order with warm starts);
    /// models are returned in the order of `lambdas`.
    pub fn fit_path(
        &self,
        y: &DVector<f64>,
        norm: &NormSpec,
        lambdas: &[f64],
        opts: &SolverOptions,
    ) -> Result<Vec<MklModel>> {
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
        let mut out: Vec<Option<MklModel>> = vec![None; lambdas.len()];
        let mut warm: Option<DVector<f64>> = None;
        for k in order {
            let (model, x) = self.fit_warm(y, norm, lambdas[k], opts, warm.as_ref())?;
            warm = Some(x);
            out[k] = Some(model);
        }
        Ok(out
            .into_iter()
            .map(|m| m.expect("every lambda is fitted"))
            .collect())
    }

    fn fit_warm(
        &self,
        y: &DVector<f64>,
        norm: &NormSpec,
        lambda: f64,
        opts: &SolverOptions,
        warm: Option<&DVector<f64>>,
    ) -> Result<(MklModel, DVector<f64>)> {
        self.validate(y, norm, lambda, opts)?;
        let use_weights = opts.backend == Backend::AlternatingWeights
            && matches!(norm, NormSpec::Lp { p } if p.value() <= 2.0);
        let (x, iterations, history, backend) = if use_weights {
            let (x, it, hist) = self.alternating_weights(y, norm, lambda, opts)?;
            (x, it, hist, Backend::AlternatingWeights)
        } else {
            prox::check_supported(norm)?;
            let (x, it, hist) = self.proximal_gradient(y, norm, lambda, opts, warm);
            (x, it, hist, Backend::ProximalGradient)
        };
        let yt = self.target(y);
        let residual = self.stationarity(&x, &yt, norm, lambda);
        let threshold = opts.tol * (1.0 + y.norm());
        let model = self.model_from(
            y,
            &x,
            norm,
            lambda,
            Diagnostics {
                iterations,
                residual,
                converged: residual <= threshold,
                backend,
                objective_history: history,
            },
        );
        Ok((model, x))
    }

    fn model_from(
        &self,
        y: &DVector<f64>,
        x: &DVector<f64>,
        norm: &NormSpec,
        lambda: f64,
        diagnostics: Diagnostics,
    ) -> MklModel {
        let n = y.len();
        let grams = self.bank.grams();
        let mut fitted = DVector::zeros(n);
        let mut dual_coeffs = Vec::with_capacity(grams.len());
        let mut rkhs_norms = Vec::with_capacity(grams.len());
        for (m, f) in self.factors.iter().enumerate() {
            let beta = self.block(x, m).into_owned();
            if beta.iter().all(|b| *b == 0.0) {
                dual_coeffs.push(vec![0.0; n]);
                rkhs_norms.push(0.0);
                continue;
            }
            let alpha = f.coeffs_from_features(&beta);
            let ga = &grams[m] * &alpha;
            rkhs_norms.push(alpha.dot(&ga).max(0.0).sqrt());
            fitted += ga;
            dual_coeffs.push(alpha.iter().copied().collect());
        }
        let bias = if self.with_bias {
            (y - &fitted).mean()
        } else {
            0.0
        };
        let loss = (y - fitted).add_scalar(-bias).norm_squared() / n as f64;
        let pen = norms::psi_norm_unchecked(&rkhs_norms, norm);
        MklModel {
            dual_coeffs,
            bias,
            rkhs_norms,
            objective: loss + lambda * pen * pen,
            norm: norm.clone(),
            lambda,
            diagnostics,
        }
    }

    fn proximal_gradient(
        &self,
        y: &DVector<f64>,
        norm: &NormSpec,
        lambda: f64,
        opts: &SolverOptions,
        warm: Option<&DVector<f64>>,
    ) -> (DVector<f64>, usize, Vec<f64>) {
        let yt = self.target(y);
        let step = 1.0 / self.lipschitz;
        let c = lambda * step;
        let threshold = opts.tol * (1.0 + y.norm());
        let objective = |x: &DVector<f64>| self.loss(x, &yt) + self.penalty(x, norm, lambda);

        let mut x = match warm {
            Some(w) if w.len() == self.dim() => w.clone(),
            _ => DVector::zeros(self.dim()),
        };
        let mut fx = objective(&x);
        let mut history = vec![fx];
        if self.stationarity(&x, &yt, norm, lambda) <= threshold {
            return (x, 0, history);
        }
        let mut z = x.clone();
        let mut t = 1.0f64;
        let mut iterations = 0;
        for it in 1..=opts.max_iters {
            iterations = it;
            let (_, g) = self.loss_grad(&z, &yt);
            let u = self.prox(&(&z - g * step), c, norm);
            let mapping = (&z - &u).norm() * self.lipschitz;
            let fu = objective(&u);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if fu <= fx {
                let restart = (&z - &u).dot(&(&u - &x)) > 0.0;
                let momentum = if restart { 0.0 } else { (t - 1.0) / t_next };
                z = &u + (&u - &x) * momentum;
                x = u;
                fx = fu;
                t = if restart { 1.0 } else { t_next };
            } else {
                // monotone safeguard: keep x, drop momentum
                z = x.clone();
                t = 1.0;
            }
            history.push(fx);
            if mapping <= threshold && self.stationarity(&x, &yt, norm, lambda) <= threshold {
                break;
            }
        }
        (x, iterations, history)
    }

    fn alternating_weights(
        &self,
        y: &DVector<f64>,
        norm: &NormSpec,
        lambda: f64,
        opts: &SolverOptions,
    ) -> Result<(DVector<f64>, usize, Vec<f64>)> {
        let p = match norm {
            NormSpec::Lp { p } => p.value(),
            _ => unreachable!("alternating weights is only selected for lp norms"),
        };
        let m = self.factors.len();
        let yt = self.target(y);
        let threshold = opts.tol * (1.0 + y.norm());
        let mut theta = lp_weight_update(&vec![1.0; m], p, opts.weight_floor)?;
        let mut x = DVector::zeros(self.dim());
        let objective = |x: &DVector<f64>| self.loss(x, &yt) + self.penalty(x, norm, lambda);
        let mut history = vec![objective(&x)];
        let mut iterations = 0;
        for it in 1..=opts.max_iters {
            iterations = it;
            let k = self.bank.weighted_sum(&theta);
            let (c, _) = kernel_ridge_solve(&k, y, lambda, self.with_bias)?;
            // f_m = θ_m G_m c, i.e. β_m = θ_m Φ_mᵀ c
            let mut next = DVector::zeros(self.dim());
            for (mm, f) in self.factors.iter().enumerate() {
                let beta = f.features.tr_mul(&c) * theta[mm];
                let (a, b) = (self.offsets[mm], self.offsets[mm + 1]);
                next.rows_mut(a, b - a).copy_from(&beta);
            }
            let f_next = objective(&next);
            let prev = *history.last().unwrap();
            x = next;
            history.push(f_next);
            theta = lp_weight_update(&self.block_norms(&x), p, opts.weight_floor)?;
            if p == 2.0 {
                break;
            }
            let decrease = (prev - f_next).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if decrease <= opts.tol && self.stationarity(&x, &yt, norm, lambda) <= threshold {
                break;
            }
        }
        Ok((x, iterations, history))
    }
}

/// Fits ψ-norm MKL on `problem`.
pub fn fit(problem: &MklProblem<'_>, opts: &SolverOptions) -> Result<MklModel> {
    if problem.outputs.len() != problem.bank.num_points() {
        return Err(dimension(format!(
            "{} outputs for {} points",
            problem.outputs.len(),
            problem.bank.num_points()
        )));
    }
    check_lambda(problem.lambda)?;
    PreparedBank::new(problem.bank, problem.with_bias).fit(
        problem.outputs,
        &problem.norm,
        problem.lambda,
        opts,
    )
}

/// `ŷ_j = Σ_m Σ_i α_{m,i} K_m[j, i] + b` for cross-Gram matrices
/// `K_m` (n_test × n_train).
pub fn predict(model: &MklModel, cross: &[DMatrix<f64>]) -> Result<DVector<f64>> {
    if cross.len() != model.num_kernels() {
        return Err(dimension(format!(
            "{} cross-gram matrices for {} kernels",
            cross.len(),
            model.num_kernels()
        )));
    }
    let n_test = cross.first().map_or(0, |k| k.nrows());
    let mut out = DVector::from_element(n_test, model.bias);
    for (k, alpha) in cross.iter().zip(&model.dual_coeffs) {
        if k.nrows() != n_test || k.ncols() != alpha.len() {
            return Err(dimension(format!(
                "cross-gram is {}x{}, expected {n_test}x{}",
                k.nrows(),
                k.ncols(),
                alpha.len()
            )));
        }
        if alpha.iter().all(|a| *a == 0.0) {
            continue;
        }
        out += k * DVector::from_column_slice(alpha);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
