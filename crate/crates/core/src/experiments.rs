//! Synthetic pipelines: the bound-vs-p curve and the homogeneous /
//! inhomogeneous generalization-error sweeps.
//!
//! Seeds: repetition `k` of a sweep with master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` with its stream set to `k`, so the result
//! of a repetition depends only on `(s, k)` and never on scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::bounds::{self, BoundInputs};
use crate::error::{dimension, invalid, Result};
use crate::kernels::{gram_bank, Dataset, KernelSpec};
use crate::norms::NormSpec;
use crate::solver::{MklModel, PreparedBank, SolverOptions};

/// Random-design regression with one Gaussian kernel per input coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    /// One width per coordinate, shared by the truth and the kernel on it.
    pub widths: Vec<f64>,
    pub centers_per_kernel: usize,
    pub noise_std: f64,
    pub n_train: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// d = 20, every width 0.5.
    pub fn homogeneous(n_train: usize, seed: u64) -> Self {
        Self {
            d: 20,
            widths: vec![0.5; 20],
            centers_per_kernel: 5,
            noise_std: 0.1,
            n_train,
            seed,
        }
    }

    /// d = 20, first width 0.01, the rest 0.5.
    pub fn inhomogeneous(n_train: usize, seed: u64) -> Self {
        let mut spec = Self::homogeneous(n_train, seed);
        spec.widths[0] = 0.01;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.widths.len() != self.d {
            return Err(dimension(format!(
                "{} widths for dimension {}",
                self.widths.len(),
                self.d
            )));
        }
        if self.widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(invalid("widths must be positive and finite"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid(format!(
                "noise_std must be nonnegative, got {}",
                self.noise_std
            )));
        }
        if self.n_train == 0 {
            return Err(invalid("n_train must be positive"));
        }
        Ok(())
    }

    pub fn kernel_specs(&self) -> Result<Vec<KernelSpec>> {
        self.widths
            .iter()
            .enumerate()
            .map(|(c, &w)| KernelSpec::new(c, w))
            .collect()
    }
}

/// `f*(x) = Σ_m Σ_i coeffs[(i,m)] exp(-(x_m - centers[(i,m)])² / (2 widths[m]²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthFunction {
    pub centers: DMatrix<f64>,
    pub coeffs: DMatrix<f64>,
    pub widths: Vec<f64>,
}

impl TruthFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (m, w) in self.widths.iter().enumerate() {
            for i in 0..self.centers.nrows() {
                let t = x[m] - self.centers[(i, m)];
                total += self.coeffs[(i, m)] * (-t * t / (2.0 * w * w)).exp();
            }
        }
        total
    }

    /// The same centers with every coefficient set to zero.
    pub fn zeroed(mut self) -> Self {
        self.coeffs.fill(0.0);
        self
    }
}

pub fn sample_truth<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> TruthFunction {
    let k = spec.centers_per_kernel;
    let centers = DMatrix::from_fn(k, spec.d, |_, _| rng.random::<f64>());
    let coeffs = DMatrix::from_fn(k, spec.d, |_, _| StandardNormal.sample(rng));
    TruthFunction {
        centers,
        coeffs,
        widths: spec.widths.clone(),
    }
}

/// Uniform inputs on `[0,1]^d`, outputs `f*(x) + N(0, noise_std²)`.
pub fn sample_dataset<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    truth: &TruthFunction,
    rng: &mut R,
) -> Result<Dataset> {
    let n = spec.n_train;
    let inputs = DMatrix::from_fn(n, spec.d, |_, _| rng.random::<f64>());
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let outputs = DVector::from_fn(n, |i, _| {
        let row: Vec<f64> = inputs.row(i).iter().copied().collect();
        truth.eval(&row) + spec.noise_std * noise[i]
    });
    Dataset::new(inputs, outputs)
}

#[derive(Debug, Clone, Copy)]
struct Bump {
    center: f64,
    width: f64,
    weight: f64,
}

impl Bump {
    fn eval(&self, x: f64) -> f64 {
        let t = x - self.center;
        self.weight * (-t * t / (2.0 * self.width * self.width)).exp()
    }
}

/// A function `Σ_j g_j(x_j) + b` where every `g_j` is a weighted sum of
/// Gaussian bumps on coordinate `j`.
#[derive(Debug, Clone)]
pub struct AdditiveGaussian {
    terms: Vec<Vec<Bump>>,
    bias: f64,
}

/// `∫₀¹ exp(-(x-c)²/(2w²)) dx`.
fn bump_mean(c: f64, w: f64) -> f64 {
    let k = w * std::f64::consts::SQRT_2;
    w * (std::f64::consts::PI / 2.0).sqrt() * (erf((1.0 - c) / k) - erf(-c / k))
}

/// `∫₀¹ exp(-(x-a)²/(2v²) - (x-b)²/(2w²)) dx`.
fn bump_product(a: f64, v: f64, b: f64, w: f64) -> f64 {
    let (v2, w2) = (v * v, w * w);
    let scale = (-(a - b).powi(2) / (2.0 * (v2 + w2))).exp();
    if scale == 0.0 {
        return 0.0;
    }
    let precision = 1.0 / v2 + 1.0 / w2;
    let mid = (a / v2 + b / w2) / precision;
    let k = (precision / 2.0).sqrt();
    scale
        * (std::f64::consts::PI / (2.0 * precision)).sqrt()
        * (erf((1.0 - mid) * k) - erf(-mid * k))
}

impl AdditiveGaussian {
    pub fn from_truth(truth: &TruthFunction) -> Self {
        let terms = truth
            .widths
            .iter()
            .enumerate()
            .map(|(m, &w)| {
                (0..truth.centers.nrows())
                    .filter(|&i| truth.coeffs[(i, m)] != 0.0)
                    .map(|i| Bump {
                        center: truth.centers[(i, m)],
                        width: w,
                        weight: truth.coeffs[(i, m)],
                    })
                    .collect()
            })
            .collect();
        Self { terms, bias: 0.0 }
    }

    /// The kernel expansion of a fitted model over its training inputs.
    pub fn from_model(
        model: &MklModel,
        train_inputs: &DMatrix<f64>,
        specs: &[KernelSpec],
    ) -> Result<Self> {
        if specs.len() != model.num_kernels() {
            return Err(dimension(format!(
                "{} specs for {} kernels",
                specs.len(),
                model.num_kernels()
            )));
        }
        if train_inputs.nrows() != model.num_points() {
            return Err(dimension(format!(
                "{} training rows for a model over {} points",
                train_inputs.nrows(),
                model.num_points()
            )));
        }
        let d = train_inputs.ncols();
        let mut terms = vec![Vec::new(); d];
        for (spec, alpha) in specs.iter().zip(&model.dual_coeffs) {
            if spec.coordinate >= d {
                return Err(dimension(format!(
                    "kernel coordinate {} out of range",
                    spec.coordinate
                )));
            }
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    terms[spec.coordinate].push(Bump {
                        center: train_inputs[(i, spec.coordinate)],
                        width: spec.width,
                        weight: a,
                    });
                }
            }
        }
        Ok(Self {
            terms,
            bias: model.bias,
        })
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.bias
            + self
                .terms
                .iter()
                .zip(x)
                .map(|(bumps, &xj)| bumps.iter().map(|b| b.eval(xj)).sum::<f64>())
                .sum::<f64>()
    }

    /// `self - other`, padding the shorter coordinate list.
    pub fn minus(&self, other: &Self) -> Self {
        let d = self.dim().max(other.dim());
        let terms = (0..d)
            .map(|j| {
                let mut v: Vec<Bump> = self.terms.get(j).cloned().unwrap_or_default();
                if let Some(o) = other.terms.get(j) {
                    v.extend(o.iter().map(|b| Bump {
                        weight: -b.weight,
                        ..*b
                    }));
                }
                v
            })
            .collect();
        Self {
            terms,
            bias: self.bias - other.bias,
        }
    }

    /// `E[g(X)²]` for `X` uniform on `[0,1]^d`, in closed form.
    pub fn second_moment(&self) -> f64 {
        let mut variance = 0.0;
        let mut mean = self.bias;
        for bumps in &self.terms {
            let m1: f64 = bumps
                .iter()
                .map(|b| b.weight * bump_mean(b.center, b.width))
                .sum();
            let mut m2 = 0.0;
            for (k, a) in bumps.iter().enumerate() {
                m2 += a.weight * a.weight * bump_product(a.center, a.width, a.center, a.width);
                for b in &bumps[k + 1..] {
                    m2 += 2.0
                        * a.weight
                        * b.weight
                        * bump_product(a.center, a.width, b.center, b.width);
                }
            }
            variance += (m2 - m1 * m1).max(0.0);
            mean += m1;
        }
        variance + mean * mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub value: f64,
    /// Standard error of a Monte Carlo estimate; 0 for the exact method.
    pub std_error: f64,
}

/// `‖f̂ - f*‖²` in `L²` of the uniform distribution on `[0,1]^d`.
pub fn generalization_error(
    model: &MklModel,
    train_inputs: &DMatrix<f64>,
    specs: &[KernelSpec],
    truth: &TruthFunction,
    method: ErrorMethod,
) -> Result<ErrorEstimate> {
    if truth.widths.len() != train_inputs.ncols() {
        return Err(dimension(format!(
            "truth has {} coordinates, inputs have {}",
            truth.widths.len(),
            train_inputs.ncols()
        )));
    }
    let diff = AdditiveGaussian::from_model(model, train_inputs, specs)?
        .minus(&AdditiveGaussian::from_truth(truth));
    error_of(&diff, method)
}

/// Second moment of `g` by the chosen method.
pub fn error_of(g: &AdditiveGaussian, method: ErrorMethod) -> Result<ErrorEstimate> {
    match method {
        ErrorMethod::Exact => Ok(ErrorEstimate {
            value: g.second_moment(),
            std_error: 0.0,
        }),
        ErrorMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(invalid("Monte Carlo needs at least one sample"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let unit = Uniform::new(0.0, 1.0).expect("unit interval is a valid range");
            let mut x = vec![0.0; g.dim()];
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..samples {
                x.iter_mut().for_each(|v| *v = unit.sample(&mut rng));
                let e = g.eval(&x).powi(2);
                sum += e;
                sum_sq += e * e;
            }
            let k = samples as f64;
            let mean = sum / k;
            let var = if samples > 1 {
                ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0)
            } else {
                0.0
            };
            Ok(ErrorEstimate {
                value: mean,
                std_error: (var / k).sqrt(),
            })
        }
    }
}

/// Aggregate over repetitions for one `(p, λ)` cell, or for one `p` at its
/// best `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub p: f64,
    pub lambda: f64,
    pub mean_error: f64,
    /// Standard error of `mean_error`.
    pub std_error: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// One point per `(p, λ)`, p-major.
    pub cells: Vec<CurvePoint>,
    /// For every `p`, the cell with the smallest mean error.
    pub best: Vec<CurvePoint>,
    /// Fits dropped for not converging.
    pub non_converged: usize,
}

impl SweepResult {
    /// The best-over-λ point with the smallest mean error.
    pub fn argmin(&self) -> Option<&CurvePoint> {
        self.best
            .iter()
            .min_by(|a, b| a.mean_error.total_cmp(&b.mean_error))
    }
}

/// The RNG of repetition `rep` under master seed `seed`.
pub fn repetition_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Logarithmic grid `10^{lo}, …, 10^{hi}` with `points` entries.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..points)
            .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (points - 1) as f64))
            .collect(),
    }
}

/// `lo, lo + step, …` up to `hi` (inclusive, rounded to 10 decimals).
pub fn linear_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(invalid(format!("bad grid {lo}..{hi} step {step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count)
        .map(|k| ((lo + step * k as f64) * 1e10).round() / 1e10)
        .collect())
}

/// Errors of one repetition, `[p][λ]`; `None` marks a non-converged fit.
fn run_repetition(
    spec: &SyntheticSpec,
    rep: u64,
    p_grid: &[f64],
    lambda_grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<Vec<Option<f64>>>> {
    let mut rng = repetition_rng(spec.seed, rep);
    let truth = sample_truth(spec, &mut rng);
    let data = sample_dataset(spec, &truth, &mut rng)?;
    let specs = spec.kernel_specs()?;
    let bank = gram_bank(&data, &specs)?;
    let prepared = PreparedBank::new(&bank, true);
    let truth_fn = AdditiveGaussian::from_truth(&truth);
    p_grid
        .iter()
        .map(|&p| {
            let norm = NormSpec::lp(p)?;
            let models = prepared.fit_path(&data.outputs, &norm, lambda_grid, opts)?;
            models
                .iter()
                .map(|model| {
                    if !model.diagnostics.converged {
                        return Ok(None);
                    }
                    let g =
                        AdditiveGaussian::from_model(model, &data.inputs, &specs)?.minus(&truth_fn);
                    Ok(Some(g.second_moment()))
                })
                .collect()
        })
        .collect()
}

/// ℓp-MKL (with bias) over a `(p, λ)` grid on fresh truth and data per
/// repetition, scored by the exact generalization error.
pub fn run_lp_sweep(
    spec: &SyntheticSpec,
    p_grid: &[f64],
    lambda_grid: &[f64],
    repetitions: usize,
    opts: &SolverOptions,
) -> Result<SweepResult> {
    spec.validate()?;
    if p_grid.is_empty() || lambda_grid.is_empty() {
        return Err(invalid("p and lambda grids must be nonempty"));
    }
    if repetitions == 0 {
        return Err(invalid("need at least one repetition"));
    }
    for &p in p_grid {
        NormSpec::lp(p)?;
    }
    let per_rep: Vec<Vec<Vec<Option<f64>>>> = (0..repetitions as u64)
        .into_par_iter()
        .map(|rep| run_repetition(spec, rep, p_grid, lambda_grid, opts))
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(p_grid.len() * lambda_grid.len());
    let mut best = Vec::with_capacity(p_grid.len());
    let mut non_converged = 0;
    for (pi, &p) in p_grid.iter().enumerate() {
        let mut row: Vec<CurvePoint> = Vec::with_capacity(lambda_grid.len());
        for (li, &lambda) in lambda_grid.iter().enumerate() {
            let values: Vec<f64> = per_rep.iter().filter_map(|r| r[pi][li]).collect();
            non_converged += repetitions - values.len();
            let k = values.len();
            let (mean, se) = if k == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let mean = values.iter().sum::<f64>() / k as f64;
                let var = if k > 1 {
                    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64
                } else {
                    0.0
                };
                (mean, (var / k as f64).sqrt())
            };
            row.push(CurvePoint {
                p,
                lambda,
                mean_error: mean,
                std_error: se,
                repetitions: k,
            });
        }
        if let Some(b) = row
            .iter()
            .filter(|c| c.repetitions > 0)
            .min_by(|a, b| a.mean_error.total_cmp(&b.mean_error))
        {
            best.push(b.clone());
        }
        cells.extend(row);
    }
    Ok(SweepResult {
        cells,
        best,
        non_converged,
    })
}

/// A bound scenario for the bound-vs-p curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Scenario {
    pub complexities: Vec<f64>,
    pub truth_norms: Vec<f64>,
}

impl Figure1Scenario {
    /// `s_m ~ U[0, 1/3]`, `‖f*_m‖ ~ U[0, 1]`.
    pub fn sample(m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let complexities = (0..m).map(|_| rng.random_range(0.0..1.0 / 3.0)).collect();
        let truth_norms = (0..m).map(|_| rng.random::<f64>()).collect();
        Self {
            complexities,
            truth_norms,
        }
    }

    /// Every complexity replaced by their mean.
    pub fn homogenized(&self) -> Self {
        let s = self.complexities.iter().sum::<f64>() / self.complexities.len() as f64;
        Self {
            complexities: vec![s; self.complexities.len()],
            truth_norms: self.truth_norms.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub p: f64,
    pub bound: f64,
}

/// The radius-minimized ℓp leading term for every `p` in the grid.
/// `generations` overrides the DE budget when given.
pub fn figure1_curve(
    scenario: &Figure1Scenario,
    n: f64,
    p_grid: &[f64],
    de_seed: u64,
    generations: Option<usize>,
) -> Result<Vec<BoundPoint>> {
    let m = scenario.complexities.len();
    p_grid
        .iter()
        .map(|&p| {
            let inputs = BoundInputs::new(
                n,
                scenario.complexities.clone(),
                scenario.truth_norms.clone(),
                NormSpec::lp(p)?,
            )?;
            let mut cfg = bounds::radii_de_config(m, de_seed);
            if let Some(g) = generations {
                cfg.generations = g;
            }
            let report = bounds::minimize_over_radii(&inputs, &cfg)?;
            Ok(BoundPoint {
                p,
                bound: report.leading_term,
            })
        })
        .collect()
}

/// Index of the smallest bound (first one on ties).
pub fn curve_argmin(curve: &[BoundPoint]) -> Option<usize> {
    (0..curve.len()).min_by(|&a, &b| curve[a].bound.total_cmp(&curve[b].bound))
}
