//! Learning-rate bound evaluators.
//!
//! All values are "up to constants": every unspecified absolute constant is
//! set to 1. Orderings across norms, exponents and sample sizes are
//! meaningful because every evaluator uses the same convention. The
//! `M log M / n` term uses the natural log with `log 1 = 0`.

use serde::{Deserialize, Serialize};

use crate::de::{self, DeConfig};
use crate::error::{invalid, Result};
use crate::norms::{self, Exponent, NormSpec};

/// Default search box for log radii.
pub const LOG_RADIUS_BOX: (f64, f64) = (-13.815510557964274, 13.815510557964274);

/// A theoretical scenario: sample size, kernel complexities, RKHS norms of
/// the target, the correlation constant κ and the regularizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Sample size (real-valued so very large n can be expressed).
    pub n: f64,
    /// Spectral complexities s_m ∈ [0, 1).
    pub complexities: Vec<f64>,
    /// ‖f*_m‖ ≥ 0.
    pub truth_norms: Vec<f64>,
    pub kappa: f64,
    pub norm: NormSpec,
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
}

impl BoundInputs {
    pub fn new(
        n: f64,
        complexities: Vec<f64>,
        truth_norms: Vec<f64>,
        norm: NormSpec,
    ) -> Result<Self> {
        let inputs = Self {
            n,
            complexities,
            truth_norms,
            kappa: 1.0,
            norm,
            radii: None,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn with_radii(mut self, radii: Vec<f64>) -> Result<Self> {
        self.radii = Some(radii);
        self.validate()?;
        Ok(self)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        self.kappa = kappa;
        self.validate()?;
        Ok(self)
    }

    pub fn num_kernels(&self) -> usize {
        self.complexities.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.complexities.len();
        if m == 0 {
            return Err(invalid("bound inputs need at least one kernel"));
        }
        if !(self.n >= 1.0 && self.n.is_finite()) {
            return Err(invalid(format!("sample size must be >= 1, got {}", self.n)));
        }
        if self.truth_norms.len() != m {
            return Err(invalid(format!(
                "{} complexities but {} truth norms",
                m,
                self.truth_norms.len()
            )));
        }
        if let Some(s) = self
            .complexities
            .iter()
            .find(|s| !(**s >= 0.0 && **s < 1.0))
        {
            return Err(invalid(format!("complexities must lie in [0, 1), got {s}")));
        }
        if let Some(t) = self
            .truth_norms
            .iter()
            .find(|t| !(**t >= 0.0 && t.is_finite()))
        {
            return Err(invalid(format!(
                "truth norms must be finite and nonnegative, got {t}"
            )));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(invalid(format!(
                "kappa must lie in (0, 1], got {}",
                self.kappa
            )));
        }
        if let Some(r) = &self.radii {
            if r.len() != m {
                return Err(invalid(format!("{} complexities but {} radii", m, r.len())));
            }
            if let Some(x) = r.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(invalid(format!(
                    "radii must be positive and finite, got {x}"
                )));
            }
        }
        self.norm.validate(m)
    }

    fn radii_or_err(&self) -> Result<&[f64]> {
        self.radii
            .as_deref()
            .ok_or_else(|| invalid("radii are required for this evaluation"))
    }

    pub fn truth_psi_norm(&self) -> f64 {
        norms::psi_norm_unchecked(&self.truth_norms, &self.norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// `M log M / n` with `log 1 = 0`.
pub fn second_term(n: f64, m: usize) -> f64 {
    if m <= 1 {
        0.0
    } else {
        m as f64 * (m as f64).ln() / n
    }
}

fn alpha_beta_at(
    n: f64,
    s: &[f64],
    r: &[f64],
    norm: &NormSpec,
    scratch: &mut Vec<f64>,
) -> AlphaBeta {
    let mut a1 = 0.0;
    let mut b1 = 0.0;
    let sqrt_n = n.sqrt();
    scratch.clear();
    for (&sm, &rm) in s.iter().zip(r) {
        // r^0 := 1 so s_m = 0 contributes exactly 1/n to α₁ and β₁
        a1 += rm.powf(-2.0 * sm);
        b1 += rm.powf(-2.0 * sm * (3.0 - sm) / (1.0 + sm)) / n.powf(2.0 / (1.0 + sm));
        scratch.push(sm * rm.powf(1.0 - sm) / sqrt_n);
    }
    let alpha2 = 3.0 * norms::dual_norm_unchecked(scratch, norm);
    scratch.clear();
    for (&sm, &rm) in s.iter().zip(r) {
        scratch.push(sm * rm.powf((1.0 - sm).powi(2) / (1.0 + sm)) / n.powf(1.0 / (1.0 + sm)));
    }
    let beta2 = 3.0 * norms::dual_norm_unchecked(scratch, norm);
    AlphaBeta {
        alpha1: 3.0 * (a1 / n).sqrt(),
        alpha2,
        beta1: 3.0 * b1.sqrt(),
        beta2,
    }
}

/// α₁, α₂, β₁, β₂ at the radii stored in `inputs`.
pub fn alpha_beta(inputs: &BoundInputs) -> Result<AlphaBeta> {
    inputs.validate()?;
    let r = inputs.radii_or_err()?;
    Ok(alpha_beta_at(
        inputs.n,
        &inputs.complexities,
        r,
        &inputs.norm,
        &mut Vec::new(),
    ))
}

fn objective_from(ab: &AlphaBeta, truth_psi: f64) -> f64 {
    let ra = ab.alpha2 / ab.alpha1;
    let rb = ab.beta2 / ab.beta1;
    ab.alpha1 * ab.alpha1 + ab.beta1 * ab.beta1 + (ra * ra + rb * rb) * truth_psi * truth_psi
}

/// `α₁² + β₁² + [(α₂/α₁)² + (β₂/β₁)²] ‖f*‖_ψ²` at the stored radii.
pub fn leading_term_objective(inputs: &BoundInputs) -> Result<f64> {
    let ab = alpha_beta(inputs)?;
    if !(ab.alpha1 > 0.0 && ab.beta1 > 0.0) {
        return Err(invalid("alpha1 and beta1 must be positive"));
    }
    Ok(objective_from(&ab, inputs.truth_psi_norm()))
}

/// Which part of the bound is larger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// The `M log M / n` term dominates.
    GlobalDominates,
    /// The complexity-dependent leading term dominates.
    LocalizedDominates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub leading_term: f64,
    pub second_term: f64,
    pub total: f64,
    pub minimizing_radii: Option<Vec<f64>>,
    pub regime: Regime,
    #[serde(default)]
    pub warning: Option<String>,
}

impl RateReport {
    fn new(leading: f64, second: f64, radii: Option<Vec<f64>>, regime: Regime) -> Self {
        Self {
            leading_term: leading,
            second_term: second,
            total: leading + second,
            minimizing_radii: radii,
            regime,
            warning: None,
        }
    }
}

/// The uniform radius that balances α₁² against the penalty term for a
/// homogeneous complexity s:
/// `r⁻¹ = (s/3)^{1/(1+s)} M^{-1/(1+s)} n^{1/(2(1+s))} (‖1‖_{ψ*}‖f*‖_ψ)^{1/(1+s)}`.
pub fn balanced_uniform_radius(
    n: f64,
    m: usize,
    s: f64,
    dual_of_ones: f64,
    truth_psi: f64,
) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!(
            "balanced radius needs s in (0,1), got {s}"
        )));
    }
    let e = 1.0 / (1.0 + s);
    let inv = (s / 3.0).powf(e)
        * (m as f64).powf(-e)
        * n.powf(0.5 * e)
        * (dual_of_ones * truth_psi).powf(e);
    if !(inv > 0.0 && inv.is_finite()) {
        return Err(invalid(
            "balanced radius is undefined for a zero target norm",
        ));
    }
    Ok(1.0 / inv)
}

/// A DE configuration over log radii in the default box.
pub fn radii_de_config(m: usize, seed: u64) -> DeConfig {
    DeConfig::new(vec![LOG_RADIUS_BOX; m], seed)
}

/// Minimizes the leading-term objective over the radii with differential
/// evolution in log space.
///
/// The best common radius is injected into the initial population, and for
/// homogeneous complexities so is the balanced uniform radius, so the result
/// never exceeds the objective at either.
pub fn minimize_over_radii(inputs: &BoundInputs, de_config: &DeConfig) -> Result<RateReport> {
    inputs.validate()?;
    if inputs.radii.is_some() {
        return Err(invalid(
            "minimize_over_radii optimizes the radii; leave them unset",
        ));
    }
    let m = inputs.num_kernels();
    if de_config.bounds.len() != m {
        return Err(invalid(format!(
            "DE box has {} dimensions, expected {m}",
            de_config.bounds.len()
        )));
    }
    let truth_psi = inputs.truth_psi_norm();
    let s = &inputs.complexities;
    let n = inputs.n;
    let norm = &inputs.norm;
    let eval = |logr: &[f64]| -> f64 {
        let r: Vec<f64> = logr.iter().map(|x| x.exp()).collect();
        let ab = alpha_beta_at(n, s, &r, norm, &mut Vec::with_capacity(r.len()));
        objective_from(&ab, truth_psi)
    };

    let mut reference: Option<(Vec<f64>, f64)> = None;
    let homogeneous = s.iter().all(|x| *x == s[0]);
    if homogeneous && s[0] > 0.0 && truth_psi > 0.0 {
        let ones = vec![1.0; m];
        let dual1 = norms::dual_norm_unchecked(&ones, norm);
        if let Ok(r) = balanced_uniform_radius(n, m, s[0], dual1, truth_psi) {
            let lr = r.ln();
            let point: Vec<f64> = de_config
                .bounds
                .iter()
                .map(|&(lo, hi)| lr.clamp(lo, hi))
                .collect();
            let value = eval(&point);
            reference = Some((point, value));
        }
    }

    let mut cfg = de_config.clone();
    if let Some((p, _)) = &reference {
        cfg.initial_points.push(p.clone());
    }
    // with equal complexities the objective along a common log radius is a
    // sum of exponentials, hence convex, and the optimum is uniform
    let lo = de_config
        .bounds
        .iter()
        .map(|b| b.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = de_config
        .bounds
        .iter()
        .map(|b| b.1)
        .fold(f64::INFINITY, f64::min);
    if lo < hi {
        let t = golden_section(|t| eval(&vec![t; m]), lo, hi);
        cfg.initial_points.push(vec![t; m]);
    }
    let result = de::minimize(eval, &cfg)?;
    let second = second_term(n, m);
    let regime_of = |lead: f64| {
        if lead >= second {
            Regime::LocalizedDominates
        } else {
            Regime::GlobalDominates
        }
    };
    if let Some((p, v)) = reference {
        if result.best_value > v {
            let mut rep = RateReport::new(
                v,
                second,
                Some(p.iter().map(|x| x.exp()).collect()),
                regime_of(v),
            );
            rep.warning = Some(
                "differential evolution did not improve on the balanced uniform radius".into(),
            );
            return Ok(rep);
        }
    }
    let lead = result.best_value;
    Ok(RateReport::new(
        lead,
        second,
        Some(result.best_point.iter().map(|x| x.exp()).collect()),
        regime_of(lead),
    ))
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-10 * (1.0 + lo.abs().max(hi.abs())) {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Closed-form homogeneous rate
/// `M^{1-2s/(1+s)} n^{-1/(1+s)} (‖1‖_{ψ*}‖f*‖_ψ)^{2s/(1+s)} + M log M / n`.
///
/// The regime is `LocalizedDominates` when
/// `n ≥ M² log(M)^{(1+s)/s} / (‖1‖_{ψ*}²‖f*‖_ψ²)`.
pub fn homogeneous_rate(
    n: f64,
    m: usize,
    s: f64,
    truth_psi: f64,
    dual_of_ones: f64,
) -> Result<RateReport> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!(
            "homogeneous rate needs s in (0,1), got {s}"
        )));
    }
    if m == 0 || !(n >= 1.0) {
        return Err(invalid("homogeneous rate needs n >= 1 and M >= 1"));
    }
    if !(truth_psi >= 0.0 && dual_of_ones > 0.0) {
        return Err(invalid("norm quantities must be nonnegative"));
    }
    let mf = m as f64;
    let k = 2.0 * s / (1.0 + s);
    let lead = mf.powf(1.0 - k) * n.powf(-1.0 / (1.0 + s)) * (dual_of_ones * truth_psi).powf(k);
    let second = second_term(n, m);
    let threshold = mf * mf * mf.ln().powf((1.0 + s) / s)
        / (dual_of_ones * dual_of_ones * truth_psi * truth_psi);
    let regime = if n >= threshold {
        Regime::LocalizedDominates
    } else {
        Regime::GlobalDominates
    };
    Ok(RateReport::new(lead, second, None, regime))
}

/// Regularizer families with a displayed closed-form rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RateFamily {
    Lp {
        p: Exponent,
        truth_norms: Vec<f64>,
    },
    ElasticNet {
        tau: f64,
        truth_norms: Vec<f64>,
    },
    /// Block (p, q) norm; `truth_groups[j]` holds the target norms of group j.
    Vskl {
        p: Exponent,
        q: Exponent,
        truth_groups: Vec<Vec<f64>>,
    },
}

/// Leading term of the family-specific homogeneous rate, evaluated from the
/// family's own formula (not via the generic dual-norm route).
pub fn concrete_rate(n: f64, s: f64, family: &RateFamily) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) || !(n >= 1.0) {
        return Err(invalid("concrete rates need s in (0,1) and n >= 1"));
    }
    let k = 2.0 * s / (1.0 + s);
    let base = n.powf(-1.0 / (1.0 + s));
    let nonneg = |v: &[f64]| v.iter().all(|x| *x >= 0.0 && x.is_finite());
    match family {
        RateFamily::Lp { p, truth_norms } => {
            if truth_norms.is_empty() || !nonneg(truth_norms) {
                return Err(invalid("lp rate needs nonnegative truth norms"));
            }
            let m = truth_norms.len() as f64;
            let inv_p = if p.is_infinite() {
                0.0
            } else {
                1.0 / p.value()
            };
            let rp = norms::lp_norm(truth_norms, *p);
            Ok(base * m.powf(1.0 - k * inv_p) * rp.powf(k))
        }
        RateFamily::ElasticNet { tau, truth_norms } => {
            if !(0.0..=1.0).contains(tau) || truth_norms.is_empty() || !nonneg(truth_norms) {
                return Err(invalid(
                    "elastic-net rate needs tau in [0,1] and nonnegative truth norms",
                ));
            }
            let m = truth_norms.len() as f64;
            let psi = tau * norms::lp_norm(truth_norms, Exponent::ONE)
                + (1.0 - tau) * norms::lp_norm(truth_norms, Exponent::TWO);
            Ok(
                base * m.powf(1.0 - s / (1.0 + s)) / (1.0 - tau + tau * m.sqrt()).powf(k)
                    * psi.powf(k),
            )
        }
        RateFamily::Vskl { p, q, truth_groups } => {
            if truth_groups.is_empty() || truth_groups.iter().any(|g| g.is_empty() || !nonneg(g)) {
                return Err(invalid(
                    "VSKL rate needs nonempty groups of nonnegative truth norms",
                ));
            }
            let total: usize = truth_groups.iter().map(Vec::len).sum();
            let (ps, qs) = (p.conjugate(), q.conjugate());
            let inv_ps = if ps.is_infinite() {
                0.0
            } else {
                1.0 / ps.value()
            };
            let sizes: Vec<f64> = truth_groups
                .iter()
                .map(|g| (g.len() as f64).powf(inv_ps))
                .collect();
            let dual1 = norms::lp_norm(&sizes, qs);
            let inner: Vec<f64> = truth_groups.iter().map(|g| norms::lp_norm(g, *p)).collect();
            let truth = norms::lp_norm(&inner, *q);
            Ok(base * (total as f64).powf(1.0 - k) * (dual1 * truth).powf(k))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimaxReport {
    /// Lower bound with unit constant.
    pub value: f64,
    /// Whether `n > c̄² M² / (R² ‖1‖_{ψ*}²)` holds.
    pub in_regime: bool,
}

/// Minimax lower bound over the ψ-norm ball of radius R (unit constant):
/// `M^{1-2s/(1+s)} n^{-1/(1+s)} (‖1‖_{ψ*} R)^{2s/(1+s)}`.
pub fn minimax_lower(
    n: f64,
    m: usize,
    s: f64,
    radius: f64,
    dual_of_ones: f64,
    cbar: f64,
) -> Result<MinimaxReport> {
    if !(s > 0.0 && s < 1.0) || m == 0 || !(n >= 1.0) {
        return Err(invalid("minimax bound needs s in (0,1), M >= 1 and n >= 1"));
    }
    if !(radius > 0.0 && dual_of_ones > 0.0 && cbar > 0.0) {
        return Err(invalid(
            "minimax bound needs positive R, dual norm and isotropy constant",
        ));
    }
    let mf = m as f64;
    let k = 2.0 * s / (1.0 + s);
    let value = mf.powf(1.0 - k) * n.powf(-1.0 / (1.0 + s)) * (dual_of_ones * radius).powf(k);
    let in_regime = n > cbar * cbar * mf * mf / (radius * radius * dual_of_ones * dual_of_ones);
    Ok(MinimaxReport { value, in_regime })
}

/// Local Rademacher complexity bound (unit constant) at L2 radius `r` and
/// ψ-radius `big_r`:
/// `α₁r/√κ + α₂R + β₁r/√κ + β₂R + √(M log M / n) r/√κ`.
pub fn local_rademacher_bound(inputs: &BoundInputs, r: f64, big_r: f64) -> Result<f64> {
    if !(r >= 0.0 && big_r >= 0.0) {
        return Err(invalid("radii must be nonnegative"));
    }
    let ab = alpha_beta(inputs)?;
    let sk = inputs.kappa.sqrt();
    let glob = second_term(inputs.n, inputs.num_kernels()).sqrt();
    Ok((ab.alpha1 + ab.beta1 + glob) * r / sk + (ab.alpha2 + ab.beta2) * big_r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InhomogeneousReport {
    pub l1_rate: f64,
    pub linf_rate: f64,
    /// l1_rate / linf_rate = M^{2s/(1+s)}.
    pub ratio: f64,
    /// Whether n meets the sample-size requirement of the comparison.
    pub in_regime: bool,
}

/// Smallest n for the one-complex-kernel comparison:
/// `M^{4s/(1-s)} ∨ (M log M)^{(1+s)/s}`.
pub fn inhomogeneous_min_n(m: usize, s: f64) -> f64 {
    let mf = m as f64;
    let a = mf.powf(4.0 * s / (1.0 - s));
    let b = (mf * mf.ln()).powf((1.0 + s) / s);
    a.max(b)
}

/// ℓ1 vs ℓ∞ rates when one kernel has complexity s, all others 0, and every
/// target component has unit norm.
pub fn inhomogeneous_comparison(n: f64, m: usize, s: f64) -> Result<InhomogeneousReport> {
    if !(0.0..1.0).contains(&s) || m == 0 || !(n >= 1.0) {
        return Err(invalid("comparison needs s in [0,1), M >= 1 and n >= 1"));
    }
    let linf_rate = n.powf(-1.0 / (1.0 + s));
    let ratio = (m as f64).powf(2.0 * s / (1.0 + s));
    let in_regime = s > 0.0 && n >= inhomogeneous_min_n(m, s);
    Ok(InhomogeneousReport {
        l1_rate: linf_rate * ratio,
        linf_rate,
        ratio,
        in_regime,
    })
}

/// Bound inputs for the one-complex-kernel scenario: `s_1 = s`, `s_m = 0`
/// otherwise, unit target norms.
pub fn inhomogeneous_inputs(n: f64, m: usize, s: f64, norm: NormSpec) -> Result<BoundInputs> {
    let mut complexities = vec![0.0; m];
    if m > 0 {
        complexities[0] = s;
    }
    BoundInputs::new(n, complexities, vec![1.0; m], norm)
}
