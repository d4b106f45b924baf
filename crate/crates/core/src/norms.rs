//! Mixed norms over the vector of per-kernel RKHS norms, their duals and
//! the isotropy check.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A norm exponent in `[1, ∞]`. Infinity is stored exactly and serializes
/// as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "RawExponent", into = "RawExponent")]
pub struct Exponent(f64);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawExponent {
    Number(f64),
    Text(String),
}

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(invalid(format!(
                "norm exponent must lie in [1, inf], got {p}"
            )));
        }
        Ok(Exponent(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// The exponent q with 1/p + 1/q = 1. Exact for p ∈ {1, 2, ∞}.
    pub fn conjugate(self) -> Exponent {
        match self.0 {
            1.0 => Exponent::INFINITY,
            2.0 => Exponent::TWO,
            p if p.is_infinite() => Exponent::ONE,
            p => Exponent(p / (p - 1.0)),
        }
    }
}

impl TryFrom<RawExponent> for Exponent {
    type Error = crate::MklError;
    fn try_from(raw: RawExponent) -> Result<Self> {
        match raw {
            RawExponent::Number(p) => Exponent::new(p),
            RawExponent::Text(t) => match t.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => Ok(Exponent::INFINITY),
                _ => t
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("cannot read norm exponent {t:?}")))
                    .and_then(Exponent::new),
            },
        }
    }
}

impl From<Exponent> for RawExponent {
    fn from(e: Exponent) -> Self {
        if e.is_infinite() {
            RawExponent::Text("inf".into())
        } else {
            RawExponent::Number(e.0)
        }
    }
}

impl From<Exponent> for f64 {
    fn from(e: Exponent) -> f64 {
        e.0
    }
}

/// ℓp norm of `|v|`. Scales by the largest magnitude to avoid overflow for
/// large p.
pub fn lp_norm(v: &[f64], p: Exponent) -> f64 {
    let top = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if top == 0.0 || !top.is_finite() {
        return top;
    }
    match p.0 {
        p if p.is_infinite() => top,
        1.0 => v.iter().map(|x| x.abs()).sum(),
        2.0 => v.iter().map(|x| (x / top).powi(2)).sum::<f64>().sqrt() * top,
        p => {
            top * v
                .iter()
                .map(|x| (x.abs() / top).powf(p))
                .sum::<f64>()
                .powf(1.0 / p)
        }
    }
}

/// Which mixed norm is applied to `(‖f_m‖)_{m=1..M}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormSpec {
    /// `(Σ_m v_m^p)^{1/p}`.
    Lp { p: Exponent },
    /// `τ‖v‖₁ + (1-τ)‖v‖₂`.
    ElasticNet { tau: f64 },
    /// `(Σ_j (Σ_{k∈G_j} v_k^p)^{q/p})^{1/q}` over a partition of the kernels
    /// (0-based indices).
    Block {
        p: Exponent,
        q: Exponent,
        groups: Vec<Vec<usize>>,
    },
}

impl NormSpec {
    pub fn lp(p: f64) -> Result<Self> {
        Ok(NormSpec::Lp {
            p: Exponent::new(p)?,
        })
    }

    pub fn elastic_net(tau: f64) -> Result<Self> {
        let spec = NormSpec::ElasticNet { tau };
        spec.validate_params()?;
        Ok(spec)
    }

    pub fn block(p: f64, q: f64, groups: Vec<Vec<usize>>) -> Result<Self> {
        let m = groups.iter().map(Vec::len).sum();
        let spec = NormSpec::Block {
            p: Exponent::new(p)?,
            q: Exponent::new(q)?,
            groups,
        };
        spec.validate(m)?;
        Ok(spec)
    }

    fn validate_params(&self) -> Result<()> {
        match self {
            NormSpec::Lp { p } => Exponent::new(p.0).map(|_| ()),
            NormSpec::ElasticNet { tau } => {
                if !(0.0..=1.0).contains(tau) {
                    return Err(invalid(format!(
                        "elastic-net mixing must lie in [0,1], got {tau}"
                    )));
                }
                Ok(())
            }
            NormSpec::Block { p, q, .. } => {
                Exponent::new(p.0)?;
                Exponent::new(q.0)?;
                Ok(())
            }
        }
    }

    /// Checks the parameters and, for block norms, that the groups
    /// partition `{0, …, m-1}`.
    pub fn validate(&self, m: usize) -> Result<()> {
        self.validate_params()?;
        if let NormSpec::Block { groups, .. } = self {
            let mut seen = vec![false; m];
            for g in groups {
                if g.is_empty() {
                    return Err(invalid("block norm has an empty group"));
                }
                for &k in g {
                    if k >= m || seen[k] {
                        return Err(invalid(format!(
                            "block groups do not partition {m} kernels (index {k})"
                        )));
                    }
                    seen[k] = true;
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(invalid(format!(
                    "block groups do not cover all {m} kernels"
                )));
            }
        }
        Ok(())
    }

    /// The dual norm's descriptor where it stays within the families
    /// (ℓp and block norms). Elastic net has no closed-form family dual.
    pub fn dual_spec(&self) -> Option<NormSpec> {
        match self {
            NormSpec::Lp { p } => Some(NormSpec::Lp { p: p.conjugate() }),
            NormSpec::Block { p, q, groups } => Some(NormSpec::Block {
                p: p.conjugate(),
                q: q.conjugate(),
                groups: groups.clone(),
            }),
            NormSpec::ElasticNet { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            NormSpec::Lp { p } => format!("l{}", p.0),
            NormSpec::ElasticNet { tau } => format!("elasticnet({tau})"),
            NormSpec::Block { p, q, groups } => {
                format!("block({},{};{} groups)", p.0, q.0, groups.len())
            }
        }
    }
}

fn block_value(v: &[f64], p: Exponent, q: Exponent, groups: &[Vec<usize>]) -> f64 {
    let inner: Vec<f64> = groups
        .iter()
        .map(|g| {
            let sub: Vec<f64> = g.iter().map(|&k| v[k]).collect();
            lp_norm(&sub, p)
        })
        .collect();
    lp_norm(&inner, q)
}

/// ψ-norm of a nonnegative vector of RKHS norms.
pub fn psi_norm(v: &[f64], spec: &NormSpec) -> Result<f64> {
    if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(invalid(format!(
            "psi_norm needs finite nonnegative entries, got {x}"
        )));
    }
    spec.validate(v.len())?;
    Ok(psi_norm_unchecked(v, spec))
}

pub(crate) fn psi_norm_unchecked(v: &[f64], spec: &NormSpec) -> f64 {
    match spec {
        NormSpec::Lp { p } => lp_norm(v, *p),
        NormSpec::ElasticNet { tau } => {
            tau * lp_norm(v, Exponent::ONE) + (1.0 - tau) * lp_norm(v, Exponent::TWO)
        }
        NormSpec::Block { p, q, groups } => block_value(v, *p, *q, groups),
    }
}

/// Dual norm `sup{bᵀa : ‖a‖_ψ ≤ 1}`.
pub fn dual_norm(b: &[f64], spec: &NormSpec) -> Result<f64> {
    if b.iter().any(|x| !x.is_finite()) {
        return Err(invalid("dual_norm needs finite entries"));
    }
    spec.validate(b.len())?;
    Ok(dual_norm_unchecked(b, spec))
}

pub(crate) fn dual_norm_unchecked(b: &[f64], spec: &NormSpec) -> f64 {
    match spec {
        NormSpec::Lp { p } => lp_norm(b, p.conjugate()),
        NormSpec::Block { p, q, groups } => block_value(b, p.conjugate(), q.conjugate(), groups),
        NormSpec::ElasticNet { tau } => elastic_net_dual(b, *tau),
    }
}

/// Closed form of `‖1‖_{ψ*}` for the elastic net: `√M / (1 - τ + τ√M)`.
pub fn elastic_net_dual_of_ones(m: usize, tau: f64) -> f64 {
    let r = (m as f64).sqrt();
    r / (1.0 - tau + tau * r)
}

/// Dual of `τ‖·‖₁ + (1-τ)‖·‖₂`:
/// `min_a max(‖a‖_∞/τ, ‖b - a‖₂/(1-τ))`.
///
/// For a value `t` the best split leaves `‖(|b| - τt)_+‖₂` in the ℓ2 part,
/// so the dual is the root of `‖(|b| - τt)_+‖₂ = (1-τ)t`. That function is
/// piecewise quadratic in `t` with breakpoints at `|b_i|/τ`; the root is
/// found segment by segment from the largest entries down.
fn elastic_net_dual(b: &[f64], tau: f64) -> f64 {
    if tau <= 0.0 {
        return lp_norm(b, Exponent::TWO);
    }
    if tau >= 1.0 {
        return lp_norm(b, Exponent::INFINITY);
    }
    let mut mags: Vec<f64> = b.iter().map(|x| x.abs()).filter(|x| *x > 0.0).collect();
    if mags.is_empty() {
        return 0.0;
    }
    if mags.iter().all(|x| *x == mags[0]) {
        return mags[0] * elastic_net_dual_of_ones(mags.len(), tau);
    }
    mags.sort_by(|a, b| b.total_cmp(a));
    let rho = 1.0 - tau;
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in 0..mags.len() {
        s1 += mags[k];
        s2 += mags[k] * mags[k];
        let kk = (k + 1) as f64;
        // (k τ² - ρ²) t² - 2 τ s1 t + s2 = 0 with the top k+1 entries active
        let a = kk * tau * tau - rho * rho;
        // stable roots: q = τ s1 + ½√disc, roots q/a and s2/q
        let disc = (4.0 * tau * tau * s1 * s1 - 4.0 * a * s2).max(0.0);
        let qq = tau * s1 + 0.5 * disc.sqrt();
        let candidates = [s2 / qq, if a != 0.0 { qq / a } else { f64::NAN }];
        let upper = mags[k] / tau;
        let lower = mags.get(k + 1).map_or(0.0, |x| x / tau);
        for t in candidates {
            if t.is_finite() && t > 0.0 && t <= upper * (1.0 + 1e-12) && t >= lower * (1.0 - 1e-12)
            {
                return t;
            }
        }
    }
    elastic_net_dual_bisect(&mags, tau)
}

fn elastic_net_dual_bisect(mags: &[f64], tau: f64) -> f64 {
    let h = |t: f64| -> f64 {
        let r: f64 = mags
            .iter()
            .map(|x| (x - tau * t).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt();
        r - (1.0 - tau) * t
    };
    let (mut lo, mut hi) = (0.0, mags[0] / tau);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `‖1‖_ψ`, `‖1‖_{ψ*}` and their product for M kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub value: f64,
    pub dual_of_ones: f64,
    pub isotropy_product: f64,
    /// `‖1‖_ψ‖1‖_{ψ*} ≤ M` (isotropic with constant 1, monotonicity holds
    /// for every supported family).
    pub isotropic: bool,
}

pub fn isotropy_report(spec: &NormSpec, m: usize) -> Result<NormReport> {
    if m == 0 {
        return Err(invalid("isotropy report needs at least one kernel"));
    }
    spec.validate(m)?;
    let ones = vec![1.0; m];
    let value = psi_norm_unchecked(&ones, spec);
    let dual_of_ones = match spec {
        NormSpec::ElasticNet { tau } => elastic_net_dual_of_ones(m, *tau),
        _ => dual_norm_unchecked(&ones, spec),
    };
    let isotropy_product = value * dual_of_ones;
    Ok(NormReport {
        value,
        dual_of_ones,
        isotropy_product,
        isotropic: isotropy_product <= m as f64 * (1.0 + 1e-9),
    })
}
