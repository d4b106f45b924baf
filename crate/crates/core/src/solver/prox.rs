//! Proximal map of `c ψ(v)²` restricted to nonnegative vectors:
//! `argmin_v ½‖v - w‖² + c ψ(v)²` for `w ≥ 0`.
//!
//! Applied to the vector of per-kernel block norms, this gives the prox of
//! the MKL penalty on the stacked coefficients: each block keeps its
//! direction and is rescaled to the returned norm.

use crate::error::{MklError, Result};
use crate::norms::{self, Exponent, NormSpec};

/// Checks that the prox of `spec` is available.
pub(crate) fn check_supported(spec: &NormSpec) -> Result<()> {
    match spec {
        NormSpec::Block { p, q, groups } => {
            let singletons = groups.iter().all(|g| g.len() == 1);
            if *p == Exponent::TWO || singletons || p == q {
                Ok(())
            } else {
                Err(MklError::Unsupported(format!(
                    "fitting block norms needs inner exponent 2, singleton groups or p = q (got p = {}, q = {})",
                    p.value(),
                    q.value()
                )))
            }
        }
        _ => Ok(()),
    }
}

pub(crate) fn prox_squared(w: &[f64], c: f64, spec: &NormSpec) -> Vec<f64> {
    debug_assert!(w.iter().all(|x| *x >= 0.0));
    if c == 0.0 || w.iter().all(|x| *x == 0.0) {
        return w.to_vec();
    }
    match spec {
        NormSpec::Lp { p } => prox_lp(w, c, *p),
        NormSpec::ElasticNet { tau } => prox_elastic_net(w, c, *tau),
        NormSpec::Block { p, q, groups } => {
            if groups.iter().all(|g| g.len() == 1) {
                let inner: Vec<f64> = groups.iter().map(|g| w[g[0]]).collect();
                let v = prox_lp(&inner, c, *q);
                let mut out = vec![0.0; w.len()];
                for (g, val) in groups.iter().zip(v) {
                    out[g[0]] = val;
                }
                out
            } else if p == q {
                prox_lp(w, c, *p)
            } else {
                // inner ℓ2: each group behaves as one Euclidean block
                let inner: Vec<f64> = groups
                    .iter()
                    .map(|g| g.iter().map(|&k| w[k] * w[k]).sum::<f64>().sqrt())
                    .collect();
                let v = prox_lp(&inner, c, *q);
                let mut out = vec![0.0; w.len()];
                for (g, (&u, &val)) in groups.iter().zip(inner.iter().zip(&v)) {
                    if u > 0.0 {
                        for &k in g {
                            out[k] = w[k] * (val / u);
                        }
                    }
                }
                out
            }
        }
    }
}

fn prox_lp(w: &[f64], c: f64, p: Exponent) -> Vec<f64> {
    let pv = p.value();
    if pv == 1.0 {
        prox_l1_squared(w, c)
    } else if pv == 2.0 {
        w.iter().map(|x| x / (1.0 + 2.0 * c)).collect()
    } else if p.is_infinite() {
        prox_linf_squared(w, c)
    } else {
        prox_general_lp_squared(w, c, pv)
    }
}

fn sorted_desc(w: &[f64]) -> Vec<f64> {
    let mut s = w.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `v_i = (w_i - θ)_+` with `θ = 2c‖v‖₁`.
fn prox_l1_squared(w: &[f64], c: f64) -> Vec<f64> {
    let s = sorted_desc(w);
    let mut sum = 0.0;
    let mut theta = 0.0;
    for k in 0..s.len() {
        sum += s[k];
        let t = 2.0 * c * sum / (1.0 + 2.0 * c * (k + 1) as f64);
        let next = s.get(k + 1).copied().unwrap_or(0.0);
        theta = t;
        if t >= next {
            break;
        }
    }
    w.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Water-filling: `v_i = min(w_i, μ)` with `Σ (w_i - μ)_+ = 2cμ`.
fn prox_linf_squared(w: &[f64], c: f64) -> Vec<f64> {
    let s = sorted_desc(w);
    let mut sum = 0.0;
    let mut mu = 0.0;
    for k in 0..s.len() {
        sum += s[k];
        let m = sum / ((k + 1) as f64 + 2.0 * c);
        let next = s.get(k + 1).copied().unwrap_or(0.0);
        mu = m;
        if m >= next {
            break;
        }
    }
    w.iter().map(|x| x.min(mu)).collect()
}

/// Root of `x + κ x^{p-1} = w` on `[0, w]` (bracketed Newton).
fn coordinate_root(w: f64, kappa: f64, p: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    if kappa <= 0.0 {
        return w;
    }
    let f = |x: f64| x + kappa * x.powf(p - 1.0) - w;
    let (mut lo, mut hi) = (0.0f64, w);
    // start on the side where Newton converges monotonically
    let mut x = if p < 2.0 {
        w / (1.0 + kappa * w.powf(p - 2.0)).max(1.0)
    } else {
        w
    };
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let d = 1.0 + kappa * (p - 1.0) * x.powf(p - 2.0);
        let mut nx = x - fx / d;
        if !(nx > lo && nx < hi) || !nx.is_finite() {
            nx = 0.5 * (lo + hi);
        }
        if (nx - x).abs() <= 1e-16 * w || hi - lo <= 1e-16 * w {
            return nx;
        }
        x = nx;
    }
    x
}

/// General `1 < p < ∞`: coordinates solve `v_i + κ v_i^{p-1} = w_i` with
/// `κ = 2c ‖v‖_p^{2-p}`. The scalar equation
/// `log κ + (p-2) log ‖v(κ)‖_p = log 2c` is strictly increasing in `log κ`
/// and is solved by safeguarded Newton.
fn prox_general_lp_squared(w: &[f64], c: f64, p: f64) -> Vec<f64> {
    let target = (2.0 * c).ln();
    let solve = |lk: f64| -> (Vec<f64>, f64, f64) {
        let kappa = lk.exp();
        let v: Vec<f64> = w.iter().map(|&x| coordinate_root(x, kappa, p)).collect();
        let nrm = norms::lp_norm(&v, Exponent::new(p).unwrap_or(Exponent::TWO));
        if nrm <= 0.0 {
            return (v, f64::INFINITY, 1.0);
        }
        let g = lk + (p - 2.0) * nrm.ln() - target;
        // d log‖v‖ / d log κ as a v^p-weighted mean of the coordinate slopes
        let np = nrm.powf(p);
        let mut slope = 0.0;
        for &vi in &v {
            if vi > 0.0 {
                let t = kappa * vi.powf(p - 2.0);
                slope += (vi.powf(p) / np) * (-t / (1.0 + (p - 1.0) * t));
            }
        }
        (v, g, 1.0 + (p - 2.0) * slope)
    };

    // bracket
    let wn = norms::lp_norm(w, Exponent::new(p).unwrap_or(Exponent::TWO));
    let mut lo = target + (2.0 - p) * wn.ln() - 1.0;
    let mut hi = lo + 2.0;
    let mut steps = 0;
    while solve(lo).1 > 0.0 && steps < 200 {
        lo -= 2f64.powi(steps.min(8));
        steps += 1;
    }
    steps = 0;
    while solve(hi).1 < 0.0 && steps < 200 {
        hi += 2f64.powi(steps.min(8));
        steps += 1;
    }

    let mut x = 0.5 * (lo + hi);
    let mut best = solve(x);
    for _ in 0..200 {
        let (_, g, d) = &best;
        if *g == 0.0 {
            break;
        }
        if *g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut nx = x - g / d;
        if !(nx > lo && nx < hi) || !nx.is_finite() {
            nx = 0.5 * (lo + hi);
        }
        let done = (nx - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs());
        x = nx;
        best = solve(x);
        if done {
            break;
        }
    }
    best.0
}

/// `prox_{γψ}` for the unsquared elastic net: soft-threshold by γτ, then
/// shrink the result as one Euclidean block by γ(1-τ).
fn prox_elastic_net_unsquared(w: &[f64], gamma: f64, tau: f64) -> Vec<f64> {
    let s: Vec<f64> = w.iter().map(|x| (x - gamma * tau).max(0.0)).collect();
    let nrm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nrm == 0.0 {
        return s;
    }
    let scale = (1.0 - gamma * (1.0 - tau) / nrm).max(0.0);
    s.into_iter().map(|x| x * scale).collect()
}

/// Squared elastic net: `v = prox_{γψ}(w)` where `γ = 2cψ(v)`; the map
/// `γ ↦ γ - 2cψ(prox_{γψ}(w))` is increasing and is bisected.
fn prox_elastic_net(w: &[f64], c: f64, tau: f64) -> Vec<f64> {
    if tau <= 0.0 {
        return prox_lp(w, c, Exponent::TWO);
    }
    if tau >= 1.0 {
        return prox_lp(w, c, Exponent::ONE);
    }
    let spec = NormSpec::ElasticNet { tau };
    let h = |g: f64| {
        g - 2.0 * c * norms::psi_norm_unchecked(&prox_elastic_net_unsquared(w, g, tau), &spec)
    };
    let (mut lo, mut hi) = (0.0, 2.0 * c * norms::psi_norm_unchecked(w, &spec));
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    prox_elastic_net_unsquared(w, 0.5 * (lo + hi), tau)
}
