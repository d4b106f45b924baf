//! Differential evolution (rand/1/bin) over a box.
//!
//! Trial vectors are generated by one seeded RNG on the calling thread;
//! only objective evaluation is spread over the rayon pool, so results are
//! bitwise reproducible for a given seed whatever the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MklError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    /// Population size; `None` means 15 × dimension (at least 4).
    pub population: Option<usize>,
    pub generations: usize,
    /// Differential weight F.
    pub differential_weight: f64,
    /// Crossover rate CR.
    pub crossover: f64,
    /// Per-dimension `(lo, hi)`.
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
    /// Points injected into the initial population (clamped to the box).
    #[serde(default)]
    pub initial_points: Vec<Vec<f64>>,
}

impl DeConfig {
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        Self {
            population: None,
            generations: 300,
            differential_weight: 0.7,
            crossover: 0.9,
            bounds,
            seed,
            initial_points: Vec::new(),
        }
    }

    pub fn population_size(&self) -> usize {
        self.population.unwrap_or(15 * self.bounds.len()).max(4)
    }

    fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(MklError::InvalidInput(
                "differential evolution needs at least one dimension".into(),
            ));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(MklError::InvalidInput(format!(
                    "invalid box [{lo}, {hi}] in dimension {i}"
                )));
            }
        }
        if self.population.is_some_and(|p| p < 4) {
            return Err(MklError::InvalidInput(
                "population must be at least 4".into(),
            ));
        }
        if !(self.differential_weight > 0.0 && self.differential_weight <= 2.0) {
            return Err(MklError::InvalidInput(format!(
                "differential weight must lie in (0, 2], got {}",
                self.differential_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(MklError::InvalidInput(format!(
                "crossover must lie in [0, 1], got {}",
                self.crossover
            )));
        }
        for p in &self.initial_points {
            if p.len() != self.bounds.len() {
                return Err(MklError::Dimension(
                    "initial point has the wrong dimension".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    /// Best value after initialization and after every generation.
    pub history: Vec<f64>,
}

/// Folds `x` back into `[lo, hi]` by mirror reflection at the walls.
pub fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    if (lo..=hi).contains(&x) {
        return x;
    }
    let w = hi - lo;
    let mut t = (x - lo).rem_euclid(2.0 * w);
    if t > w {
        t = 2.0 * w - t;
    }
    (lo + t).clamp(lo, hi)
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `objective` over the configured box. NaN values count as +∞.
pub fn minimize<F>(objective: F, config: &DeConfig) -> Result<DeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let dim = config.bounds.len();
    let np = config.population_size();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(np);
    for p in config.initial_points.iter().take(np) {
        pop.push(
            p.iter()
                .zip(&config.bounds)
                .map(|(x, &(lo, hi))| x.clamp(lo, hi))
                .collect(),
        );
    }
    while pop.len() < np {
        pop.push(
            config
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect(),
        );
    }
    let mut fit: Vec<f64> = pop.par_iter().map(|x| sanitize(objective(x))).collect();
    let mut evaluations = np;
    if fit.iter().all(|v| v.is_infinite() && v.is_sign_positive()) {
        return Err(MklError::Optimizer(
            "objective is NaN or +inf on the whole initial population".into(),
        ));
    }

    let argmin = |fit: &[f64]| {
        let mut best = 0;
        for i in 1..fit.len() {
            if fit[i] < fit[best] {
                best = i;
            }
        }
        best
    };
    let mut best = argmin(&fit);
    let mut history = Vec::with_capacity(config.generations + 1);
    history.push(fit[best]);

    let f = config.differential_weight;
    for _ in 0..config.generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let (a, b, c) = distinct_three(&mut rng, np, i);
                let forced = rng.random_range(0..dim);
                (0..dim)
                    .map(|j| {
                        let (lo, hi) = config.bounds[j];
                        if j == forced || rng.random::<f64>() < config.crossover {
                            reflect(pop[a][j] + f * (pop[b][j] - pop[c][j]), lo, hi)
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_fit: Vec<f64> = trials.par_iter().map(|x| sanitize(objective(x))).collect();
        evaluations += np;
        for (i, (x, v)) in trials.into_iter().zip(trial_fit).enumerate() {
            if v <= fit[i] {
                pop[i] = x;
                fit[i] = v;
            }
        }
        best = argmin(&fit);
        history.push(fit[best]);
    }

    Ok(DeResult {
        best_point: pop[best].clone(),
        best_value: fit[best],
        evaluations,
        history,
    })
}

fn distinct_three(rng: &mut ChaCha8Rng, np: usize, exclude: usize) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let k = rng.random_range(0..np);
        if k != exclude && !taken.contains(&k) {
            return k;
        }
    };
    let a = pick(&[]);
    let b = pick(&[a]);
    let c = pick(&[a, b]);
    (a, b, c)
}
