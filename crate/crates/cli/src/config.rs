//! Per-command JSON configs. Every field has a default, printed by
//! `--print-defaults`; unknown fields are rejected.

use psimkl::bounds::RateFamily;
use psimkl::{KernelSpec, NormSpec, SolverOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Explicit kernels; when empty, one Gaussian of `default_width` per
    /// input column.
    pub kernels: Vec<KernelSpec>,
    pub default_width: f64,
    pub norm: NormSpec,
    pub lambda: f64,
    pub with_bias: bool,
    pub solver: SolverOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            kernels: Vec::new(),
            default_width: 0.5,
            norm: NormSpec::Lp {
                p: psimkl::norms::Exponent::ONE,
            },
            lambda: 1e-3,
            with_bias: true,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalRademacherArgs {
    pub r: f64,
    pub big_r: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub n: f64,
    pub complexities: Vec<f64>,
    pub truth_norms: Vec<f64>,
    pub kappa: f64,
    pub norm: NormSpec,
    /// Radii for the α/β quantities and the leading-term objective.
    pub radii: Option<Vec<f64>>,
    /// ψ-ball radius of the minimax bound; defaults to `‖f*‖_ψ`.
    pub minimax_radius: Option<f64>,
    pub cbar: f64,
    pub concrete: Vec<RateFamily>,
    pub local_rademacher: Option<LocalRademacherArgs>,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            n: 1000.0,
            complexities: vec![0.5; 4],
            truth_norms: vec![1.0; 4],
            kappa: 1.0,
            norm: NormSpec::Lp {
                p: psimkl::norms::Exponent::ONE,
            },
            radii: None,
            minimax_radius: None,
            cbar: 1.0,
            concrete: Vec::new(),
            local_rademacher: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeMinConfig {
    pub n: f64,
    pub complexities: Vec<f64>,
    pub truth_norms: Vec<f64>,
    pub kappa: f64,
    pub norm: NormSpec,
    pub generations: usize,
    pub population: Option<usize>,
    pub differential_weight: f64,
    pub crossover: f64,
    /// Box for every log radius.
    pub log_radius_box: (f64, f64),
    pub seed: Option<u64>,
}

impl Default for DeMinConfig {
    fn default() -> Self {
        let b = BoundConfig::default();
        Self {
            n: b.n,
            complexities: b.complexities,
            truth_norms: b.truth_norms,
            kappa: 1.0,
            norm: b.norm,
            generations: 300,
            population: None,
            differential_weight: 0.7,
            crossover: 0.9,
            log_radius_box: psimkl::bounds::LOG_RADIUS_BOX,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    /// Decimal exponent of the smallest value.
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    pub n: f64,
    pub m: usize,
    pub p_grid: LinearGrid,
    /// Replace every complexity by their mean.
    pub homogenize: bool,
    pub generations: usize,
    pub seed: Option<u64>,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Self {
            n: 100.0,
            m: 10,
            p_grid: LinearGrid {
                lo: 1.0,
                hi: 3.0,
                step: 0.2,
            },
            homogenize: false,
            generations: 300,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Homogeneous,
    Inhomogeneous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure2Config {
    pub setting: Setting,
    pub n_train: usize,
    pub repetitions: usize,
    pub noise_std: f64,
    pub p_grid: LinearGrid,
    pub lambda_grid: LogGrid,
    pub solver: SolverOptions,
    pub seed: Option<u64>,
}

impl Default for Figure2Config {
    fn default() -> Self {
        Self {
            setting: Setting::Homogeneous,
            n_train: 200,
            repetitions: 20,
            noise_std: 0.1,
            p_grid: LinearGrid {
                lo: 1.0,
                hi: 3.0,
                step: 0.2,
            },
            lambda_grid: LogGrid {
                lo: -7.0,
                hi: -2.0,
                points: 21,
            },
            solver: SolverOptions::default(),
            seed: None,
        }
    }
}
