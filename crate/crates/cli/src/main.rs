mod config;
mod data;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use psimkl::bounds::{self, BoundInputs};
use psimkl::de::DeConfig;
use psimkl::experiments::{self, Figure1Scenario, SyntheticSpec};
use psimkl::kernels::{self, KernelSpec};
use psimkl::nalgebra::DMatrix;
use psimkl::norms;
use psimkl::solver::{self, MklModel, MklProblem};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use config::{BoundConfig, DeMinConfig, Figure1Config, Figure2Config, FitConfig, Setting};

/// ψ-norm multiple kernel learning and learning-rate bounds.
#[derive(Parser)]
#[command(name = "psimkl", version)]
struct Cli {
    /// JSON config for the command (defaults apply to missing fields).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for experiments (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Print the command's default config and exit.
    #[arg(long, global = true)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a CSV dataset and write model.json.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Predict with model.json on a CSV of inputs; writes predictions.csv.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate the bound formulas; writes bound.json.
    Bound,
    /// Minimize the leading term over the radii; writes de_min.json.
    DeMin,
    /// Bound-vs-p curve; writes figure1.csv.
    Figure1,
    /// Generalization error over (p, λ); writes figure2.csv.
    Figure2,
}

/// The outcome of a command that ran to completion.
enum Status {
    Ok,
    /// Results were written but something numerical needs attention.
    Warning(String),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    kernels: Vec<KernelSpec>,
    train_inputs: Vec<Vec<f64>>,
    model: MklModel,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", p.display()))
        }
    }
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join(name);
    let text = serde_json::to_string_pretty(value)?;
    fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn csv_writer(out: &Path, name: &str) -> Result<(csv::Writer<fs::File>, PathBuf)> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join(name);
    let w = csv::Writer::from_path(&path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok((w, path))
}

fn print_defaults(command: &Command) -> Result<()> {
    let text = match command {
        Command::Fit { .. } => serde_json::to_string_pretty(&FitConfig::default())?,
        Command::Predict { .. } => "{}".to_string(),
        Command::Bound => serde_json::to_string_pretty(&BoundConfig::default())?,
        Command::DeMin => serde_json::to_string_pretty(&DeMinConfig::default())?,
        Command::Figure1 => serde_json::to_string_pretty(&Figure1Config::default())?,
        Command::Figure2 => serde_json::to_string_pretty(&Figure2Config::default())?,
    };
    println!("{text}");
    Ok(())
}

fn cmd_fit(cli: &Cli, data_path: &Path) -> Result<Status> {
    let cfg: FitConfig = load_config(cli.config.as_deref())?;
    let table = data::read_table(data_path, true)?;
    let y = table.outputs.expect("read_table checked the y column");
    let specs: Vec<KernelSpec> = if cfg.kernels.is_empty() {
        (0..table.inputs.ncols())
            .map(|c| KernelSpec::new(c, cfg.default_width))
            .collect::<psimkl::Result<_>>()?
    } else {
        cfg.kernels
            .iter()
            .map(|k| KernelSpec::new(k.coordinate, k.width))
            .collect::<psimkl::Result<_>>()?
    };
    let dataset = kernels::Dataset::new(table.inputs.clone(), y.clone())?;
    let bank = kernels::gram_bank(&dataset, &specs)?;
    let model = solver::fit(
        &MklProblem {
            bank: &bank,
            outputs: &y,
            norm: cfg.norm.clone(),
            lambda: cfg.lambda,
            with_bias: cfg.with_bias,
        },
        &cfg.solver,
    )?;
    let converged = model.diagnostics.converged;
    let residual = model.diagnostics.residual;
    let file = ModelFile {
        kernels: specs,
        train_inputs: table
            .inputs
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        model,
    };
    let path = write_json(&cli.out, "model.json", &file)?;
    eprintln!("wrote {}", path.display());
    Ok(if converged {
        Status::Ok
    } else {
        Status::Warning(format!("solver did not converge (residual {residual:e})"))
    })
}

fn cmd_predict(cli: &Cli, model_path: &Path, data_path: &Path) -> Result<Status> {
    let text = fs::read_to_string(model_path)
        .with_context(|| format!("cannot read {}", model_path.display()))?;
    let file: ModelFile = serde_json::from_str(&text)
        .with_context(|| format!("invalid model {}", model_path.display()))?;
    let n = file.train_inputs.len();
    let d = file.train_inputs.first().map_or(0, Vec::len);
    if file.train_inputs.iter().any(|r| r.len() != d) {
        bail!("{}: ragged train_inputs", model_path.display());
    }
    let train = DMatrix::from_row_iterator(n, d, file.train_inputs.iter().flatten().copied());
    let table = data::read_table(data_path, false)?;
    let cross = kernels::cross_grams(&train, &table.inputs, &file.kernels)?;
    let pred = solver::predict(&file.model, &cross)?;
    let (mut w, path) = csv_writer(&cli.out, "predictions.csv")?;
    w.write_record(["y_hat"])?;
    for v in pred.iter() {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct BoundOutput {
    n: f64,
    num_kernels: usize,
    norm: psimkl::NormReport,
    truth_psi_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_beta: Option<bounds::AlphaBeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leading_term_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    local_rademacher: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    homogeneous: Option<bounds::RateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    minimax: Option<bounds::MinimaxReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    concrete: Vec<ConcreteOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inhomogeneous: Option<bounds::InhomogeneousReport>,
}

#[derive(Serialize)]
struct ConcreteOutput {
    family: bounds::RateFamily,
    leading_term: f64,
}

fn cmd_bound(cli: &Cli) -> Result<Status> {
    let cfg: BoundConfig = load_config(cli.config.as_deref())?;
    let mut inputs = BoundInputs::new(
        cfg.n,
        cfg.complexities.clone(),
        cfg.truth_norms.clone(),
        cfg.norm.clone(),
    )?
    .with_kappa(cfg.kappa)?;
    let m = inputs.num_kernels();
    let report = norms::isotropy_report(&cfg.norm, m)?;
    let truth_psi = inputs.truth_psi_norm();
    let s0 = cfg.complexities[0];
    let homogeneous_s = cfg.complexities.iter().all(|s| *s == s0) && s0 > 0.0;

    let (mut alpha_beta, mut leading, mut local) = (None, None, None);
    if let Some(r) = &cfg.radii {
        inputs = inputs.with_radii(r.clone())?;
        alpha_beta = Some(bounds::alpha_beta(&inputs)?);
        leading = Some(bounds::leading_term_objective(&inputs)?);
        if let Some(lr) = &cfg.local_rademacher {
            local = Some(bounds::local_rademacher_bound(&inputs, lr.r, lr.big_r)?);
        }
    } else if cfg.local_rademacher.is_some() {
        bail!("local_rademacher needs radii");
    }

    let (mut homogeneous, mut minimax) = (None, None);
    if homogeneous_s && truth_psi > 0.0 {
        homogeneous = Some(bounds::homogeneous_rate(
            cfg.n,
            m,
            s0,
            truth_psi,
            report.dual_of_ones,
        )?);
        let radius = cfg.minimax_radius.unwrap_or(truth_psi);
        minimax = Some(bounds::minimax_lower(
            cfg.n,
            m,
            s0,
            radius,
            report.dual_of_ones,
            cfg.cbar,
        )?);
    }
    let concrete = if homogeneous_s {
        cfg.concrete
            .iter()
            .map(|family| {
                Ok(ConcreteOutput {
                    family: family.clone(),
                    leading_term: bounds::concrete_rate(cfg.n, s0, family)?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else if cfg.concrete.is_empty() {
        Vec::new()
    } else {
        bail!("concrete rates need equal complexities in (0, 1)");
    };
    // one complex kernel, the rest formally simple, unit target norms
    let single_complex = m >= 1
        && s0 > 0.0
        && cfg.complexities[1..].iter().all(|s| *s == 0.0)
        && cfg.truth_norms.iter().all(|t| *t == 1.0);
    let inhomogeneous = if single_complex {
        Some(bounds::inhomogeneous_comparison(cfg.n, m, s0)?)
    } else {
        None
    };

    let out = BoundOutput {
        n: cfg.n,
        num_kernels: m,
        norm: report,
        truth_psi_norm: truth_psi,
        alpha_beta,
        leading_term_objective: leading,
        local_rademacher: local,
        homogeneous,
        minimax,
        concrete,
        inhomogeneous,
    };
    let path = write_json(&cli.out, "bound.json", &out)?;
    eprintln!("wrote {}", path.display());
    Ok(Status::Ok)
}

fn required_seed(cli: &Cli, from_config: Option<u64>) -> Result<u64> {
    cli.seed
        .or(from_config)
        .context("a seed is required: pass --seed or set \"seed\" in the config")
}

fn cmd_de_min(cli: &Cli) -> Result<Status> {
    let cfg: DeMinConfig = load_config(cli.config.as_deref())?;
    let seed = required_seed(cli, cfg.seed)?;
    let inputs = BoundInputs::new(
        cfg.n,
        cfg.complexities.clone(),
        cfg.truth_norms.clone(),
        cfg.norm.clone(),
    )?
    .with_kappa(cfg.kappa)?;
    let mut de = DeConfig::new(vec![cfg.log_radius_box; inputs.num_kernels()], seed);
    de.generations = cfg.generations;
    de.population = cfg.population;
    de.differential_weight = cfg.differential_weight;
    de.crossover = cfg.crossover;
    let report = bounds::minimize_over_radii(&inputs, &de)?;
    let path = write_json(&cli.out, "de_min.json", &report)?;
    eprintln!("wrote {}", path.display());
    Ok(match &report.warning {
        Some(w) => Status::Warning(w.clone()),
        None => Status::Ok,
    })
}

fn cmd_figure1(cli: &Cli) -> Result<Status> {
    let cfg: Figure1Config = load_config(cli.config.as_deref())?;
    let seed = required_seed(cli, cfg.seed)?;
    if cfg.m == 0 {
        bail!("m must be positive");
    }
    let grid = experiments::linear_grid(cfg.p_grid.lo, cfg.p_grid.hi, cfg.p_grid.step)?;
    let mut scenario = Figure1Scenario::sample(cfg.m, seed);
    if cfg.homogenize {
        scenario = scenario.homogenized();
    }
    let curve = experiments::figure1_curve(&scenario, cfg.n, &grid, seed, Some(cfg.generations))?;
    let (mut w, path) = csv_writer(&cli.out, "figure1.csv")?;
    w.write_record(["p", "bound"])?;
    for point in &curve {
        w.write_record([point.p.to_string(), point.bound.to_string()])?;
    }
    w.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(Status::Ok)
}

fn cmd_figure2(cli: &Cli) -> Result<Status> {
    let cfg: Figure2Config = load_config(cli.config.as_deref())?;
    let seed = required_seed(cli, cfg.seed)?;
    let mut spec = match cfg.setting {
        Setting::Homogeneous => SyntheticSpec::homogeneous(cfg.n_train, seed),
        Setting::Inhomogeneous => SyntheticSpec::inhomogeneous(cfg.n_train, seed),
    };
    spec.noise_std = cfg.noise_std;
    let p_grid = experiments::linear_grid(cfg.p_grid.lo, cfg.p_grid.hi, cfg.p_grid.step)?;
    let lambdas = experiments::log_grid(
        cfg.lambda_grid.lo,
        cfg.lambda_grid.hi,
        cfg.lambda_grid.points,
    );
    let result = experiments::run_lp_sweep(&spec, &p_grid, &lambdas, cfg.repetitions, &cfg.solver)?;
    let (mut w, path) = csv_writer(&cli.out, "figure2.csv")?;
    w.write_record(["p", "lambda", "mean_error", "std_error", "best_flag"])?;
    for cell in &result.cells {
        let best = result
            .best
            .iter()
            .any(|b| b.p == cell.p && b.lambda == cell.lambda);
        w.write_record([
            cell.p.to_string(),
            cell.lambda.to_string(),
            cell.mean_error.to_string(),
            cell.std_error.to_string(),
            u8::from(best).to_string(),
        ])?;
    }
    w.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(if result.non_converged > 0 {
        Status::Warning(format!(
            "{} fits did not converge and were excluded",
            result.non_converged
        ))
    } else {
        Status::Ok
    })
}

fn run(cli: &Cli) -> Result<Status> {
    if cli.print_defaults {
        print_defaults(&cli.command)?;
        return Ok(Status::Ok);
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match &cli.command {
        Command::Fit { data } => cmd_fit(cli, data.as_deref().context("fit needs --data")?),
        Command::Predict { model, data } => cmd_predict(
            cli,
            model.as_deref().context("predict needs --model")?,
            data.as_deref().context("predict needs --data")?,
        ),
        Command::Bound => cmd_bound(cli),
        Command::DeMin => cmd_de_min(cli),
        Command::Figure1 => cmd_figure1(cli),
        Command::Figure2 => cmd_figure2(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Warning(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
