use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mpfc::config::{parse_config, SchemeKind, SimulationConfig};
use mpfc::experiments::{
    self, lemma41_check, phi0_neumann, phi0_periodic, run_convergence_study, run_energy_experiment,
    ConvergenceSpec, EnergySpec,
};
use mpfc::grid::{BoundaryKind, GridSpec};
use mpfc::model::ModelParams;
use mpfc::output::{write_convergence_csv, write_energy_csv, write_snapshot};
use mpfc::stepper::{self, TimeSpec};
use mpfc::verify;

/// Solver for a damped sixth-order crystal growth model on block-centered
/// grids, with energy ledgers, refinement studies, and self checks.
#[derive(Parser)]
#[command(name = "mpfc", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    /// Averaged two-level scheme, second order in time.
    Cn,
    /// One-level scheme, first order in time.
    FirstOrder,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation, writing the energy ledger and field snapshots.
    Simulate {
        /// Configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory, overriding `io.out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Time scheme, overriding `scheme`.
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
    /// Two-grid refinement study; writes the error and rate table.
    Converge {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated cell counts, e.g. 20,40,80,160.
        #[arg(long, value_delimiter = ',')]
        resolutions: Option<Vec<usize>>,
    },
    /// Coarsening run on the periodic square; writes the energy ledger and
    /// fails if the damped energy ever rises.
    EnergyDemo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Operator identities, the interpolation inequality, and dense-matrix
    /// cross-checks of the fast solvers. Exits nonzero on any violation.
    Check {
        /// Parsed and validated only; the suite itself is fixed.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum AppError {
    Config(String),
    Run(String),
}

impl AppError {
    fn code(&self) -> ExitCode {
        match self {
            AppError::Config(_) => ExitCode::from(2),
            AppError::Run(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Run(m) => m,
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> AppError {
    AppError::Run(e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<SimulationConfig, AppError> {
    let Some(path) = path else {
        return Ok(SimulationConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
}

fn out_dir(cfg: &SimulationConfig, flag: Option<PathBuf>) -> Result<PathBuf, AppError> {
    let dir = flag.unwrap_or_else(|| PathBuf::from(&cfg.io.out_dir));
    fs::create_dir_all(&dir).map_err(|e| run_err(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn params_of(cfg: &SimulationConfig) -> Result<ModelParams, AppError> {
    ModelParams::new(
        cfg.params.epsilon,
        cfg.params.beta,
        cfg.params.m,
        cfg.params.c0,
    )
    .map_err(run_err)
}

fn write_csv<F>(path: &Path, body: F) -> Result<(), AppError>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| run_err(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| run_err(format!("{}: {e}", path.display())))
}

fn simulate(
    cfg: &SimulationConfig,
    out: Option<PathBuf>,
    scheme: Option<SchemeArg>,
) -> Result<(), AppError> {
    let dir = out_dir(cfg, out)?;
    let scheme = match scheme {
        Some(SchemeArg::Cn) => SchemeKind::CrankNicolson,
        Some(SchemeArg::FirstOrder) => SchemeKind::FirstOrder,
        None => cfg.scheme,
    };
    let g = GridSpec::new(
        cfg.grid.nx,
        cfg.grid.ny,
        cfg.grid.lx,
        cfg.grid.ly,
        cfg.grid.bc,
    )
    .map_err(run_err)?;
    let params = params_of(cfg)?;
    let ts = TimeSpec::new(cfg.time.dt, cfg.time.t_final).map_err(run_err)?;
    let z0 = match g.bc {
        BoundaryKind::Neumann => phi0_neumann(g),
        BoundaryKind::Periodic => phi0_periodic(g),
    };
    let mut ws = stepper::StepperWorkspace::new(g);
    let mut state = stepper::init_state(&z0, &params).map_err(run_err)?;
    let mut samples = Vec::new();
    let snap = |dir: &Path, n: usize, s: &stepper::SavState| -> Result<(), AppError> {
        let path = dir.join(format!("snapshot_{n:06}.bin"));
        write_snapshot(&s.z, &path).map_err(run_err)
    };
    let estride = cfg.io.energy_stride;
    let sstride = cfg.io.snapshot_stride;
    if estride > 0 {
        samples.push(experiments::sample_state(&state, &params, &ws.plan).map_err(run_err)?);
    }
    if sstride > 0 {
        snap(&dir, 0, &state)?;
    }
    for k in 0..ts.n_steps {
        state = match scheme {
            SchemeKind::CrankNicolson if k == 0 => {
                stepper::bootstrap_first_step(&state, &mut ws, &params, ts.dt).map_err(run_err)?
            }
            SchemeKind::CrankNicolson => {
                stepper::step_cn(&state, &mut ws, &params, ts.dt).map_err(run_err)?
            }
            SchemeKind::FirstOrder => {
                stepper::step_first_order(&state, &mut ws, &params, ts.dt).map_err(run_err)?
            }
        };
        if estride > 0 && (k + 1) % estride == 0 {
            samples.push(experiments::sample_state(&state, &params, &ws.plan).map_err(run_err)?);
        }
        if sstride > 0 && (k + 1) % sstride == 0 {
            snap(&dir, k + 1, &state)?;
        }
    }
    if estride > 0 {
        write_csv(&dir.join("energy.csv"), |w| write_energy_csv(&samples, w))?;
    }
    write_snapshot(&state.z, &dir.join("final.bin")).map_err(run_err)?;
    println!(
        "simulated {} steps to t = {}; wrote {} energy rows and final.bin in {}",
        ts.n_steps,
        state.t,
        samples.len(),
        dir.display()
    );
    Ok(())
}

fn converge(
    cfg: &SimulationConfig,
    out: Option<PathBuf>,
    resolutions: Option<Vec<usize>>,
) -> Result<(), AppError> {
    let dir = out_dir(cfg, out)?;
    let resolutions = resolutions.unwrap_or_else(|| vec![20, 40, 80, 160]);
    if resolutions.is_empty() || resolutions.iter().any(|n| *n < 2) {
        return Err(AppError::Config(format!(
            "bad --resolutions {resolutions:?}: need values >= 2"
        )));
    }
    let spec = ConvergenceSpec {
        resolutions,
        t_final: cfg.time.t_final,
        params: params_of(cfg)?,
    };
    let rows = run_convergence_study(&spec).map_err(run_err)?;
    write_csv(&dir.join("convergence.csv"), |w| {
        write_convergence_csv(&rows, w)
    })?;
    let fmt_rate = |r: Option<f64>| {
        r.map(|v| format!("{v:5.2}"))
            .unwrap_or_else(|| "    -".into())
    };
    println!("  N     err_phi  rate   err_gradlap  rate      err_r  rate");
    for r in &rows {
        println!(
            "{:3}  {:10.3e}  {}  {:11.3e}  {}  {:9.3e}  {}",
            r.resolution,
            r.err_phi,
            fmt_rate(r.rate_phi),
            r.err_gradlap,
            fmt_rate(r.rate_gradlap),
            r.err_r,
            fmt_rate(r.rate_r),
        );
    }
    println!("wrote {}", dir.join("convergence.csv").display());
    Ok(())
}

fn energy_demo(cfg: &SimulationConfig, out: Option<PathBuf>) -> Result<(), AppError> {
    if cfg.grid.bc != BoundaryKind::Periodic {
        return Err(AppError::Config(
            "energy-demo needs grid.bc = periodic".to_string(),
        ));
    }
    if cfg.grid.nx != cfg.grid.ny || cfg.grid.lx != cfg.grid.ly {
        return Err(AppError::Config(
            "energy-demo needs a square grid (nx = ny, lx = ly)".to_string(),
        ));
    }
    let dir = out_dir(cfg, out)?;
    let spec = EnergySpec {
        n: cfg.grid.nx,
        extent: cfg.grid.lx,
        dt: cfg.time.dt,
        t_final: cfg.time.t_final,
        params: params_of(cfg)?,
    };
    let series = run_energy_experiment(&spec).map_err(run_err)?;
    write_csv(&dir.join("energy.csv"), |w| {
        write_energy_csv(&series.samples, w)
    })?;
    for pair in series.samples.windows(2) {
        let (a, b) = (pair[0].energy_pseudo_tilde, pair[1].energy_pseudo_tilde);
        if b > a + 1e-10 * a.abs() {
            return Err(run_err(format!(
                "damped energy rose between t = {} and t = {}: {a:.17e} -> {b:.17e}",
                pair[0].t, pair[1].t
            )));
        }
    }
    let first = series.samples.first().expect("series is never empty");
    let last = series.samples.last().expect("series is never empty");
    println!(
        "damped energy fell {:.6e} -> {:.6e} over {} steps; wrote {}",
        first.energy_pseudo_tilde,
        last.energy_pseudo_tilde,
        series.dissipation.len(),
        dir.join("energy.csv").display()
    );
    Ok(())
}

fn check() -> Result<(), AppError> {
    verify::check_operator_identities(300, 105).map_err(run_err)?;
    println!("ok: difference operator identities (300 random trials)");
    let g = GridSpec::new(32, 32, 1.0, 1.0, BoundaryKind::Neumann).map_err(run_err)?;
    lemma41_check(g, 0.25, 1000, 0x41).map_err(run_err)?;
    println!("ok: interpolation inequality (1000 random trials)");
    verify::check_dense_oracles(6, 0xacc).map_err(run_err)?;
    println!("ok: fast solvers match dense oracles");
    println!("all checks passed");
    Ok(())
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.cmd {
        Cmd::Simulate {
            config,
            out,
            scheme,
        } => {
            let cfg = load_config(config.as_deref())?;
            simulate(&cfg, out, scheme)
        }
        Cmd::Converge {
            config,
            out,
            resolutions,
        } => {
            let cfg = load_config(config.as_deref())?;
            converge(&cfg, out, resolutions)
        }
        Cmd::EnergyDemo { config, out } => {
            let cfg = load_config(config.as_deref())?;
            energy_demo(&cfg, out)
        }
        Cmd::Check { config } => {
            load_config(config.as_deref())?;
            check()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mpfc: {}", e.message());
            e.code()
        }
    }
}
