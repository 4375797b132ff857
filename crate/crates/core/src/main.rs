use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use chemofront::diagnostics::{fit_exponential, fit_power_law};
use chemofront::error::{Error, Result};
use chemofront::io::config::{load_config, parse_config, RunConfig};
use chemofront::io::csv::Table;
use chemofront::pipeline::{
    ensemble_table, execute_run, execute_sweep, exit_code, lattice_comparison, verify_run_dir,
};
use chemofront::presets::{preset_text, PRESETS};

/// Exit status when a run finished but missed an acceptance threshold.
const VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "chemofront", version, about = "Simulate and check a degenerate chemotaxis invasion model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (see `chemofront preset`).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[output] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the PDE and write a run directory.
    Run {
        #[command(flatten)]
        source: Source,
        /// Level above which `u` counts as occupied when tracking the front.
        #[arg(long)]
        threshold_support: Option<f64>,
    },
    /// Check a run directory against the comparison profiles and conservation.
    Verify {
        /// Directory written by `run`.
        dir: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol_sandwich: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol_mass: f64,
    },
    /// Run every point of the `[sweep]` section in parallel.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit a power law or an exponential to one column of a CSV file.
    Fit {
        /// CSV with a `t` column, e.g. a run's history.csv.
        input: PathBuf,
        #[arg(long, default_value = "support_radius")]
        column: String,
        #[arg(long, value_enum, default_value_t = FitKind::Power)]
        kind: FitKind,
        /// Ignore samples before this time (default: the first 20%).
        #[arg(long)]
        t_min: Option<f64>,
        /// Fail with status 3 when r² falls below this.
        #[arg(long)]
        min_r2: Option<f64>,
    },
    /// Run the lattice ensemble and compare it with the PDE.
    Lattice {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        workers: Option<usize>,
        /// Fail with status 3 when the L1 distance exceeds this.
        #[arg(long, default_value_t = 0.05)]
        tol_l1: f64,
    },
    /// List the built-in configurations or print one.
    Preset { name: Option<String> },
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    Power,
    Exponential,
}

fn load(source: &Source) -> Result<RunConfig> {
    let mut cfg = match (&source.config, &source.preset) {
        (Some(path), None) => load_config(path)?,
        (None, Some(name)) => parse_config(preset_text(name)?)?,
        _ => return Err(Error::Config("give exactly one of --config or --preset".into())),
    };
    if let Some(out) = &source.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = source.seed {
        cfg.output.seed = seed;
    }
    Ok(cfg)
}

fn cmd_run(source: &Source, threshold: Option<f64>) -> Result<u8> {
    let mut cfg = load(source)?;
    if let Some(th) = threshold {
        cfg.solver.support_threshold = th;
        cfg.solver.validate()?;
    }
    let out = cfg.output.dir.clone();
    let outcome = execute_run(&cfg, &out)?;
    let last = outcome.history.last().expect("run emits at least one row");
    println!("wrote {}", out.display());
    println!("steps          {}", outcome.steps);
    println!("t              {}", last.t);
    println!("support_radius {}", last.support_radius);
    println!("sup_u          {}", last.sup_u);
    println!("|u - 1|        {:e}", last.norm_u_minus_1);
    println!("|w|            {:e}", last.norm_w);
    println!("|v - target|   {:e}", last.norm_v_minus_target);
    println!("|z - 1|        {:e}", last.norm_z_minus_1);
    println!("clipped mass   {:e}", outcome.clipped_total);
    Ok(0)
}

fn cmd_verify(dir: &Path, tol_sandwich: f64, tol_mass: f64) -> Result<u8> {
    let report = verify_run_dir(dir, tol_sandwich)?;
    let (c1, c2) = report.oracles.signal_constants;
    println!("signal constants C1 = {c1:e}, C2 = {c2:e}");
    for note in &report.oracles.notes {
        println!("note: {note}");
    }
    if let Some(l) = &report.oracles.lower {
        println!("lower profile: eps = {:e}, eta = {:e}, beta = {}", l.eps, l.eta, l.beta);
    }
    if let Some(u) = &report.oracles.upper {
        println!("upper profile: tau = {:e}, t0 = {:e}, r2 = {}", u.params.tau, u.t0, u.r2);
    }
    let s = &report.sandwich;
    println!(
        "sandwich: {} snapshots ({} within the upper horizon), max lower violation {:e}, max upper violation {:e}",
        s.snapshots_checked, s.upper_snapshots_checked, s.max_lower_violation, s.max_upper_violation
    );
    for v in s.violation_locations.iter().take(5) {
        println!("  {:?} violation {:e} at x = {:?}, t = {}", v.kind, v.amount, v.x, v.t);
    }
    println!("conservation drift of v + w: {:e}", report.audit.drift);
    let r = &report.final_row;
    println!(
        "final residuals at t = {}: |u-1| {:e}, |w| {:e}, |v-target| {:e}, |z-1| {:e}",
        r.t, r.norm_u_minus_1, r.norm_w, r.norm_v_minus_target, r.norm_z_minus_1
    );
    if report.passes(tol_sandwich, tol_mass) {
        println!("verify: ok");
        Ok(0)
    } else {
        println!("verify: FAILED (tol-sandwich {tol_sandwich:e}, tol-mass {tol_mass:e})");
        Ok(VIOLATION)
    }
}

fn cmd_sweep(source: &Source, workers: Option<usize>) -> Result<u8> {
    let cfg = load(source)?;
    let out = cfg.output.dir.clone();
    let points = execute_sweep(&cfg, &out, workers)?;
    for p in &points {
        println!(
            "{}  value {}  steps {}  support_radius {}  sup_u {}",
            p.dir.display(),
            p.value,
            p.steps,
            p.final_row.support_radius,
            p.final_row.sup_u
        );
    }
    Ok(0)
}

fn cmd_fit(input: &Path, column: &str, kind: FitKind, t_min: Option<f64>, min_r2: Option<f64>) -> Result<u8> {
    let table = Table::read(input)?;
    let ts = table.column("t")?;
    let ys = table.column(column)?;
    let r2 = match kind {
        FitKind::Power => {
            let f = fit_power_law(&ts, &ys, t_min)?;
            println!("exponent {:.17e}", f.exponent);
            println!("stderr   {:.17e}", f.exponent_stderr);
            println!("prefactor {:.17e}", f.prefactor);
            println!("r_squared {:.17e}", f.r_squared);
            println!("samples  {}", f.samples);
            f.r_squared
        }
        FitKind::Exponential => {
            let f = fit_exponential(&ts, &ys, t_min)?;
            println!("rate     {:.17e}", f.rate);
            println!("stderr   {:.17e}", f.rate_stderr);
            println!("prefactor {:.17e}", f.prefactor);
            println!("r_squared {:.17e}", f.r_squared);
            println!("samples  {} ({} excluded)", f.samples, f.excluded);
            f.r_squared
        }
    };
    match min_r2 {
        Some(min) if !(r2 >= min) => {
            println!("fit: r_squared {r2} below {min}");
            Ok(VIOLATION)
        }
        _ => Ok(0),
    }
}

fn cmd_lattice(source: &Source, workers: Option<usize>, tol_l1: f64) -> Result<u8> {
    let cfg = load(source)?;
    let lattice = cfg
        .lattice
        .as_ref()
        .ok_or_else(|| Error::Config("lattice needs a [lattice] section".into()))?;
    let cmp = lattice_comparison(lattice, cfg.output.seed, workers)?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    ensemble_table(&cmp.ensemble, lattice.end_time).write(&out.join("lattice.csv"))?;
    let mut comparison = Table::new(&["bin", "x", "lattice_mean", "pde"]);
    let grid = *cmp.pde.grid();
    for (k, (a, b)) in cmp.ensemble.mean.values().iter().zip(cmp.pde.values()).enumerate() {
        comparison.push(vec![k as f64, grid.center(k)[0], *a, *b]);
    }
    comparison.write(&out.join("comparison.csv"))?;
    println!("wrote {}", out.display());
    println!("seeds {}  steps per member {:?}", cmp.ensemble.seeds.len(), cmp.ensemble.steps);
    println!("overflow events {}", cmp.ensemble.overflow_events);
    println!("L1 distance to PDE {:e}", cmp.l1);
    if cmp.l1 <= tol_l1 {
        Ok(0)
    } else {
        println!("lattice: L1 distance above {tol_l1}");
        Ok(VIOLATION)
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run {
            source,
            threshold_support,
        } => cmd_run(&source, threshold_support),
        Command::Verify {
            dir,
            tol_sandwich,
            tol_mass,
        } => cmd_verify(&dir, tol_sandwich, tol_mass),
        Command::Sweep { source, workers } => cmd_sweep(&source, workers),
        Command::Fit {
            input,
            column,
            kind,
            t_min,
            min_r2,
        } => cmd_fit(&input, &column, kind, t_min, min_r2),
        Command::Lattice {
            source,
            workers,
            tol_l1,
        } => cmd_lattice(&source, workers, tol_l1),
        Command::Preset { name: None } => {
            for (name, text) in PRESETS {
                let summary = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                println!("{name:<14} {summary}");
            }
            Ok(0)
        }
        Command::Preset { name: Some(name) } => {
            print!("{}", preset_text(&name)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
