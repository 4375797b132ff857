//! Whole-run workflows shared by the command-line tool and the tests: run
//! directories, post-hoc verification against the comparison profiles,
//! parameter sweeps and the lattice ensemble comparison.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::diagnostics::{
    conservation_audit, support_radius, ConservationAudit, HistoryRow, SandwichAccumulator, SandwichReport,
    SignalBounds,
};
use crate::error::{Error, Result};
use crate::io::config::{LatticeConfig, RunConfig};
use crate::io::csv::{history_from_table, history_table, Table};
use crate::io::snapshot::{read_snapshot_on, write_snapshot};
use crate::lattice::{run_ensemble, EnsembleResult, LatticeState};
use crate::model::{Field, Grid, ModelParams, StateQuad};
use crate::oracles::profiles::{select_lower_params, select_upper_params, LowerInputs, ProfileParams, UpperInputs, UpperProfile};
use crate::solver::{run, RunOutcome, RunSink, SolverConfig};

pub const RUN_CONFIG_FILE: &str = "run.cfg";
pub const HISTORY_FILE: &str = "history.csv";
pub const BOUNDS_FILE: &str = "signal_bounds.csv";
pub const FINAL_FILE: &str = "final.bin";
pub const SNAPSHOT_DIR: &str = "snapshots";

const BOUNDS_HEADER: [&str; 6] = ["grad_max", "lap_max", "steps", "clipped_total", "min_value", "max_u"];

/// Process exit status for an error: 1 for usage, config and file problems,
/// 2 for numerical failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::ConfigSyntax { .. } | Error::InvalidParam { .. } | Error::Io { .. } | Error::Snapshot(_) => 1,
        _ => 2,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes every emitted state as `snapshots/snap_<step>.bin`.
pub struct SnapshotDirSink {
    dir: PathBuf,
}

impl SnapshotDirSink {
    pub fn new(dir: &Path) -> Result<Self> {
        create_dir(dir)?;
        Ok(SnapshotDirSink { dir: dir.to_path_buf() })
    }
}

impl RunSink for SnapshotDirSink {
    fn snapshot(&mut self, step: usize, state: &StateQuad) -> Result<()> {
        write_snapshot(state, &self.dir.join(format!("snap_{step:09}.bin")))
    }
}

/// Feeds `u` of every emitted state to a sandwich accumulator.
pub struct SandwichSink(pub SandwichAccumulator);

impl RunSink for SandwichSink {
    fn snapshot(&mut self, _step: usize, state: &StateQuad) -> Result<()> {
        self.0.observe(&state.u, state.t);
        Ok(())
    }
}

/// Runs `cfg` and writes `run.cfg`, `history.csv`, `signal_bounds.csv`,
/// `final.bin` and `snapshots/` under `out`.
pub fn execute_run(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    create_dir(out)?;
    let text = cfg.to_text();
    fs::write(out.join(RUN_CONFIG_FILE), &text).map_err(|e| Error::io(out.join(RUN_CONFIG_FILE), e))?;
    let initial = cfg.initial_state()?;
    let mut snaps = SnapshotDirSink::new(&out.join(SNAPSHOT_DIR))?;
    let outcome = run(&initial, &cfg.model, &cfg.solver, &mut [&mut snaps])?;
    history_table(&outcome.history).write(&out.join(HISTORY_FILE))?;
    let mut bounds = Table::new(&BOUNDS_HEADER);
    bounds.push(vec![
        outcome.signal_bounds.grad_max,
        outcome.signal_bounds.lap_max,
        outcome.steps as f64,
        outcome.clipped_total,
        outcome.min_value,
        outcome.max_u,
    ]);
    bounds.write(&out.join(BOUNDS_FILE))?;
    write_snapshot(&outcome.final_state, &out.join(FINAL_FILE))?;
    Ok(outcome)
}

/// Comparison profiles for a run, or the reason each one was skipped.
#[derive(Debug, Clone)]
pub struct Oracles {
    pub lower: Option<ProfileParams>,
    pub upper: Option<UpperProfile>,
    pub notes: Vec<String>,
    /// `(C1, C2)` after the margin.
    pub signal_constants: (f64, f64),
}

/// Builds the lower and upper profiles from the configuration, the initial
/// state and the signal bounds observed during the run.
pub fn build_oracles(cfg: &RunConfig, initial: &StateQuad, bounds: &SignalBounds) -> Oracles {
    let grid = *initial.grid();
    let (c1, c2) = bounds.with_margin(cfg.oracle.margin);
    let x0 = cfg.oracle.x0.unwrap_or_else(|| cfg.solver.center_for(&grid));
    let u0 = &initial.u;
    let r0 = support_radius(u0, x0, 0.0);
    let m = &cfg.model;
    let mut out = Oracles {
        lower: None,
        upper: None,
        notes: Vec::new(),
        signal_constants: (c1, c2),
    };
    if cfg.oracle.lower {
        let seed_radius = cfg.oracle.seed_radius.unwrap_or(0.5 * r0);
        let inf_on_seed = (0..grid.len())
            .filter(|&k| crate::model::distance(grid.center(k), x0) <= seed_radius)
            .map(|k| u0.values()[k])
            .fold(f64::INFINITY, f64::min);
        let inputs = LowerInputs {
            m: m.m,
            n: grid.dim(),
            mu: m.mu,
            delta: m.delta,
            seed_radius,
            eps1: inf_on_seed.min(0.5),
            diam: grid.diameter(),
            c1,
            c2,
            x0,
        };
        if !(inputs.eps1 > 0.0 && inputs.eps1.is_finite()) {
            out.notes.push(format!("lower profile skipped: u0 is not positive on the seed ball of radius {seed_radius}"));
        } else {
            match select_lower_params(&inputs) {
                Ok(p) => out.lower = Some(p),
                Err(e) => out.notes.push(format!("lower profile skipped: {e}")),
            }
        }
    }
    if cfg.oracle.upper {
        let r1 = cfg.oracle.r1.unwrap_or(0.9 * grid.distance_to_boundary(x0));
        let inputs = UpperInputs {
            m: m.m,
            mu: m.mu,
            delta: m.delta,
            r0,
            r1,
            eps1: u0.max(),
            c1,
            c2,
            x0,
            tau_start: cfg.oracle.tau_start,
        };
        match select_upper_params(&inputs) {
            Ok(p) => out.upper = Some(p),
            Err(e) => out.notes.push(format!("upper profile skipped: {e}")),
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub oracles: Oracles,
    pub sandwich: SandwichReport,
    pub audit: ConservationAudit,
    pub final_row: HistoryRow,
}

impl VerifyReport {
    pub fn passes(&self, tol_sandwich: f64, tol_mass: f64) -> bool {
        self.sandwich.passes(tol_sandwich) && self.audit.drift <= tol_mass
    }
}

fn snapshot_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    paths.sort();
    Ok(paths)
}

fn read_bounds(path: &Path) -> Result<SignalBounds> {
    let t = Table::read(path)?;
    let first = |name: &str| -> Result<f64> {
        t.column(name)?
            .first()
            .copied()
            .ok_or_else(|| Error::Config(format!("{} has no data row", path.display())))
    };
    Ok(SignalBounds {
        grad_max: first("grad_max")?,
        lap_max: first("lap_max")?,
    })
}

/// Re-reads a run directory and checks it against the comparison profiles
/// and the conservation law.
pub fn verify_run_dir(dir: &Path, tol_sandwich: f64) -> Result<VerifyReport> {
    let cfg = crate::io::config::load_config(&dir.join(RUN_CONFIG_FILE))?;
    let initial = cfg.initial_state()?;
    let bounds = read_bounds(&dir.join(BOUNDS_FILE))?;
    let oracles = build_oracles(&cfg, &initial, &bounds);
    let mut acc = SandwichAccumulator::new(
        oracles.lower.clone(),
        oracles.upper.as_ref().map(|u| (u.params.clone(), u.t0)),
        tol_sandwich,
    );
    for path in snapshot_paths(&dir.join(SNAPSHOT_DIR))? {
        let s = read_snapshot_on(&path, &cfg.grid).map_err(|e| match e {
            Error::Snapshot(m) => Error::Snapshot(format!("{}: {m}", path.display())),
            other => other,
        })?;
        acc.observe(&s.u, s.t);
    }
    let history = history_from_table(&Table::read(&dir.join(HISTORY_FILE))?)?;
    let audit = conservation_audit(&history)?;
    let final_row = *history
        .last()
        .ok_or_else(|| Error::InsufficientData("history is empty".into()))?;
    Ok(VerifyReport {
        oracles,
        sandwich: acc.finish(),
        audit,
        final_row,
    })
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub dir: PathBuf,
    pub value: String,
    pub final_row: HistoryRow,
    pub steps: usize,
}

/// Runs every point of the `[sweep]` section into `out/point_<k>`.
pub fn execute_sweep(cfg: &RunConfig, out: &Path, workers: Option<usize>) -> Result<Vec<SweepPoint>> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs a [sweep] section".into()))?;
    let points = cfg.sweep_points()?;
    create_dir(out)?;
    let results = with_workers(workers, || {
        points
            .par_iter()
            .enumerate()
            .map(|(k, p)| {
                let dir = out.join(format!("point_{k:03}"));
                let outcome = execute_run(p, &dir)?;
                Ok(SweepPoint {
                    dir,
                    value: sweep.values[k].clone(),
                    final_row: *outcome.history.last().expect("nonempty history"),
                    steps: outcome.steps,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut index = format!("point,{}.{}\n", sweep.section, sweep.key);
    for (k, r) in results.iter().enumerate() {
        index.push_str(&format!("point_{k:03},{}\n", r.value));
    }
    fs::write(out.join("sweep_index.csv"), index).map_err(|e| Error::io(out.join("sweep_index.csv"), e))?;
    Ok(results)
}

/// Lattice ensemble against the porous-medium equation on the same sites.
#[derive(Debug, Clone)]
pub struct LatticeComparison {
    pub ensemble: EnsembleResult,
    /// PDE density averaged onto the same bins.
    pub pde: Field,
    /// `Σ |lattice mean - pde| · bin width`.
    pub l1: f64,
}

pub fn lattice_template(cfg: &LatticeConfig) -> Result<LatticeState> {
    let mut occupancy = vec![0; cfg.sites];
    occupancy[cfg.load_site] = cfg.particles;
    let mut s = LatticeState::new(occupancy, cfg.u_max, cfg.spacing, cfg.kernel, cfg.m, cfg.alpha, 0)?;
    s.origin = cfg.origin;
    s.beta = cfg.beta;
    Ok(s)
}

/// With a flat signal the pushing kernel's mean field is `ũ_t = α Δ_h(ũ^m)`,
/// so the PDE runs in pure-diffusion mode to time `α T`.
pub fn lattice_comparison(cfg: &LatticeConfig, first_seed: u64, workers: Option<usize>) -> Result<LatticeComparison> {
    let template = lattice_template(cfg)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|k| first_seed.wrapping_add(k)).collect();
    let ensemble = with_workers(workers, || run_ensemble(&template, &seeds, cfg.end_time, cfg.leap, cfg.cells_per_bin))??;

    let grid = Grid::new_1d(cfg.origin, cfg.sites as f64 * cfg.spacing, cfg.sites)?;
    let mut u0 = vec![0.0; cfg.sites];
    u0[cfg.load_site] = cfg.particles as f64 / cfg.u_max as f64;
    let initial = StateQuad::new(
        Field::from_values(grid, u0)?,
        Field::zeros(grid),
        Field::zeros(grid),
        Field::zeros(grid),
        0.0,
    )?;
    let solver = SolverConfig {
        end_time: cfg.alpha * cfg.end_time,
        output_stride: usize::MAX,
        ..SolverConfig::default()
    };
    let outcome = run(&initial, &ModelParams::pure_diffusion(cfg.m)?, &solver, &mut [])?;
    let bins = cfg.sites / cfg.cells_per_bin;
    let coarse = Grid::new_1d(cfg.origin, cfg.sites as f64 * cfg.spacing, bins)?;
    let pde = Field::from_values(
        coarse,
        outcome
            .final_state
            .u
            .values()
            .chunks(cfg.cells_per_bin)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect(),
    )?;
    let width = coarse.h();
    let l1 = pde
        .values()
        .iter()
        .zip(ensemble.mean.values())
        .map(|(a, b)| (a - b).abs() * width)
        .sum();
    Ok(LatticeComparison { ensemble, pde, l1 })
}

/// Member densities as `(seed, time, bin, density)` rows.
pub fn ensemble_table(result: &EnsembleResult, t: f64) -> Table {
    let mut table = Table::new(&["seed", "time", "bin", "density"]);
    for (seed, member) in result.seeds.iter().zip(&result.members) {
        for (bin, d) in member.values().iter().enumerate() {
            table.push(vec![*seed as f64, t, bin as f64, *d]);
        }
    }
    table
}
