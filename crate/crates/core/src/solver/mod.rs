//! Conservative finite-volume integration of the four-field system
//!
//! ```text
//! u_t = Δ(u^m) - ∇·(φ(u) u^m ∇v) + μ u^δ (1 - r u)
//! v_t = Δv + w z
//! w_t = -w z
//! z_t = Δz - z + u
//! ```
//!
//! with homogeneous Neumann boundaries. `u` is advanced explicitly through
//! face fluxes of the transformed variable `u^m`, `w` by its exact
//! exponential decay, and `v`, `z` either explicitly or semi-implicitly.

pub mod linear;

use rayon::prelude::*;

use crate::diagnostics::{
    steady_state_targets, FrontHistory, HistoryRow, SignalBounds, SteadyTargets, DEFAULT_SUPPORT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::model::{logistic_eval, Field, Grid, ModelParams, Point, StateQuad};

use linear::{neumann_laplacian, solve_shifted_heat};

/// Grids at least this large run the flux and update passes on the rayon pool.
const PAR_MIN_CELLS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VzStepper {
    Explicit,
    SemiImplicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub cfl_safety: f64,
    pub end_time: f64,
    pub output_stride: usize,
    pub clip_negative: bool,
    pub chemo_upwind: bool,
    pub v_z_stepper: VzStepper,
    /// Upper bound on the step; `None` means `h`.
    pub dt_max: Option<f64>,
    pub linear_tol: f64,
    /// Centre used for support tracking; `None` means the domain centre.
    pub support_center: Option<Point>,
    pub support_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cfl_safety: 0.25,
            end_time: 1.0,
            output_stride: 100,
            clip_negative: true,
            chemo_upwind: true,
            v_z_stepper: VzStepper::SemiImplicit,
            dt_max: None,
            linear_tol: 1e-12,
            support_center: None,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::param("cfl_safety", format!("must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if !(self.end_time >= 0.0 && self.end_time.is_finite()) {
            return Err(Error::param("end_time", format!("must be nonnegative, got {}", self.end_time)));
        }
        if self.output_stride == 0 {
            return Err(Error::param("output_stride", "must be positive"));
        }
        if let Some(dt) = self.dt_max {
            if !(dt > 0.0) {
                return Err(Error::param("dt_max", "must be positive"));
            }
        }
        if !(self.linear_tol > 0.0) {
            return Err(Error::param("linear_tol", "must be positive"));
        }
        if !(self.support_threshold >= 0.0) {
            return Err(Error::param("support_threshold", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn center_for(&self, grid: &Grid) -> Point {
        self.support_center.unwrap_or_else(|| {
            let (o, e) = (grid.origin(), grid.extent());
            [o[0] + 0.5 * e[0], o[1] + 0.5 * e[1]]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub dt_used: f64,
    pub min_u: f64,
    pub max_u: f64,
    /// `Σ (v + w) h^dim` after the step.
    pub mass_vw: f64,
    /// `u`-mass removed by clipping negative values this step.
    pub negativity_clipped: f64,
    /// Mass removed by clipping rounding-level negatives in `v` and `z`.
    pub vz_clipped: f64,
}

/// Face values on a grid. `x[j * (nx + 1) + i]` is the face left of cell
/// `(i, j)`; `y[j * nx + i]` the face below it. Boundary faces stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxes {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceFluxes {
    fn zeros(grid: &Grid) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        FaceFluxes {
            x: vec![0.0; (nx + 1) * ny],
            y: if grid.dim() == 2 { vec![0.0; nx * (ny + 1)] } else { Vec::new() },
        }
    }
}

fn max_abs_gradient(v: &Field) -> f64 {
    let g = v.grid();
    let vals = v.values();
    let (nx, ny) = (g.nx(), g.ny());
    let mut best: f64 = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if i + 1 < nx {
                best = best.max((vals[k + 1] - vals[k]).abs());
            }
            if g.dim() == 2 && j + 1 < ny {
                best = best.max((vals[k + nx] - vals[k]).abs());
            }
        }
    }
    best / g.h()
}

/// Stable explicit step:
/// `cfl · h² / (2·dim·(m (max u + ε)^{m-1} + 1) + h·max|∇v| + h²·μ(δ+1)·max(max u, 1)^δ)`,
/// capped at `dt_max` (default `h`).
pub fn cfl_dt(state: &StateQuad, params: &ModelParams, config: &SolverConfig) -> Result<f64> {
    state.check_finite()?;
    let g = state.grid();
    let h = g.h();
    let max_u = state.u.max().max(0.0);
    let dim = g.dim() as f64;
    let diffusion = 2.0 * dim * (params.m * (max_u + params.eps_reg).powf(params.m - 1.0) + 1.0);
    let advection = h * max_abs_gradient(&state.v);
    let reaction = h * h * params.mu * (params.delta + 1.0) * max_u.max(1.0).powf(params.delta);
    let dt = config.cfl_safety * h * h / (diffusion + advection + reaction);
    Ok(dt.min(config.dt_max.unwrap_or(h)))
}

/// `(u + ε)^m - ε^m`, the variable differenced by the diffusive flux.
fn transformed(u: &[f64], params: &ModelParams) -> Vec<f64> {
    let (m, e) = (params.m, params.eps_reg);
    if e == 0.0 {
        u.iter().map(|&x| if x == 0.0 { 0.0 } else { x.powf(m) }).collect()
    } else {
        let base = e.powf(m);
        u.iter().map(|&x| (x + e).powf(m) - base).collect()
    }
}

fn pow_m(u: &[f64], m: f64) -> Vec<f64> {
    u.iter().map(|&x| if x == 0.0 { 0.0 } else { x.powf(m) }).collect()
}

#[derive(Clone, Copy)]
struct FluxTerms<'a> {
    u: &'a [f64],
    v: &'a [f64],
    /// Differenced by the diffusive part; `None` disables diffusion.
    diff: Option<&'a [f64]>,
    /// `u^m`, advected by the chemotactic part; `None` disables chemotaxis.
    adv: Option<&'a [f64]>,
    params: &'a ModelParams,
    upwind: bool,
    inv_h: f64,
}

impl FluxTerms<'_> {
    #[inline]
    fn face(&self, l: usize, r: usize) -> f64 {
        let mut flux = 0.0;
        if let Some(t) = self.diff {
            flux -= (t[r] - t[l]) * self.inv_h;
        }
        if let Some(um) = self.adv {
            let velocity = self.params.phi.eval(0.5 * (self.u[l] + self.u[r])) * (self.v[r] - self.v[l]) * self.inv_h;
            let carried = if self.upwind {
                if velocity >= 0.0 {
                    um[l]
                } else {
                    um[r]
                }
            } else {
                0.5 * (um[l] + um[r])
            };
            flux += velocity * carried;
        }
        flux
    }

    fn fill(&self, grid: &Grid, out: &mut FaceFluxes) {
        let (nx, ny) = (grid.nx(), grid.ny());
        let parallel = grid.len() >= PAR_MIN_CELLS;
        let x_row = |j: usize, row: &mut [f64]| {
            for i in 1..nx {
                let l = j * nx + i - 1;
                row[i] = self.face(l, l + 1);
            }
        };
        if parallel {
            out.x.par_chunks_mut(nx + 1).enumerate().for_each(|(j, row)| x_row(j, row));
        } else {
            out.x.chunks_mut(nx + 1).enumerate().for_each(|(j, row)| x_row(j, row));
        }
        if grid.dim() == 2 {
            let y_row = |j: usize, row: &mut [f64]| {
                if j == 0 || j == ny {
                    return;
                }
                for (i, slot) in row.iter_mut().enumerate() {
                    let below = (j - 1) * nx + i;
                    *slot = self.face(below, below + nx);
                }
            };
            if parallel {
                out.y.par_chunks_mut(nx).enumerate().for_each(|(j, row)| y_row(j, row));
            } else {
                out.y.chunks_mut(nx).enumerate().for_each(|(j, row)| y_row(j, row));
            }
        }
    }
}

/// Degenerate diffusive face flux `-((u_R+ε)^m - (u_L+ε)^m)/h`; zero on the boundary.
pub fn diffusive_flux_u(state: &StateQuad, params: &ModelParams) -> FaceFluxes {
    let g = state.grid();
    let t = transformed(state.u.values(), params);
    let terms = FluxTerms {
        u: state.u.values(),
        v: state.v.values(),
        diff: Some(&t),
        adv: None,
        params,
        upwind: true,
        inv_h: 1.0 / g.h(),
    };
    let mut out = FaceFluxes::zeros(g);
    terms.fill(g, &mut out);
    out
}

/// Chemotactic face flux `φ(ū) (v_R - v_L)/h · u^m`, with `u^m` taken upwind
/// (or as the arithmetic mean when `chemo_upwind` is off); zero on the boundary.
pub fn chemotactic_flux_u(state: &StateQuad, params: &ModelParams, config: &SolverConfig) -> FaceFluxes {
    let g = state.grid();
    let um = pow_m(state.u.values(), params.m);
    let terms = FluxTerms {
        u: state.u.values(),
        v: state.v.values(),
        diff: None,
        adv: Some(&um),
        params,
        upwind: config.chemo_upwind,
        inv_h: 1.0 / g.h(),
    };
    let mut out = FaceFluxes::zeros(g);
    terms.fill(g, &mut out);
    out
}

/// Advances one step of size `cfl_dt`.
pub fn step(state: &StateQuad, params: &ModelParams, config: &SolverConfig) -> Result<(StateQuad, StepReport)> {
    let dt = cfl_dt(state, params, config)?;
    step_with_dt(state, params, config, dt)
}

/// Advances one step of the given size (callers keep it at or below `cfl_dt`).
pub fn step_with_dt(
    state: &StateQuad,
    params: &ModelParams,
    config: &SolverConfig,
    dt: f64,
) -> Result<(StateQuad, StepReport)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("step must be positive, got {dt}")));
    }
    let grid = *state.grid();
    let (nx, h) = (grid.nx(), grid.h());
    let u = state.u.values();

    // u: explicit conservative update.
    let diff = transformed(u, params);
    let um_store;
    let adv = if params.phi.is_zero() {
        None
    } else if params.eps_reg == 0.0 {
        Some(diff.as_slice())
    } else {
        um_store = pow_m(u, params.m);
        Some(um_store.as_slice())
    };
    let terms = FluxTerms {
        u,
        v: state.v.values(),
        diff: Some(&diff),
        adv,
        params,
        upwind: config.chemo_upwind,
        inv_h: 1.0 / h,
    };
    let mut flux = FaceFluxes::zeros(&grid);
    terms.fill(&grid, &mut flux);

    let two_d = grid.dim() == 2;
    let ratio = dt / h;
    let update_row = |j: usize, row: &mut [f64]| -> f64 {
        let mut clipped = 0.0;
        for (i, out) in row.iter_mut().enumerate() {
            let k = j * nx + i;
            let xr = j * (nx + 1) + i;
            let mut div = flux.x[xr + 1] - flux.x[xr];
            if two_d {
                div += flux.y[k + nx] - flux.y[k];
            }
            let mut next = u[k] - ratio * div + dt * logistic_eval(u[k], params);
            if next < 0.0 && config.clip_negative {
                clipped -= next;
                next = 0.0;
            }
            *out = next;
        }
        clipped
    };
    let mut u_next = vec![0.0; grid.len()];
    let clipped_sum: f64 = if grid.len() >= PAR_MIN_CELLS {
        u_next.par_chunks_mut(nx).enumerate().map(|(j, row)| update_row(j, row)).sum()
    } else {
        u_next.chunks_mut(nx).enumerate().map(|(j, row)| update_row(j, row)).sum()
    };

    // w: exact decay over the step; the removed amount feeds v.
    let w = state.w.values();
    let z = state.z.values();
    let w_next: Vec<f64> = w.iter().zip(z).map(|(&wi, &zi)| wi * (-zi * dt).exp()).collect();
    let released: Vec<f64> = w.iter().zip(&w_next).map(|(a, b)| a - b).collect();

    let v = state.v.values();
    let (mut v_next, mut z_next) = match config.v_z_stepper {
        VzStepper::SemiImplicit => {
            let rhs_v: Vec<f64> = v.iter().zip(&released).map(|(a, b)| a + b).collect();
            let rhs_z: Vec<f64> = z.iter().zip(u).map(|(zi, ui)| zi + dt * ui).collect();
            (
                solve_shifted_heat(&grid, dt, 0.0, &rhs_v, config.linear_tol)?,
                solve_shifted_heat(&grid, dt, 1.0, &rhs_z, config.linear_tol)?,
            )
        }
        VzStepper::Explicit => {
            let mut lap_v = vec![0.0; grid.len()];
            let mut lap_z = vec![0.0; grid.len()];
            neumann_laplacian(&grid, v, &mut lap_v);
            neumann_laplacian(&grid, z, &mut lap_z);
            (
                (0..grid.len()).map(|k| v[k] + dt * lap_v[k] + released[k]).collect(),
                (0..grid.len()).map(|k| z[k] + dt * (lap_z[k] - z[k] + u[k])).collect(),
            )
        }
    };
    let mut vz_clipped = 0.0;
    for x in v_next.iter_mut().chain(z_next.iter_mut()) {
        if *x < 0.0 {
            vz_clipped -= *x;
            *x = 0.0;
        }
    }

    let next = StateQuad {
        u: Field::from_values(grid, u_next)?,
        v: Field::from_values(grid, v_next)?,
        w: Field::from_values(grid, w_next)?,
        z: Field::from_values(grid, z_next)?,
        t: state.t + dt,
    };
    next.check_finite()?;
    let cell = grid.cell_volume();
    let report = StepReport {
        dt_used: dt,
        min_u: next.u.min(),
        max_u: next.u.max(),
        mass_vw: next.mass_vw(),
        negativity_clipped: clipped_sum * cell,
        vz_clipped: vz_clipped * cell,
    };
    Ok((next, report))
}

/// Receives snapshots and history rows every `output_stride` steps.
pub trait RunSink {
    fn snapshot(&mut self, _step: usize, _state: &StateQuad) -> Result<()> {
        Ok(())
    }

    fn row(&mut self, _row: &HistoryRow) -> Result<()> {
        Ok(())
    }
}

/// Keeps every emitted snapshot in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub snapshots: Vec<StateQuad>,
}

impl RunSink for MemorySink {
    fn snapshot(&mut self, _step: usize, state: &StateQuad) -> Result<()> {
        self.snapshots.push(state.clone());
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: FrontHistory,
    pub final_state: StateQuad,
    /// Maxima of `|∇v|`, `|Δv|` over every step, including the initial state.
    pub signal_bounds: SignalBounds,
    pub steps: usize,
    pub clipped_total: f64,
    /// Smallest value of any field seen after any step.
    pub min_value: f64,
    pub max_u: f64,
    pub targets: SteadyTargets,
}

/// Steps until `t >= end_time`, shortening the last step to land on it.
pub fn run(
    initial: &StateQuad,
    params: &ModelParams,
    config: &SolverConfig,
    sinks: &mut [&mut dyn RunSink],
) -> Result<RunOutcome> {
    params.validate()?;
    config.validate()?;
    initial.validate()?;
    let grid = *initial.grid();
    let targets = steady_state_targets(initial, params.r);
    let x0 = config.center_for(&grid);
    let mut outcome = RunOutcome {
        history: FrontHistory::new(),
        final_state: initial.clone(),
        signal_bounds: SignalBounds::default(),
        steps: 0,
        clipped_total: 0.0,
        min_value: initial.min_value(),
        max_u: initial.u.max(),
        targets,
    };
    if config.end_time <= initial.t {
        return Ok(outcome);
    }
    outcome.signal_bounds.observe(&initial.v);

    let emit = |state: &StateQuad, step: usize, history: &mut FrontHistory, sinks: &mut [&mut dyn RunSink]| -> Result<()> {
        let row = HistoryRow::measure(state, &targets, x0, config.support_threshold);
        history.push(row)?;
        for sink in sinks.iter_mut() {
            sink.row(&row)?;
            sink.snapshot(step, state)?;
        }
        Ok(())
    };
    emit(initial, 0, &mut outcome.history, sinks)?;

    let mut state = initial.clone();
    let mut steps = 0;
    while state.t < config.end_time {
        let remaining = config.end_time - state.t;
        let dt = cfl_dt(&state, params, config)?;
        let last = dt >= remaining;
        let (mut next, report) = step_with_dt(&state, params, config, dt.min(remaining))?;
        if last {
            next.t = config.end_time;
        }
        steps += 1;
        outcome.clipped_total += report.negativity_clipped;
        outcome.min_value = outcome.min_value.min(next.min_value());
        outcome.max_u = outcome.max_u.max(report.max_u);
        outcome.signal_bounds.observe(&next.v);
        state = next;
        if steps % config.output_stride == 0 || last {
            emit(&state, steps, &mut outcome.history, sinks)?;
        }
    }
    outcome.steps = steps;
    outcome.final_state = state;
    Ok(outcome)
}
