//! Matrix-free conjugate gradients for the shifted Neumann heat operator
//! `A = (1 + dt·c) I - dt Δ_h`.

use crate::error::{Error, Result};
use crate::model::Grid;

/// Five-point (three-point in 1D) Laplacian with homogeneous Neumann ghost cells.
pub fn neumann_laplacian(grid: &Grid, x: &[f64], out: &mut [f64]) {
    let nx = grid.nx();
    let ny = grid.ny();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let two_d = grid.dim() == 2;
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let c = x[k];
            let mut acc = 0.0;
            if i > 0 {
                acc += x[k - 1] - c;
            }
            if i + 1 < nx {
                acc += x[k + 1] - c;
            }
            if two_d {
                if j > 0 {
                    acc += x[k - nx] - c;
                }
                if j + 1 < ny {
                    acc += x[k + nx] - c;
                }
            }
            out[k] = acc * inv_h2;
        }
    }
}

fn apply(grid: &Grid, dt: f64, shift: f64, x: &[f64], lap: &mut [f64], out: &mut [f64]) {
    neumann_laplacian(grid, x, lap);
    let diag = 1.0 + dt * shift;
    for ((o, &xi), &li) in out.iter_mut().zip(x).zip(lap.iter()) {
        *o = diag * xi - dt * li;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `((1 + dt·shift) I - dt Δ_h) x = b` to relative residual `tol`.
///
/// The iteration starts from `x = b`. With `shift = 0` the initial residual
/// and every search direction then have zero sum, so `Σ x = Σ b` holds up to
/// rounding regardless of how many iterations run.
pub fn solve_shifted_heat(grid: &Grid, dt: f64, shift: f64, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = b.to_vec();
    let mut lap = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(grid, dt, shift, &x, &mut lap, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = tol * b_norm;
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return Ok(x);
    }
    let mut p = r.clone();
    let max_iter = 10 * n + 100;
    for _ in 0..max_iter {
        apply(grid, dt, shift, &p, &mut lap, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += alpha * pi;
            *ri -= alpha * api;
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return Ok(x);
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Err(Error::LinearSolve {
        iterations: max_iter,
        residual: rr.sqrt() / b_norm,
    })
}
