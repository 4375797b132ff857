//! Domain, grid, field containers and the pointwise constitutive functions
//! of the model: jump probability `q`, chemotactic sensitivity `φ` and the
//! logistic source `f`.

use std::fmt;

use crate::error::{Error, Result};

/// A point in the domain. One-dimensional grids leave the second entry at zero.
pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Uniform cell-centred mesh of an axis-aligned box with equal spacing on every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    extent: [f64; 2],
    origin: [f64; 2],
    h: f64,
}

impl Grid {
    pub fn new_1d(origin: f64, extent: f64, cells: usize) -> Result<Self> {
        Self::build(1, [cells, 1], [extent, 0.0], [origin, 0.0])
    }

    /// Rectangle `[ox, ox + ex] x [oy, oy + ey]`; the spacing must agree on both axes.
    pub fn new_2d(origin: Point, extent: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        Self::build(2, cells, extent, origin)
    }

    pub fn build(dim: usize, cells: [usize; 2], extent: [f64; 2], origin: Point) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param("dim", format!("must be 1 or 2, got {dim}")));
        }
        for axis in 0..dim {
            if cells[axis] < 4 {
                return Err(Error::param("cells", "at least 4 cells per axis are required"));
            }
            if !(extent[axis].is_finite() && extent[axis] > 0.0) {
                return Err(Error::param("extent", "must be positive and finite"));
            }
            if !origin[axis].is_finite() {
                return Err(Error::param("origin", "must be finite"));
            }
        }
        let h = extent[0] / cells[0] as f64;
        if dim == 2 {
            let hy = extent[1] / cells[1] as f64;
            if ((hy - h) / h).abs() > 1e-12 {
                return Err(Error::param(
                    "extent",
                    format!("spacing differs between axes ({h} vs {hy})"),
                ));
            }
        }
        let (cells, extent, origin) = if dim == 1 {
            ([cells[0], 1], [extent[0], 0.0], [origin[0], 0.0])
        } else {
            (cells, extent, origin)
        };
        Ok(Grid {
            dim,
            cells,
            extent,
            origin,
            h,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^dim`, the measure of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.cell_volume() * self.len() as f64
    }

    pub fn diameter(&self) -> f64 {
        (self.extent[0].powi(2) + self.extent[1].powi(2)).sqrt()
    }

    /// Row-major: `index = j * nx + i`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    pub fn center(&self, idx: usize) -> Point {
        let i = idx % self.cells[0];
        let j = idx / self.cells[0];
        let x = self.origin[0] + (i as f64 + 0.5) * self.h;
        if self.dim == 1 {
            [x, 0.0]
        } else {
            [x, self.origin[1] + (j as f64 + 0.5) * self.h]
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(|idx| self.center(idx))
    }

    pub fn contains(&self, p: Point) -> bool {
        (0..self.dim).all(|a| p[a] >= self.origin[a] && p[a] <= self.origin[a] + self.extent[a])
    }

    /// Distance from `p` to the nearest boundary face.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        (0..self.dim)
            .map(|a| (p[a] - self.origin[a]).min(self.origin[a] + self.extent[a] - p[a]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// One scalar quantity sampled at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Field {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(
                "values",
                format!("expected {} values, got {}", grid.len(), values.len()),
            ));
        }
        Ok(Field { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        Field {
            grid,
            values: grid.centers().map(f).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `Σ values · h^dim`.
    pub fn integral(&self) -> f64 {
        self.sum() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// `max |values - c|`.
    pub fn sup_distance_to(&self, c: f64) -> f64 {
        self.values.iter().fold(0.0, |acc, &x| acc.max((x - c).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Chemotactic sensitivity `φ`, validated once at construction.
#[derive(Debug, Clone, PartialEq)]
pub enum Sensitivity {
    Constant(f64),
    /// `1 - u/u*` clamped to `[-1, 1]`.
    LinearSwitch(f64),
    /// Piecewise-linear through `(u, φ)` knots with increasing `u`, constant beyond the ends.
    Table(Vec<(f64, f64)>),
}

impl Sensitivity {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c.is_finite() && c.abs() <= 1.0) {
            return Err(Error::param("phi", format!("constant sensitivity {c} must satisfy |c| <= 1")));
        }
        Ok(Sensitivity::Constant(c))
    }

    pub fn linear_switch(u_star: f64) -> Result<Self> {
        if !(u_star.is_finite() && u_star > 0.0) {
            return Err(Error::param("phi", format!("switch point {u_star} must be positive")));
        }
        Ok(Sensitivity::LinearSwitch(u_star))
    }

    pub fn table(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::param("phi", "table needs at least one knot"));
        }
        for &(u, p) in &knots {
            if !(u.is_finite() && p.is_finite()) {
                return Err(Error::param("phi", "table entries must be finite"));
            }
            if p.abs() > 1.0 {
                return Err(Error::param("phi", format!("table value {p} at u = {u} violates |phi| <= 1")));
            }
        }
        for pair in knots.windows(2) {
            let (u0, p0) = pair[0];
            let (u1, p1) = pair[1];
            if u1 <= u0 {
                return Err(Error::param("phi", "table abscissae must be strictly increasing"));
            }
            let slope = (p1 - p0) / (u1 - u0);
            if slope.abs() > 1.0 + 1e-12 {
                return Err(Error::param(
                    "phi",
                    format!("table slope {slope} on [{u0}, {u1}] violates |phi'| <= 1"),
                ));
            }
        }
        Ok(Sensitivity::Table(knots))
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Sensitivity::Constant(c) => *c,
            Sensitivity::LinearSwitch(u_star) => (1.0 - u / u_star).clamp(-1.0, 1.0),
            Sensitivity::Table(knots) => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if u <= first.0 {
                    return first.1;
                }
                if u >= last.0 {
                    return last.1;
                }
                // First knot strictly beyond u; u lies in (first, last) so 1 <= k < len.
                let k = knots.partition_point(|&(x, _)| x <= u);
                let (u0, p0) = knots[k - 1];
                let (u1, p1) = knots[k];
                p0 + (p1 - p0) * (u - u0) / (u1 - u0)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Sensitivity::Constant(c) if *c == 0.0)
    }
}

impl fmt::Display for Sensitivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sensitivity::Constant(c) => write!(f, "constant({c:?})"),
            Sensitivity::LinearSwitch(s) => write!(f, "linear_switch({s:?})"),
            Sensitivity::Table(knots) => {
                write!(f, "table(")?;
                for (k, (u, p)) in knots.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{u:?}:{p:?}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Constants of the cell equation `u_t = Δ(u^m) - ∇·(φ(u) u^m ∇v) + μ u^δ (1 - r u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub m: f64,
    pub delta: f64,
    pub mu: f64,
    pub r: f64,
    pub phi: Sensitivity,
    pub eps_reg: f64,
}

impl ModelParams {
    pub fn new(m: f64, delta: f64, mu: f64, r: f64, phi: Sensitivity, eps_reg: f64) -> Result<Self> {
        let p = ModelParams {
            m,
            delta,
            mu,
            r,
            phi,
            eps_reg,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m > 1.0) {
            return Err(Error::param("m", format!("m must exceed 1 (got {})", self.m)));
        }
        if !(self.delta.is_finite() && self.delta >= 1.0) {
            return Err(Error::param("delta", format!("delta must be at least 1 (got {})", self.delta)));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::param("mu", format!("mu must be nonnegative (got {})", self.mu)));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::param("r", format!("r must be positive (got {})", self.r)));
        }
        if !(self.eps_reg >= 0.0 && self.eps_reg < 1.0) {
            return Err(Error::param("eps_reg", format!("eps_reg must lie in [0, 1) (got {})", self.eps_reg)));
        }
        Ok(())
    }

    /// The early/late-stage bounds additionally need `1 <= δ < m` and `μ > 0`.
    pub fn check_theorem_hypothesis(&self) -> Result<()> {
        if !(1.0 <= self.delta && self.delta < self.m) {
            return Err(Error::Hypothesis(format!(
                "requires 1 <= delta < m (delta = {}, m = {})",
                self.delta, self.m
            )));
        }
        if self.mu <= 0.0 {
            return Err(Error::Hypothesis("requires mu > 0".into()));
        }
        Ok(())
    }

    /// Porous-medium mode: no chemotaxis, no growth.
    pub fn pure_diffusion(m: f64) -> Result<Self> {
        ModelParams::new(m, 1.0, 0.0, 1.0, Sensitivity::Constant(0.0), 0.0)
    }
}

/// Jump probability `q(u) = u^(m-1)`.
pub fn q_eval(u: f64, m: f64) -> Result<f64> {
    if u < 0.0 || u.is_nan() {
        return Err(Error::Domain(format!("q(u) needs u >= 0, got {u}")));
    }
    if !(m > 1.0) {
        return Err(Error::Domain(format!("q(u) needs m > 1, got {m}")));
    }
    Ok(q_unchecked(u, m))
}

#[inline]
pub(crate) fn q_unchecked(u: f64, m: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.powf(m - 1.0)
    }
}

pub fn phi_eval(u: f64, phi: &Sensitivity) -> f64 {
    phi.eval(u)
}

/// `μ u^δ (1 - r u)`.
#[inline]
pub fn logistic_eval(u: f64, params: &ModelParams) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    params.mu * u.powf(params.delta) * (1.0 - params.r * u)
}

/// The quadruple `(u, v, w, z)` at time `t`: cells, ECM fragments (signal),
/// ECM and matrix-degrading enzyme.
#[derive(Debug, Clone, PartialEq)]
pub struct StateQuad {
    pub u: Field,
    pub v: Field,
    pub w: Field,
    pub z: Field,
    pub t: f64,
}

impl StateQuad {
    pub fn new(u: Field, v: Field, w: Field, z: Field, t: f64) -> Result<Self> {
        let s = StateQuad { u, v, w, z, t };
        s.validate()?;
        Ok(s)
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn fields(&self) -> [(&'static str, &Field); 4] {
        [("u", &self.u), ("v", &self.v), ("w", &self.w), ("z", &self.z)]
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.u.grid();
        for (name, f) in self.fields() {
            if f.grid() != g {
                return Err(Error::param("state", format!("field {name} lives on a different grid")));
            }
        }
        self.check_finite()?;
        if !(self.t >= 0.0) {
            return Err(Error::param("t", "time must be nonnegative"));
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, f) in self.fields() {
            if !f.all_finite() {
                return Err(Error::NonFinite { field: name, t: self.t });
            }
        }
        Ok(())
    }

    pub fn min_value(&self) -> f64 {
        self.fields().iter().map(|(_, f)| f.min()).fold(f64::INFINITY, f64::min)
    }

    /// `Σ (v + w) h^dim`.
    pub fn mass_vw(&self) -> f64 {
        self.v.integral() + self.w.integral()
    }
}
