//! Measurements tying simulation output to the qualitative statements about
//! the model: support tracking, norm histories, rate fits, conservation
//! audits and sub/super-solution sandwich reports.

use crate::error::{Error, Result};
use crate::model::{distance, Field, Point, StateQuad};
use crate::oracles::profiles::ProfileParams;
use crate::solver::linear::neumann_laplacian;

pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-12;

/// Asymptotic state `(1/r, v̄₀ + w̄₀, 0, 1/r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyTargets {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub z: f64,
}

pub fn steady_state_targets(initial: &StateQuad, r: f64) -> SteadyTargets {
    SteadyTargets {
        u: 1.0 / r,
        v: initial.v.mean() + initial.w.mean(),
        w: 0.0,
        z: 1.0 / r,
    }
}

/// Largest distance from `x0` to a cell with `u > threshold`, plus `h/2`.
pub fn support_radius(u: &Field, x0: Point, threshold: f64) -> f64 {
    let g = u.grid();
    let mut best: Option<f64> = None;
    for (idx, &val) in u.values().iter().enumerate() {
        if val > threshold {
            let d = distance(g.center(idx), x0);
            best = Some(best.map_or(d, |b: f64| b.max(d)));
        }
    }
    best.map_or(0.0, |d| d + 0.5 * g.h())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub t: f64,
    pub support_radius: f64,
    pub sup_u: f64,
    pub inf_u_on_support: f64,
    pub norm_u_minus_1: f64,
    pub norm_w: f64,
    pub norm_v_minus_target: f64,
    pub norm_z_minus_1: f64,
    pub mass_u: f64,
    pub mass_vw: f64,
}

impl HistoryRow {
    pub const HEADER: [&'static str; 10] = [
        "t",
        "support_radius",
        "sup_u",
        "inf_u_on_support",
        "norm_u_minus_1",
        "norm_w",
        "norm_v_minus_target",
        "norm_z_minus_1",
        "mass_u",
        "mass_vw",
    ];

    pub fn measure(state: &StateQuad, targets: &SteadyTargets, x0: Point, threshold: f64) -> Self {
        let inf_on_support = state
            .u
            .values()
            .iter()
            .filter(|&&x| x > threshold)
            .copied()
            .fold(f64::INFINITY, f64::min);
        HistoryRow {
            t: state.t,
            support_radius: support_radius(&state.u, x0, threshold),
            sup_u: state.u.max(),
            inf_u_on_support: if inf_on_support.is_finite() { inf_on_support } else { 0.0 },
            norm_u_minus_1: state.u.sup_distance_to(targets.u),
            norm_w: state.w.sup_distance_to(targets.w),
            norm_v_minus_target: state.v.sup_distance_to(targets.v),
            norm_z_minus_1: state.z.sup_distance_to(targets.z),
            mass_u: state.u.integral(),
            mass_vw: state.mass_vw(),
        }
    }

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.t,
            self.support_radius,
            self.sup_u,
            self.inf_u_on_support,
            self.norm_u_minus_1,
            self.norm_w,
            self.norm_v_minus_target,
            self.norm_z_minus_1,
            self.mass_u,
            self.mass_vw,
        ]
    }

    pub fn from_array(a: [f64; 10]) -> Self {
        HistoryRow {
            t: a[0],
            support_radius: a[1],
            sup_u: a[2],
            inf_u_on_support: a[3],
            norm_u_minus_1: a[4],
            norm_w: a[5],
            norm_v_minus_target: a[6],
            norm_z_minus_1: a[7],
            mass_u: a[8],
            mass_vw: a[9],
        }
    }

    /// Looks a column up by its CSV header name.
    pub fn column(&self, name: &str) -> Option<f64> {
        Self::HEADER
            .iter()
            .position(|&h| h == name)
            .map(|k| self.to_array()[k])
    }
}

/// Time series of support radius and norms; `t` strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrontHistory {
    rows: Vec<HistoryRow>,
}

impl FrontHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: HistoryRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::param(
                    "history",
                    format!("time must increase strictly ({} after {})", row.t, last.t),
                ));
            }
        }
        if row.support_radius < 0.0 {
            return Err(Error::param("history", "negative support radius"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[HistoryRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn series(&self, f: impl Fn(&HistoryRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    let slope_stderr = if n > 2.0 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    LineFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
    }
}

fn default_t_min(ts: &[f64]) -> f64 {
    ts.get(ts.len() / 5).copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub exponent_stderr: f64,
    pub samples: usize,
}

/// Fits `r ≈ A (1 + t)^p` by least squares on `(ln(1+t), ln r)`.
///
/// `t_min = None` discards the first 20% of the series.
pub fn fit_power_law(ts: &[f64], rs: &[f64], t_min: Option<f64>) -> Result<PowerLawFit> {
    let t_min = t_min.unwrap_or_else(|| default_t_min(ts));
    let (xs, ys): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(rs)
        .filter(|(&t, &r)| t >= t_min && r > 0.0)
        .map(|(&t, &r)| ((1.0 + t).ln(), r.ln()))
        .unzip();
    if xs.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs 8 samples with t >= {t_min} and r > 0, found {}",
            xs.len()
        )));
    }
    let fit = least_squares(&xs, &ys);
    Ok(PowerLawFit {
        exponent: fit.slope,
        prefactor: fit.intercept.exp(),
        r_squared: fit.r_squared,
        exponent_stderr: fit.slope_stderr,
        samples: xs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub rate_stderr: f64,
    pub samples: usize,
    /// Samples in the window dropped because `y <= 0`.
    pub excluded: usize,
}

/// Fits `y ≈ C e^{-c t}` by least squares on `(t, ln y)`.
pub fn fit_exponential(ts: &[f64], ys: &[f64], t_min: Option<f64>) -> Result<ExponentialFit> {
    let t_min = t_min.unwrap_or_else(|| default_t_min(ts));
    let mut excluded = 0;
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    for (&t, &y) in ts.iter().zip(ys) {
        if t < t_min {
            continue;
        }
        if y > 0.0 {
            xs.push(t);
            ls.push(y.ln());
        } else {
            excluded += 1;
        }
    }
    if xs.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "exponential fit needs 8 positive samples with t >= {t_min}, found {} ({excluded} excluded)",
            xs.len()
        )));
    }
    let fit = least_squares(&xs, &ls);
    Ok(ExponentialFit {
        rate: -fit.slope,
        prefactor: fit.intercept.exp(),
        r_squared: fit.r_squared,
        rate_stderr: fit.slope_stderr,
        samples: xs.len(),
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationAudit {
    pub drift: f64,
    /// False when the initial mass is zero and `drift` is absolute.
    pub relative: bool,
}

/// Max drift of `mass_vw` from its initial value.
pub fn conservation_audit(history: &FrontHistory) -> Result<ConservationAudit> {
    let rows = history.rows();
    if rows.len() < 2 {
        return Err(Error::InsufficientData("conservation audit needs at least 2 rows".into()));
    }
    let m0 = rows[0].mass_vw;
    let abs = rows.iter().map(|r| (r.mass_vw - m0).abs()).fold(0.0, f64::max);
    Ok(if m0 == 0.0 {
        ConservationAudit {
            drift: abs,
            relative: false,
        }
    } else {
        ConservationAudit {
            drift: abs / m0.abs(),
            relative: true,
        }
    })
}

/// Running maxima of `|∇v|` (face differences) and `|Δv|` (Neumann Laplacian).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SignalBounds {
    pub grad_max: f64,
    pub lap_max: f64,
}

impl SignalBounds {
    pub fn observe(&mut self, v: &Field) {
        let g = v.grid();
        let vals = v.values();
        let (nx, ny, h) = (g.nx(), g.ny(), g.h());
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if i + 1 < nx {
                    self.grad_max = self.grad_max.max((vals[k + 1] - vals[k]).abs() / h);
                }
                if g.dim() == 2 && j + 1 < ny {
                    self.grad_max = self.grad_max.max((vals[k + nx] - vals[k]).abs() / h);
                }
            }
        }
        let mut lap = vec![0.0; vals.len()];
        neumann_laplacian(g, vals, &mut lap);
        self.lap_max = lap.iter().fold(self.lap_max, |acc, x| acc.max(x.abs()));
    }

    pub fn merge(&mut self, other: &SignalBounds) {
        self.grad_max = self.grad_max.max(other.grad_max);
        self.lap_max = self.lap_max.max(other.lap_max);
    }

    /// Observed maxima inflated by `1 + margin`, floored at a tiny positive value.
    pub fn with_margin(&self, margin: f64) -> (f64, f64) {
        let floor = 1e-12;
        (
            (self.grad_max * (1.0 + margin)).max(floor),
            (self.lap_max * (1.0 + margin)).max(floor),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub x: Point,
    pub t: f64,
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SandwichReport {
    pub max_lower_violation: f64,
    pub max_upper_violation: f64,
    pub violation_locations: Vec<Violation>,
    pub snapshots_checked: usize,
    pub upper_snapshots_checked: usize,
}

impl SandwichReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_lower_violation <= tol && self.max_upper_violation <= tol
    }
}

const MAX_RECORDED_VIOLATIONS: usize = 10_000;

/// Incremental form of [`sandwich_check`], fed one snapshot at a time.
#[derive(Debug, Clone)]
pub struct SandwichAccumulator {
    lower: Option<ProfileParams>,
    upper: Option<(ProfileParams, f64)>,
    tol: f64,
    report: SandwichReport,
}

impl SandwichAccumulator {
    pub fn new(lower: Option<ProfileParams>, upper: Option<(ProfileParams, f64)>, tol: f64) -> Self {
        SandwichAccumulator {
            lower,
            upper,
            tol,
            report: SandwichReport::default(),
        }
    }

    pub fn observe(&mut self, u: &Field, t: f64) {
        let g = *u.grid();
        self.report.snapshots_checked += 1;
        let upper = self.upper.as_ref().filter(|(_, t0)| t <= *t0);
        if upper.is_some() {
            self.report.upper_snapshots_checked += 1;
        }
        let (report, tol) = (&mut self.report, self.tol);
        for (idx, &val) in u.values().iter().enumerate() {
            let x = g.center(idx);
            if let Some(lower) = &self.lower {
                let gap = (lower.eval(x, t) - val).max(0.0);
                record(report, tol, ViolationKind::Lower, x, t, gap);
            }
            if let Some((upper, _)) = upper {
                let gap = (val - upper.eval(x, t)).max(0.0);
                record(report, tol, ViolationKind::Upper, x, t, gap);
            }
        }
    }

    pub fn finish(self) -> SandwichReport {
        self.report
    }
}

fn record(report: &mut SandwichReport, tol: f64, kind: ViolationKind, x: Point, t: f64, amount: f64) {
    let slot = match kind {
        ViolationKind::Lower => &mut report.max_lower_violation,
        ViolationKind::Upper => &mut report.max_upper_violation,
    };
    *slot = slot.max(amount);
    if amount > tol && report.violation_locations.len() < MAX_RECORDED_VIOLATIONS {
        report.violation_locations.push(Violation { kind, x, t, amount });
    }
}

/// Checks `g_lower <= u` at every snapshot and `u <= g_upper` for snapshots with `t <= t0`.
pub fn sandwich_check<'a>(
    snapshots: impl IntoIterator<Item = &'a StateQuad>,
    lower: Option<&ProfileParams>,
    upper: Option<(&ProfileParams, f64)>,
    tol: f64,
) -> SandwichReport {
    let mut acc = SandwichAccumulator::new(lower.cloned(), upper.map(|(p, t0)| (p.clone(), t0)), tol);
    for s in snapshots {
        acc.observe(&s.u, s.t);
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Grid;

    fn row(t: f64, mass_vw: f64) -> HistoryRow {
        HistoryRow::from_array([t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, mass_vw])
    }

    #[test]
    fn support_radius_examples() {
        let g = Grid::new_1d(-1.0, 2.0, 200).unwrap();
        assert_eq!(support_radius(&Field::zeros(g), [0.0, 0.0], 1e-12), 0.0);
        let ind = Field::from_fn(g, |p| if p[0].abs() < 0.3 { 1.0 } else { 0.0 });
        let r = support_radius(&ind, [0.0, 0.0], 1e-12);
        assert!((r - 0.3).abs() <= g.h(), "{r}");
        let full = Field::constant(g, 1.0);
        let r = support_radius(&full, [0.0, 0.0], 1e-12);
        assert!((r - (1.0 - 0.005 + 0.005)).abs() < 1e-12);
    }

    #[test]
    fn power_law_exact() {
        let ts: Vec<f64> = (0..20).map(|k| k as f64 * 0.5).collect();
        let rs: Vec<f64> = ts.iter().map(|t| 2.0 * (1.0 + t).powf(0.5)).collect();
        let fit = fit_power_law(&ts, &rs, Some(0.0)).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-9);
        assert!((fit.prefactor - 2.0).abs() < 1e-9);
        let flat = vec![0.7; 20];
        let fit = fit_power_law(&ts, &flat, Some(0.0)).unwrap();
        assert!(fit.exponent.abs() < 1e-9);
    }

    #[test]
    fn exponential_exact() {
        let ts: Vec<f64> = (0..30).map(|k| k as f64 * 0.3).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 5.0 * (-0.7 * t).exp()).collect();
        let fit = fit_exponential(&ts, &ys, Some(0.0)).unwrap();
        assert!((fit.rate - 0.7).abs() < 1e-9);
        assert!((fit.prefactor - 5.0).abs() < 1e-8);
        let flat = vec![3.0; 30];
        assert!(fit_exponential(&ts, &flat, Some(0.0)).unwrap().rate.abs() < 1e-9);
    }

    #[test]
    fn fits_reject_short_series() {
        let ts = [0.0, 1.0, 2.0];
        assert!(fit_power_law(&ts, &[1.0, 2.0, 3.0], Some(0.0)).is_err());
        let ts: Vec<f64> = (0..9).map(|k| k as f64).collect();
        let mut ys: Vec<f64> = ts.iter().map(|t| (-t).exp()).collect();
        ys[3] = 0.0;
        ys[4] = -1.0;
        let err = fit_exponential(&ts, &ys, Some(0.0)).unwrap_err();
        assert!(err.to_string().contains("2 excluded"), "{err}");
    }

    #[test]
    fn default_window_drops_first_fifth() {
        let ts: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let mut ys: Vec<f64> = ts.iter().map(|t| (-0.3 * t).exp()).collect();
        // Corrupt the transient; the default window must ignore it.
        for y in ys.iter_mut().take(4) {
            *y = 100.0;
        }
        let fit = fit_exponential(&ts, &ys, None).unwrap();
        assert!((fit.rate - 0.3).abs() < 1e-9);
    }

    #[test]
    fn steady_targets_examples() {
        let g = Grid::new_1d(0.0, 1.0, 8).unwrap();
        let s = StateQuad::new(
            Field::constant(g, 0.2),
            Field::constant(g, 2.0),
            Field::constant(g, 3.0),
            Field::zeros(g),
            0.0,
        )
        .unwrap();
        let t = steady_state_targets(&s, 1.0);
        assert_eq!(t.v, 5.0);
        assert_eq!((t.u, t.z, t.w), (1.0, 1.0, 0.0));
        let mut s2 = s.clone();
        s2.w = Field::zeros(g);
        assert_eq!(steady_state_targets(&s2, 1.0).v, 2.0);
    }

    #[test]
    fn audit_examples() {
        let mut h = FrontHistory::new();
        h.push(row(0.0, 10.0)).unwrap();
        h.push(row(1.0, 10.0)).unwrap();
        assert_eq!(conservation_audit(&h).unwrap().drift, 0.0);
        let mut h = FrontHistory::new();
        h.push(row(0.0, 10.0)).unwrap();
        h.push(row(1.0, 10.0 + 1e-11)).unwrap();
        let a = conservation_audit(&h).unwrap();
        assert!((a.drift - 1e-12).abs() < 1e-16);
        assert!(a.relative);
        let mut h = FrontHistory::new();
        h.push(row(0.0, 0.0)).unwrap();
        h.push(row(1.0, 1e-3)).unwrap();
        let a = conservation_audit(&h).unwrap();
        assert!(!a.relative);
        assert_eq!(a.drift, 1e-3);
    }

    #[test]
    fn history_rejects_non_increasing_time() {
        let mut h = FrontHistory::new();
        h.push(row(1.0, 0.0)).unwrap();
        assert!(h.push(row(1.0, 0.0)).is_err());
    }

    /// 1% multiplicative noise: the true parameter should lie within three
    /// standard errors of the fit for all but a handful of draws.
    #[test]
    fn fits_recover_truth_under_noise() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ts: Vec<f64> = (0..40).map(|k| k as f64 * 0.1).collect();
        let draws = 200;
        let (mut exp_hits, mut pow_hits) = (0, 0);
        for _ in 0..draws {
            let c = rng.random_range(0.1..3.0);
            let a = rng.random_range(0.1..10.0);
            let mut noisy = |y: f64| y * (1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0));
            let ys: Vec<f64> = ts.iter().map(|t| noisy(a * (-c * t).exp())).collect();
            let rs: Vec<f64> = ts.iter().map(|t| noisy(a * (1.0 + t).powf(c / 3.0))).collect();
            let e = fit_exponential(&ts, &ys, Some(0.0)).unwrap();
            let p = fit_power_law(&ts, &rs, Some(0.0)).unwrap();
            exp_hits += usize::from((e.rate - c).abs() <= 3.0 * e.rate_stderr);
            pow_hits += usize::from((p.exponent - c / 3.0).abs() <= 3.0 * p.exponent_stderr);
        }
        assert!(exp_hits >= draws * 97 / 100, "{exp_hits}/{draws}");
        assert!(pow_hits >= draws * 97 / 100, "{pow_hits}/{draws}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn power_law_recovers_truth(p in 0.05f64..1.5, a in 0.1f64..10.0) {
                let ts: Vec<f64> = (0..25).map(|k| k as f64 * 0.4).collect();
                let rs: Vec<f64> = ts.iter().map(|t| a * (1.0 + t).powf(p)).collect();
                let fit = fit_power_law(&ts, &rs, Some(0.0)).unwrap();
                prop_assert!(((fit.exponent - p) / p).abs() < 1e-9);
                prop_assert!(((fit.prefactor - a) / a).abs() < 1e-9);
            }
        }
    }
}
