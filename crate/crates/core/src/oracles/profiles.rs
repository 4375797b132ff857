//! Self-similar lower and upper solutions of the cell equation,
//!
//! `g(x,t) = ε (τ+t)^{±e} [(η - |x-x0|²/(τ+t)^β)_+]^d`,  `d = 1/(m-1)`,
//!
//! together with the constructive parameter rules that make them sub- and
//! supersolutions given bounds `C1 >= |∇v|`, `C2 >= |Δv|`.

use crate::error::{Error, Result};
use crate::model::{distance, Point};

/// Largest admissible `β` for the lower profile; the construction needs `β < 1/2`.
pub const LOWER_BETA_CAP: f64 = 0.499;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileParams {
    pub eps: f64,
    pub eta: f64,
    pub beta: f64,
    /// `κ` (decay) for the lower profile, `σ` (growth) for the upper one.
    pub rate_exp: f64,
    pub tau: f64,
    pub d: f64,
    pub x0: Point,
    pub kind: ProfileKind,
}

impl ProfileParams {
    pub fn eval(&self, x: Point, t: f64) -> f64 {
        let s = self.tau + t;
        let bracket = self.eta - distance(x, self.x0).powi(2) / s.powf(self.beta);
        if bracket <= 0.0 {
            return 0.0;
        }
        let amplitude = match self.kind {
            ProfileKind::Lower => self.eps * s.powf(-self.rate_exp),
            ProfileKind::Upper => self.eps * s.powf(self.rate_exp),
        };
        amplitude * bracket.powf(self.d)
    }

    /// `sqrt(η) (τ+t)^{β/2}`.
    pub fn support_radius(&self, t: f64) -> f64 {
        self.eta.sqrt() * (self.tau + t).powf(0.5 * self.beta)
    }
}

pub fn profile_eval(p: &ProfileParams, x: Point, t: f64) -> f64 {
    p.eval(x, t)
}

/// Inputs of the lower-profile rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerInputs {
    pub m: f64,
    pub n: usize,
    pub mu: f64,
    pub delta: f64,
    /// Radius of a ball around `x0` on which `u0 >= eps1`.
    pub seed_radius: f64,
    /// Seed height, at most 1/2.
    pub eps1: f64,
    pub diam: f64,
    pub c1: f64,
    pub c2: f64,
    pub x0: Point,
}

/// The four candidates whose minimum is the lower amplitude `ε`.
pub fn lower_eps_branches(inp: &LowerInputs) -> [f64; 4] {
    let m = inp.m;
    let d = 1.0 / (m - 1.0);
    [
        (1.0 / (8.0 * inp.n as f64 * m)).powf(d),
        (1.0 / (8.0 * m * (m - 1.0) * inp.c1 * inp.diam)).powf(d),
        inp.eps1 / inp.seed_radius.powf(2.0 * d),
        (inp.mu / (2.0 * inp.c2)).powf(1.0 / (m - inp.delta)),
    ]
}

/// Builds the expanding lower profile: `η = r²`, `ε` the minimum of
/// [`lower_eps_branches`], `β = min(4 ε^{m-1} m/(m-1), 0.499)`,
/// `κ = (1-β)/(m-1)`, `τ = 1`.
pub fn select_lower_params(inp: &LowerInputs) -> Result<ProfileParams> {
    let LowerInputs { m, delta, .. } = *inp;
    if !(m > 1.0) {
        return Err(Error::Hypothesis(format!("lower profile needs m > 1 (m = {m})")));
    }
    if !(1.0 <= delta && delta < m) {
        return Err(Error::Hypothesis(format!(
            "lower profile needs 1 <= delta < m (delta = {delta}, m = {m})"
        )));
    }
    if !(inp.mu > 0.0) {
        return Err(Error::Hypothesis("lower profile needs mu > 0".into()));
    }
    if !(inp.eps1 > 0.0 && inp.eps1 <= 0.5) {
        return Err(Error::param("eps1", format!("seed height must lie in (0, 1/2], got {}", inp.eps1)));
    }
    if !(inp.seed_radius > 0.0 && inp.seed_radius <= 1.0) {
        return Err(Error::param(
            "seed_radius",
            format!("seed radius must lie in (0, 1], got {}", inp.seed_radius),
        ));
    }
    if !(inp.c1 > 0.0 && inp.c2 > 0.0 && inp.diam > 0.0) {
        return Err(Error::param("c1/c2/diam", "bounds and diameter must be positive"));
    }
    let eps = lower_eps_branches(inp).into_iter().fold(f64::INFINITY, f64::min);
    let d = 1.0 / (m - 1.0);
    let beta = (4.0 * eps.powf(m - 1.0) * m / (m - 1.0)).min(LOWER_BETA_CAP);
    Ok(ProfileParams {
        eps,
        eta: inp.seed_radius * inp.seed_radius,
        beta,
        rate_exp: (1.0 - beta) / (m - 1.0),
        tau: 1.0,
        d,
        x0: inp.x0,
        kind: ProfileKind::Lower,
    })
}

/// Inputs of the upper-profile rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperInputs {
    pub m: f64,
    pub mu: f64,
    pub delta: f64,
    /// `supp u0 ⊂ B_{r0}(x0)`.
    pub r0: f64,
    /// Clearance radius: `B_{r1}(x0)` lies inside the domain.
    pub r1: f64,
    /// `sup u0`.
    pub eps1: f64,
    pub c1: f64,
    pub c2: f64,
    pub x0: Point,
    /// First `τ` tried; halved until the sufficient conditions hold.
    pub tau_start: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpperProfile {
    pub params: ProfileParams,
    /// Validity horizon.
    pub t0: f64,
    pub r2: f64,
}

pub const TAU_FLOOR: f64 = 1e-8;

/// Slack (lhs - rhs) of the three sufficient conditions for the upper
/// profile at time `t`, using the bound `(η - |x|²/(τ+t)^β)_+ <= η`.
/// All three must be nonnegative.
pub fn upper_condition_slack(p: &ProfileParams, m: f64, mu: f64, delta: f64, c1: f64, c2: f64, t: f64) -> [f64; 3] {
    let (eps, eta, beta, sigma, tau, d) = (p.eps, p.eta, p.beta, p.rate_exp, p.tau, p.d);
    let s = tau + t;
    let first = (m - 1.0) * beta - 8.0 * m * eps.powf(m - 1.0) * s.powf((m - 1.0) * sigma - beta + 1.0);
    let lead = m + eps * tau.powf(sigma) * eta.powf(d);
    let second = 2.0 * sigma / 3.0
        - (c2 + lead * lead * c1 * c1 * m) * eps.powf(m - 1.0) * s.powf((m - 1.0) * sigma + 1.0) * eta;
    let third = sigma / 3.0 - mu * eps.powf(delta - 1.0) * s.powf((delta - 1.0) * sigma + 1.0) * eta.powf(d * (delta - 1.0));
    [first, second, third]
}

fn upper_candidate(inp: &UpperInputs, tau: f64) -> (ProfileParams, f64, f64) {
    let (beta, sigma) = (1.0, 1.0);
    let d = 1.0 / (inp.m - 1.0);
    let r2 = 0.5 * (inp.r0 + inp.r1);
    let eta = r2 * r2 / tau.powf(beta);
    let eps = inp.eps1 / (tau.powf(sigma - d * beta) * (r2 * r2 - inp.r0 * inp.r0).powf(d));
    let t0 = tau.min(tau * ((inp.r1 / r2).powf(2.0 / beta) - 1.0));
    let params = ProfileParams {
        eps,
        eta,
        beta,
        rate_exp: sigma,
        tau,
        d,
        x0: inp.x0,
        kind: ProfileKind::Upper,
    };
    (params, t0, r2)
}

/// Sample times in `[0, t0]` where the conditions are checked. Each
/// condition is monotone in `t`, so the endpoints decide; interior points
/// guard against rounding.
fn check_times(t0: f64) -> impl Iterator<Item = f64> {
    (0..=8).map(move |k| t0 * k as f64 / 8.0)
}

/// Builds the upper profile with `β = σ = 1`, `r2 = (r0+r1)/2`,
/// `η = r2²/τ`, `ε = ε1 / (τ^{1-d} (r2² - r0²)^d)` and horizon
/// `t0 = min{τ, τ((r1/r2)² - 1)}`, halving `τ` from `tau_start` until the
/// sufficient conditions hold on `[0, t0]`.
pub fn select_upper_params(inp: &UpperInputs) -> Result<UpperProfile> {
    if !(inp.m > 1.0) {
        return Err(Error::Hypothesis(format!("upper profile needs m > 1 (m = {})", inp.m)));
    }
    if !(inp.delta >= 1.0 && inp.mu >= 0.0) {
        return Err(Error::Hypothesis("upper profile needs delta >= 1 and mu >= 0".into()));
    }
    if !(0.0 < inp.r0 && inp.r0 < inp.r1) {
        return Err(Error::param("r0/r1", format!("need 0 < r0 < r1 (r0 = {}, r1 = {})", inp.r0, inp.r1)));
    }
    if !(inp.eps1 > 0.0) {
        return Err(Error::param("eps1", "sup u0 must be positive"));
    }
    if !(inp.c1 >= 0.0 && inp.c2 >= 0.0) {
        return Err(Error::param("c1/c2", "bounds must be nonnegative"));
    }
    if !(inp.tau_start > 0.0 && inp.tau_start < 1.0) {
        return Err(Error::param("tau_start", "must lie in (0, 1)"));
    }
    let mut tau = inp.tau_start;
    let mut worst = [f64::NEG_INFINITY; 3];
    while tau >= TAU_FLOOR {
        let (params, t0, r2) = upper_candidate(inp, tau);
        let ok = check_times(t0).all(|t| {
            let slack = upper_condition_slack(&params, inp.m, inp.mu, inp.delta, inp.c1, inp.c2, t);
            worst = slack;
            slack.iter().all(|&s| s >= 0.0)
        });
        if ok {
            return Ok(UpperProfile { params, t0, r2 });
        }
        tau *= 0.5;
    }
    Err(Error::Construction(format!(
        "no tau >= {TAU_FLOOR} satisfies the upper-profile conditions (last slack {worst:?})"
    )))
}
