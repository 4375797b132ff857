//! Scalar ODE comparison objects for the late stage: the blow-up dichotomy
//! of `g' = C e^{-ct} g^m` and the envelope pair `u2 <= u <= u1`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlowupClass {
    /// Finite-time blow-up at `time`.
    BlowsUp { time: f64 },
    Bounded,
    /// `c/C` equals `(m-1) g0^{m-1}` to relative 1e-12.
    Marginal,
}

/// Classifies `g' = C e^{-ct} g^m, g(0) = g0` by comparing `c/C` with
/// `(m-1) g0^{m-1}`.
///
/// Integrating `-(g^{1-m})'/(m-1) = C e^{-ct}` gives
/// `(g0^{1-m} - g^{1-m})/(m-1) = (C/c)(1 - e^{-ct})`, so blow-up happens at
/// `t* = -ln(1 - c g0^{1-m} / (C(m-1))) / c`.
pub fn ode_blowup_classify(big_c: f64, c: f64, m: f64, g0: f64) -> Result<BlowupClass> {
    if !(big_c > 0.0 && c > 0.0 && g0 > 0.0 && m > 1.0) {
        return Err(Error::Domain(format!(
            "blow-up classification needs C, c, g0 > 0 and m > 1 (C = {big_c}, c = {c}, m = {m}, g0 = {g0})"
        )));
    }
    let ratio = c / big_c;
    let threshold = (m - 1.0) * g0.powf(m - 1.0);
    if ((ratio - threshold) / threshold).abs() <= 1e-12 {
        return Ok(BlowupClass::Marginal);
    }
    if ratio > threshold {
        return Ok(BlowupClass::Bounded);
    }
    let time = -(1.0 - c * g0.powf(1.0 - m) / (big_c * (m - 1.0))).ln() / c;
    Ok(BlowupClass::BlowsUp { time })
}

/// Late-stage envelope ODEs
/// `u1' =  C2 e^{-c2 t} u1^m + μ u1^δ (1 - u1)`,
/// `u2' = -C2 e^{-c2 t} u2^m + μ u2^δ (1 - u2)`, started at `t1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeEnvelopeParams {
    /// `C2` in `‖Δv‖∞ <= C2 e^{-c2 t}`.
    pub decay_bound: f64,
    /// `c2`.
    pub decay_rate: f64,
    pub t1: f64,
    /// `sup u(t1) + 1`.
    pub u1_init: f64,
    /// Lower plateau `ε0`.
    pub u2_init: f64,
    pub mu: f64,
    pub delta: f64,
    pub m: f64,
}

impl OdeEnvelopeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.u1_init > 1.0 && 1.0 > self.u2_init && self.u2_init > 0.0) {
            return Err(Error::param(
                "envelope",
                format!("need u1_init > 1 > u2_init > 0 (got {}, {})", self.u1_init, self.u2_init),
            ));
        }
        if !(self.decay_bound >= 0.0 && self.decay_rate > 0.0 && self.m > 1.0 && self.delta >= 1.0 && self.mu >= 0.0) {
            return Err(Error::param("envelope", "need C2 >= 0, c2 > 0, m > 1, delta >= 1, mu >= 0"));
        }
        Ok(())
    }

    /// The `u1` no-blow-up criterion `c2 / (C2 e^{-c2 t1}) > 2 (m-1) u1_init^{m-1}`.
    pub fn u1_certified_bounded(&self) -> bool {
        if self.decay_bound == 0.0 {
            return true;
        }
        let effective = self.decay_bound * (-self.decay_rate * self.t1).exp();
        self.decay_rate / effective > 2.0 * (self.m - 1.0) * self.u1_init.powf(self.m - 1.0)
    }

    fn rhs(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        let forcing = self.decay_bound * (-self.decay_rate * t).exp();
        let growth = |u: f64| self.mu * u.powf(self.delta) * (1.0 - u);
        [
            forcing * y[0].powf(self.m) + growth(y[0]),
            -forcing * y[1].powf(self.m) + growth(y[1]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelopes {
    pub t: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// Step that passed the halving check.
    pub dt: f64,
}

fn rk4(p: &OdeEnvelopeParams, t_end: f64, dt: f64, stride: usize) -> (Vec<f64>, Vec<[f64; 2]>) {
    let steps = ((t_end - p.t1) / dt).ceil() as usize;
    let mut y = [p.u1_init, p.u2_init];
    let mut ts = vec![p.t1];
    let mut ys = vec![y];
    for k in 0..steps {
        let t = p.t1 + k as f64 * dt;
        let h = dt.min(t_end - t);
        let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
        let k1 = p.rhs(t, y);
        let k2 = p.rhs(t + 0.5 * h, add(y, k1, 0.5 * h));
        let k3 = p.rhs(t + 0.5 * h, add(y, k2, 0.5 * h));
        let k4 = p.rhs(t + h, add(y, k3, h));
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            ts.push(t + h);
            ys.push(y);
        }
    }
    (ts, ys)
}

pub const ENVELOPE_TOL: f64 = 1e-10;

/// Integrates both envelopes on `[t1, t_end]` with classical RK4, halving
/// `dt` until a run at `dt/2` agrees with the run at `dt` to 1e-10 at every
/// sample. Checks `u2 <= 1 <= u1` along the way.
pub fn ode_envelopes(p: &OdeEnvelopeParams, t_end: f64, dt: f64) -> Result<Envelopes> {
    p.validate()?;
    if !(t_end > p.t1 && dt > 0.0) {
        return Err(Error::param("t_end/dt", "need t_end > t1 and dt > 0"));
    }
    if !p.u1_certified_bounded() {
        return Err(Error::Hypothesis(
            "u1 is not certified bounded: c2/(C2 e^(-c2 t1)) <= 2(m-1) u1_init^(m-1) (marginal); start later".into(),
        ));
    }
    let mut dt = dt.min(t_end - p.t1);
    for _ in 0..24 {
        let (ts, coarse) = rk4(p, t_end, dt, 1);
        let (_, fine) = rk4(p, t_end, 0.5 * dt, 2);
        let agree = coarse.len() == fine.len()
            && coarse.iter().zip(&fine).all(|(a, b)| {
                (a[0] - b[0]).abs() <= ENVELOPE_TOL && (a[1] - b[1]).abs() <= ENVELOPE_TOL
            });
        if agree {
            if let Some(k) = fine.iter().position(|y| !(y[1] <= 1.0 && 1.0 <= y[0])) {
                return Err(Error::Construction(format!(
                    "envelope ordering u2 <= 1 <= u1 broken at t = {} (u1 = {}, u2 = {})",
                    ts[k], fine[k][0], fine[k][1]
                )));
            }
            return Ok(Envelopes {
                t: ts,
                u1: fine.iter().map(|y| y[0]).collect(),
                u2: fine.iter().map(|y| y[1]).collect(),
                dt: 0.5 * dt,
            });
        }
        dt *= 0.5;
    }
    Err(Error::NoConvergence(format!("RK4 halving did not reach {ENVELOPE_TOL}")))
}

/// `∫_{t1}^{t} e^{-a(t-s)} e^{-c2 s} ds`.
fn damped_forcing(a: f64, c2: f64, t1: f64, t: f64) -> f64 {
    if (a - c2).abs() < 1e-14 * a.max(c2) {
        (-a * t).exp() * (t - t1)
    } else {
        ((-c2 * t).exp() - (-a * (t - t1) - c2 * t1).exp()) / (a - c2)
    }
}

/// Closed-form linear upper envelope
/// `ū1' = C^m C2 e^{-c2 t} + μ ε0^δ (1 - ū1)`, `ū1(t1) = u1_init`,
/// where `sup_u1` bounds `u1` and `eps0` bounds `u` from below.
pub fn upper_envelope_bound(p: &OdeEnvelopeParams, sup_u1: f64, eps0: f64, t: f64) -> f64 {
    let a = p.mu * eps0.powf(p.delta);
    let k = sup_u1.powf(p.m) * p.decay_bound;
    1.0 + (p.u1_init - 1.0) * (-a * (t - p.t1)).exp() + k * damped_forcing(a, p.decay_rate, p.t1, t)
}

/// Closed-form linear lower envelope
/// `u̲2' = -C2 e^{-c2 t} + μ ε0^δ (1 - u̲2)`, `u̲2(t1) = ε0`.
pub fn lower_envelope_bound(p: &OdeEnvelopeParams, eps0: f64, t: f64) -> f64 {
    let a = p.mu * eps0.powf(p.delta);
    1.0 + (eps0 - 1.0) * (-a * (t - p.t1)).exp() - p.decay_bound * damped_forcing(a, p.decay_rate, p.t1, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_examples() {
        match ode_blowup_classify(1.0, 1.0, 2.0, 2.0).unwrap() {
            BlowupClass::BlowsUp { time } => assert!((time - std::f64::consts::LN_2).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert_eq!(ode_blowup_classify(1.0, 1.0, 2.0, 0.5).unwrap(), BlowupClass::Bounded);
        assert_eq!(ode_blowup_classify(1.0, 1.0, 2.0, 1.0).unwrap(), BlowupClass::Marginal);
        assert!(ode_blowup_classify(0.0, 1.0, 2.0, 1.0).is_err());
    }

    fn envelope_example() -> OdeEnvelopeParams {
        OdeEnvelopeParams {
            decay_bound: 0.1,
            decay_rate: 1.0,
            t1: 0.0,
            u1_init: 2.0,
            u2_init: 0.25,
            mu: 1.0,
            delta: 1.0,
            m: 2.0,
        }
    }

    /// Independent oracle: forward Euler with a very small step on each
    /// envelope separately.
    fn euler_endpoint(p: &OdeEnvelopeParams, sign: f64, y0: f64, t_end: f64) -> f64 {
        let n = 2_000_000;
        let h = (t_end - p.t1) / n as f64;
        let mut y = y0;
        for k in 0..n {
            let t = p.t1 + k as f64 * h;
            y += h * (sign * p.decay_bound * (-p.decay_rate * t).exp() * y.powf(p.m) + p.mu * y.powf(p.delta) * (1.0 - y));
        }
        y
    }

    #[test]
    fn envelopes_converge_to_one() {
        let p = envelope_example();
        let env = ode_envelopes(&p, 20.0, 0.01).unwrap();
        let u1 = *env.u1.last().unwrap();
        let u2 = *env.u2.last().unwrap();
        assert!((u1 - 1.0).abs() < 1e-3 && (u2 - 1.0).abs() < 1e-3, "{u1} {u2}");
        assert!((u1 - euler_endpoint(&p, 1.0, 2.0, 20.0)).abs() < 1e-5);
        assert!((u2 - euler_endpoint(&p, -1.0, 0.25, 20.0)).abs() < 1e-5);
        assert!(env.u1.iter().all(|&u| u >= 1.0));
        assert!(env.u2.iter().all(|&u| (0.25..=1.0).contains(&u)));
    }

    #[test]
    fn decoupled_limit_is_monotone() {
        let p = OdeEnvelopeParams {
            decay_bound: 0.0,
            ..envelope_example()
        };
        let env = ode_envelopes(&p, 10.0, 0.05).unwrap();
        assert!(env.u1.windows(2).all(|w| w[1] <= w[0]));
        assert!(env.u2.windows(2).all(|w| w[1] >= w[0]));
        // Pure logistic: u2(t) = 1 / (1 + 3 e^{-t}).
        let exact = 1.0 / (1.0 + 3.0 * (-10.0f64).exp());
        assert!((env.u2.last().unwrap() - exact).abs() < 1e-9);
    }

    #[test]
    fn refuses_uncertified_start() {
        let p = OdeEnvelopeParams {
            decay_bound: 10.0,
            ..envelope_example()
        };
        assert!(!p.u1_certified_bounded());
        assert!(matches!(ode_envelopes(&p, 5.0, 0.01), Err(Error::Hypothesis(_))));
        // Starting late enough restores the criterion.
        let late = OdeEnvelopeParams { t1: 4.0, ..p };
        assert!(late.u1_certified_bounded());
        assert!(ode_envelopes(&late, 20.0, 0.01).is_ok());
    }

    #[test]
    fn closed_form_envelopes_bracket_the_ode() {
        let p = envelope_example();
        let env = ode_envelopes(&p, 15.0, 0.01).unwrap();
        let sup_u1 = env.u1.iter().copied().fold(0.0, f64::max);
        let eps0 = p.u2_init;
        for (k, &t) in env.t.iter().enumerate() {
            assert!(upper_envelope_bound(&p, sup_u1, eps0, t) >= env.u1[k] - 1e-12);
            assert!(lower_envelope_bound(&p, eps0, t) <= env.u2[k] + 1e-12);
        }
    }
}
