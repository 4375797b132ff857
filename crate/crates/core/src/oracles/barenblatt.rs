use crate::error::{Error, Result};

/// Self-similarity exponent `k = 1 / (m - 1 + 2/n)`.
pub fn barenblatt_k(m: f64, n: usize) -> f64 {
    1.0 / (m - 1.0 + 2.0 / n as f64)
}

fn check(m: f64, n: usize) -> Result<()> {
    if !(m > 1.0) {
        return Err(Error::Domain(format!("Barenblatt profile needs m > 1, got {m}")));
    }
    if !(1..=3).contains(&n) {
        return Err(Error::Domain(format!("Barenblatt profile needs n in 1..=3, got {n}")));
    }
    Ok(())
}

/// Source-type solution of `u_t = Δ(u^m)` in `n` dimensions, evaluated at
/// distance `radius` from the origin:
///
/// `B = (1+t)^{-k} [(1 - k(m-1)/(2mn) · |x|² / (1+t)^{2k/n})_+]^{1/(m-1)}`.
pub fn barenblatt(radius: f64, t: f64, m: f64, n: usize) -> Result<f64> {
    check(m, n)?;
    let k = barenblatt_k(m, n);
    let nf = n as f64;
    let s = 1.0 + t;
    let bracket = 1.0 - k * (m - 1.0) / (2.0 * m * nf) * radius * radius / s.powf(2.0 * k / nf);
    if bracket <= 0.0 {
        return Ok(0.0);
    }
    Ok(s.powf(-k) * bracket.powf(1.0 / (m - 1.0)))
}

/// Radius where the bracket of [`barenblatt`] vanishes.
pub fn barenblatt_support_radius(t: f64, m: f64, n: usize) -> Result<f64> {
    check(m, n)?;
    let k = barenblatt_k(m, n);
    let nf = n as f64;
    Ok((2.0 * m * nf / (k * (m - 1.0)) * (1.0 + t).powf(2.0 * k / nf)).sqrt())
}
