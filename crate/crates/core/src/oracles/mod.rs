//! Closed-form comparison objects: the Barenblatt profile, self-similar
//! lower/upper solutions, late-stage ODE envelopes and the exact ECM decay.

pub mod barenblatt;
pub mod ode;
pub mod profiles;

pub use barenblatt::{barenblatt, barenblatt_support_radius};
pub use ode::{ode_blowup_classify, ode_envelopes, BlowupClass, Envelopes, OdeEnvelopeParams};
pub use profiles::{
    profile_eval, select_lower_params, select_upper_params, LowerInputs, ProfileKind, ProfileParams,
    UpperInputs, UpperProfile,
};

use crate::error::{Error, Result};
use crate::model::Field;

/// `w(x,t) = w0(x) exp(-∫_0^t z(x,s) ds)` given the accumulated time integral of `z`.
pub fn w_exact(w0: &Field, z_integral: &Field) -> Result<Field> {
    if w0.grid() != z_integral.grid() {
        return Err(Error::param("z_integral", "must share the grid of w0"));
    }
    if z_integral.values().iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::Domain("time integral of z must be nonnegative".into()));
    }
    let values = w0
        .values()
        .iter()
        .zip(z_integral.values())
        .map(|(w, s)| w * (-s).exp())
        .collect();
    Field::from_values(*w0.grid(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Grid;

    #[test]
    fn w_exact_examples() {
        let g = Grid::new_1d(0.0, 1.0, 4).unwrap();
        let w0 = Field::constant(g, 3.0);
        assert_eq!(w_exact(&w0, &Field::zeros(g)).unwrap(), w0);
        let t = 1.7;
        let w = w_exact(&w0, &Field::constant(g, t)).unwrap();
        assert!(w.values().iter().all(|&x| (x - 3.0 * (-t).exp()).abs() < 1e-15));
        let w = w_exact(&w0, &Field::constant(g, 2.0)).unwrap();
        assert!((w.values()[0] - 0.406006).abs() < 1e-6);
        assert!(w_exact(&w0, &Field::constant(g, -1.0)).is_err());
    }
}
