//! Second moments of `dx = -u x dt + sqrt(2) dw`, `x(0) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OuMoment {
    /// `E x(t)^2 = (1 - e^{-2ut}) / u`.
    Pointwise { t: f64 },
    /// `(1/T) int_0^T E x(t)^2 dt = 1/u - (1 - e^{-2uT}) / (2 u^2 T)`.
    Averaged,
    /// `E[x(t_i)^2 | x(t_{i-1}) = z]` on the grid `{iT/m}`:
    /// `(z e^{-uT/m})^2 + (1 - e^{-2uT/m}) / u`.
    Conditional { m: usize, previous: f64 },
}

pub fn ou_closed_form_second_moment(u: f64, horizon: f64, which: OuMoment) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::InvalidArgument(format!("OU rate must be positive, got {u}")));
    }
    Ok(match which {
        OuMoment::Pointwise { t } => (1.0 - (-2.0 * u * t).exp()) / u,
        OuMoment::Averaged => 1.0 / u - (1.0 - (-2.0 * u * horizon).exp()) / (2.0 * u * u * horizon),
        OuMoment::Conditional { m, previous } => {
            let step = horizon / m as f64;
            (previous * (-u * step).exp()).powi(2) + (1.0 - (-2.0 * u * step).exp()) / u
        }
    })
}
