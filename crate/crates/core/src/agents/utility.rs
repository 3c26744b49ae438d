use serde::{Deserialize, Serialize};

use super::AgentsError;

/// Power-expo utility `U(w) = (1 - exp(-alpha w^(1-r))) / alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerExpoUtility {
    pub alpha_u: f64,
    pub r_u: f64,
}

impl PowerExpoUtility {
    pub fn new(alpha_u: f64, r_u: f64) -> Result<Self, AgentsError> {
        if !(alpha_u > 0.0 && alpha_u.is_finite()) {
            return Err(AgentsError::InvalidParameter(format!("alpha_u must be positive, got {alpha_u}")));
        }
        if !(r_u > 0.0 && r_u < 1.0) {
            return Err(AgentsError::InvalidParameter(format!("r_u must lie in (0,1), got {r_u}")));
        }
        Ok(Self { alpha_u, r_u })
    }

    /// Estimates from the pooled lottery data.
    pub fn fitted() -> Self {
        Self { alpha_u: 0.106, r_u: 0.345 }
    }

    /// The lottery-instrument authors' published estimates.
    pub fn holt_laury() -> Self {
        Self { alpha_u: 0.029, r_u: 0.269 }
    }

    /// Exponent `alpha w^(1-r)`; utility is `(1 - exp(-z)) / alpha`.
    pub fn exponent(&self, wealth: f64) -> f64 {
        self.alpha_u * libm::pow(wealth, 1.0 - self.r_u)
    }

    pub fn value(&self, wealth: f64) -> f64 {
        -libm::expm1(-self.exponent(wealth)) / self.alpha_u
    }

    /// `ln U(w)`, accurate for both tiny and saturated utilities.
    pub fn ln_value(&self, wealth: f64) -> f64 {
        let z = self.exponent(wealth);
        let one_minus = if z < std::f64::consts::LN_2 {
            libm::log(-libm::expm1(-z))
        } else {
            libm::log1p(-libm::exp(-z))
        };
        one_minus - libm::log(self.alpha_u)
    }

    pub fn upper_bound(&self) -> f64 {
        1.0 / self.alpha_u
    }
}
