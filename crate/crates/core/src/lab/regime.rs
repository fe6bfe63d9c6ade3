//! Joint scaling regimes `delta(eps) = eps^a`.
//!
//! With `e = d - 2 + alpha` the noise moments diverge like
//! `Lambda(delta) = log(1/delta)` when `d = 2, alpha = 0` and `delta^{-e}`
//! otherwise. The two admissibility conditions are
//! `eps Lambda(delta(eps)) -> 0` (LDP in `H^{-s}`) and
//! `eps delta(eps)^{-gamma} -> 0` for some `gamma > e` (LDP in `H`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFamily {
    /// Exponent in `delta = eps^a`.
    pub a: f64,
    pub d: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regime {
    pub holds_rd46: bool,
    pub holds_rd5050: bool,
}

impl ScalingFamily {
    pub fn new(a: f64, d: usize, alpha: f64) -> Result<Self> {
        let f = Self { a, d, alpha };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::param("a", self.a));
        }
        if self.d == 0 {
            return Err(Error::InvalidDimension(self.d));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", self.alpha));
        }
        Ok(())
    }

    pub fn delta(&self, eps: f64) -> f64 {
        eps.powf(self.a)
    }

    /// `d - 2 + alpha`.
    pub fn exponent(&self) -> f64 {
        self.d as f64 - 2.0 + self.alpha
    }

    pub fn is_log_case(&self) -> bool {
        self.d == 2 && self.alpha == 0.0
    }

    pub fn lambda(&self, delta: f64) -> f64 {
        if self.is_log_case() {
            (1.0 / delta).ln()
        } else {
            delta.powf(-self.exponent())
        }
    }
}

/// Exact classification for power-law families. Without `gamma` the second
/// condition asks for the existence of an admissible `gamma > d - 2 + alpha`.
pub fn classify_regime(family: &ScalingFamily, gamma: Option<f64>) -> Regime {
    let e = family.exponent();
    let holds_rd46 = family.is_log_case() || e <= 0.0 || family.a * e < 1.0;
    let holds_rd5050 = match gamma {
        Some(g) => g > e && family.a * g < 1.0,
        None => family.a * e < 1.0,
    };
    Regime {
        holds_rd46,
        holds_rd5050,
    }
}

/// `eps Lambda(delta(eps))` along `eps = 2^{-j}`, `j = 1..=jmax`.
pub fn rd46_sequence(family: &ScalingFamily, jmax: u32) -> Vec<f64> {
    (1..=jmax)
        .map(|j| {
            let eps = 0.5f64.powi(j as i32);
            eps * family.lambda(family.delta(eps))
        })
        .collect()
}

/// `eps delta(eps)^{-gamma}` along `eps = 2^{-j}`.
pub fn rd5050_sequence(family: &ScalingFamily, gamma: f64, jmax: u32) -> Vec<f64> {
    (1..=jmax)
        .map(|j| {
            let eps = 0.5f64.powi(j as i32);
            eps * family.delta(eps).powf(-gamma)
        })
        .collect()
}

/// Whether a sequence is nonincreasing (up to relative rounding) and has
/// dropped by a nontrivial factor over its range.
pub fn decays_toward_zero(seq: &[f64]) -> bool {
    let (Some(&first), Some(&last)) = (seq.first(), seq.last()) else {
        return false;
    };
    let monotone = seq.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    monotone && last < first * (1.0 - 1e-6)
}

/// Classification read off the sequences over `j <= 20`. Without `gamma` the
/// second condition uses `gamma` just above `d - 2 + alpha`, or the midpoint
/// towards `1/a` when that is larger.
pub fn numeric_regime(family: &ScalingFamily, gamma: Option<f64>) -> Regime {
    let e = family.exponent();
    let holds_rd46 = decays_toward_zero(&rd46_sequence(family, 20));
    let holds_rd5050 = match gamma {
        Some(g) => g > e && decays_toward_zero(&rd5050_sequence(family, g, 20)),
        None => {
            let lo = e.max(0.0);
            let g = if family.a * lo < 1.0 {
                0.5 * (lo + 1.0 / family.a)
            } else {
                lo + 1e-3
            };
            decays_toward_zero(&rd5050_sequence(family, g, 20))
        }
    };
    Regime {
        holds_rd46,
        holds_rd5050,
    }
}
