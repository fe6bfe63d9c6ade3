//! Spatially correlated Wiener process `w^delta = sum_k lambda_k(delta) e_k beta_k`,
//! its covariance `Q_delta`, Ornstein-Uhlenbeck steps and stochastic
//! convolutions, plus the moment scaling machinery in [`scaling`].

pub mod convolution;
pub mod levels;
pub mod rng;
pub mod scaling;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{SpectralBasis, SpectralField};
use rng::RngStream;

/// `lambda_k(delta) = (1 + delta sqrt(alpha_k))^(-beta)`.
pub fn lambda_k(alpha_k: f64, delta: f64, beta: f64) -> f64 {
    (1.0 + delta * alpha_k.sqrt()).powf(-beta)
}

/// `beta > (d - 2 + alpha) / 2`.
pub fn hypothesis2_holds(d: usize, alpha: f64, beta: f64) -> bool {
    beta > (d as f64 - 2.0 + alpha) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub delta: f64,
    pub beta: f64,
}

impl NoiseParams {
    pub fn new(delta: f64, beta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::param("delta", delta));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", beta));
        }
        Ok(Self { delta, beta })
    }
}

/// Per-mode decay and noise factors of the exact OU step of length `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuFactors {
    /// `exp(-alpha dt)`.
    pub decay: f64,
    /// `(1 - exp(-alpha dt)) / alpha`.
    pub gain: f64,
    /// `sqrt((1 - exp(-2 alpha dt)) / (2 alpha))`.
    pub spread: f64,
}

impl OuFactors {
    pub fn new(alpha: f64, dt: f64) -> Self {
        Self {
            decay: (-alpha * dt).exp(),
            gain: -(-alpha * dt).exp_m1() / alpha,
            spread: (-(-2.0 * alpha * dt).exp_m1() / (2.0 * alpha)).sqrt(),
        }
    }
}

/// Exact variance `lambda^2 (1 - exp(-2 alpha t)) / (2 alpha)` of the OU
/// coefficient started at zero.
pub fn ou_variance(alpha: f64, lambda: f64, t: f64) -> f64 {
    lambda * lambda * (-(-2.0 * alpha * t).exp_m1()) / (2.0 * alpha)
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    basis: Arc<SpectralBasis>,
    params: NoiseParams,
    amps: Vec<f64>,
}

impl NoiseModel {
    pub fn new(basis: &Arc<SpectralBasis>, params: NoiseParams) -> Result<Self> {
        let params = NoiseParams::new(params.delta, params.beta)?;
        if params.delta > 0.0 && !hypothesis2_holds(basis.dim(), 0.0, params.beta) {
            log::warn!(
                "beta = {} does not exceed (d - 2)/2 = {}; noise moments diverge as delta -> 0",
                params.beta,
                (basis.dim() as f64 - 2.0) / 2.0
            );
        }
        let amps = basis
            .eigenvalues()
            .iter()
            .map(|&a| lambda_k(a, params.delta, params.beta))
            .collect();
        Ok(Self {
            basis: basis.clone(),
            params,
            amps,
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn params(&self) -> NoiseParams {
        self.params
    }

    pub fn delta(&self) -> f64 {
        self.params.delta
    }

    pub fn beta(&self) -> f64 {
        self.params.beta
    }

    /// `lambda_k(delta)` per mode, the eigenvalues of `Q_delta^(1/2)`.
    pub fn amplitudes(&self) -> &[f64] {
        &self.amps
    }

    /// Eigenvalues `lambda_k^2` of `Q_delta`.
    pub fn covariance_eigenvalues(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a * a).collect()
    }

    /// `Q_delta x`.
    pub fn apply_covariance(&self, x: &SpectralField) -> Result<SpectralField> {
        crate::spectral::check_basis(&self.basis, x.basis())?;
        let c = x.coeffs().iter().zip(&self.amps).map(|(c, a)| c * a * a).collect();
        Ok(SpectralField::from_raw(&self.basis, c))
    }

    /// `Q_delta^(1/2) x`.
    pub fn apply_sqrt_covariance(&self, x: &SpectralField) -> Result<SpectralField> {
        crate::spectral::check_basis(&self.basis, x.basis())?;
        let c = x.coeffs().iter().zip(&self.amps).map(|(c, a)| c * a).collect();
        Ok(SpectralField::from_raw(&self.basis, c))
    }

    /// `w^delta(t + dt) - w^delta(t)`: independent `N(0, lambda_k^2 dt)` per mode.
    pub fn wiener_increment(&self, dt: f64, rng: &mut RngStream) -> Result<SpectralField> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", dt));
        }
        let s = dt.sqrt();
        let c = self.amps.iter().map(|a| a * s * rng.normal()).collect();
        Ok(SpectralField::from_raw(&self.basis, c))
    }

    /// Exact transition of `dz = Az dt + dw^delta` over `dt`.
    pub fn ou_step(&self, z: &SpectralField, dt: f64, rng: &mut RngStream) -> Result<SpectralField> {
        crate::spectral::check_basis(&self.basis, z.basis())?;
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", dt));
        }
        if dt == 0.0 {
            return Ok(z.clone());
        }
        let c = z
            .coeffs()
            .iter()
            .zip(self.basis.eigenvalues())
            .zip(&self.amps)
            .map(|((&zk, &a), &l)| {
                let f = OuFactors::new(a, dt);
                f.decay * zk + l * f.spread * rng.normal()
            })
            .collect();
        Ok(SpectralField::from_raw(&self.basis, c))
    }

    /// Stationary variance `lambda_k^2 / (2 alpha_k)` per mode.
    pub fn stationary_variances(&self) -> Vec<f64> {
        self.basis
            .eigenvalues()
            .iter()
            .zip(&self.amps)
            .map(|(a, l)| l * l / (2.0 * a))
            .collect()
    }
}
