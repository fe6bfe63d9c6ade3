//! Weighted stochastic convolution
//! `z_{delta,theta}(t) = int_0^t (t-s)^(-theta/2) e^{(t-s)A} dw^delta(s)`.
//!
//! Each mode is a centred Gaussian with variance
//! `lambda_k^2 int_0^t r^(-theta) exp(-2 alpha_k r) dr`.

use statrs::function::gamma::gamma;

use super::rng::RngStream;
use super::{ou_variance, NoiseModel};
use crate::dynamics::{TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// `int_0^t r^(-theta) exp(-2 alpha r) dr`.
///
/// The substitution `r = u^(1/(1-theta))` removes the endpoint singularity;
/// the smooth integrand is then handled by adaptive Simpson. Once the
/// integrand has decayed below `exp(-60)` the complete gamma value is used.
pub fn theta_kernel_integral(alpha: f64, theta: f64, t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::ThetaOutOfRange(theta));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha_k", alpha));
    }
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if theta == 0.0 {
        return Ok(ou_variance(alpha, 1.0, t));
    }
    let rate = 2.0 * alpha;
    if rate * t > 60.0 {
        return Ok(gamma(1.0 - theta) * rate.powf(theta - 1.0));
    }
    let a = 1.0 - theta;
    let inv = 1.0 / a;
    let g = |u: f64| inv * (-rate * u.powf(inv)).exp();
    Ok(adaptive_simpson(&g, 0.0, t.powf(a), 1e-13, 48))
}

/// `lambda^2 int_0^t r^(-theta) exp(-2 alpha r) dr`.
pub fn theta_variance(alpha: f64, lambda: f64, theta: f64, t: f64) -> Result<f64> {
    Ok(lambda * lambda * theta_kernel_integral(alpha, theta, t)?)
}

pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    simpson_step(f, a, b, fa, fm, fb, whole, tol * scale, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Samples of `z_{delta,theta}` on the time grid.
///
/// For `theta = 0` this is the exact OU path (joint law over times). For
/// `theta > 0` the kernel depends on `t`, the process is not Markov, and each
/// output time receives an independent draw from its exact marginal.
pub fn convolution_theta(
    noise: &NoiseModel,
    theta: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::ThetaOutOfRange(theta));
    }
    let basis = noise.basis();
    let times = grid.output_times();
    let mut states = Vec::with_capacity(times.len());
    if theta == 0.0 {
        let mut z = SpectralField::zeros(basis);
        states.push(z.clone());
        for step in 1..=grid.steps() {
            z = noise.ou_step(&z, grid.dt(), rng)?;
            if step % grid.stride() == 0 || step == grid.steps() {
                states.push(z.clone());
            }
        }
    } else {
        for &t in &times {
            let c = basis
                .eigenvalues()
                .iter()
                .zip(noise.amplitudes())
                .map(|(&a, &l)| Ok(theta_variance(a, l, theta, t)?.sqrt() * rng.normal()))
                .collect::<Result<Vec<_>>>()?;
            states.push(SpectralField::from_raw(basis, c));
        }
    }
    Trajectory::new(times, states)
}
