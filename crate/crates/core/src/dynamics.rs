//! Exponential Euler integrators for the skeleton equation
//! `u' = Au + F(u) + phi`, the stochastic equation
//! `du = (Au + F(u)) dt + sqrt(eps) dw^delta` and the controlled equation
//! `du = (Au + F(u) + Q_delta phi) dt + sqrt(eps) dw^delta`.
//!
//! One step of length `dt` reads, mode by mode,
//! `u <- e^{-alpha dt} u + (1 - e^{-alpha dt})/alpha (N(u) + c) + sqrt(eps) s xi`
//! with `N = P F`, `c` the (piecewise constant) control term and `s xi` the
//! exact OU increment.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::rng::RngStream;
use crate::noise::{NoiseModel, OuFactors};
use crate::nonlinearity::DriftOperator;
use crate::spectral::{check_basis, SpectralBasis, SpectralField};

const GRID_TOL: f64 = 1e-9;

/// Uniform time grid `t_j = j dt`, `j = 0..=steps`, with every `stride`-th
/// state (and the final one) kept in the output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    dt: f64,
    steps: usize,
    stride: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param("T", horizon));
        }
        if !(dt > 0.0 && dt <= horizon) {
            return Err(Error::param("dt", dt));
        }
        let steps = (horizon / dt).round() as usize;
        if ((steps as f64) * dt - horizon).abs() > GRID_TOL * horizon {
            return Err(Error::param("dt (must divide T)", dt));
        }
        Ok(Self {
            horizon,
            dt: horizon / steps as f64,
            steps,
            stride: 1,
        })
    }

    pub fn with_stride(mut self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::param("output_stride", 0.0));
        }
        self.stride = stride;
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn time(&self, step: usize) -> f64 {
        if step == self.steps {
            self.horizon
        } else {
            step as f64 * self.dt
        }
    }

    pub(crate) fn is_output(&self, step: usize) -> bool {
        step.is_multiple_of(self.stride) || step == self.steps
    }

    pub fn output_times(&self) -> Vec<f64> {
        (0..=self.steps)
            .filter(|&s| self.is_output(s))
            .map(|s| self.time(s))
            .collect()
    }
}

/// Diagnostics gathered while integrating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `sup_t |u(t)|_H` over all steps.
    pub sup_norm_h: f64,
    /// Left-rectangle value of `int_0^T |u|_{p_n}^{p_n} dt` (zero without drift).
    pub lp_integral: f64,
    /// Set when `|f'(max|u|)| dt > 1` was observed at some step.
    pub accuracy_warning: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<SpectralField>,
    pub report: SolveReport,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<SpectralField>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: states.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("trajectory times must increase".into()));
        }
        if let Some(first) = states.first() {
            for s in &states {
                check_basis(first.basis(), s.basis())?;
            }
        }
        if states.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("trajectory state"));
        }
        Ok(Self {
            times,
            states,
            report: SolveReport::default(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[SpectralField] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &SpectralField {
        self.states.last().expect("nonempty trajectory")
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        self.states[0].basis()
    }

    /// Uniform step, or an error if the grid is not uniform.
    pub fn uniform_dt(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::NonUniformGrid);
        }
        let dt = (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64;
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::NonUniformGrid);
            }
        }
        Ok(dt)
    }

    /// `sup_j |u_j - v_j|` in the given norm, over the common output times.
    pub fn sup_distance(&self, other: &Trajectory, norm: impl Fn(&[f64]) -> f64) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(Error::LengthMismatch {
                expected: self.times.len(),
                got: other.times.len(),
            });
        }
        let mut sup = 0.0f64;
        let mut diff = Vec::new();
        for (a, b) in self.states.iter().zip(&other.states) {
            check_basis(a.basis(), b.basis())?;
            diff.clear();
            diff.extend(a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| x - y));
            sup = sup.max(norm(&diff));
        }
        Ok(sup)
    }
}

/// Deterministic control, piecewise constant on `[j dt, (j+1) dt)`.
#[derive(Debug, Clone)]
pub struct Control {
    basis: Arc<SpectralBasis>,
    dt: f64,
    values: Vec<Vec<f64>>,
}

impl PartialEq for Control {
    fn eq(&self, other: &Self) -> bool {
        self.basis.same_as(&other.basis) && self.dt == other.dt && self.values == other.values
    }
}

impl Control {
    pub fn zeros(basis: &Arc<SpectralBasis>, grid: &TimeGrid) -> Self {
        Self {
            basis: basis.clone(),
            dt: grid.dt(),
            values: vec![vec![0.0; basis.len()]; grid.steps()],
        }
    }

    pub fn new(basis: &Arc<SpectralBasis>, dt: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("control dt", dt));
        }
        if values.is_empty() {
            return Err(Error::LengthMismatch { expected: 1, got: 0 });
        }
        for v in &values {
            if v.len() != basis.len() {
                return Err(Error::LengthMismatch {
                    expected: basis.len(),
                    got: v.len(),
                });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("control"));
            }
        }
        Ok(Self {
            basis: basis.clone(),
            dt,
            values,
        })
    }

    /// Samples `phi` at the left endpoint of each interval.
    pub fn from_fn(
        basis: &Arc<SpectralBasis>,
        grid: &TimeGrid,
        mut phi: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let values = (0..grid.steps()).map(|j| phi(grid.time(j))).collect();
        Self::new(basis, grid.dt(), values)
    }

    /// `phi(t) = field` for all `t`.
    pub fn constant(field: &SpectralField, grid: &TimeGrid) -> Self {
        Self {
            basis: field.basis().clone(),
            dt: grid.dt(),
            values: vec![field.coeffs().to_vec(); grid.steps()],
        }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.values.len() as f64
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.horizon(), self.dt).expect("control grid is valid")
    }

    /// Left endpoints of the control intervals.
    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|j| j as f64 * self.dt).collect()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.values
    }

    pub fn value(&self, j: usize) -> SpectralField {
        SpectralField::from_raw(&self.basis, self.values[j].clone())
    }

    /// `int_0^T |phi|_H^2 dt`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.dt * self.values.iter().flatten().map(|c| c * c).sum::<f64>()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().flatten().for_each(|c| *c *= factor);
        out
    }

    pub fn add(&self, other: &Control) -> Result<Control> {
        check_basis(&self.basis, &other.basis)?;
        if self.values.len() != other.values.len() || (self.dt - other.dt).abs() > GRID_TOL * self.dt {
            return Err(Error::StepMismatch {
                dt: other.dt,
                control_dt: self.dt,
            });
        }
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(out)
    }

    /// Number of solver steps per control interval.
    pub(crate) fn substeps(&self, grid: &TimeGrid) -> Result<usize> {
        let mismatch = Error::StepMismatch {
            dt: grid.dt(),
            control_dt: self.dt,
        };
        if (self.horizon() - grid.horizon()).abs() > GRID_TOL * grid.horizon() {
            return Err(mismatch);
        }
        let ratio = self.dt / grid.dt();
        let m = ratio.round();
        if m < 1.0 || (ratio - m).abs() > 1e-7 {
            return Err(mismatch);
        }
        Ok(m as usize)
    }
}

pub(crate) struct ControlInput<'a> {
    pub control: &'a Control,
    /// Multiplier applied mode-wise to `phi`.
    pub weights: Option<&'a [f64]>,
}

pub(crate) struct NoiseInput<'a> {
    pub noise: &'a NoiseModel,
    pub eps: f64,
    pub rng: &'a mut RngStream,
}

/// Shared exponential Euler loop.
pub(crate) fn integrate(
    x: &SpectralField,
    drift: &DriftOperator,
    grid: &TimeGrid,
    control: Option<ControlInput<'_>>,
    mut noise: Option<NoiseInput<'_>>,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<Trajectory> {
    let basis = x.basis().clone();
    check_basis(&basis, drift.basis())?;
    if !x.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    let substeps = match &control {
        Some(c) => {
            check_basis(&basis, c.control.basis())?;
            c.control.substeps(grid)?
        }
        None => 1,
    };
    if let Some(n) = &noise {
        check_basis(&basis, n.noise.basis())?;
        if !(n.eps >= 0.0 && n.eps.is_finite()) {
            return Err(Error::param("eps", n.eps));
        }
    }
    let dt = grid.dt();
    let factors: Vec<OuFactors> = basis.eigenvalues().iter().map(|&a| OuFactors::new(a, dt)).collect();
    let noise_scale: Vec<f64> = match &noise {
        Some(n) if n.eps > 0.0 => {
            let s = n.eps.sqrt();
            n.noise
                .amplitudes()
                .iter()
                .zip(&factors)
                .map(|(l, f)| s * l * f.spread)
                .collect()
        }
        _ => Vec::new(),
    };
    let p_n = drift.drift().map(|d| d.p_n());

    let mut u = x.coeffs().to_vec();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut report = SolveReport {
        steps: grid.steps(),
        ..SolveReport::default()
    };
    let monitor = |u: &[f64], report: &mut SolveReport, step: usize| {
        let h = u.iter().map(|c| c * c).sum::<f64>().sqrt();
        report.sup_norm_h = report.sup_norm_h.max(h);
        if let Some(p) = p_n {
            if step < grid.steps() {
                let g = SpectralField::from_raw(&basis, u.to_vec()).to_grid();
                let lp = g.norm_lp(p).unwrap_or(f64::NAN);
                report.lp_integral += dt * lp.powf(p);
                if drift.stiffness(g.max_abs()) * dt > 1.0 && !report.accuracy_warning {
                    report.accuracy_warning = true;
                    log::warn!(
                        "step {step}: |f'(max|u|)| dt = {:.3} exceeds 1; refine dt",
                        drift.stiffness(g.max_abs()) * dt
                    );
                }
            }
        }
    };
    monitor(&u, &mut report, 0);
    visit(0, &u);
    times.push(0.0);
    states.push(x.clone());

    for step in 0..grid.steps() {
        let nonlinear = drift.eval(&u);
        let phi = control.as_ref().map(|c| &c.control.values()[step / substeps]);
        for k in 0..u.len() {
            let mut forcing = nonlinear[k];
            if let (Some(phi), Some(c)) = (phi, &control) {
                forcing += c.weights.map_or(phi[k], |w| w[k] * phi[k]);
            }
            u[k] = factors[k].decay * u[k] + factors[k].gain * forcing;
        }
        if let Some(n) = noise.as_mut() {
            if !noise_scale.is_empty() {
                for (uk, s) in u.iter_mut().zip(&noise_scale) {
                    *uk += s * n.rng.normal();
                }
            }
        }
        let next = step + 1;
        if u.iter().any(|c| !c.is_finite()) {
            return Err(Error::BlowUp {
                step: next,
                time: grid.time(next),
            });
        }
        monitor(&u, &mut report, next);
        visit(next, &u);
        if grid.is_output(next) {
            times.push(grid.time(next));
            states.push(SpectralField::from_raw(&basis, u.clone()));
        }
    }
    Ok(Trajectory {
        times,
        states,
        report,
    })
}

/// Skeleton equation `u' = Au + F(u) + phi`, `u(0) = x`.
pub fn solve_skeleton(
    x: &SpectralField,
    phi: &Control,
    drift: &DriftOperator,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let control = ControlInput {
        control: phi,
        weights: None,
    };
    integrate(x, drift, grid, Some(control), None, |_, _| {})
}

/// Stochastic equation `du = (Au + F(u)) dt + sqrt(eps) dw^delta`.
pub fn solve_stochastic(
    x: &SpectralField,
    eps: f64,
    noise: &NoiseModel,
    drift: &DriftOperator,
    grid: &TimeGrid,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    let noise = NoiseInput { noise, eps, rng };
    integrate(x, drift, grid, None, Some(noise), |_, _| {})
}

/// Controlled equation `du = (Au + F(u) + Q_delta phi) dt + sqrt(eps) dw^delta`.
pub fn solve_controlled(
    x: &SpectralField,
    eps: f64,
    phi: &Control,
    noise: &NoiseModel,
    drift: &DriftOperator,
    grid: &TimeGrid,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    let q = noise.covariance_eigenvalues();
    let control = ControlInput {
        control: phi,
        weights: Some(&q),
    };
    let noise = NoiseInput { noise, eps, rng };
    integrate(x, drift, grid, Some(control), Some(noise), |_, _| {})
}

/// `Phi(phi)(t) = int_0^t e^{(t-s)A} phi(s) ds` on the control grid. The
/// exponential Euler step is exact for piecewise constant forcing.
pub fn convolution_map(phi: &Control) -> Result<Trajectory> {
    let basis = phi.basis();
    let grid = phi.grid();
    solve_skeleton(&SpectralField::zeros(basis), phi, &DriftOperator::disabled(basis), &grid)
}
