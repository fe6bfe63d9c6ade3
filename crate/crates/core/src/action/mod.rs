//! Rate functional, control cost and instanton computation.
//!
//! The minimization runs over controls: with the skeleton state equation
//! `u' = Au + F(u) + Lambda phi` the cost of a path is `1/2 |phi|^2_{L2(0,T;H)}`.
//! `Lambda` is the identity for white forcing and `Q_delta^(1/2)` when the
//! problem carries a noise model, which turns the cost into the rate of the
//! correlated noise. Terminal targets are imposed softly through
//! `mu/2 |u(T) - y|_W^2`, with `mu` raised until the miss is within tolerance.

mod lbfgs;

pub use lbfgs::{LbfgsOptions, LbfgsOutcome};

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, Control, ControlInput, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::noise::{NoiseModel, OuFactors};
use crate::nonlinearity::DriftOperator;
use crate::spectral::{check_basis, SpectralField};

/// Norm in which terminal misses are measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TargetNorm {
    H,
    Hneg(f64),
    /// Distance in a single coordinate; the target set is a hyperplane.
    Mode(usize),
}

impl TargetNorm {
    pub fn validate(&self, modes: usize) -> Result<()> {
        match *self {
            TargetNorm::H => Ok(()),
            TargetNorm::Hneg(s) if s > 0.0 && s.is_finite() => Ok(()),
            TargetNorm::Hneg(s) => Err(Error::param("s", s)),
            TargetNorm::Mode(j) if j < modes => Ok(()),
            TargetNorm::Mode(j) => Err(Error::param("mode", j as f64)),
        }
    }

    fn weights(&self, eigenvalues: &[f64]) -> Vec<f64> {
        match self {
            TargetNorm::H => vec![1.0; eigenvalues.len()],
            TargetNorm::Hneg(s) => eigenvalues.iter().map(|a| a.powf(-s)).collect(),
            TargetNorm::Mode(j) => (0..eigenvalues.len()).map(|k| (k == *j) as u8 as f64).collect(),
        }
    }

    pub fn norm(&self, eigenvalues: &[f64], coeffs: &[f64]) -> f64 {
        match self {
            TargetNorm::H => coeffs.iter().map(|c| c * c).sum::<f64>().sqrt(),
            TargetNorm::Hneg(s) => crate::spectral::hneg_sq(coeffs, eigenvalues, *s).sqrt(),
            TargetNorm::Mode(j) => coeffs[*j].abs(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActionProblem {
    pub x: SpectralField,
    pub drift: DriftOperator,
    pub grid: TimeGrid,
    pub target: SpectralField,
    pub norm: TargetNorm,
    /// Accepted terminal miss `r`.
    pub radius: f64,
    pub mu: f64,
    /// `lambda_k(delta)` when the control enters as `Q_delta^(1/2) phi`.
    control_weights: Option<Vec<f64>>,
}

impl ActionProblem {
    pub fn new(
        x: SpectralField,
        drift: DriftOperator,
        grid: TimeGrid,
        target: SpectralField,
        radius: f64,
        mu: f64,
    ) -> Result<Self> {
        check_basis(x.basis(), drift.basis())?;
        check_basis(x.basis(), target.basis())?;
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::param("r", radius));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::param("mu", mu));
        }
        Ok(Self {
            x,
            drift,
            grid,
            target,
            norm: TargetNorm::H,
            radius,
            mu,
            control_weights: None,
        })
    }

    pub fn with_norm(mut self, norm: TargetNorm) -> Result<Self> {
        norm.validate(self.x.basis().len())?;
        self.norm = norm;
        Ok(self)
    }

    /// Controls act through `Q_delta^(1/2)` of this noise model.
    pub fn with_noise(mut self, noise: &NoiseModel) -> Result<Self> {
        check_basis(self.x.basis(), noise.basis())?;
        self.control_weights = Some(noise.amplitudes().to_vec());
        Ok(self)
    }

    pub fn control_weights(&self) -> Option<&[f64]> {
        self.control_weights.as_deref()
    }

    pub fn zero_control(&self) -> Control {
        Control::zeros(self.x.basis(), &self.grid)
    }

    /// Forward path on the solver grid, every step kept.
    pub fn forward(&self, phi: &Control) -> Result<Trajectory> {
        let input = ControlInput {
            control: phi,
            weights: self.control_weights.as_deref(),
        };
        integrate(&self.x, &self.drift, &self.grid, Some(input), None, |_, _| {})
    }

    pub fn terminal_miss(&self, end: &SpectralField) -> f64 {
        let diff: Vec<f64> = end
            .coeffs()
            .iter()
            .zip(self.target.coeffs())
            .map(|(a, b)| a - b)
            .collect();
        self.norm.norm(self.x.basis().eigenvalues(), &diff)
    }

    /// `J(phi) = 1/2 |phi|^2 + mu/2 |u(T) - y|_W^2`.
    pub fn objective(&self, phi: &Control) -> Result<f64> {
        let end = self.forward(phi)?;
        let miss = self.terminal_miss(end.last());
        Ok(control_cost(phi) + 0.5 * self.mu * miss * miss)
    }
}

/// `1/2 sum_j dt |phi_j|_H^2`.
pub fn control_cost(phi: &Control) -> f64 {
    0.5 * phi.l2_norm_sq()
}

/// Midpoint discretization of `1/2 int_0^T |u' - Au - F(u)|_H^2 dt`.
pub fn evaluate_action(u: &Trajectory, drift: &DriftOperator) -> Result<f64> {
    evaluate_action_weighted(u, drift, None)
}

/// As [`evaluate_action`], with the residual measured in the Cameron-Martin
/// norm `|Q^(-1/2) w|_H` when amplitudes are given.
pub fn evaluate_action_weighted(
    u: &Trajectory,
    drift: &DriftOperator,
    amplitudes: Option<&[f64]>,
) -> Result<f64> {
    if u.len() < 3 {
        return Err(Error::LengthMismatch {
            expected: 3,
            got: u.len(),
        });
    }
    let dt = u.uniform_dt()?;
    check_basis(u.basis(), drift.basis())?;
    let alpha = u.basis().eigenvalues();
    let mut total = 0.0;
    for w in u.states().windows(2) {
        let (a, b) = (w[0].coeffs(), w[1].coeffs());
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let n = drift.eval(&mid);
        let mut sq = 0.0;
        for k in 0..mid.len() {
            let mut r = (b[k] - a[k]) / dt + alpha[k] * mid[k] - n[k];
            if let Some(l) = amplitudes {
                r /= l[k];
            }
            sq += r * r;
        }
        total += sq;
    }
    Ok(0.5 * dt * total)
}

/// Objective value, `L2(0,T;H)` gradient and terminal state.
pub fn objective_and_gradient(
    problem: &ActionProblem,
    phi: &Control,
) -> Result<(f64, Control, SpectralField)> {
    let basis = problem.x.basis();
    check_basis(basis, phi.basis())?;
    let grid = &problem.grid;
    let substeps = phi.substeps(grid)?;
    let mut path: Vec<Vec<f64>> = Vec::with_capacity(grid.steps() + 1);
    let input = ControlInput {
        control: phi,
        weights: problem.control_weights.as_deref(),
    };
    integrate(&problem.x, &problem.drift, grid, Some(input), None, |_, u| {
        path.push(u.to_vec())
    })?;
    let end = path.last().expect("path").clone();
    let alpha = basis.eigenvalues();
    let w = problem.norm.weights(alpha);
    let miss: Vec<f64> = end
        .iter()
        .zip(problem.target.coeffs())
        .map(|(a, b)| a - b)
        .collect();
    let miss_sq: f64 = miss.iter().zip(&w).map(|(m, wk)| wk * m * m).sum();
    let value = control_cost(phi) + 0.5 * problem.mu * miss_sq;

    let factors: Vec<OuFactors> = alpha.iter().map(|&a| OuFactors::new(a, grid.dt())).collect();
    let mut p: Vec<f64> = miss
        .iter()
        .zip(&w)
        .map(|(m, wk)| problem.mu * wk * m)
        .collect();
    let mut acc = vec![vec![0.0; basis.len()]; phi.intervals()];
    if problem.mu > 0.0 {
        let mut gp = vec![0.0; p.len()];
        for i in (0..grid.steps()).rev() {
            for k in 0..p.len() {
                gp[k] = factors[k].gain * p[k];
            }
            let slot = &mut acc[i / substeps];
            match problem.control_weights.as_deref() {
                Some(l) => slot.iter_mut().zip(&gp).zip(l).for_each(|((a, g), l)| *a += l * g),
                None => slot.iter_mut().zip(&gp).for_each(|(a, g)| *a += g),
            }
            let jt = problem.drift.linearize(&path[i]).apply(&gp);
            for k in 0..p.len() {
                p[k] = factors[k].decay * p[k] + jt[k];
            }
        }
    }
    let inv = 1.0 / phi.dt();
    let values: Vec<Vec<f64>> = phi
        .values()
        .iter()
        .zip(&acc)
        .map(|(v, a)| v.iter().zip(a).map(|(x, y)| x + inv * y).collect())
        .collect();
    let grad = Control::new(basis, phi.dt(), values)?;
    Ok((value, grad, SpectralField::from_raw(basis, end)))
}

/// Gradient of `J` in `L2(0,T;H)` by the discrete adjoint of the forward
/// scheme.
pub fn adjoint_gradient(problem: &ActionProblem, phi: &Control) -> Result<Control> {
    Ok(objective_and_gradient(problem, phi)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerOptions {
    pub memory: usize,
    pub armijo: f64,
    /// Exit when `|g| <= rel_tol |g_0|` within a penalty stage.
    pub rel_tol: f64,
    /// Iteration budget per penalty stage.
    pub max_iter: usize,
    pub mu_factor: f64,
    pub max_stages: usize,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            armijo: 1e-4,
            rel_tol: 1e-6,
            max_iter: 500,
            mu_factor: 10.0,
            max_stages: 12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InstantonResult {
    pub control: Control,
    pub path: Trajectory,
    /// `I* = 1/2 |phi*|^2`.
    pub action_value: f64,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub terminal_miss: f64,
    pub mu: f64,
    pub stages: usize,
    /// Objective values at accepted iterates of the last stage.
    pub history: Vec<f64>,
}

#[derive(Serialize)]
pub struct InstantonSummary {
    pub action_value: f64,
    pub iterations: usize,
    pub terminal_miss: f64,
    pub gradient_norm: f64,
    pub mu: f64,
}

impl InstantonResult {
    pub fn summary(&self) -> InstantonSummary {
        InstantonSummary {
            action_value: self.action_value,
            iterations: self.iterations,
            terminal_miss: self.terminal_miss,
            gradient_norm: self.gradient_norm,
            mu: self.mu,
        }
    }
}

fn flatten(c: &Control) -> Vec<f64> {
    c.values().iter().flatten().copied().collect()
}

fn unflatten(template: &Control, flat: &[f64]) -> Result<Control> {
    let m = template.basis().len();
    Control::new(
        template.basis(),
        template.dt(),
        flat.chunks(m).map(|c| c.to_vec()).collect(),
    )
}

/// Minimizes `1/2 |phi|^2` subject to the terminal target, by L-BFGS on the
/// penalized objective with `mu` raised geometrically until the miss is at
/// most `r`.
pub fn minimize_action(
    problem: &ActionProblem,
    phi0: &Control,
    opts: &MinimizerOptions,
) -> Result<InstantonResult> {
    if opts.memory == 0 || opts.max_stages == 0 || opts.mu_factor.is_nan() || opts.mu_factor <= 1.0 {
        return Err(Error::Config("invalid minimizer options".into()));
    }
    let mut problem = problem.clone();
    let mut phi = phi0.clone();
    let mut total_iter = 0;
    let lopts = LbfgsOptions {
        memory: opts.memory,
        armijo: opts.armijo,
        rel_tol: opts.rel_tol,
        max_iter: opts.max_iter,
        inner_weight: phi0.dt(),
    };
    for stage in 1..=opts.max_stages {
        let template = phi.clone();
        let out = lbfgs::minimize(
            |flat| {
                let c = unflatten(&template, flat)?;
                let (v, g, _) = objective_and_gradient(&problem, &c)?;
                Ok((v, flatten(&g)))
            },
            flatten(&phi),
            &lopts,
        )?;
        total_iter += out.iterations;
        phi = unflatten(&template, &out.x)?;
        let path = problem.forward(&phi)?;
        let miss = problem.terminal_miss(path.last());
        let result = InstantonResult {
            action_value: control_cost(&phi),
            objective: out.value,
            gradient_norm: out.gradient_norm,
            iterations: total_iter,
            terminal_miss: miss,
            mu: problem.mu,
            stages: stage,
            history: out.history,
            control: phi.clone(),
            path,
        };
        if !out.converged {
            return Err(Error::NonConvergence {
                last: Box::new(result),
            });
        }
        if miss <= problem.radius {
            return Ok(result);
        }
        if stage == opts.max_stages || problem.mu == 0.0 {
            return Err(Error::NonConvergence {
                last: Box::new(result),
            });
        }
        problem.mu *= opts.mu_factor;
    }
    unreachable!("loop returns on the last stage")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::solve_skeleton;
    use crate::noise::NoiseParams;
    use crate::nonlinearity::PolynomialDrift;
    use crate::spectral::build_basis;
    use std::f64::consts::PI;

    #[test]
    fn control_cost_examples() {
        let b = build_basis(1, PI, 4).unwrap();
        let g = TimeGrid::new(1.0, 0.01).unwrap();
        assert_eq!(control_cost(&Control::zeros(&b, &g)), 0.0);
        let e1 = Control::constant(&SpectralField::unit(&b, 0), &g);
        assert!((control_cost(&e1) - 0.5).abs() < 1e-12);
        assert!((control_cost(&e1.scaled(3.0)) - 9.0 * control_cost(&e1)).abs() < 1e-12);
    }

    #[test]
    fn stationary_path_action() {
        let b = build_basis(1, PI, 4).unwrap();
        let x = SpectralField::new(&b, vec![0.5, 0.2, 0.0, -0.1]).unwrap();
        let drift = DriftOperator::new(&b, PolynomialDrift::new(1, 0.3, 0.1).unwrap(), true).unwrap();
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let u = Trajectory::new(times, vec![x.clone(); 11]).unwrap();
        let n = drift.eval(x.coeffs());
        let r2: f64 = x
            .coeffs()
            .iter()
            .zip(b.eigenvalues())
            .zip(&n)
            .map(|((c, a), f)| (-a * c + f).powi(2))
            .sum();
        let i = evaluate_action(&u, &drift).unwrap();
        assert!((i - 0.5 * 1.0 * r2).abs() < 1e-12 * i);
    }

    #[test]
    fn action_rejects_nonuniform_grid() {
        let b = build_basis(1, PI, 2).unwrap();
        let z = SpectralField::zeros(&b);
        let u = Trajectory::new(vec![0.0, 0.1, 0.3], vec![z.clone(), z.clone(), z]).unwrap();
        assert!(matches!(evaluate_action(&u, &DriftOperator::disabled(&b)), Err(Error::NonUniformGrid)));
    }

    #[test]
    fn free_path_has_small_action() {
        let b = build_basis(1, PI, 8).unwrap();
        let x = SpectralField::unit(&b, 0);
        let drift = DriftOperator::new(&b, PolynomialDrift::new(1, 0.5, 0.0).unwrap(), true).unwrap();
        let mut prev = f64::INFINITY;
        for dt in [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0] {
            let g = TimeGrid::new(1.0, dt).unwrap();
            let u = solve_skeleton(&x, &Control::zeros(&b, &g), &drift, &g).unwrap();
            let i = evaluate_action(&u, &drift).unwrap();
            assert!(i < prev / 3.0, "{i} vs {prev}");
            prev = i;
        }
    }

    fn lq_problem(mu: f64, delta: f64) -> (ActionProblem, f64, f64) {
        let b = build_basis(1, PI, 2).unwrap();
        let g = TimeGrid::new(1.0, 0.01).unwrap();
        let noise = NoiseModel::new(&b, NoiseParams::new(delta, 1.0).unwrap()).unwrap();
        let target = SpectralField::unit(&b, 0);
        let p = ActionProblem::new(SpectralField::zeros(&b), DriftOperator::disabled(&b), g, target, 1e-4, mu)
            .unwrap()
            .with_noise(&noise)
            .unwrap();
        (p, noise.amplitudes()[0], g.dt())
    }

    #[test]
    fn mu_zero_gradient_is_control() {
        let (p, _, _) = lq_problem(0.0, 0.3);
        let phi = Control::from_fn(p.x.basis(), &p.grid, |t| vec![t.sin(), 1.0 - t]).unwrap();
        assert_eq!(adjoint_gradient(&p, &phi).unwrap(), phi);
    }

    #[test]
    fn lq_gradient_matches_closed_form() {
        // u_N = sum_j a_j phi_j with a_j = lambda G E^(N-1-j); J = 1/2 dt |phi|^2 + mu/2 (u_N - 1)^2
        // gradient_j = phi_j + mu (u_N - 1) a_j / dt
        let (p, lambda, dt) = lq_problem(2.0, 0.3);
        let phi = Control::from_fn(p.x.basis(), &p.grid, |t| vec![t.cos(), 0.0]).unwrap();
        let f = OuFactors::new(1.0, dt);
        let n = p.grid.steps();
        let a: Vec<f64> = (0..n).map(|j| lambda * f.gain * f.decay.powi((n - 1 - j) as i32)).collect();
        let un: f64 = a.iter().zip(phi.values()).map(|(a, v)| a * v[0]).sum();
        let g = adjoint_gradient(&p, &phi).unwrap();
        for ((gj, vj), aj) in g.values().iter().zip(phi.values()).zip(&a) {
            let expect = vj[0] + 2.0 * (un - 1.0) * aj / dt;
            assert!((gj[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn reachable_free_endpoint_costs_nothing() {
        let b = build_basis(1, PI, 4).unwrap();
        let g = TimeGrid::new(0.5, 0.01).unwrap();
        let x = SpectralField::new(&b, vec![0.3, -0.2, 0.1, 0.0]).unwrap();
        let drift = DriftOperator::new(&b, PolynomialDrift::new(1, 1.0, 0.0).unwrap(), true).unwrap();
        let free = solve_skeleton(&x, &Control::zeros(&b, &g), &drift, &g).unwrap();
        let p = ActionProblem::new(x, drift, g, free.last().clone(), 0.0, 1.0).unwrap();
        let r = minimize_action(&p, &p.zero_control(), &MinimizerOptions::default()).unwrap();
        assert_eq!(r.action_value, 0.0);
        assert_eq!(r.iterations, 0);
        assert!(r.control.values().iter().flatten().all(|&c| c == 0.0));
    }

    #[test]
    fn lq_instanton_matches_discrete_oracle() {
        let (p, lambda, dt) = lq_problem(1.0, 0.3);
        let r = minimize_action(&p, &p.zero_control(), &MinimizerOptions::default()).unwrap();
        let f = OuFactors::new(1.0, dt);
        let n = p.grid.steps();
        let a2: f64 = (0..n).map(|j| (lambda * f.gain * f.decay.powi((n - 1 - j) as i32)).powi(2)).sum();
        let oracle = 0.5 * dt / a2;
        assert!((r.action_value / oracle - 1.0).abs() < 1e-3, "{} vs {oracle}", r.action_value);
        let exact = 1.0 / (lambda * lambda * (1.0 - (-2.0f64).exp()));
        assert!((oracle / exact - 1.0).abs() < 1e-3);
        assert!(r.terminal_miss <= 1e-4);
    }

    #[test]
    fn non_convergence_is_reported() {
        let (p, _, _) = lq_problem(1.0, 0.3);
        let opts = MinimizerOptions {
            max_stages: 1,
            ..MinimizerOptions::default()
        };
        match minimize_action(&p, &p.zero_control(), &opts) {
            Err(Error::NonConvergence { last }) => assert!(last.terminal_miss > 1e-4),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
