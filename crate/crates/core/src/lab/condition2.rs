//! Convergence of controlled stochastic solutions to the skeleton path.
//!
//! For a control schedule `phi_eps -> phi` (weakly in `L2(0,T;H)`) inside the
//! cost ball `A_T^gamma`, estimates `E sup_t |u_eps^{x,phi_eps}(t) - u^{x,phi}(t)|`
//! along an `eps` grid, where `u_eps` solves
//! `du = (Au + F(u) + Q_delta phi_eps) dt + sqrt(eps) dw^delta` with
//! `delta = delta(eps)` and `u^{x,phi}` is the skeleton path.

use serde::{Deserialize, Serialize};

use super::events::Model;
use super::parallel::Runner;
use super::regime::{classify_regime, ScalingFamily};
use super::stats::{kendall_tau, mean_and_stderr};
use crate::action::{control_cost, TargetNorm};
use crate::dynamics::{solve_controlled, solve_skeleton, Control};
use crate::error::{Error, Result};
use crate::noise::rng::{purpose, RngStream, StreamId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    None,
    /// `phi + amplitude sin(t / eps) e_mode`; converges weakly, not strongly.
    Oscillatory { amplitude: f64, mode: usize },
    /// `phi + amplitude eps^rate e_mode`.
    Vanishing { amplitude: f64, mode: usize, rate: f64 },
}

impl Perturbation {
    pub fn apply(&self, phi: &Control, eps: f64) -> Result<Control> {
        let (amplitude, mode) = match *self {
            Perturbation::None => return Ok(phi.clone()),
            Perturbation::Oscillatory { amplitude, mode } | Perturbation::Vanishing { amplitude, mode, .. } => {
                (amplitude, mode)
            }
        };
        if mode >= phi.basis().len() {
            return Err(Error::param("mode", mode as f64));
        }
        if !amplitude.is_finite() {
            return Err(Error::NonFinite("perturbation amplitude"));
        }
        let mut out = phi.clone();
        let dt = phi.dt();
        for (j, v) in out.values_mut().iter_mut().enumerate() {
            v[mode] += match *self {
                Perturbation::Oscillatory { .. } => amplitude * (j as f64 * dt / eps).sin(),
                Perturbation::Vanishing { rate, .. } => amplitude * eps.powf(rate),
                Perturbation::None => 0.0,
            };
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Condition2Spec {
    pub phi: Control,
    pub schedule: Perturbation,
    /// Strictly decreasing.
    pub eps_grid: Vec<f64>,
    pub norm: TargetNorm,
    /// `gamma` in `A_T^gamma`, a bound on `1/2 |phi_eps|^2`.
    pub budget: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition2Row {
    pub eps: f64,
    pub delta: f64,
    pub gap: f64,
    pub stderr: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition2Table {
    pub rows: Vec<Condition2Row>,
    /// Kendall tau between grid position (decreasing `eps`) and gap; `-1`
    /// for a gap that shrinks at every refinement.
    pub kendall_tau: f64,
    pub holds_rd46: bool,
}

impl Condition2Table {
    pub fn csv(&self) -> String {
        let mut s = String::from("eps,delta,gap,stderr,cost\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                r.eps, r.delta, r.gap, r.stderr, r.cost
            ));
        }
        s
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].gap < w[0].gap)
    }
}

pub fn condition2_experiment(
    spec: &Condition2Spec,
    family: &ScalingFamily,
    model: &Model,
    seed: u64,
    runner: &Runner,
) -> Result<Condition2Table> {
    family.validate()?;
    spec.norm.validate(model.basis().len())?;
    let eps_grid = &spec.eps_grid;
    if eps_grid.is_empty() || eps_grid.windows(2).any(|w| w[1] >= w[0]) || eps_grid[0] <= 0.0 {
        return Err(Error::Config("eps grid must be positive and strictly decreasing".into()));
    }
    if eps_grid.len() > u8::MAX as usize + 1 {
        return Err(Error::Config("at most 256 eps values".into()));
    }
    if spec.reps < 2 {
        return Err(Error::InsufficientReplications { reps: spec.reps, min: 2 });
    }
    let eigs = model.basis().eigenvalues();
    let limit = solve_skeleton(&model.x, &spec.phi, &model.drift, &model.grid)?;
    let mut rows = Vec::with_capacity(eps_grid.len());
    for (i, &eps) in eps_grid.iter().enumerate() {
        let phi_eps = spec.schedule.apply(&spec.phi, eps)?;
        let cost = control_cost(&phi_eps);
        if cost > spec.budget {
            return Err(Error::CostClamp {
                cost,
                budget: spec.budget,
            });
        }
        let delta = family.delta(eps);
        let noise = model.noise(delta)?;
        let gaps = runner.map(spec.reps, |r| {
            let mut rng = RngStream::new(seed, StreamId::new(r as u64, i as u8, purpose::SIMULATION));
            let u = solve_controlled(&model.x, eps, &phi_eps, &noise, &model.drift, &model.grid, &mut rng)?;
            u.sup_distance(&limit, |d| spec.norm.norm(eigs, d))
        })?;
        let (gap, stderr) = mean_and_stderr(&gaps);
        rows.push(Condition2Row {
            eps,
            delta,
            gap,
            stderr,
            cost,
        });
    }
    let position: Vec<f64> = (0..rows.len()).map(|i| i as f64).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    Ok(Condition2Table {
        kendall_tau: kendall_tau(&position, &gaps),
        holds_rd46: classify_regime(family, None).holds_rd46,
        rows,
    })
}
