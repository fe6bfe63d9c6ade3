//! Rare events and plain Monte Carlo probability estimates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::parallel::Runner;
use super::regime::ScalingFamily;
use super::stats::{wilson_interval, Z95};
use crate::action::TargetNorm;
use crate::dynamics::{solve_skeleton, solve_stochastic, Control, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::noise::rng::{purpose, RngStream, StreamId};
use crate::noise::{NoiseModel, NoiseParams};
use crate::nonlinearity::DriftOperator;
use crate::spectral::{check_basis, SpectralBasis, SpectralField};

pub const MIN_EVENT_REPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// `|u(T) - y|_W <= r`.
    TerminalBall { target: Vec<f64>, radius: f64 },
    /// `max_i |u(t_i) - u0(t_i)|_W > r` over the output times, with `u0` the
    /// noise-free path.
    PathExceedance { level: f64 },
    /// `<u(T), e_mode> >= level`.
    TerminalProjection { mode: usize, level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub norm: TargetNorm,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl EventSpec {
    pub fn terminal_ball(norm: TargetNorm, target: Vec<f64>, radius: f64) -> Self {
        Self {
            norm,
            kind: EventKind::TerminalBall { target, radius },
        }
    }

    pub fn path_exceedance(norm: TargetNorm, level: f64) -> Self {
        Self {
            norm,
            kind: EventKind::PathExceedance { level },
        }
    }

    pub fn terminal_projection(mode: usize, level: f64) -> Self {
        Self {
            norm: TargetNorm::Mode(mode),
            kind: EventKind::TerminalProjection { mode, level },
        }
    }

    pub fn validate(&self, basis: &SpectralBasis) -> Result<()> {
        self.norm.validate(basis.len())?;
        match &self.kind {
            EventKind::TerminalBall { target, radius } => {
                if target.len() > basis.len() {
                    return Err(Error::LengthMismatch {
                        expected: basis.len(),
                        got: target.len(),
                    });
                }
                positive_radius(*radius)
            }
            EventKind::PathExceedance { level } => positive_radius(*level),
            EventKind::TerminalProjection { mode, level } => {
                if *mode >= basis.len() {
                    return Err(Error::param("mode", *mode as f64));
                }
                if !level.is_finite() {
                    return Err(Error::NonFinite("event level"));
                }
                Ok(())
            }
        }
    }

    /// Target coefficients zero-padded to the basis.
    pub fn target_field(&self, basis: &Arc<SpectralBasis>) -> Result<Option<SpectralField>> {
        let mut c = vec![0.0; basis.len()];
        match &self.kind {
            EventKind::TerminalBall { target, .. } => c[..target.len()].copy_from_slice(target),
            EventKind::TerminalProjection { mode, level } => c[*mode] = *level,
            EventKind::PathExceedance { .. } => return Ok(None),
        }
        SpectralField::new(basis, c).map(Some)
    }

    /// Whether `u` realizes the event; `reference` is the noise-free path.
    pub fn occurs(&self, u: &Trajectory, reference: &Trajectory) -> bool {
        let eigs = u.basis().eigenvalues();
        let dist = |a: &SpectralField, b: &[f64]| {
            let d: Vec<f64> = a.coeffs().iter().zip(b).map(|(x, y)| x - y).collect();
            self.norm.norm(eigs, &d)
        };
        match &self.kind {
            EventKind::TerminalBall { target, radius } => {
                let mut y = vec![0.0; eigs.len()];
                y[..target.len()].copy_from_slice(target);
                dist(u.last(), &y) <= *radius
            }
            EventKind::PathExceedance { level } => u
                .states()
                .iter()
                .zip(reference.states())
                .any(|(a, b)| dist(a, b.coeffs()) > *level),
            EventKind::TerminalProjection { mode, level } => u.last().coeffs()[*mode] >= *level,
        }
    }
}

fn positive_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::DegenerateEvent(r))
    }
}

/// Everything except the noise intensity: basis, drift, `beta`, time grid
/// and initial state.
#[derive(Debug, Clone)]
pub struct Model {
    pub drift: DriftOperator,
    pub beta: f64,
    pub grid: TimeGrid,
    pub x: SpectralField,
}

impl Model {
    pub fn new(drift: DriftOperator, beta: f64, grid: TimeGrid, x: SpectralField) -> Result<Self> {
        check_basis(drift.basis(), x.basis())?;
        NoiseParams::new(0.5, beta)?;
        Ok(Self {
            drift,
            beta,
            grid,
            x,
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        self.x.basis()
    }

    pub fn noise(&self, delta: f64) -> Result<NoiseModel> {
        NoiseModel::new(self.basis(), NoiseParams::new(delta, self.beta)?)
    }

    pub fn noise_free_path(&self) -> Result<Trajectory> {
        solve_skeleton(&self.x, &Control::zeros(self.basis(), &self.grid), &self.drift, &self.grid)
    }

    fn check_family(&self, family: &ScalingFamily) -> Result<()> {
        family.validate()?;
        if family.d != self.basis().dim() {
            return Err(Error::Config(format!(
                "family dimension {} does not match basis dimension {}",
                family.d,
                self.basis().dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub eps: f64,
    pub delta: f64,
    pub hits: usize,
    pub reps: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// No hits: only the upper confidence bound is informative.
    pub censored: bool,
}

/// Plain Monte Carlo over `reps` independent solutions of the stochastic
/// equation with `delta = delta(eps)`. Replica `i` uses stream `(i, block)`.
pub fn estimate_probability(
    event: &EventSpec,
    eps: f64,
    family: &ScalingFamily,
    model: &Model,
    reps: usize,
    seed: u64,
    runner: &Runner,
) -> Result<ProbabilityEstimate> {
    estimate_probability_block(event, eps, family, model, reps, seed, 0, runner)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn estimate_probability_block(
    event: &EventSpec,
    eps: f64,
    family: &ScalingFamily,
    model: &Model,
    reps: usize,
    seed: u64,
    block: u8,
    runner: &Runner,
) -> Result<ProbabilityEstimate> {
    event.validate(model.basis())?;
    model.check_family(family)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", eps));
    }
    if reps < MIN_EVENT_REPS {
        return Err(Error::InsufficientReplications {
            reps,
            min: MIN_EVENT_REPS,
        });
    }
    let delta = family.delta(eps);
    let noise = model.noise(delta)?;
    let reference = model.noise_free_path()?;
    let outcomes = runner.map(reps, |i| {
        let mut rng = RngStream::new(seed, StreamId::new(i as u64, block, purpose::SIMULATION));
        let u = solve_stochastic(&model.x, eps, &noise, &model.drift, &model.grid, &mut rng)?;
        Ok(event.occurs(&u, &reference))
    })?;
    let hits = outcomes.iter().filter(|&&h| h).count();
    let p_hat = hits as f64 / reps as f64;
    let (ci_low, ci_high) = wilson_interval(hits, reps, Z95);
    if !(1e-4..0.5).contains(&p_hat) {
        log::warn!("eps = {eps}: p = {p_hat} outside (1e-4, 0.5); the estimate is not informative at {reps} replicas");
    }
    Ok(ProbabilityEstimate {
        eps,
        delta,
        hits,
        reps,
        p_hat,
        ci_low,
        ci_high,
        censored: hits == 0,
    })
}
