//! Empirical `-eps log p` against the minimized action.

use serde::{Deserialize, Serialize};

use super::events::{estimate_probability_block, EventKind, EventSpec, Model};
use super::parallel::Runner;
use super::regime::{classify_regime, Regime, ScalingFamily};
use super::stats::linear_fit;
use crate::action::{minimize_action, ActionProblem, MinimizerOptions};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    pub minimizer: MinimizerOptions,
    pub mu0: f64,
    /// Terminal miss accepted by the instanton, relative to the event scale.
    pub miss_tolerance: f64,
    pub instanton: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            minimizer: MinimizerOptions::default(),
            mu0: 1.0,
            miss_tolerance: 1e-4,
            instanton: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpRow {
    pub eps: f64,
    pub delta: f64,
    pub hits: usize,
    pub reps: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub censored: bool,
    /// `-eps log p_hat`; absent when censored.
    pub rate: Option<f64>,
    /// Minimized action `I*` for the event at this `delta`.
    pub action: Option<f64>,
    /// `|rate - I*| / I*`.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpCurve {
    pub rows: Vec<LdpRow>,
    /// Slope of the relative gap against `eps` over uncensored rows.
    pub trend_slope: Option<f64>,
    pub regime: Regime,
}

impl LdpCurve {
    pub fn csv(&self) -> String {
        let mut s = String::from("eps,delta,hits,reps,p_hat,ci_low,ci_high,censored,rate,action,gap\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10e}"));
        for r in &self.rows {
            s.push_str(&format!(
                "{:.10e},{:.10e},{},{},{:.10e},{:.10e},{:.10e},{},{},{},{}\n",
                r.eps,
                r.delta,
                r.hits,
                r.reps,
                r.p_hat,
                r.ci_low,
                r.ci_high,
                r.censored,
                opt(r.rate),
                opt(r.action),
                opt(r.gap)
            ));
        }
        s
    }

    /// Smallest `eps` with at least one hit.
    pub fn smallest_feasible(&self) -> Option<&LdpRow> {
        self.rows.iter().rev().find(|r| !r.censored)
    }
}

/// Instanton problem for `event` with controls entering through `noise`.
/// Path exceedance has no terminal formulation and yields `None`.
pub fn event_problem(
    event: &EventSpec,
    model: &Model,
    noise: &NoiseModel,
    mu0: f64,
    miss_tolerance: f64,
) -> Result<Option<ActionProblem>> {
    event.validate(model.basis())?;
    let Some(target) = event.target_field(model.basis())? else {
        return Ok(None);
    };
    let radius = match &event.kind {
        EventKind::TerminalBall { radius, .. } => *radius,
        EventKind::TerminalProjection { level, .. } => miss_tolerance * level.abs().max(1e-12),
        EventKind::PathExceedance { .. } => unreachable!(),
    };
    let p = ActionProblem::new(model.x.clone(), model.drift.clone(), model.grid, target, radius, mu0)?
        .with_norm(event.norm)?
        .with_noise(noise)?;
    Ok(Some(p))
}

#[allow(clippy::too_many_arguments)]
pub fn ldp_curve(
    event: &EventSpec,
    eps_grid: &[f64],
    family: &ScalingFamily,
    model: &Model,
    reps: usize,
    seed: u64,
    runner: &Runner,
    opts: &CurveOptions,
) -> Result<LdpCurve> {
    if eps_grid.is_empty() || eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("eps grid must be nonempty and strictly decreasing".into()));
    }
    if eps_grid.len() > u8::MAX as usize + 1 {
        return Err(Error::Config("at most 256 eps values".into()));
    }
    let regime = classify_regime(family, None);
    if !regime.holds_rd46 {
        log::warn!("family {family:?} violates eps Lambda(delta(eps)) -> 0; no convergence to I* is expected");
    }
    let mut rows = Vec::with_capacity(eps_grid.len());
    for (i, &eps) in eps_grid.iter().enumerate() {
        let est = estimate_probability_block(event, eps, family, model, reps, seed, i as u8, runner)?;
        let action = if opts.instanton {
            let noise = model.noise(est.delta)?;
            match event_problem(event, model, &noise, opts.mu0, opts.miss_tolerance)? {
                Some(p) => Some(minimize_action(&p, &p.zero_control(), &opts.minimizer)?.action_value),
                None => None,
            }
        } else {
            None
        };
        let rate = (!est.censored).then(|| -eps * est.p_hat.ln());
        let gap = match (rate, action) {
            (Some(r), Some(a)) if a > 0.0 => Some((r - a).abs() / a),
            _ => None,
        };
        rows.push(LdpRow {
            eps,
            delta: est.delta,
            hits: est.hits,
            reps: est.reps,
            p_hat: est.p_hat,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            censored: est.censored,
            rate,
            action,
            gap,
        });
    }
    let censored = rows.iter().filter(|r| r.censored).count();
    if censored > 0 {
        log::warn!("{censored} censored point(s) excluded from the trend");
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| r.gap.map(|g| (r.eps, g))).unzip();
    let trend_slope = (xs.len() >= 2).then(|| linear_fit(&xs, &ys).slope);
    Ok(LdpCurve {
        rows,
        trend_slope,
        regime,
    })
}
