//! Divergence rates `Lambda_theta(delta)`, `Gamma_{theta,s}(delta)` and the
//! Monte Carlo moment scaling experiment for `z_{delta,theta}`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::levels::{MomentNorm, PathSampler, QuadraticFunctional, ShellCounts, Spectrum, TerminalSampler};
use super::rng::{purpose, RngStream, StreamId};
use crate::error::{Error, Result};
use crate::lab::parallel::Runner;
use crate::lab::stats::{linear_fit, LinearFit};

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::DeltaOutOfRange(delta))
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::ThetaOutOfRange(theta))
    }
}

/// `Lambda_theta(delta) = log(1/delta)` if `alpha = theta = 0` and `d = 2`,
/// otherwise `delta^-(d - 2(1 - theta) + alpha)`.
pub fn lambda_theta(delta: f64, theta: f64, d: usize, alpha: f64) -> Result<f64> {
    check_delta(delta)?;
    check_theta(theta)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", alpha));
    }
    if alpha == 0.0 && theta == 0.0 && d == 2 {
        return Ok(-delta.ln());
    }
    Ok(delta.powf(-(d as f64 - 2.0 * (1.0 - theta) + alpha)))
}

/// `Lambda(delta) = Lambda_0(delta)`.
pub fn lambda_rate(delta: f64, d: usize, alpha: f64) -> Result<f64> {
    lambda_theta(delta, 0.0, d, alpha)
}

/// `Gamma_{theta,s}(delta) = log(1/delta)` if `theta = s` and `d = 2`,
/// otherwise `delta^-(d - 2(1 - theta) - 2s)`.
pub fn gamma_theta_s(delta: f64, theta: f64, s: f64, d: usize) -> Result<f64> {
    check_delta(delta)?;
    check_theta(theta)?;
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::param("s", s));
    }
    if theta == s && d == 2 {
        return Ok(-delta.ln());
    }
    Ok(delta.powf(-(d as f64 - 2.0 * (1.0 - theta) - 2.0 * s)))
}

/// The weighted mode series behind `E|z_{delta,theta}|^2` converges as the
/// cutoff is removed iff `2 beta > d - 2(1 - theta) + alpha`.
pub fn series_converges(d: usize, theta: f64, alpha: f64, beta: f64) -> bool {
    2.0 * beta > d as f64 - 2.0 * (1.0 - theta) + alpha
}

/// Which supremum over the output times is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupMode {
    /// `sup_t E Y(t)`. Every mode variance is nondecreasing in `t`, so the
    /// supremum sits at the horizon and a single time is sampled.
    SupOfMean,
    /// `E sup_t Y(t)` over the output grid, from exact paths.
    MeanOfSup,
}

#[derive(Debug, Clone)]
pub struct ScalingConfig {
    pub spectrum: Spectrum,
    pub beta: f64,
    /// Strictly decreasing, inside `(0, 1)`.
    pub deltas: Vec<f64>,
    pub theta: f64,
    pub norm: MomentNorm,
    pub kappa: f64,
    pub horizon: f64,
    pub reps: usize,
    pub output_times: usize,
    pub sup_mode: SupMode,
    /// Levels drawn explicitly; the rest enter through their exact mean.
    pub sampled_levels: usize,
    /// Maximum accepted relative standard error.
    pub tolerance: Option<f64>,
    pub seed: u64,
}

impl ScalingConfig {
    pub fn new(spectrum: Spectrum, beta: f64, deltas: Vec<f64>) -> Self {
        Self {
            spectrum,
            beta,
            deltas,
            theta: 0.0,
            norm: MomentNorm::L2,
            kappa: 2.0,
            horizon: 1.0,
            reps: 1000,
            output_times: 64,
            sup_mode: SupMode::SupOfMean,
            sampled_levels: 32_768,
            tolerance: None,
            seed: 0,
        }
    }
}

pub const MIN_REPS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub delta: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub reps: usize,
    /// Exact `sup_t E Y(t)` for `kappa = 2`.
    pub exact: Option<f64>,
    pub levels: usize,
    pub modes: u64,
    pub sampled_levels: usize,
    /// Bound on the downward bias from the mean-replaced tail, `E sup_t` only.
    pub tail_bias_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// `log estimate` against `log delta`.
    pub power_fit: LinearFit,
    /// `estimate` against `log(1/delta)`.
    pub log_fit: LinearFit,
}

impl ScalingTable {
    pub fn csv(&self) -> String {
        let mut s = String::from("delta,estimate,stderr,reps,exact\n");
        for r in &self.rows {
            let exact = r.exact.map_or(String::new(), |e| format!("{e:.10e}"));
            let _ = writeln!(
                s,
                "{:.10e},{:.10e},{:.10e},{},{}",
                r.delta, r.estimate, r.stderr, r.reps, exact
            );
        }
        s
    }
}

pub fn moment_scaling_experiment(cfg: &ScalingConfig, runner: &Runner) -> Result<ScalingTable> {
    cfg.spectrum.validate()?;
    check_theta(cfg.theta)?;
    if cfg.reps < MIN_REPS {
        return Err(Error::InsufficientReplications {
            reps: cfg.reps,
            min: MIN_REPS,
        });
    }
    if cfg.deltas.len() < 2 {
        return Err(Error::Config("at least two delta values are required".into()));
    }
    for &d in &cfg.deltas {
        check_delta(d)?;
    }
    if cfg.deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("delta grid must be strictly decreasing".into()));
    }
    if !(cfg.kappa > 0.0 && cfg.kappa.is_finite()) {
        return Err(Error::param("kappa", cfg.kappa));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::param("T", cfg.horizon));
    }
    if let MomentNorm::Hneg(s) = cfg.norm {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::param("s", s));
        }
    }
    let d = cfg.spectrum.dim();
    let alpha = cfg.spectrum.growth_exponent();
    if !series_converges(d, cfg.theta, alpha, cfg.beta) {
        log::warn!(
            "2 beta = {} does not exceed d - 2(1 - theta) + alpha = {}; the mode series diverges \
             and estimates are dominated by the cutoff",
            2.0 * cfg.beta,
            d as f64 - 2.0 * (1.0 - cfg.theta) + alpha
        );
    }
    let shells = match &cfg.spectrum {
        Spectrum::Box { d, .. } => {
            let k = cfg.deltas.iter().map(|&x| cfg.spectrum.cutoff(x)).max().unwrap();
            Some(ShellCounts::new(*d, k))
        }
        _ => None,
    };

    let mut rows = Vec::with_capacity(cfg.deltas.len());
    for (block, &delta) in cfg.deltas.iter().enumerate() {
        let levels = cfg.spectrum.levels_with(delta, shells.as_ref());
        let f = QuadraticFunctional::new(&levels, cfg.norm, delta, cfg.beta, cfg.theta)?;
        let sampled = if cfg.kappa == 2.0 {
            cfg.sampled_levels
        } else {
            if cfg.sampled_levels < f.len() {
                log::warn!("kappa != 2: sampling all {} levels", f.len());
            }
            f.len()
        };
        let half = cfg.kappa / 2.0;
        let stream = |r: usize| {
            RngStream::new(cfg.seed, StreamId::new(r as u64, block as u8, purpose::NOISE_LEVELS))
        };
        let (samples, bias) = match cfg.sup_mode {
            SupMode::SupOfMean => {
                let s = TerminalSampler::new(&f, cfg.horizon, sampled)?;
                let v = runner.map(cfg.reps, |r| Ok(s.sample(&mut stream(r)).powf(half)))?;
                (v, 0.0)
            }
            SupMode::MeanOfSup => {
                let s = PathSampler::new(&f, cfg.horizon, cfg.output_times, sampled)?;
                let v = runner.map(cfg.reps, |r| {
                    let path = s.sample(&mut stream(r));
                    Ok(path.into_iter().fold(0.0f64, f64::max).powf(half))
                })?;
                (v, if sampled < f.len() { s.tail_bias_bound() } else { 0.0 })
            }
        };
        let (estimate, stderr) = crate::lab::stats::mean_and_stderr(&samples);
        if let Some(tol) = cfg.tolerance {
            if stderr > tol * estimate.abs() {
                return Err(Error::StandardErrorTooLarge {
                    delta,
                    stderr,
                    tolerance: tol * estimate.abs(),
                });
            }
        }
        let exact = (cfg.kappa == 2.0).then(|| f.mean(cfg.horizon)).transpose()?;
        rows.push(ScalingRow {
            delta,
            estimate,
            stderr,
            reps: cfg.reps,
            exact,
            levels: f.len(),
            modes: f.modes(),
            sampled_levels: sampled.min(f.len()),
            tail_bias_bound: bias,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.delta.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.estimate.ln()).collect();
    let inv: Vec<f64> = xs.iter().map(|x| -x).collect();
    let est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    Ok(ScalingTable {
        power_fit: linear_fit(&xs, &ys),
        log_fit: linear_fit(&inv, &est),
        rows,
    })
}
