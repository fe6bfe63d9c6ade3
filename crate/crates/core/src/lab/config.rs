//! TOML configuration with sections `domain`, `drift`, `noise`, `solver` and
//! `experiment`. Every key has a default, so an empty file describes the
//! desk-scale setup: `d = 1`, `L = pi`, `M = 32`, `T = 1`, `dt = 1/256`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::condition2::{Condition2Spec, Perturbation};
use super::events::{EventSpec, Model};
use super::regime::ScalingFamily;
use crate::action::{ActionProblem, MinimizerOptions, TargetNorm};
use crate::dynamics::{Control, TimeGrid};
use crate::error::{Error, Result};
use crate::noise::levels::{MomentNorm, Resolution, Spectrum};
use crate::noise::scaling::{ScalingConfig, SupMode};
use crate::noise::{NoiseModel, NoiseParams};
use crate::nonlinearity::{DriftOperator, PolynomialDrift};
use crate::spectral::{BasisSpec, SpectralBasis, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    #[serde(default = "default_domain")]
    pub domain: BasisSpec,
    pub drift: DriftConfig,
    pub noise: NoiseConfig,
    pub solver: SolverConfig,
    pub experiment: ExperimentConfig,
}

fn default_domain() -> BasisSpec {
    BasisSpec {
        d: 1,
        length: PI,
        modes_per_dim: 32,
    }
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            domain: default_domain(),
            drift: DriftConfig::default(),
            noise: NoiseConfig::default(),
            solver: SolverConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    /// `false` drops `F` entirely, leaving the linear equation.
    pub enabled: bool,
    pub n: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub truncation_N: Option<f64>,
    pub dealias: bool,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n: 1,
            lambda1: 1.0,
            lambda2: 0.0,
            truncation_N: None,
            dealias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub enabled: bool,
    pub alpha_exponent: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            alpha_exponent: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Fixed `delta` for single runs; experiments use `delta = eps^a`.
    pub delta: f64,
    pub beta: f64,
    pub synthetic: SyntheticConfig,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            beta: 1.0,
            synthetic: SyntheticConfig::default(),
            seed: 0,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub T: f64,
    pub dt: f64,
    pub output_stride: usize,
    /// Overrides `drift.truncation_N` when set.
    pub truncation: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            T: 1.0,
            dt: 1.0 / 256.0,
            output_stride: 1,
            truncation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstantonConfig {
    /// Target coefficients, zero-padded.
    pub target: Vec<f64>,
    pub norm: TargetNorm,
    pub radius: f64,
    pub mu0: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Controls enter through `Q_delta^(1/2)` at `noise.delta`.
    pub noise_weighted: bool,
}

impl Default for InstantonConfig {
    fn default() -> Self {
        Self {
            target: vec![1.0],
            norm: TargetNorm::H,
            radius: 1e-3,
            mu0: 1.0,
            tol: 1e-6,
            max_iter: 500,
            noise_weighted: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    pub deltas: Vec<f64>,
    pub theta: f64,
    pub norm: MomentNorm,
    pub kappa: f64,
    pub reps: usize,
    pub output_times: usize,
    pub sup_mode: SupMode,
    pub sampled_levels: usize,
    pub tolerance: Option<f64>,
    /// Cutoff resolution: radius `max(floor, ceil(factor L / (pi delta)))`.
    pub factor: f64,
    pub floor: usize,
}

impl Default for ScalingSection {
    fn default() -> Self {
        let r = Resolution::default();
        Self {
            deltas: (3..=8).map(|j| 0.5f64.powi(j)).collect(),
            theta: 0.0,
            norm: MomentNorm::L2,
            kappa: 2.0,
            reps: 1000,
            output_times: 64,
            sup_mode: SupMode::SupOfMean,
            sampled_levels: 32_768,
            tolerance: None,
            factor: r.factor,
            floor: r.floor,
        }
    }
}

/// `phi(t) = amplitude sin(pi t / T) e_mode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Condition2Section {
    pub amplitude: f64,
    pub mode: usize,
    pub perturbation: Perturbation,
    pub norm: TargetNorm,
    pub budget: f64,
    pub reps: usize,
}

impl Default for Condition2Section {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            mode: 0,
            perturbation: Perturbation::None,
            norm: TargetNorm::Hneg(0.5),
            budget: 10.0,
            reps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub eps: f64,
    pub eps_grid: Vec<f64>,
    /// `delta(eps) = eps^a`.
    pub a: f64,
    /// Eigenfunction growth exponent of the family.
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub reps: usize,
    /// Initial coefficients, zero-padded.
    pub initial: Vec<f64>,
    /// Order of the negative norm reported for trajectories.
    pub s: f64,
    pub event: EventSpec,
    pub instanton: InstantonConfig,
    pub scaling: ScalingSection,
    pub condition2: Condition2Section,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            eps_grid: vec![0.2, 0.1, 0.05],
            a: 0.5,
            alpha: 0.0,
            gamma: None,
            reps: 1000,
            initial: Vec::new(),
            s: 0.5,
            event: EventSpec::terminal_projection(0, 1.0),
            instanton: InstantonConfig::default(),
            scaling: ScalingSection::default(),
            condition2: Condition2Section::default(),
        }
    }
}

fn padded(basis: &Arc<SpectralBasis>, values: &[f64], what: &str) -> Result<SpectralField> {
    if values.len() > basis.len() {
        return Err(Error::Config(format!(
            "{what} has {} coefficients, basis has {}",
            values.len(),
            basis.len()
        )));
    }
    let mut c = vec![0.0; basis.len()];
    c[..values.len()].copy_from_slice(values);
    SpectralField::new(basis, c)
}

impl LabConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let basis = self.basis()?;
        self.drift_operator(&basis)?;
        self.grid()?;
        NoiseParams::new(self.noise.delta, self.noise.beta)?;
        self.family()?;
        self.initial_state(&basis)?;
        self.experiment.event.validate(&basis)?;
        self.experiment.instanton.norm.validate(basis.len())?;
        self.experiment.condition2.norm.validate(basis.len())?;
        if !(self.experiment.eps > 0.0 && self.experiment.eps.is_finite()) {
            return Err(Error::param("eps", self.experiment.eps));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<Arc<SpectralBasis>> {
        SpectralBasis::from_spec(self.domain)
    }

    pub fn polynomial_drift(&self) -> Result<PolynomialDrift> {
        let d = &self.drift;
        let p = PolynomialDrift::new(d.n, d.lambda1, d.lambda2)?;
        match self.solver.truncation.or(d.truncation_N) {
            Some(level) => p.with_truncation(level),
            None => Ok(p),
        }
    }

    pub fn drift_operator(&self, basis: &Arc<SpectralBasis>) -> Result<DriftOperator> {
        if !self.drift.enabled {
            return Ok(DriftOperator::disabled(basis));
        }
        DriftOperator::new(basis, self.polynomial_drift()?, self.drift.dealias)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.solver.T, self.solver.dt)?.with_stride(self.solver.output_stride)
    }

    pub fn initial_state(&self, basis: &Arc<SpectralBasis>) -> Result<SpectralField> {
        padded(basis, &self.experiment.initial, "experiment.initial")
    }

    pub fn noise_model(&self, basis: &Arc<SpectralBasis>) -> Result<NoiseModel> {
        NoiseModel::new(basis, NoiseParams::new(self.noise.delta, self.noise.beta)?)
    }

    pub fn model(&self) -> Result<Model> {
        let basis = self.basis()?;
        Model::new(
            self.drift_operator(&basis)?,
            self.noise.beta,
            self.grid()?,
            self.initial_state(&basis)?,
        )
    }

    pub fn family(&self) -> Result<ScalingFamily> {
        ScalingFamily::new(self.experiment.a, self.domain.d, self.experiment.alpha)
    }

    pub fn minimizer_options(&self) -> MinimizerOptions {
        MinimizerOptions {
            rel_tol: self.experiment.instanton.tol,
            max_iter: self.experiment.instanton.max_iter,
            ..MinimizerOptions::default()
        }
    }

    pub fn action_problem(&self) -> Result<ActionProblem> {
        let basis = self.basis()?;
        let ic = &self.experiment.instanton;
        let p = ActionProblem::new(
            self.initial_state(&basis)?,
            self.drift_operator(&basis)?,
            self.grid()?,
            padded(&basis, &ic.target, "experiment.instanton.target")?,
            ic.radius,
            ic.mu0,
        )?
        .with_norm(ic.norm)?;
        if ic.noise_weighted {
            p.with_noise(&self.noise_model(&basis)?)
        } else {
            Ok(p)
        }
    }

    pub fn scaling_config(&self, seed: u64) -> Result<ScalingConfig> {
        let s = &self.experiment.scaling;
        let resolution = Resolution {
            factor: s.factor,
            floor: s.floor,
        };
        let spectrum = if self.noise.synthetic.enabled {
            Spectrum::Synthetic {
                d: self.domain.d,
                alpha_exponent: self.noise.synthetic.alpha_exponent,
                resolution,
            }
        } else {
            Spectrum::Box {
                d: self.domain.d,
                length: self.domain.length,
                resolution,
            }
        };
        let mut c = ScalingConfig::new(spectrum, self.noise.beta, s.deltas.clone());
        c.theta = s.theta;
        c.norm = s.norm;
        c.kappa = s.kappa;
        c.horizon = self.solver.T;
        c.reps = s.reps;
        c.output_times = s.output_times;
        c.sup_mode = s.sup_mode;
        c.sampled_levels = s.sampled_levels;
        c.tolerance = s.tolerance;
        c.seed = seed;
        Ok(c)
    }

    pub fn condition2_spec(&self, model: &Model) -> Result<Condition2Spec> {
        let c = &self.experiment.condition2;
        if c.mode >= model.basis().len() {
            return Err(Error::param("condition2.mode", c.mode as f64));
        }
        let horizon = model.grid.horizon();
        let phi = Control::from_fn(model.basis(), &model.grid, |t| {
            let mut v = vec![0.0; model.basis().len()];
            v[c.mode] = c.amplitude * (PI * t / horizon).sin();
            v
        })?;
        Ok(Condition2Spec {
            phi,
            schedule: c.perturbation,
            eps_grid: self.experiment.eps_grid.clone(),
            norm: c.norm,
            budget: c.budget,
            reps: c.reps,
        })
    }
}
