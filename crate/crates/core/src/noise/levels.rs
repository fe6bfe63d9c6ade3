//! Eigenvalue levels and exact samplers for quadratic functionals of the
//! stochastic convolution.
//!
//! The moment experiments only need `sum_k w_k z_k(t)^2`, where the weight
//! depends on `k` through `alpha_k` alone. Modes sharing an eigenvalue are
//! grouped into one level of multiplicity `m`; the level sum
//! `X(t) = sum_{k in level} z_k(t)^2` is `var(t) chi^2_m` at a fixed time and
//! evolves as an exactly sampled squared Bessel (CIR) process along a path.
//! This keeps `|k| <= 2048` lattices in three dimensions tractable.

use std::f64::consts::PI;
use std::sync::Arc;

use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use super::convolution::theta_variance;
use super::lambda_k;
use super::rng::RngStream;
use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub alpha: f64,
    pub multiplicity: u64,
    /// Pointwise variance envelope `|e_k|_inf^2` growth factor; `1` on the box.
    pub envelope: f64,
}

/// How many modes a spectrum keeps as `delta` shrinks. The cutoff tracks the
/// correlation length so that `delta sqrt(alpha)` reaches `factor` at the
/// largest retained wavenumber, but never drops below `floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub factor: f64,
    pub floor: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            factor: 1.0,
            floor: 96,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Spectrum {
    /// Dirichlet box `[0, L]^d`, modes with `|k| <= K(delta)`,
    /// `K = max(floor, ceil(factor L / (pi delta)))`.
    Box {
        d: usize,
        length: f64,
        resolution: Resolution,
    },
    /// `alpha_k = k^(2/d)`, envelope `k^(alpha/d)`, `k <= max(floor,
    /// ceil((factor / delta)^d))`.
    Synthetic {
        d: usize,
        alpha_exponent: f64,
        resolution: Resolution,
    },
    /// The finite basis as it is, for cross-checks against field simulations.
    Basis(Arc<SpectralBasis>),
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        match self {
            Spectrum::Box { d, .. } | Spectrum::Synthetic { d, .. } => *d,
            Spectrum::Basis(b) => b.dim(),
        }
    }

    /// Eigenfunction growth exponent `alpha` of the spectrum.
    pub fn growth_exponent(&self) -> f64 {
        match self {
            Spectrum::Synthetic { alpha_exponent, .. } => *alpha_exponent,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_res = |r: &Resolution| {
            if !(r.factor > 0.0 && r.factor.is_finite()) {
                return Err(Error::param("resolution factor", r.factor));
            }
            if r.floor < 1 {
                return Err(Error::TooFewModes(r.floor));
            }
            Ok(())
        };
        match self {
            Spectrum::Box {
                d,
                length,
                resolution,
            } => {
                if !(1..=3).contains(d) {
                    return Err(Error::InvalidDimension(*d));
                }
                if !(*length > 0.0 && length.is_finite()) {
                    return Err(Error::NonPositiveLength(*length));
                }
                check_res(resolution)
            }
            Spectrum::Synthetic {
                d,
                alpha_exponent,
                resolution,
            } => {
                if !(1..=3).contains(d) {
                    return Err(Error::InvalidDimension(*d));
                }
                if !(*alpha_exponent >= 0.0 && alpha_exponent.is_finite()) {
                    return Err(Error::param("alpha_exponent", *alpha_exponent));
                }
                check_res(resolution)
            }
            Spectrum::Basis(_) => Ok(()),
        }
    }

    /// Cutoff parameter at `delta`: lattice radius for the box, mode count
    /// for the synthetic spectrum, `M` for a basis.
    pub fn cutoff(&self, delta: f64) -> usize {
        match self {
            Spectrum::Box {
                length, resolution, ..
            } => {
                let k = (resolution.factor * length / (PI * delta)).ceil();
                resolution.floor.max(k as usize)
            }
            Spectrum::Synthetic { d, resolution, .. } => {
                let n = (resolution.factor / delta).powi(*d as i32).ceil();
                resolution.floor.max(n as usize)
            }
            Spectrum::Basis(b) => b.modes_per_dim(),
        }
    }

    /// Levels at correlation length `delta`, sorted by eigenvalue.
    pub fn levels(&self, delta: f64) -> Vec<Level> {
        match self {
            Spectrum::Box { d, length, .. } => {
                let k = self.cutoff(delta);
                ShellCounts::new(*d, k).levels(*length, k)
            }
            _ => self.levels_with(delta, None),
        }
    }

    /// As [`Spectrum::levels`], reusing precomputed shell counts.
    pub(crate) fn levels_with(&self, delta: f64, shells: Option<&ShellCounts>) -> Vec<Level> {
        match self {
            Spectrum::Box { d, length, .. } => {
                let k = self.cutoff(delta);
                match shells {
                    Some(s) if s.dim == *d && s.radius >= k => s.levels(*length, k),
                    _ => ShellCounts::new(*d, k).levels(*length, k),
                }
            }
            Spectrum::Synthetic {
                d, alpha_exponent, ..
            } => {
                let n = self.cutoff(delta);
                let (p, q) = (2.0 / *d as f64, alpha_exponent / *d as f64);
                (1..=n)
                    .map(|k| {
                        let k = k as f64;
                        Level {
                            alpha: k.powf(p),
                            multiplicity: 1,
                            envelope: k.powf(q),
                        }
                    })
                    .collect()
            }
            Spectrum::Basis(b) => {
                let mut out: Vec<Level> = Vec::new();
                let mut last = None;
                for (&n2, &a) in b.squared_wavenumbers().iter().zip(b.eigenvalues()) {
                    if last == Some(n2) {
                        out.last_mut().unwrap().multiplicity += 1;
                    } else {
                        out.push(Level {
                            alpha: a,
                            multiplicity: 1,
                            envelope: 1.0,
                        });
                        last = Some(n2);
                    }
                }
                out
            }
        }
    }
}

/// `r_d^+(n)`: number of `k in {1, 2, ...}^d` with `|k|^2 = n`, for
/// `n <= radius^2`.
#[derive(Debug, Clone)]
pub(crate) struct ShellCounts {
    dim: usize,
    radius: usize,
    counts: Vec<u32>,
}

impl ShellCounts {
    pub fn new(dim: usize, radius: usize) -> Self {
        let top = radius * radius;
        let mut one = vec![0u32; top + 1];
        for k in 1..=radius {
            one[k * k] = 1;
        }
        let mut counts = one.clone();
        for _ in 1..dim {
            let mut next = vec![0u32; top + 1];
            for c in 1..=radius {
                let c2 = c * c;
                let (src, dst) = (&counts[..=top - c2], &mut next[c2..]);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += *s;
                }
            }
            counts = next;
        }
        Self {
            dim,
            radius,
            counts,
        }
    }

    #[cfg(test)]
    pub fn count(&self, n: usize) -> u32 {
        self.counts[n]
    }

    pub fn levels(&self, length: f64, radius: usize) -> Vec<Level> {
        let scale = (PI / length).powi(2);
        self.counts[..=radius * radius]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(n, &c)| Level {
                alpha: scale * n as f64,
                multiplicity: c as u64,
                envelope: 1.0,
            })
            .collect()
    }
}

/// Weight of a level in the quadratic functional `sum_k w_k z_k^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MomentNorm {
    /// Pointwise-variance weighted `L^2` functional `sum_k envelope_k z_k^2`;
    /// on the box the envelope is `1` and this is `|z|_H^2`.
    L2,
    /// `|z|_{H^-s}^2 = sum_k alpha_k^-s z_k^2`.
    Hneg(f64),
}

impl MomentNorm {
    pub fn weight(&self, level: &Level) -> f64 {
        match self {
            MomentNorm::L2 => level.envelope,
            MomentNorm::Hneg(s) => level.alpha.powf(-s),
        }
    }
}

/// Per-level data of a quadratic functional at one correlation length.
#[derive(Debug, Clone)]
pub struct QuadraticFunctional {
    pub alpha: Vec<f64>,
    pub multiplicity: Vec<u64>,
    pub weight: Vec<f64>,
    pub lambda: Vec<f64>,
    pub theta: f64,
}

impl QuadraticFunctional {
    pub fn new(levels: &[Level], norm: MomentNorm, delta: f64, beta: f64, theta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::ThetaOutOfRange(theta));
        }
        Ok(Self {
            alpha: levels.iter().map(|l| l.alpha).collect(),
            multiplicity: levels.iter().map(|l| l.multiplicity).collect(),
            weight: levels.iter().map(|l| norm.weight(l)).collect(),
            lambda: levels.iter().map(|l| lambda_k(l.alpha, delta, beta)).collect(),
            theta,
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn modes(&self) -> u64 {
        self.multiplicity.iter().sum()
    }

    /// Per-mode variance of each level at time `t`.
    pub fn variances(&self, t: f64) -> Result<Vec<f64>> {
        self.alpha
            .iter()
            .zip(&self.lambda)
            .map(|(&a, &l)| theta_variance(a, l, self.theta, t))
            .collect()
    }

    /// Exact `E sum_k w_k z_k(t)^2`.
    pub fn mean(&self, t: f64) -> Result<f64> {
        Ok(self.tail_mean(&self.variances(t)?, 0))
    }

    fn tail_mean(&self, var: &[f64], from: usize) -> f64 {
        (from..self.len())
            .map(|j| self.weight[j] * self.multiplicity[j] as f64 * var[j])
            .sum()
    }

    fn tail_variance(&self, var: &[f64], from: usize) -> f64 {
        (from..self.len())
            .map(|j| 2.0 * (self.weight[j] * var[j]).powi(2) * self.multiplicity[j] as f64)
            .sum()
    }
}

fn chi_squared(m: u64) -> ChiSquared<f64> {
    ChiSquared::new(m as f64).expect("positive degrees of freedom")
}

/// Conditional sampler of `Y = sum_k w_k z_k(t)^2` at one time: the first
/// `sampled` levels are drawn exactly and the remaining ones enter through
/// their mean. `E Y` is preserved exactly; only the variance of `Y` is
/// reduced, which leaves estimates of `E Y` unbiased.
pub struct TerminalSampler {
    scale: Vec<f64>,
    chi: Vec<ChiSquared<f64>>,
    tail: f64,
}

impl TerminalSampler {
    pub fn new(f: &QuadraticFunctional, t: f64, sampled: usize) -> Result<Self> {
        let var = f.variances(t)?;
        let j = sampled.min(f.len());
        Ok(Self {
            scale: (0..j).map(|i| f.weight[i] * var[i]).collect(),
            chi: f.multiplicity[..j].iter().map(|&m| chi_squared(m)).collect(),
            tail: f.tail_mean(&var, j),
        })
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let head: f64 = self
            .scale
            .iter()
            .zip(&self.chi)
            .map(|(s, c)| s * c.sample(rng))
            .sum();
        head + self.tail
    }
}

/// Pathwise sampler of `t -> sum_k w_k z_k(t)^2` on `t_i = i T / n`,
/// `i = 1..=n`, started from `z(0) = 0`. Sampled levels follow the exact
/// squared Bessel transition; the tail is replaced by its mean curve.
pub struct PathSampler {
    weight: Vec<f64>,
    /// `exp(-2 alpha h)` per sampled level.
    decay: Vec<f64>,
    /// `lambda^2 (1 - exp(-2 alpha h)) / (2 alpha)` per sampled level.
    step_var: Vec<f64>,
    rest: Vec<Option<ChiSquared<f64>>>,
    /// For `theta > 0`, independent marginals per time instead.
    marginal: Option<Vec<TerminalSampler>>,
    tail: Vec<f64>,
    tail_var: Vec<f64>,
}

impl PathSampler {
    pub fn new(f: &QuadraticFunctional, horizon: f64, times: usize, sampled: usize) -> Result<Self> {
        if times == 0 {
            return Err(Error::param("output times", 0.0));
        }
        let j = sampled.min(f.len());
        let h = horizon / times as f64;
        let grid: Vec<f64> = (1..=times).map(|i| i as f64 * h).collect();
        let mut tail = Vec::with_capacity(times);
        let mut tail_var = Vec::with_capacity(times);
        for &t in &grid {
            let var = f.variances(t)?;
            tail.push(f.tail_mean(&var, j));
            tail_var.push(f.tail_variance(&var, j));
        }
        let marginal = if f.theta > 0.0 {
            Some(
                grid.iter()
                    .map(|&t| TerminalSampler::new(f, t, sampled))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            weight: f.weight[..j].to_vec(),
            decay: f.alpha[..j].iter().map(|a| (-2.0 * a * h).exp()).collect(),
            step_var: f.alpha[..j]
                .iter()
                .zip(&f.lambda)
                .map(|(&a, &l)| super::ou_variance(a, l, h))
                .collect(),
            rest: f.multiplicity[..j]
                .iter()
                .map(|&m| (m > 1).then(|| chi_squared(m - 1)))
                .collect(),
            marginal,
            tail,
            tail_var,
        })
    }

    pub fn times(&self) -> usize {
        self.tail.len()
    }

    /// Upper bound on `E sup_t |B(t) - E B(t)|` for the replaced tail `B`,
    /// which bounds the downward bias of `E sup_t` estimates.
    pub fn tail_bias_bound(&self) -> f64 {
        self.tail_var.iter().sum::<f64>().sqrt()
    }

    /// One path of the functional at the output times.
    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        if let Some(m) = &self.marginal {
            return m.iter().map(|s| s.sample(rng)).collect();
        }
        let mut x = vec![0.0; self.weight.len()];
        let mut out = Vec::with_capacity(self.times());
        for tail in &self.tail {
            let mut sum = 0.0;
            for (j, xj) in x.iter_mut().enumerate() {
                let v = self.step_var[j];
                let nc = (self.decay[j] * *xj / v).sqrt();
                let g = rng.normal() + nc;
                let rest = self.rest[j].as_ref().map_or(0.0, |c| c.sample(rng));
                *xj = v * (g * g + rest);
                sum += self.weight[j] * *xj;
            }
            out.push(sum + tail);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::ou_variance;
    use crate::noise::rng::{purpose, StreamId};
    use crate::spectral::build_basis;

    fn brute_counts(d: usize, k: usize) -> Vec<u32> {
        let mut c = vec![0u32; k * k + 1];
        let idx = |v: &[usize]| v.iter().map(|x| x * x).sum::<usize>();
        match d {
            1 => (1..=k).for_each(|a| c[a * a] += 1),
            2 => {
                for a in 1..=k {
                    for b in 1..=k {
                        let n = idx(&[a, b]);
                        if n <= k * k {
                            c[n] += 1;
                        }
                    }
                }
            }
            _ => {
                for a in 1..=k {
                    for b in 1..=k {
                        for e in 1..=k {
                            let n = idx(&[a, b, e]);
                            if n <= k * k {
                                c[n] += 1;
                            }
                        }
                    }
                }
            }
        }
        c
    }

    #[test]
    fn shell_counts_match_enumeration() {
        for d in 1..=3 {
            let s = ShellCounts::new(d, 17);
            let b = brute_counts(d, 17);
            for (n, &c) in b.iter().enumerate() {
                assert_eq!(s.count(n), c, "d={d} n={n}");
            }
        }
    }

    #[test]
    fn box_levels_examples() {
        let s = ShellCounts::new(3, 4);
        let l = s.levels(PI, 4);
        assert_eq!(l[0].alpha, 3.0);
        assert_eq!(l[0].multiplicity, 1);
        // |k|^2 = 6 from permutations of (1,1,2)
        assert_eq!(l[1].alpha, 6.0);
        assert_eq!(l[1].multiplicity, 3);
        let total: u64 = l.iter().map(|x| x.multiplicity).sum();
        assert_eq!(total, brute_counts(3, 4).iter().map(|&c| c as u64).sum::<u64>());
    }

    #[test]
    fn cutoff_tracks_delta() {
        let s = Spectrum::Box {
            d: 3,
            length: 8.0 * PI,
            resolution: Resolution::default(),
        };
        assert_eq!(s.cutoff(0.125), 96);
        assert_eq!(s.cutoff(1.0 / 256.0), 2048);
        let syn = Spectrum::Synthetic {
            d: 2,
            alpha_exponent: 1.0,
            resolution: Resolution { factor: 1.0, floor: 10 },
        };
        assert_eq!(syn.cutoff(0.25), 16);
        assert_eq!(syn.cutoff(0.9), 10);
        let l = syn.levels(0.25);
        assert_eq!(l.len(), 16);
        assert!((l[3].alpha - 4.0f64.powf(1.0)).abs() < 1e-15);
        assert!((l[3].envelope - 2.0).abs() < 1e-15);
    }

    #[test]
    fn basis_levels_group_ties() {
        let b = build_basis(2, PI, 3).unwrap();
        let s = Spectrum::Basis(b.clone());
        let l = s.levels(0.1);
        assert_eq!(l.iter().map(|x| x.multiplicity).sum::<u64>(), 9);
        assert_eq!(l[1].alpha, 5.0);
        assert_eq!(l[1].multiplicity, 2);
    }

    fn functional(norm: MomentNorm) -> QuadraticFunctional {
        let s = Spectrum::Box {
            d: 2,
            length: 2.0,
            resolution: Resolution { factor: 1.0, floor: 6 },
        };
        QuadraticFunctional::new(&s.levels(0.2), norm, 0.2, 1.0, 0.0).unwrap()
    }

    #[test]
    fn mean_is_sum_of_mode_variances() {
        let f = functional(MomentNorm::L2);
        let mut expect = 0.0;
        for a in 1..=6usize {
            for b in 1..=6usize {
                if a * a + b * b <= 36 {
                    let alpha = (PI / 2.0).powi(2) * (a * a + b * b) as f64;
                    expect += ou_variance(alpha, lambda_k(alpha, 0.2, 1.0), 0.7);
                }
            }
        }
        assert!((f.mean(0.7).unwrap() / expect - 1.0).abs() < 1e-13);
    }

    #[test]
    fn terminal_sampler_is_unbiased_with_tail() {
        let f = functional(MomentNorm::Hneg(0.5));
        let exact = f.mean(1.0).unwrap();
        for sampled in [0, 3, f.len()] {
            let s = TerminalSampler::new(&f, 1.0, sampled).unwrap();
            let reps = 20_000;
            let mut rng = RngStream::new(2, StreamId::new(sampled as u64, 0, purpose::NOISE_LEVELS));
            let (mut m, mut sq) = (0.0, 0.0);
            for _ in 0..reps {
                let y = s.sample(&mut rng);
                m += y;
                sq += y * y;
            }
            m /= reps as f64;
            let se = ((sq / reps as f64 - m * m).max(0.0) / reps as f64).sqrt();
            assert!((m - exact).abs() <= 4.0 * se + 1e-12 * exact, "{sampled}: {m} vs {exact}");
        }
    }

    #[test]
    fn path_sampler_marginals_match_oracle() {
        let f = functional(MomentNorm::L2);
        let s = PathSampler::new(&f, 1.0, 8, f.len()).unwrap();
        let reps = 20_000;
        let mut acc = [0.0; 8];
        let mut rng = RngStream::new(5, StreamId::new(0, 0, purpose::NOISE_LEVELS));
        for _ in 0..reps {
            for (a, y) in acc.iter_mut().zip(s.sample(&mut rng)) {
                *a += y;
            }
        }
        for (i, a) in acc.iter().enumerate() {
            let t = (i + 1) as f64 / 8.0;
            let exact = f.mean(t).unwrap();
            assert!((a / reps as f64 / exact - 1.0).abs() < 0.02, "t={t}");
        }
        assert_eq!(s.tail_bias_bound(), 0.0);
    }

    #[test]
    fn path_sampler_autocorrelation_matches_single_mode() {
        // One mode: E[z(s)^2 z(t)^2] = 2 c^2 + v_s v_t with c = e^{-a(t-s)} v_s.
        let b = build_basis(1, PI, 2).unwrap();
        let l = Spectrum::Basis(b).levels(0.0);
        let f = QuadraticFunctional::new(&l[..1], MomentNorm::L2, 0.0, 0.0, 0.0).unwrap();
        let s = PathSampler::new(&f, 1.0, 2, 1).unwrap();
        let reps = 200_000;
        let mut rng = RngStream::new(8, StreamId::new(0, 0, purpose::NOISE_LEVELS));
        let mut prod = 0.0;
        for _ in 0..reps {
            let p = s.sample(&mut rng);
            prod += p[0] * p[1];
        }
        let vs = ou_variance(1.0, 1.0, 0.5);
        let vt = ou_variance(1.0, 1.0, 1.0);
        let c = (-0.5f64).exp() * vs;
        let exact = 2.0 * c * c + vs * vt;
        assert!((prod / reps as f64 / exact - 1.0).abs() < 0.02);
    }
}
