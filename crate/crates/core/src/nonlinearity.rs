//! Polynomial drift `f(r) = -r^(2n+1) + lambda1 r + lambda2`, its composition
//! operator `F(x)(xi) = f(x(xi))`, the truncation `F_N` and the pseudo-spectral
//! evaluator used by the time integrators.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{GridField, SineTransform, SpectralBasis};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolynomialDrift {
    pub n: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(default, rename = "truncation_N")]
    pub truncation: Option<f64>,
}

impl PolynomialDrift {
    pub fn new(n: u32, lambda1: f64, lambda2: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", 0.0));
        }
        if !lambda1.is_finite() {
            return Err(Error::param("lambda1", lambda1));
        }
        if !lambda2.is_finite() {
            return Err(Error::param("lambda2", lambda2));
        }
        Ok(Self {
            n,
            lambda1,
            lambda2,
            truncation: None,
        })
    }

    pub fn with_truncation(mut self, level: f64) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::param("truncation_N", level));
        }
        self.truncation = Some(level);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut probe = Self::new(self.n, self.lambda1, self.lambda2)?;
        if let Some(level) = self.truncation {
            probe = probe.with_truncation(level)?;
        }
        debug_assert_eq!(&probe, self);
        Ok(())
    }

    pub fn degree(&self) -> i32 {
        2 * self.n as i32 + 1
    }

    /// `p_n = 2(n+1)`.
    pub fn p_n(&self) -> f64 {
        2.0 * (self.n as f64 + 1.0)
    }

    /// `q_n = 2(n+1)/(2n+1)`, the conjugate exponent of `p_n`.
    pub fn q_n(&self) -> f64 {
        self.p_n() / self.degree() as f64
    }

    /// Constant `c = 2^(-2n)` in the one-sided estimate
    /// `(f(r)-f(s))(r-s) <= -c |r-s|^(2n+2) + lambda1 |r-s|^2`.
    pub fn dissipativity_constant(&self) -> f64 {
        (2.0f64).powi(-2 * self.n as i32)
    }

    pub fn f(&self, r: f64) -> f64 {
        -r.powi(self.degree()) + self.lambda1 * r + self.lambda2
    }

    pub fn f_prime(&self, r: f64) -> f64 {
        -(self.degree() as f64) * r.powi(2 * self.n as i32) + self.lambda1
    }

    /// `f_N(r) = f(r)` for `|r| <= N`, `f(N r/|r|)` otherwise.
    pub fn f_truncated(&self, r: f64) -> Result<f64> {
        let level = self.truncation.ok_or(Error::MissingTruncation)?;
        Ok(self.f(clamp(r, level)))
    }

    /// Derivative of whichever map the evaluator applies: `f'` without
    /// truncation, `f'` inside and `0` outside `[-N, N]` with it.
    pub fn effective_derivative(&self, r: f64) -> f64 {
        match self.truncation {
            Some(level) if r.abs() > level => 0.0,
            _ => self.f_prime(r),
        }
    }

    pub fn effective(&self, r: f64) -> f64 {
        match self.truncation {
            Some(level) => self.f(clamp(r, level)),
            None => self.f(r),
        }
    }

    /// `sup_{|r| <= level} |f'(r)|`; `f'` is monotone in `r^2`, so the sup is
    /// attained at `r = 0` or `|r| = level`.
    pub fn lipschitz_bound(&self, level: f64) -> f64 {
        self.f_prime(0.0).abs().max(self.f_prime(level).abs())
    }
}

fn clamp(r: f64, level: f64) -> f64 {
    if r.abs() > level {
        level.copysign(r)
    } else {
        r
    }
}

/// Pointwise `F(x)` on the collocation grid.
pub fn apply_f(x: &GridField, drift: &PolynomialDrift) -> GridField {
    let values = x.values().iter().map(|&v| drift.f(v)).collect();
    GridField::from_raw(x.basis(), values)
}

/// Pointwise `F_N(x)`.
pub fn apply_f_truncated(x: &GridField, drift: &PolynomialDrift) -> Result<GridField> {
    let values = x
        .values()
        .iter()
        .map(|&v| drift.f_truncated(v))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridField::from_raw(x.basis(), values))
}

/// Both sides of the dissipativity estimate evaluated by grid quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativityGap {
    /// `<F(x) - F(y), x - y>`.
    pub lhs: f64,
    /// `-c |x - y|_{p_n}^{p_n} + lambda1 |x - y|_H^2`.
    pub rhs: f64,
    /// `<|F(x)| + |F(y)|, |x - y|>`, the scale of the rounding error in `lhs`
    /// when `F(x) - F(y)` cancels.
    pub rounding: f64,
}

impl DissipativityGap {
    /// `lhs <= rhs` up to floating-point evaluation error.
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-12 * (self.lhs.abs() + self.rhs.abs()) + 16.0 * f64::EPSILON * self.rounding
    }
}

pub fn dissipativity_gap(
    x: &GridField,
    y: &GridField,
    drift: &PolynomialDrift,
) -> Result<DissipativityGap> {
    if !x.basis().same_as(y.basis()) {
        return Err(Error::GridMismatch);
    }
    let w = x.basis().quadrature_weight();
    let p = drift.degree() + 1;
    let c = drift.dissipativity_constant();
    let (mut lhs, mut pth, mut sq, mut rounding) = (0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in x.values().iter().zip(y.values()) {
        let d = a - b;
        let (fa, fb) = (drift.f(a), drift.f(b));
        lhs += (fa - fb) * d;
        rounding += (fa.abs() + fb.abs()) * d.abs();
        pth += d.abs().powi(p);
        sq += d * d;
    }
    Ok(DissipativityGap {
        lhs: w * lhs,
        rhs: w * (-c * pth + drift.lambda1 * sq),
        rounding: w * rounding,
    })
}

/// Evaluates the drift term `P F(u)` of the Galerkin system in mode
/// coefficients. With dealiasing the state is synthesized on a grid padded by
/// the factor `n + 1`, which makes the projection of the degree-`2n+1` power
/// exact; without it the basis' own grid is used.
#[derive(Debug, Clone)]
pub struct DriftOperator {
    basis: Arc<SpectralBasis>,
    drift: Option<PolynomialDrift>,
    padded: Option<SineTransform>,
}

impl DriftOperator {
    pub fn new(basis: &Arc<SpectralBasis>, drift: PolynomialDrift, dealias: bool) -> Result<Self> {
        drift.validate()?;
        let padded = dealias.then(|| {
            let m = basis.modes_per_dim();
            let points = (drift.n as usize + 1) * (m + 1) - 1;
            SineTransform::new(basis.length(), m, points)
        });
        Ok(Self {
            basis: basis.clone(),
            drift: Some(drift),
            padded,
        })
    }

    /// `F` switched off: the evaluator returns zero.
    pub fn disabled(basis: &Arc<SpectralBasis>) -> Self {
        Self {
            basis: basis.clone(),
            drift: None,
            padded: None,
        }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn drift(&self) -> Option<&PolynomialDrift> {
        self.drift.as_ref()
    }

    pub fn is_enabled(&self) -> bool {
        self.drift.is_some()
    }

    pub fn is_dealiased(&self) -> bool {
        self.padded.is_some()
    }

    fn transform(&self) -> &SineTransform {
        self.padded.as_ref().unwrap_or(self.basis.transform())
    }

    /// Grid values of the state on the evaluation grid.
    pub fn grid_values(&self, coeffs: &[f64]) -> Vec<f64> {
        self.transform()
            .synthesize(&self.basis.scatter(coeffs), self.basis.dim())
    }

    fn project(&self, values: &[f64]) -> Vec<f64> {
        self.basis
            .gather(&self.transform().analyze(values, self.basis.dim()))
    }

    /// Mode coefficients of `P F(u)`.
    pub fn eval(&self, coeffs: &[f64]) -> Vec<f64> {
        match &self.drift {
            None => vec![0.0; coeffs.len()],
            Some(drift) => {
                let values: Vec<f64> = self
                    .grid_values(coeffs)
                    .into_iter()
                    .map(|v| drift.effective(v))
                    .collect();
                self.project(&values)
            }
        }
    }

    /// Linearization `v -> P(f'(u) v)` at the state `u`. The operator is
    /// symmetric, so it is also its own adjoint.
    pub fn linearize(&self, coeffs: &[f64]) -> Linearization<'_> {
        let weights = self.drift.as_ref().map(|drift| {
            self.grid_values(coeffs)
                .into_iter()
                .map(|v| drift.effective_derivative(v))
                .collect()
        });
        Linearization { op: self, weights }
    }

    /// `|f'(r)|` at `r = max_abs`, used for the step-size accuracy warning.
    pub fn stiffness(&self, max_abs: f64) -> f64 {
        self.drift
            .as_ref()
            .map_or(0.0, |d| d.effective_derivative(max_abs).abs())
    }
}

pub struct Linearization<'a> {
    op: &'a DriftOperator,
    weights: Option<Vec<f64>>,
}

impl Linearization<'_> {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.weights {
            None => vec![0.0; v.len()],
            Some(w) => {
                let values: Vec<f64> = self
                    .op
                    .grid_values(v)
                    .into_iter()
                    .zip(w)
                    .map(|(a, b)| a * b)
                    .collect();
                self.op.project(&values)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, SpectralField};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn drift(n: u32, l1: f64, l2: f64) -> PolynomialDrift {
        PolynomialDrift::new(n, l1, l2).unwrap()
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(drift(1, 0.0, 0.0).f(2.0), -8.0);
        assert_eq!(drift(1, 1.0, 0.0).f(1.0), 0.0);
        assert_eq!(drift(2, 0.0, 3.0).f(0.0), 3.0);
        assert_eq!(drift(1, 0.5, 0.0).f_prime(2.0), -12.0 + 0.5);
    }

    #[test]
    fn conjugate_exponents() {
        for n in 1..6 {
            let d = drift(n, 0.0, 0.0);
            assert!((1.0 / d.p_n() + 1.0 / d.q_n() - 1.0).abs() < 1e-15);
            assert_eq!(d.p_n(), 2.0 * (n as f64 + 1.0));
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(PolynomialDrift::new(0, 0.0, 0.0).is_err());
        assert!(PolynomialDrift::new(1, f64::NAN, 0.0).is_err());
        assert!(drift(1, 0.0, 0.0).with_truncation(0.0).is_err());
        assert!(matches!(
            drift(1, 0.0, 0.0).f_truncated(1.0),
            Err(Error::MissingTruncation)
        ));
    }

    #[test]
    fn truncated_field_examples() {
        let b = build_basis(1, 1.0, 8).unwrap();
        let d = drift(1, 0.0, 0.0).with_truncation(2.0).unwrap();
        let zero = GridField::constant(&b, 0.0);
        assert!(apply_f(&zero, &d).values().iter().all(|&v| v == 0.0));
        let three = GridField::constant(&b, 3.0);
        let out = apply_f_truncated(&three, &d).unwrap();
        assert!(out.values().iter().all(|&v| v == d.f(2.0)));
        let neg = GridField::constant(&b, -3.0);
        let out = apply_f_truncated(&neg, &d).unwrap();
        assert!(out.values().iter().all(|&v| v == d.f(-2.0)));
        assert!(apply_f_truncated(&zero, &drift(1, 0.0, 0.0)).is_err());
    }

    #[test]
    fn dissipativity_equality_case() {
        let d = drift(1, 0.0, 0.0);
        let lhs = (d.f(1.0) - d.f(-1.0)) * 2.0;
        let rhs = -d.dissipativity_constant() * 2.0f64.powi(4);
        assert_eq!(lhs, -4.0);
        assert_eq!(rhs, -4.0);
    }

    #[test]
    fn dissipativity_identical_fields() {
        let b = build_basis(2, 1.0, 4).unwrap();
        let x = GridField::from_fn(&b, |p| p[0] - p[1]);
        let g = dissipativity_gap(&x, &x, &drift(2, 1.0, 0.3)).unwrap();
        assert_eq!((g.lhs, g.rhs), (0.0, 0.0));
        let other = build_basis(2, 1.0, 5).unwrap();
        let y = GridField::constant(&other, 0.0);
        assert!(matches!(
            dissipativity_gap(&x, &y, &drift(1, 0.0, 0.0)),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn lipschitz_bound_examples() {
        let d = drift(1, 1.0, 0.0);
        // sup over [-2, 2] of |1 - 3 r^2| is 11.
        assert_eq!(d.lipschitz_bound(2.0), 11.0);
        let d = drift(1, 5.0, 0.0);
        assert_eq!(d.lipschitz_bound(0.5), 5.0);
    }

    fn random_coeffs(len: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|k| scale * rng.random_range(-1.0..1.0) / (1.0 + k as f64))
            .collect()
    }

    #[test]
    fn dealiased_projection_matches_fine_quadrature() {
        // Oracle: project f(u) with a much finer grid, where aliasing onto the
        // retained modes is absent for a polynomial of this degree. A constant
        // has an infinite sine series, so lambda2 stays zero here.
        let b = build_basis(1, 2.0, 12).unwrap();
        let d = drift(2, 0.7, 0.0);
        let c = random_coeffs(b.len(), 5, 1.5);
        let op = DriftOperator::new(&b, d, true).unwrap();
        let got = op.eval(&c);
        let fine = SineTransform::new(2.0, 12, 200);
        let values: Vec<f64> = fine.synthesize(&c, 1).into_iter().map(|v| d.f(v)).collect();
        let expect = fine.analyze(&values, 1);
        for (a, e) in got.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn aliased_evaluation_is_pointwise_on_basis_grid() {
        let b = build_basis(2, 1.0, 6).unwrap();
        let d = drift(1, 0.0, 0.5);
        let c = random_coeffs(b.len(), 9, 1.0);
        let op = DriftOperator::new(&b, d, false).unwrap();
        let field = SpectralField::new(&b, c.clone()).unwrap();
        let expect = apply_f(&field.to_grid(), &d).to_modes();
        for (a, e) in op.eval(&c).iter().zip(expect.coeffs()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn disabled_operator_is_zero() {
        let b = build_basis(1, 1.0, 4).unwrap();
        let op = DriftOperator::disabled(&b);
        assert_eq!(op.eval(&[1.0, 2.0, 3.0, 4.0]), vec![0.0; 4]);
        assert_eq!(op.linearize(&[1.0; 4]).apply(&[1.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn linearization_matches_finite_differences() {
        for dealias in [true, false] {
            let b = build_basis(2, 1.3, 5).unwrap();
            let d = drift(1, 0.4, 0.1);
            let op = DriftOperator::new(&b, d, dealias).unwrap();
            let u = random_coeffs(b.len(), 1, 1.0);
            let v = random_coeffs(b.len(), 2, 1.0);
            let jv = op.linearize(&u).apply(&v);
            let h = 1e-6;
            let plus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let fp = op.eval(&plus);
            let fm = op.eval(&minus);
            for ((p, m), j) in fp.iter().zip(&fm).zip(&jv) {
                assert!(((p - m) / (2.0 * h) - j).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn linearization_is_symmetric() {
        let b = build_basis(1, 1.0, 10).unwrap();
        let op = DriftOperator::new(&b, drift(2, -0.3, 0.0), true).unwrap();
        let u = random_coeffs(b.len(), 3, 2.0);
        let lin = op.linearize(&u);
        let v = random_coeffs(b.len(), 4, 1.0);
        let w = random_coeffs(b.len(), 5, 1.0);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let lhs = dot(&lin.apply(&v), &w);
        let rhs = dot(&v, &lin.apply(&w));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn scalar_dissipativity(n in 1u32..4, r in -10.0f64..10.0, s in -10.0f64..10.0, l1 in -2.0f64..2.0) {
            let d = drift(n, l1, 0.7);
            let (fr, fs) = (d.f(r), d.f(s));
            let lhs = (fr - fs) * (r - s);
            let rhs = -d.dissipativity_constant() * (r - s).abs().powi(2 * n as i32 + 2)
                + l1 * (r - s).powi(2);
            let rounding = (fr.abs() + fs.abs()) * (r - s).abs();
            prop_assert!(DissipativityGap { lhs, rhs, rounding }.holds(), "{lhs} > {rhs}");
        }

        #[test]
        fn truncation_is_local(n in 1u32..4, level in 0.5f64..3.0, bigger in 0.0f64..2.0, seed in 0u64..500) {
            let b = build_basis(1, 1.0, 16).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = GridField::from_fn(&b, |_| rng.random_range(-level..level));
            let d = drift(n, 0.3, -0.1);
            let plain = apply_f(&x, &d);
            let at_n = apply_f_truncated(&x, &d.with_truncation(level).unwrap()).unwrap();
            let at_m = apply_f_truncated(&x, &d.with_truncation(level + bigger).unwrap()).unwrap();
            prop_assert_eq!(plain.values(), at_n.values());
            prop_assert_eq!(plain.values(), at_m.values());
        }

        #[test]
        fn truncated_map_is_lipschitz(n in 1u32..4, level in 0.5f64..2.0, r in -5.0f64..5.0, s in -5.0f64..5.0) {
            let d = drift(n, 0.8, 0.0).with_truncation(level).unwrap();
            let lip = d.lipschitz_bound(level);
            let gap = (d.f_truncated(r).unwrap() - d.f_truncated(s).unwrap()).abs();
            prop_assert!(gap <= lip * (r - s).abs() * (1.0 + 1e-12) + 1e-12);
        }
    }
}
