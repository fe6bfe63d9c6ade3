//! Dirichlet Laplacian eigenstructure on the box `[0, L]^d`.
//!
//! Eigenpairs are `alpha_k = sum_i (k_i pi / L)^2` and
//! `e_k(xi) = prod_i sqrt(2/L) sin(k_i pi xi_i / L)` for `k in {1..M}^d`.
//! Modes are linearized by eigenvalue, ties broken lexicographically on the
//! multi-index, so coefficient vectors have a deterministic layout.

mod transform;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use transform::SineTransform;

/// Serializable description `{d, L, M}` of a basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub d: usize,
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "M")]
    pub modes_per_dim: usize,
}

#[derive(Debug)]
pub struct SpectralBasis {
    dim: usize,
    length: f64,
    modes_per_dim: usize,
    /// Flattened multi-indices, `dim` entries per mode, in linearized order.
    indices: Vec<usize>,
    squared_wavenumbers: Vec<u64>,
    eigenvalues: Vec<f64>,
    /// Linearized position -> row-major tensor offset.
    tensor_offset: Vec<usize>,
    transform: SineTransform,
}

impl SpectralBasis {
    pub fn new(dim: usize, length: f64, modes_per_dim: usize) -> Result<Arc<Self>> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::NonPositiveLength(length));
        }
        if modes_per_dim < 2 {
            return Err(Error::TooFewModes(modes_per_dim));
        }
        let count = modes_per_dim.pow(dim as u32);
        let mut raw: Vec<(u64, Vec<usize>, usize)> = (0..count)
            .map(|offset| {
                let mut rest = offset;
                let mut k = vec![0usize; dim];
                for i in (0..dim).rev() {
                    k[i] = rest % modes_per_dim + 1;
                    rest /= modes_per_dim;
                }
                let n2 = k.iter().map(|&ki| (ki * ki) as u64).sum();
                (n2, k, offset)
            })
            .collect();
        raw.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

        let scale = (PI / length).powi(2);
        let mut indices = Vec::with_capacity(count * dim);
        let mut squared_wavenumbers = Vec::with_capacity(count);
        let mut eigenvalues = Vec::with_capacity(count);
        let mut tensor_offset = Vec::with_capacity(count);
        for (n2, k, offset) in raw {
            indices.extend_from_slice(&k);
            squared_wavenumbers.push(n2);
            eigenvalues.push(scale * n2 as f64);
            tensor_offset.push(offset);
        }
        Ok(Arc::new(Self {
            dim,
            length,
            modes_per_dim,
            indices,
            squared_wavenumbers,
            eigenvalues,
            tensor_offset,
            transform: SineTransform::new(length, modes_per_dim, modes_per_dim),
        }))
    }

    pub fn from_spec(spec: BasisSpec) -> Result<Arc<Self>> {
        Self::new(spec.d, spec.length, spec.modes_per_dim)
    }

    pub fn spec(&self) -> BasisSpec {
        BasisSpec {
            d: self.dim,
            length: self.length,
            modes_per_dim: self.modes_per_dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn modes_per_dim(&self) -> usize {
        self.modes_per_dim
    }

    /// Number of modes, `M^d`; also the number of interior grid points.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `|k|^2`, the integer part of the eigenvalue.
    pub fn squared_wavenumbers(&self) -> &[u64] {
        &self.squared_wavenumbers
    }

    /// Multi-index of the mode at linearized position `j`.
    pub fn multi_index(&self, j: usize) -> &[usize] {
        &self.indices[j * self.dim..(j + 1) * self.dim]
    }

    /// Linearized position of a multi-index, if it belongs to the basis.
    pub fn position_of(&self, k: &[usize]) -> Option<usize> {
        if k.len() != self.dim || k.iter().any(|&ki| ki == 0 || ki > self.modes_per_dim) {
            return None;
        }
        (0..self.len()).find(|&j| self.multi_index(j) == k)
    }

    /// Grid spacing `L / (M + 1)`.
    pub fn spacing(&self) -> f64 {
        self.length / (self.modes_per_dim + 1) as f64
    }

    /// Rectangle-rule weight `(L / (M + 1))^d` of one grid cell.
    pub fn quadrature_weight(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinates of grid point `offset` (row-major over the interior grid).
    pub fn grid_point(&self, offset: usize) -> Vec<f64> {
        let h = self.spacing();
        let mut rest = offset;
        let mut xi = vec![0.0; self.dim];
        for i in (0..self.dim).rev() {
            xi[i] = (rest % self.modes_per_dim + 1) as f64 * h;
            rest /= self.modes_per_dim;
        }
        xi
    }

    /// Pointwise value of the eigenfunction at linearized position `j`.
    pub fn eigenfunction(&self, j: usize, xi: &[f64]) -> f64 {
        let norm = (2.0 / self.length).sqrt();
        self.multi_index(j)
            .iter()
            .zip(xi)
            .map(|(&k, &x)| norm * (k as f64 * PI * x / self.length).sin())
            .product()
    }

    /// Smallest `c` with `c^-1 j^(2/d) <= alpha_(j) <= c j^(2/d)` over the
    /// sorted eigenvalues of this (finite) basis.
    pub fn weyl_constant(&self) -> f64 {
        let p = 2.0 / self.dim as f64;
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let w = ((j + 1) as f64).powf(p);
                (a / w).max(w / a)
            })
            .fold(1.0, f64::max)
    }

    pub(crate) fn transform(&self) -> &SineTransform {
        &self.transform
    }

    pub(crate) fn scatter(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut tensor = vec![0.0; coeffs.len()];
        for (c, &off) in coeffs.iter().zip(&self.tensor_offset) {
            tensor[off] = *c;
        }
        tensor
    }

    pub(crate) fn gather(&self, tensor: &[f64]) -> Vec<f64> {
        self.tensor_offset.iter().map(|&off| tensor[off]).collect()
    }

    /// Grid values of a linearized coefficient vector on the `M^d` grid.
    pub(crate) fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        self.transform.synthesize(&self.scatter(coeffs), self.dim)
    }

    pub(crate) fn analyze(&self, values: &[f64]) -> Vec<f64> {
        self.gather(&self.transform.analyze(values, self.dim))
    }

    pub fn same_as(&self, other: &SpectralBasis) -> bool {
        std::ptr::eq(self, other) || self.spec() == other.spec()
    }
}

/// One spatial state as mode coefficients.
#[derive(Debug, Clone)]
pub struct SpectralField {
    basis: Arc<SpectralBasis>,
    coeffs: Vec<f64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.basis.same_as(&other.basis) && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(basis: &Arc<SpectralBasis>) -> Self {
        Self {
            basis: basis.clone(),
            coeffs: vec![0.0; basis.len()],
        }
    }

    pub fn new(basis: &Arc<SpectralBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::LengthMismatch {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("mode coefficients"));
        }
        Ok(Self {
            basis: basis.clone(),
            coeffs,
        })
    }

    /// The normalized eigenfunction at linearized position `j`.
    pub fn unit(basis: &Arc<SpectralBasis>, j: usize) -> Self {
        let mut f = Self::zeros(basis);
        f.coeffs[j] = 1.0;
        f
    }

    pub(crate) fn from_raw(basis: &Arc<SpectralBasis>, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(coeffs.len(), basis.len());
        Self {
            basis: basis.clone(),
            coeffs,
        }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn to_grid(&self) -> GridField {
        GridField {
            basis: self.basis.clone(),
            values: self.basis.synthesize(&self.coeffs),
        }
    }

    pub fn norm_h(&self) -> f64 {
        norm_h(self)
    }

    pub fn norm_hneg(&self, s: f64) -> Result<f64> {
        norm_hneg(self, s)
    }

    pub fn max_abs(&self) -> f64 {
        self.to_grid().max_abs()
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        check_basis(&self.basis, &other.basis)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self::from_raw(&self.basis, coeffs))
    }

    pub fn scaled(&self, factor: f64) -> SpectralField {
        Self::from_raw(&self.basis, self.coeffs.iter().map(|c| c * factor).collect())
    }
}

/// One spatial state as values on the interior collocation grid.
#[derive(Debug, Clone)]
pub struct GridField {
    basis: Arc<SpectralBasis>,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(basis: &Arc<SpectralBasis>, values: Vec<f64>) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::LengthMismatch {
                expected: basis.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid values"));
        }
        Ok(Self {
            basis: basis.clone(),
            values,
        })
    }

    pub fn constant(basis: &Arc<SpectralBasis>, value: f64) -> Self {
        Self {
            basis: basis.clone(),
            values: vec![value; basis.len()],
        }
    }

    pub fn from_fn(basis: &Arc<SpectralBasis>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..basis.len()).map(|i| f(&basis.grid_point(i))).collect();
        Self {
            basis: basis.clone(),
            values,
        }
    }

    pub(crate) fn from_raw(basis: &Arc<SpectralBasis>, values: Vec<f64>) -> Self {
        Self {
            basis: basis.clone(),
            values,
        }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_modes(&self) -> SpectralField {
        SpectralField::from_raw(&self.basis, self.basis.analyze(&self.values))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm_lp(&self, p: f64) -> Result<f64> {
        norm_lp(self, p)
    }

    /// Rectangle-rule `L^2` norm on the grid.
    pub fn norm_l2(&self) -> f64 {
        let w = self.basis.quadrature_weight();
        (w * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

pub(crate) fn check_basis(a: &SpectralBasis, b: &SpectralBasis) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::BasisMismatch)
    }
}

pub fn build_basis(dim: usize, length: f64, modes_per_dim: usize) -> Result<Arc<SpectralBasis>> {
    SpectralBasis::new(dim, length, modes_per_dim)
}

pub fn to_grid(field: &SpectralField) -> GridField {
    field.to_grid()
}

pub fn to_modes(field: &GridField) -> SpectralField {
    field.to_modes()
}

pub fn norm_h(x: &SpectralField) -> f64 {
    x.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `|x|_{H^-s} = sqrt(sum x_k^2 alpha_k^-s)`.
pub fn norm_hneg(x: &SpectralField, s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::param("s", s));
    }
    Ok(hneg_sq(x.coeffs(), x.basis.eigenvalues(), s).sqrt())
}

pub(crate) fn hneg_sq(coeffs: &[f64], eigenvalues: &[f64], s: f64) -> f64 {
    coeffs
        .iter()
        .zip(eigenvalues)
        .map(|(c, a)| c * c * a.powf(-s))
        .sum()
}

/// Rectangle-rule `L^p` norm, weight `(L/(M+1))^d` per node.
pub fn norm_lp(x: &GridField, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::param("p", p));
    }
    let w = x.basis.quadrature_weight();
    Ok((w * x.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p))
}

/// Heat semigroup: coefficient-wise multiplication by `exp(-alpha_k t)`.
pub fn heat_propagate(x: &SpectralField, t: f64) -> Result<SpectralField> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    let coeffs = x
        .coeffs
        .iter()
        .zip(x.basis.eigenvalues())
        .map(|(c, a)| c * (-a * t).exp())
        .collect();
    Ok(SpectralField::from_raw(&x.basis, coeffs))
}
