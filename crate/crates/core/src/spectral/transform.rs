//! Separable discrete sine transforms on interior collocation grids.
//!
//! A transform with `modes` sine modes and `points` interior nodes
//! `xi_j = j L / (points + 1)` stores the synthesis matrix
//! `S[j][k] = sqrt(2/L) sin(k pi xi_j / L)`. Analysis is `h S^T` with the
//! rectangle weight `h = L / (points + 1)`; for `points == modes` it is the
//! exact inverse of synthesis, for `points > modes` it is the discrete
//! L2 projection used by the dealiased nonlinearity.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub(crate) struct SineTransform {
    points: usize,
    modes: usize,
    /// Row-major `points x modes`.
    synth: Vec<f64>,
    /// Row-major `modes x points`, already scaled by `weight`.
    analysis: Vec<f64>,
}

impl SineTransform {
    pub fn new(length: f64, modes: usize, points: usize) -> Self {
        let norm = (2.0 / length).sqrt();
        let intervals = (points + 1) as f64;
        let weight = length / intervals;
        let mut synth = vec![0.0; points * modes];
        let mut analysis = vec![0.0; modes * points];
        for j in 0..points {
            for k in 0..modes {
                // sin(k pi j / (points + 1)); reduce the integer product first so
                // large arguments do not lose accuracy.
                let m = ((k + 1) * (j + 1)) % (2 * (points + 1));
                let v = norm * (PI * m as f64 / intervals).sin();
                synth[j * modes + k] = v;
                analysis[k * points + j] = weight * v;
            }
        }
        Self {
            points,
            modes,
            synth,
            analysis,
        }
    }

    /// Mode tensor (`modes^d`) to grid tensor (`points^d`).
    pub fn synthesize(&self, coeffs: &[f64], dim: usize) -> Vec<f64> {
        self.apply_all_axes(coeffs, dim, &self.synth, self.modes, self.points)
    }

    /// Grid tensor (`points^d`) to mode tensor (`modes^d`).
    pub fn analyze(&self, values: &[f64], dim: usize) -> Vec<f64> {
        self.apply_all_axes(values, dim, &self.analysis, self.points, self.modes)
    }

    fn apply_all_axes(
        &self,
        input: &[f64],
        dim: usize,
        matrix: &[f64],
        n_in: usize,
        n_out: usize,
    ) -> Vec<f64> {
        let mut shape = vec![n_in; dim];
        let mut data = input.to_vec();
        for axis in 0..dim {
            data = apply_axis(&data, &shape, axis, matrix, n_out, n_in);
            shape[axis] = n_out;
        }
        data
    }
}

/// Contract `matrix` (`n_out x n_in`, row-major) against one axis of a
/// row-major tensor.
fn apply_axis(
    input: &[f64],
    shape: &[usize],
    axis: usize,
    matrix: &[f64],
    n_out: usize,
    n_in: usize,
) -> Vec<f64> {
    debug_assert_eq!(shape[axis], n_in);
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * n_out * inner];
    for o in 0..outer {
        let src = &input[o * n_in * inner..(o + 1) * n_in * inner];
        let dst = &mut out[o * n_out * inner..(o + 1) * n_out * inner];
        for r in 0..n_out {
            let row = &matrix[r * n_in..(r + 1) * n_in];
            let d = &mut dst[r * inner..(r + 1) * inner];
            for (c, &m) in row.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let s = &src[c * inner..(c + 1) * inner];
                for (dv, sv) in d.iter_mut().zip(s) {
                    *dv += m * sv;
                }
            }
        }
    }
    out
}
