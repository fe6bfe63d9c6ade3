//! Limited-memory BFGS with Armijo backtracking on flat vectors, using a
//! caller-supplied scale for the inner product.

use std::collections::VecDeque;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub armijo: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Weight `w` in `<a, b> = w sum a_i b_i`.
    pub inner_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Values of the objective at accepted iterates, in order.
    pub history: Vec<f64>,
}

/// Minimizes `f`, which returns `(value, gradient)`.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let w = opts.inner_weight;
    let dot = |a: &[f64], b: &[f64]| w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut x = x0;
    let (mut value, mut grad) = f(&x)?;
    let g0 = dot(&grad, &grad).sqrt();
    let target = opts.rel_tol * g0;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut history = vec![value];
    let mut iterations = 0;

    loop {
        let gnorm = dot(&grad, &grad).sqrt();
        if gnorm == 0.0 || gnorm <= target {
            return Ok(LbfgsOutcome {
                x,
                value,
                gradient: grad,
                gradient_norm: gnorm,
                iterations,
                converged: true,
                history,
            });
        }
        if iterations >= opts.max_iter {
            return Ok(LbfgsOutcome {
                x,
                value,
                gradient: grad,
                gradient_norm: gnorm,
                iterations,
                converged: false,
                history,
            });
        }

        // Two-loop recursion.
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            pairs.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }

        let mut step = if pairs.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            match f(&trial) {
                Ok((v, g)) if v.is_finite() && v <= value + opts.armijo * step * slope => {
                    accepted = Some((trial, v, g));
                    break;
                }
                Ok(_) | Err(crate::error::Error::BlowUp { .. }) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((xn, vn, gn)) = accepted else {
            // No decrease representable at this precision.
            return Ok(LbfgsOutcome {
                x,
                value,
                gradient: grad,
                gradient_norm: gnorm,
                iterations,
                converged: false,
                history,
            });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        } else {
            // Negative curvature along the step: the stored model is stale.
            pairs.clear();
        }
        x = xn;
        value = vn;
        grad = gn;
        history.push(value);
        iterations += 1;
    }
}
