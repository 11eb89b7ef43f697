//! Unconstrained quasi-Newton minimization with finite-difference
//! derivatives.
//!
//! The objective returns `None` where it cannot be evaluated (for example a
//! failed factorization); the line search treats such points as infinitely
//! bad and backtracks.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the relative objective change of an accepted step falls
    /// below this.
    pub f_rel_tol: f64,
    /// Converged when the gradient norm is at most this.
    pub g_tol: f64,
    /// Step for central-difference gradients.
    pub fd_step: f64,
    /// Longest step (Euclidean norm) tried by the line search.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 200, f_rel_tol: 1e-8, g_tol: 1e-4, fd_step: 1e-5, max_step: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    ObjectiveTolerance,
    LineSearchFailed,
    MaxIterations,
    GradientUnavailable,
}

#[derive(Clone, Debug)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    /// `grad_norm <= g_tol` at the returned point.
    pub converged: bool,
    pub termination: Termination,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central-difference gradient. Falls back to a one-sided difference in a
/// coordinate where one of the two probes cannot be evaluated.
pub fn central_gradient<F>(f: &mut F, x: &[f64], fx: f64, h: f64) -> Option<Vec<f64>>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let mut probe = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g[i] = match (up, down) {
            (Some(u), Some(d)) => (u - d) / (2.0 * h),
            (Some(u), None) => (u - fx) / h,
            (None, Some(d)) => (fx - d) / h,
            (None, None) => return None,
        };
    }
    Some(g)
}

/// Central-difference Hessian, symmetric by construction.
pub fn central_hessian<F>(f: &mut F, x: &[f64], fx: f64, h: f64) -> Option<Vec<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let n = x.len();
    let mut hess = vec![vec![0.0; n]; n];
    let mut p = x.to_vec();
    for i in 0..n {
        p[i] = x[i] + h;
        let up = f(&p)?;
        p[i] = x[i] - h;
        let down = f(&p)?;
        p[i] = x[i];
        hess[i][i] = (up - 2.0 * fx + down) / (h * h);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?) / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Some(hess)
}

/// Minimizes `f` from `x0` by BFGS with an Armijo backtracking line search.
///
/// Returns `None` if `f` cannot be evaluated at `x0`.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Option<BfgsOutcome>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x)?;
    let mut history = vec![fx];
    let Some(mut g) = central_gradient(&mut f, &x, fx, opts.fd_step) else {
        return Some(finish(x, fx, vec![f64::NAN; n], 0, Termination::GradientUnavailable, history, opts));
    };
    // Inverse Hessian approximation, row-major.
    let mut hinv = identity(n);
    let mut first_update = true;

    for iter in 0..opts.max_iter {
        if norm(&g) <= opts.g_tol {
            return Some(finish(x, fx, g, iter, Termination::GradientTolerance, history, opts));
        }
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            // Not a descent direction: restart from steepest descent.
            hinv = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        let len = norm(&dir);
        if len > opts.max_step {
            let s = opts.max_step / len;
            dir.iter_mut().for_each(|d| *d *= s);
            slope *= s;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, d)| xi + alpha * d).collect();
            if let Some(ft) = f(&trial) {
                if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return Some(finish(x, fx, g, iter, Termination::LineSearchFailed, history, opts));
        };
        let Some(g_new) = central_gradient(&mut f, &x_new, f_new, opts.fd_step) else {
            return Some(finish(x_new, f_new, vec![f64::NAN; n], iter + 1, Termination::GradientUnavailable, history, opts));
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if first_update {
                let scale = sy / dot(&y, &y);
                hinv.iter_mut().for_each(|v| *v *= scale);
                first_update = false;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }

        let rel_change = (fx - f_new).abs() / fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
        if norm(&g) <= opts.g_tol {
            return Some(finish(x, fx, g, iter + 1, Termination::GradientTolerance, history, opts));
        }
        if rel_change <= opts.f_rel_tol {
            return Some(finish(x, fx, g, iter + 1, Termination::ObjectiveTolerance, history, opts));
        }
    }
    Some(finish(x, fx, g, opts.max_iter, Termination::MaxIterations, history, opts))
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    (0..n).for_each(|i| m[i * n + i] = 1.0);
    m
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

fn finish(
    x: Vec<f64>,
    f: f64,
    grad: Vec<f64>,
    iterations: usize,
    termination: Termination,
    history: Vec<f64>,
    opts: &BfgsOptions,
) -> BfgsOutcome {
    let grad_norm = norm(&grad);
    BfgsOutcome { x, f, grad, grad_norm, iterations, converged: grad_norm <= opts.g_tol, termination, history }
}
