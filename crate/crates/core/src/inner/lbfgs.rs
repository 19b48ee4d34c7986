use std::collections::VecDeque;

use super::SmoothOracle;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm_inf};

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    /// Stop when `‖∇f‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_inf: f64,
    /// Iterations where the line search failed along the quasi-Newton
    /// direction and a steepest-descent step was taken instead.
    pub fallback_steps: usize,
}

const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 0.9;
const MAX_HALVINGS: usize = 60;
/// Relative objective noise level below which the approximate Wolfe test is used.
const F_NOISE: f64 = 1e-12;

/// Backtracking search along `dir`. A step is accepted on the Armijo
/// condition, or, once the decrease is below the objective's rounding level,
/// on the approximate Wolfe conditions (which only use the directional
/// derivative). On success `trial`/`g_trial` hold the new point and gradient.
#[allow(clippy::too_many_arguments)]
fn line_search(
    f: &dyn SmoothOracle,
    x: &[f64],
    fx: f64,
    slope: f64,
    dir: &[f64],
    first: f64,
    trial: &mut Vec<f64>,
    g_trial: &mut [f64],
) -> Option<f64> {
    let noise = F_NOISE * fx.abs().max(1.0);
    let mut t = first;
    for _ in 0..MAX_HALVINGS {
        trial.clear();
        trial.extend(x.iter().zip(dir).map(|(xi, di)| xi + t * di));
        let ft = f.value_grad(trial, g_trial);
        if ft.is_finite() {
            if ft <= fx + ARMIJO * t * slope && ft < fx {
                return Some(ft);
            }
            let dslope = dot(g_trial, dir);
            if ft <= fx + noise
                && dslope >= CURVATURE * slope
                && dslope <= (2.0 * ARMIJO - 1.0) * slope
            {
                return Some(ft);
            }
        }
        t *= 0.5;
    }
    None
}

/// Limited-memory BFGS with a two-loop recursion and Armijo backtracking.
pub fn lbfgs_solve(
    smooth: &dyn SmoothOracle,
    x0: &[f64],
    opts: &LbfgsOptions,
) -> Result<LbfgsOutcome> {
    let n = smooth.dim();
    Error::check_len("lbfgs_solve x0", n, x0.len())?;
    if opts.memory == 0 {
        return Err(Error::param("lbfgs memory must be at least 1"));
    }
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = smooth.value_grad(&x, &mut g);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut fallback_steps = 0;
    let mut trial = Vec::with_capacity(n);
    let mut g_new = vec![0.0; n];

    for it in 0..opts.max_iter {
        let gi = norm_inf(&g);
        if gi <= opts.tol {
            return Ok(LbfgsOutcome {
                x,
                iterations: it,
                converged: true,
                grad_inf: gi,
                fallback_steps,
            });
        }

        // two-loop recursion: dir = −H·g
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, y, &mut q);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(a - b, s, &mut q);
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }

        let f_new = match line_search(smooth, &x, fx, slope, &dir, 1.0, &mut trial, &mut g_new) {
            Some(t) => t,
            None => {
                // steepest descent, scaled so the first trial moves at most unit distance
                fallback_steps += 1;
                pairs.clear();
                dir = g.iter().map(|v| -v).collect();
                slope = dot(&g, &dir);
                let first = 1.0 / gi.max(1.0);
                match line_search(smooth, &x, fx, slope, &dir, first, &mut trial, &mut g_new) {
                    Some(t) => t,
                    None => {
                        return Ok(LbfgsOutcome {
                            x,
                            iterations: it + 1,
                            converged: false,
                            grad_inf: gi,
                            fallback_steps,
                        })
                    }
                }
            }
        };
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
    }
    let gi = norm_inf(&g);
    Ok(LbfgsOutcome {
        x,
        iterations: opts.max_iter,
        converged: gi <= opts.tol,
        grad_inf: gi,
        fallback_steps,
    })
}
