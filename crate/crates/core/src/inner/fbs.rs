use super::SmoothOracle;
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, dot, norm};
use crate::prox::SeparableProx;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// Constant step, which must not exceed `1/L(∇f)`.
    Fixed(f64),
    /// Start from `1/L̂` (or 1 when no estimate exists) and halve until the
    /// quadratic upper bound holds.
    Backtracking,
}

#[derive(Debug, Clone)]
pub struct FbsOptions {
    pub step: StepPolicy,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FbsOptions {
    fn default() -> Self {
        Self {
            step: StepPolicy::Backtracking,
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FbsOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Composite objective after each iteration.
    pub objective: Vec<f64>,
    /// Gradient-mapping norm after each iteration.
    pub residuals: Vec<f64>,
    /// Seconds since the call started, after each iteration.
    pub elapsed: Vec<f64>,
    /// Gradient-mapping norm `‖x⁺ − x‖/t` at the last iteration.
    pub residual: f64,
    pub step: f64,
}

/// Forward-backward splitting for `f(x) + J(x)` with smooth `f` and
/// separable `J`.
pub fn fbs_solve(
    smooth: &dyn SmoothOracle,
    prox: &SeparableProx,
    x0: &[f64],
    opts: &FbsOptions,
) -> Result<FbsOutcome> {
    let n = smooth.dim();
    Error::check_len("fbs_solve x0", n, x0.len())?;
    if !(opts.tol > 0.0) {
        return Err(Error::param("fbs tolerance must be positive"));
    }
    let mut t = match opts.step {
        StepPolicy::Fixed(t) if t > 0.0 => t,
        StepPolicy::Fixed(t) => {
            return Err(Error::param(format!("fbs step must be positive, got {t}")))
        }
        StepPolicy::Backtracking => match smooth.lipschitz_estimate() {
            Some(l) if l > 0.0 => 1.0 / l,
            _ => 1.0,
        },
    };
    let backtrack = matches!(opts.step, StepPolicy::Backtracking);

    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut fx = smooth.value_grad(&x, &mut grad);
    let mut best = (fx + prox.value(&x), x.clone());
    let mut objective = Vec::new();
    let mut residuals = Vec::new();
    let mut elapsed = Vec::new();
    let mut residual = f64::INFINITY;
    let start = std::time::Instant::now();

    for it in 1..=opts.max_iter {
        let (x_next, f_next) = loop {
            let fwd: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - t * gi).collect();
            let cand = prox.apply(&fwd, t)?;
            let f_cand = smooth.value(&cand);
            if !backtrack {
                break (cand, f_cand);
            }
            let diff: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
            let bound = fx + dot(&grad, &diff) + dist_sq(&cand, &x) / (2.0 * t);
            if f_cand <= bound + 1e-12 * fx.abs().max(1.0) || t < 1e-20 {
                break (cand, f_cand);
            }
            t *= 0.5;
        };
        let step_norm = dist_sq(&x_next, &x).sqrt();
        residual = step_norm / t;
        let x_scale = norm(&x).max(1.0);
        x = x_next;
        fx = smooth.value_grad(&x, &mut grad);
        debug_assert!((fx - f_next).abs() <= 1e-9 * fx.abs().max(1.0));
        let obj = fx + prox.value(&x);
        objective.push(obj);
        residuals.push(residual);
        elapsed.push(start.elapsed().as_secs_f64());
        if obj <= best.0 {
            best = (obj, x.clone());
        }
        if residual <= opts.tol || step_norm <= opts.tol * x_scale {
            return Ok(FbsOutcome {
                x,
                iterations: it,
                converged: true,
                objective,
                residuals,
                elapsed,
                residual,
                step: t,
            });
        }
    }
    Ok(FbsOutcome {
        x: best.1,
        iterations: opts.max_iter,
        converged: false,
        objective,
        residuals,
        elapsed,
        residual,
        step: t,
    })
}
