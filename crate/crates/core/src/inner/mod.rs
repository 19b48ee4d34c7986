//! Single-node iterative solvers used inside the ADMM families: proximal
//! gradient for the reduced lasso, L-BFGS for smooth consensus sub-problems,
//! and dual coordinate descent for the proximal SVM sub-problem.

mod fbs;
mod lbfgs;
mod svm_dual;

pub use fbs::{fbs_solve, FbsOptions, FbsOutcome, StepPolicy};
pub use lbfgs::{lbfgs_solve, LbfgsOptions, LbfgsOutcome};
pub use svm_dual::{svm_dual_cd, svm_dual_objective, DualSvmState, SvmDualOptions, SvmDualOutcome};

use crate::linalg::{apply, dot, norm, DenseMatrix};
use crate::prox::{log1p_exp, sigmoid};

/// A smooth convex function with value and gradient.
pub trait SmoothOracle {
    fn dim(&self) -> usize;

    /// Writes `∇f(x)` into `grad` and returns `f(x)`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.value_grad(x, &mut g)
    }

    /// Cheap estimate of the gradient's Lipschitz constant, if available.
    fn lipschitz_estimate(&self) -> Option<f64> {
        None
    }
}

/// `½xᵀGx − cᵀx + k`.
#[derive(Debug, Clone)]
pub struct QuadraticOracle<'a> {
    pub gram: &'a DenseMatrix,
    pub linear: &'a [f64],
    pub constant: f64,
}

impl SmoothOracle for QuadraticOracle<'_> {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let gx = apply(self.gram, x, false).expect("gram dimension");
        for ((g, a), c) in grad.iter_mut().zip(&gx).zip(self.linear) {
            *g = a - c;
        }
        0.5 * dot(x, &gx) - dot(self.linear, x) + self.constant
    }

    fn lipschitz_estimate(&self) -> Option<f64> {
        Some(crate::linalg::power_iteration(self.gram, 10, 0.0))
    }
}

/// `Σ log(1 + exp(−lₖ dₖx)) + (τ/2)‖x − v‖²`, the proximal term optional.
#[derive(Debug, Clone)]
pub struct LogisticOracle<'a> {
    pub data: &'a DenseMatrix,
    pub labels: &'a [f64],
    pub proximal: Option<(f64, &'a [f64])>,
}

impl SmoothOracle for LogisticOracle<'_> {
    fn dim(&self) -> usize {
        self.data.cols()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for (k, &l) in self.labels.iter().enumerate() {
            let row = self.data.row(k);
            let t = l * dot(row, x);
            value += log1p_exp(-t);
            let coef = -l * sigmoid(-t);
            crate::linalg::axpy(coef, row, grad);
        }
        if let Some((tau, v)) = self.proximal {
            let mut sq = 0.0;
            for ((g, xi), vi) in grad.iter_mut().zip(x).zip(v) {
                let d = xi - vi;
                *g += tau * d;
                sq += d * d;
            }
            value += 0.5 * tau * sq;
        }
        value
    }

    fn lipschitz_estimate(&self) -> Option<f64> {
        // 10 power steps on DᵀD through D and Dᵀ products
        let n = self.data.cols();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut est = 0.0;
        for _ in 0..10 {
            let dv = apply(self.data, &v, false).ok()?;
            let w = apply(self.data, &dv, true).ok()?;
            est = dot(&v, &w);
            let nw = norm(&w);
            if nw == 0.0 {
                break;
            }
            v = w.into_iter().map(|x| x / nw).collect();
        }
        Some(0.25 * est + self.proximal.map_or(0.0, |(tau, _)| tau))
    }
}
