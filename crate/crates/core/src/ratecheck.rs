//! Numerical check of the unwrapped ADMM convergence bounds.
//!
//! A tightly converged reference run supplies `(x*, λ*)`. A second run from
//! zero then logs, per iteration `k`,
//! `‖yᵏ − yᵏ⁻¹‖² + ‖Dxᵏ − yᵏ‖² ≤ R/k` and, for differentiable losses,
//! `‖Dᵀ∇f(Dxᵏ)‖² ≤ (L + τ)²·ρ(DᵀD)·R/k`, where
//! `R = ‖y⁰ − Dx*‖² + ‖λ⁰ − λ*‖²`.

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm_sq};
use crate::problem::{ProblemSpec, SolverConfig};
use crate::record::{ConvergenceRecord, Status};
use crate::unwrapped::{unwrapped_admm_with, IterateState, UnwrappedOptions};

#[derive(Debug, Clone)]
pub struct RateCheckOptions {
    /// Multiplier on the right-hand side of both bounds.
    pub slack: f64,
    /// Tolerances of the reference run.
    pub reference_eps: f64,
    pub reference_max_iter: usize,
    /// Iterations logged in the checked run.
    pub iterations: usize,
    /// Check the gradient bound (needs a differentiable loss).
    pub gradient: bool,
}

impl Default for RateCheckOptions {
    fn default() -> Self {
        Self {
            slack: 1.05,
            reference_eps: 1e-12,
            reference_max_iter: 100_000,
            iterations: 500,
            gradient: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    pub holds: bool,
    /// `max_k lhs_k·k / (C·R)`.
    pub max_ratio: f64,
    pub worst_k: usize,
    pub checked: usize,
}

impl BoundReport {
    fn from_terms(
        name: &'static str,
        terms: impl Iterator<Item = (usize, f64)>,
        scale: f64,
        slack: f64,
    ) -> Self {
        let mut max_ratio = 0.0;
        let mut worst_k = 0;
        let mut checked = 0;
        for (k, lhs) in terms {
            let ratio = if scale > 0.0 {
                lhs * k as f64 / scale
            } else if lhs > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if ratio > max_ratio || checked == 0 {
                max_ratio = ratio;
                worst_k = k;
            }
            checked += 1;
        }
        Self {
            name,
            holds: checked > 0 && max_ratio <= slack,
            max_ratio,
            worst_k,
            checked,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{}: {} (max ratio {:.4} at k = {}, {} iterations)",
            self.name,
            if self.holds { "holds" } else { "violated" },
            self.max_ratio,
            self.worst_k,
            self.checked
        )
    }
}

#[derive(Debug, Clone)]
pub struct RateCheckReport {
    /// `‖y⁰ − Dx*‖² + ‖λ⁰ − λ*‖²`.
    pub initial_distance: f64,
    pub tau: f64,
    pub rho: Option<f64>,
    pub loss_lipschitz: Option<f64>,
    pub bound_constant: Option<f64>,
    pub reference_status: Status,
    pub iterate_bound: BoundReport,
    pub gradient: Option<BoundReport>,
    pub record: ConvergenceRecord,
}

impl RateCheckReport {
    pub fn passed(&self) -> bool {
        self.iterate_bound.holds && self.gradient.as_ref().is_none_or(|g| g.holds)
    }
}

pub fn ratecheck(
    problem: &ProblemSpec,
    cfg: &SolverConfig,
    opts: &RateCheckOptions,
) -> Result<RateCheckReport> {
    if !(opts.slack > 0.0) || opts.iterations == 0 {
        return Err(Error::param(
            "ratecheck needs slack > 0 and at least one iteration",
        ));
    }
    if opts.gradient && (!problem.kind.is_smooth() || problem.l1 > 0.0 || problem.augmented) {
        return Err(Error::Unsupported(format!(
            "gradient bound for the non-differentiable {} objective",
            problem.kind
        )));
    }
    let reference = unwrapped_admm_with(
        problem,
        &SolverConfig {
            eps_abs: opts.reference_eps,
            eps_rel: opts.reference_eps,
            max_iter: opts.reference_max_iter,
            ..cfg.clone()
        },
        &UnwrappedOptions::default(),
    )?;
    if reference.record.meta.status != Status::Converged {
        log::warn!("ratecheck: reference run stopped at max_iter; bounds use its last iterate");
    }
    let solved = &reference.solved;
    let zero = IterateState::zeros(solved);
    let mut r0 = 0.0;
    for (i, b) in solved.blocks.iter().enumerate() {
        let dx = b.matrix.apply(&reference.x, false)?;
        r0 += dist_sq(&zero.y[i], &dx) + norm_sq(&reference.state.lambda[i]);
    }

    let run = unwrapped_admm_with(
        solved,
        &SolverConfig {
            eps_abs: 1e-300,
            eps_rel: 1e-300,
            max_iter: opts.iterations,
            ..cfg.clone()
        },
        &UnwrappedOptions::default(),
    )?;
    let rows = &run.record.rows;
    let iterate_bound = BoundReport::from_terms(
        "iterate-change bound",
        rows.iter().map(|r| {
            (
                r.k,
                r.y_change_sq.unwrap_or(0.0) + r.constraint_sq.unwrap_or(0.0),
            )
        }),
        r0,
        opts.slack,
    );
    let meta = &run.record.meta;
    let gradient = if opts.gradient {
        let c = meta
            .bound_constant
            .ok_or(Error::param("bound constant unavailable"))?;
        Some(BoundReport::from_terms(
            "gradient bound",
            rows.iter()
                .map(|r| (r.k, r.grad_norm_sq.unwrap_or(f64::INFINITY))),
            c * r0,
            opts.slack,
        ))
    } else {
        None
    };
    Ok(RateCheckReport {
        initial_distance: r0,
        tau: run.tau,
        rho: meta.rho,
        loss_lipschitz: meta.loss_lipschitz,
        bound_constant: meta.bound_constant,
        reference_status: reference.record.meta.status,
        iterate_bound,
        gradient,
        record: run.record,
    })
}
