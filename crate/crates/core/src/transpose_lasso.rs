//! Lasso by one-shot transpose reduction: the workers send `DᵢᵀDᵢ`, `Dᵢᵀbᵢ`
//! and `‖bᵢ‖²` once, and the whole solve then runs on the driver.

use std::time::Instant;

use crate::cluster::Cluster;
use crate::error::{Error, Result};
use crate::inner::{fbs_solve, FbsOptions, QuadraticOracle};
use crate::linalg::{dot, gram_accumulate, DenseMatrix, GramContribution};
use crate::problem::{Layout, ProblemKind, ProblemSpec, SolverConfig};
use crate::prox::SeparableProx;
use crate::record::{ConvergenceRecord, IterRow, RunMeta, SolverKind, Status};

/// What the lasso objective can be evaluated from.
#[derive(Debug, Clone, Copy)]
pub enum LassoView<'a> {
    Direct {
        shards: &'a [DenseMatrix],
        targets: &'a [Vec<f64>],
    },
    /// `DᵀD`, `Dᵀb` and `‖b‖²`.
    Gram(&'a GramContribution),
}

/// `μ‖x‖₁ + ½‖Dx − b‖²`, either directly or through the expansion
/// `½xᵀDᵀDx − xᵀDᵀb + ½‖b‖²`.
pub fn lasso_objective(view: LassoView<'_>, x: &[f64], mu: f64) -> Result<f64> {
    let l1 = mu * x.iter().map(|v| v.abs()).sum::<f64>();
    let fit = match view {
        LassoView::Direct { shards, targets } => {
            Error::check_len("lasso targets per shard", shards.len(), targets.len())?;
            let mut s = 0.0;
            for (d, t) in shards.iter().zip(targets) {
                Error::check_len("lasso targets", d.rows(), t.len())?;
                let r = d.apply(x, false)?;
                s += r.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            0.5 * s
        }
        LassoView::Gram(g) => {
            let rhs = g
                .rhs
                .as_ref()
                .ok_or(Error::param("Gram view without Dᵀb"))?;
            let bsq = g.target_sq.ok_or(Error::param("Gram view without ‖b‖²"))?;
            Error::check_len("lasso point", g.dim(), x.len())?;
            let gx = g.gram.apply(x, false)?;
            0.5 * dot(x, &gx) - dot(x, rhs) + 0.5 * bsq
        }
    };
    Ok(l1 + fit)
}

/// Largest per-coordinate violation of `0 ∈ μ∂‖x‖₁ + DᵀDx − Dᵀb`.
pub fn lasso_optimality_violation(agg: &GramContribution, x: &[f64], mu: f64) -> Result<f64> {
    let rhs = agg
        .rhs
        .as_ref()
        .ok_or(Error::param("optimality check needs Dᵀb"))?;
    let gx = agg.gram.apply(x, false)?;
    Ok(x.iter()
        .zip(gx.iter().zip(rhs))
        .map(|(&xj, (g, c))| {
            let grad = g - c;
            if xj == 0.0 {
                (grad.abs() - mu).max(0.0)
            } else {
                (grad + mu * xj.signum()).abs()
            }
        })
        .fold(0.0, f64::max))
}

/// Ordered sum of Gram contributions, without factoring.
pub fn sum_contributions(parts: &[GramContribution]) -> Result<GramContribution> {
    let first = parts.first().ok_or(Error::Empty("Gram contributions"))?;
    let n = first.dim();
    let mut gram = vec![0.0; n * n];
    let mut rhs = first.rhs.as_ref().map(|_| vec![0.0; n]);
    let mut target_sq = first.target_sq.map(|_| 0.0);
    for p in parts {
        Error::check_len("Gram contribution dimension", n, p.dim())?;
        for (a, v) in gram.iter_mut().zip(p.gram.values()) {
            *a += v;
        }
        if let (Some(acc), Some(r)) = (rhs.as_mut(), p.rhs.as_ref()) {
            for (a, v) in acc.iter_mut().zip(r) {
                *a += v;
            }
        }
        if let (Some(acc), Some(t)) = (target_sq.as_mut(), p.target_sq) {
            *acc += t;
        }
    }
    Ok(GramContribution {
        gram: DenseMatrix::new(n, n, gram)?,
        rhs,
        target_sq,
    })
}

#[derive(Debug, Clone)]
pub struct TransposeLassoOutcome {
    pub x: Vec<f64>,
    pub record: ConvergenceRecord,
    /// The aggregated `DᵀD`, `Dᵀb`, `‖b‖²`.
    pub aggregate: GramContribution,
    /// Optimality violation at exit.
    pub violation: f64,
}

/// Forward-backward iterations run up to `cfg.max_iter` with tolerance
/// `cfg.inner_tol`.
pub fn transpose_lasso(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<TransposeLassoOutcome> {
    cfg.validate()?;
    problem.validate()?;
    if problem.layout != Layout::Rows
        || !matches!(problem.kind, ProblemKind::Lasso | ProblemKind::LeastSquares)
    {
        return Err(Error::Unsupported(format!(
            "transpose lasso for {}",
            problem.kind
        )));
    }
    let mu = problem.l1;
    let blocks: Vec<_> = problem.loss_blocks_iter().cloned().collect();
    let n = problem.n();
    let mut cluster = Cluster::spawn_with_threads(
        blocks,
        vec![(); problem.loss_blocks_iter().count()],
        cfg.threads,
    )?;
    let start = Instant::now();

    let parts = cluster.all_execute(|_, b, _| {
        let t = b
            .targets()
            .ok_or(Error::param("lasso block without targets"))?;
        gram_accumulate(&b.matrix, Some(&t))
    })?;
    let parts = cluster.gather(parts)?;
    let agg = sum_contributions(&parts)?;
    let setup = cluster.stats();
    let setup_seconds = start.elapsed().as_secs_f64();

    let rhs = agg.rhs.clone().ok_or(Error::param("missing Dᵀb"))?;
    let oracle = QuadraticOracle {
        gram: &agg.gram,
        linear: &rhs,
        constant: 0.5 * agg.target_sq.unwrap_or(0.0),
    };
    let opts = FbsOptions {
        tol: cfg.inner_tol,
        max_iter: cfg.max_iter,
        ..Default::default()
    };
    let out = fbs_solve(&oracle, &SeparableProx::L1 { mu }, &vec![0.0; n], &opts)?;

    let mut meta = RunMeta::new(
        SolverKind::TransposeLasso,
        problem.kind,
        problem.m(),
        n,
        cluster.n_workers(),
        0.0,
        cfg.seed,
    );
    meta.setup_bytes_up = setup.bytes_up;
    meta.setup_bytes_down = setup.bytes_down;
    meta.status = if out.converged {
        Status::Converged
    } else {
        Status::MaxIter
    };
    let mut record = ConvergenceRecord::new(meta);
    let mut prev = 0.0;
    for (i, ((obj, res), t)) in out
        .objective
        .iter()
        .zip(&out.residuals)
        .zip(&out.elapsed)
        .enumerate()
    {
        record.rows.push(IterRow {
            k: i + 1,
            wall_seconds: setup_seconds + t,
            compute_seconds: t - prev,
            barrier_wait_seconds: 0.0,
            objective: *obj,
            primal_residual: *res,
            dual_residual: 0.0,
            eps_primal: cfg.inner_tol,
            eps_dual: cfg.inner_tol,
            grad_norm_sq: None,
            y_change_sq: None,
            constraint_sq: None,
            bytes_up: 0,
            bytes_down: 0,
            diag_bytes_up: 0,
            diag_bytes_down: 0,
            inner_iterations: 0,
        });
        prev = *t;
    }
    let violation = lasso_optimality_violation(&agg, &out.x, mu)?;
    Ok(TransposeLassoOutcome {
        x: out.x,
        record,
        aggregate: agg,
        violation,
    })
}
