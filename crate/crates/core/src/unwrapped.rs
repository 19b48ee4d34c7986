//! Unwrapped ADMM with transpose reduction.
//!
//! With the splitting `y = Dx` every x-update is a least-squares solve
//! against the aggregated Gram matrix, computed once at setup, and every
//! y-update is a separable prox evaluated on the worker that owns the rows.

use std::sync::Arc;
use std::time::Instant;

use crate::cluster::{Cluster, Payload};
use crate::error::{Error, Result};
use crate::linalg::{
    dot, gram_accumulate, gram_reduce_with_retry, norm, norm_inf, norm_sq, solve_spd,
    spectral_radius, DenseMatrix, GramSystem,
};
use crate::problem::{
    Block, BlockRole, DualInfo, Layout, ProblemKind, ProblemSpec, SolverConfig, TauRule,
};
use crate::prox::{default_logistic_table, ProxLookupTable, SeparableProx};
use crate::record::{ConvergenceRecord, IterRow, RunMeta, SolverKind, Status};

/// Stepsize used when none is configured.
pub fn default_tau(kind: ProblemKind) -> f64 {
    match kind {
        ProblemKind::LeastSquares => 0.3,
        ProblemKind::Lasso => 1.0,
        ProblemKind::Logistic | ProblemKind::SparseLogistic => 0.1,
        ProblemKind::Svm => 0.03,
        ProblemKind::DualLasso => 0.1,
    }
}

/// `x`, the per-block `yᵢ` and scaled multipliers `λᵢ`, and the iteration
/// counter.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub k: usize,
}

impl IterateState {
    pub fn zeros(problem: &ProblemSpec) -> Self {
        let rows: Vec<usize> = problem.blocks.iter().map(|b| b.matrix.rows()).collect();
        Self {
            x: vec![0.0; problem.n()],
            y: rows.iter().map(|&r| vec![0.0; r]).collect(),
            lambda: rows.iter().map(|&r| vec![0.0; r]).collect(),
            k: 0,
        }
    }

    fn check(&self, problem: &ProblemSpec) -> Result<()> {
        Error::check_len("warm x", problem.n(), self.x.len())?;
        Error::check_len("warm y blocks", problem.blocks.len(), self.y.len())?;
        Error::check_len(
            "warm lambda blocks",
            problem.blocks.len(),
            self.lambda.len(),
        )?;
        for (b, (y, l)) in problem.blocks.iter().zip(self.y.iter().zip(&self.lambda)) {
            Error::check_len("warm y", b.matrix.rows(), y.len())?;
            Error::check_len("warm lambda", b.matrix.rows(), l.len())?;
        }
        Ok(())
    }
}

/// Primal and dual residuals with their stopping thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
}

impl Residuals {
    pub fn converged(&self) -> bool {
        self.primal <= self.eps_primal && self.dual <= self.eps_dual
    }
}

/// Residuals of the split problem at iteration `k`:
/// primal `‖Dx − y‖`, dual `τ‖Dᵀ(yᵏ − yᵏ⁻¹)‖`, and thresholds
/// `√m·ε_abs + ε_rel·max(‖Dx‖, ‖y‖)` and `√n·ε_abs + ε_rel·‖τDᵀλ‖`.
/// `y_prev = None` (the first iterate) gives an infinite dual residual.
pub fn residuals(
    problem: &ProblemSpec,
    state: &IterateState,
    y_prev: Option<&[Vec<f64>]>,
    tau: f64,
    eps_abs: f64,
    eps_rel: f64,
) -> Result<Residuals> {
    state.check(problem)?;
    let n = problem.n();
    let mut r_sq = 0.0;
    let mut dx_sq = 0.0;
    let mut y_sq = 0.0;
    let mut dty = vec![0.0; n];
    let mut dtl = vec![0.0; n];
    for (i, b) in problem.blocks.iter().enumerate() {
        let u = b.matrix.apply(&state.x, false)?;
        let y = &state.y[i];
        r_sq += u.iter().zip(y).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
        dx_sq += norm_sq(&u);
        y_sq += norm_sq(y);
        if let Some(prev) = y_prev {
            let dy: Vec<f64> = y.iter().zip(&prev[i]).map(|(a, c)| a - c).collect();
            crate::linalg::axpy(1.0, &b.matrix.apply(&dy, true)?, &mut dty);
        }
        crate::linalg::axpy(1.0, &b.matrix.apply(&state.lambda[i], true)?, &mut dtl);
    }
    let m = problem.total_rows() as f64;
    Ok(Residuals {
        primal: r_sq.sqrt(),
        dual: if y_prev.is_some() {
            tau * norm(&dty)
        } else {
            f64::INFINITY
        },
        eps_primal: m.sqrt() * eps_abs + eps_rel * dx_sq.sqrt().max(y_sq.sqrt()),
        eps_dual: (n as f64).sqrt() * eps_abs + eps_rel * tau * norm(&dtl),
    })
}

/// Appends the identity block carrying `μ‖x‖₁`, so the ℓ1 term becomes one
/// more separable function of `D̂x` with `D̂ = [D; I]`.
pub fn augment_sparse(problem: &ProblemSpec, mu: f64) -> Result<ProblemSpec> {
    augment_sparse_scaled(problem, mu, 1.0)
}

/// Like [`augment_sparse`] with block `s·I` carrying `(μ/s)‖z‖₁`. Same
/// problem, different splitting.
pub fn augment_sparse_scaled(problem: &ProblemSpec, mu: f64, scale: f64) -> Result<ProblemSpec> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::param(format!("augmentation needs mu > 0, got {mu}")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::param(format!(
            "augmentation scale must be positive, got {scale}"
        )));
    }
    if problem.augmented {
        return Err(Error::param("problem is already augmented"));
    }
    if problem.layout != Layout::Rows {
        return Err(Error::Unsupported(
            "augmenting a column-sharded problem".into(),
        ));
    }
    let kind = match problem.kind {
        ProblemKind::LeastSquares | ProblemKind::Lasso => ProblemKind::Lasso,
        ProblemKind::Logistic | ProblemKind::SparseLogistic => ProblemKind::SparseLogistic,
        other => return Err(Error::Unsupported(format!("l1 augmentation of {other}"))),
    };
    let n = problem.n();
    let mut out = problem.clone();
    let mut block = DenseMatrix::identity(n);
    if scale != 1.0 {
        block = DenseMatrix::from_fn(n, n, |i, j| if i == j { scale } else { 0.0 })?;
    }
    out.blocks.push(Block::new(
        block,
        SeparableProx::L1 { mu: mu / scale },
        BlockRole::Penalty,
    )?);
    out.kind = kind;
    out.l1 = mu;
    out.augmented = true;
    Ok(out)
}

/// `sqrt(‖D‖²_F / n)` over the loss blocks.
pub fn rms_column_norm(problem: &ProblemSpec) -> f64 {
    let frob: f64 = problem
        .loss_blocks_iter()
        .map(|b| norm_sq(b.matrix.values()))
        .sum();
    let s = (frob / problem.n() as f64).sqrt();
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Turns a column-sharded lasso into its dual
/// `min ½‖α + b‖²  s.t. ‖Dᵀα‖∞ ≤ μ`, split as `D̂ = [I; Dᵀ]` with the
/// quadratic on the first block and the ball indicator on the others. Worker
/// `i` then holds `Dᵢᵀ` and contributes `DᵢDᵢᵀ` to the Gram matrix.
pub fn dualize_columns(problem: &ProblemSpec) -> Result<ProblemSpec> {
    let targets = match &problem.layout {
        Layout::Columns { targets } => targets.clone(),
        Layout::Rows => return Err(Error::Unsupported("dualizing a row-sharded problem".into())),
    };
    if problem.kind != ProblemKind::Lasso {
        return Err(Error::Unsupported(format!(
            "column dual of {}",
            problem.kind
        )));
    }
    let mu = problem.l1;
    let m = targets.len();
    let mut blocks = vec![Block::new(
        DenseMatrix::identity(m),
        SeparableProx::Quadratic { b: targets.clone() },
        BlockRole::Loss,
    )?];
    let mut col_sizes = Vec::new();
    for b in &problem.blocks {
        col_sizes.push(b.matrix.cols());
        blocks.push(Block::new(
            b.matrix.transpose(),
            SeparableProx::LinfBall { radius: mu },
            BlockRole::Penalty,
        )?);
    }
    Ok(ProblemSpec {
        kind: ProblemKind::DualLasso,
        blocks,
        l1: 0.0,
        augmented: false,
        ridge: false,
        bias: None,
        layout: Layout::Rows,
        dual: Some(DualInfo {
            targets,
            mu,
            col_sizes,
        }),
    })
}

/// Dual lasso solution mapped back to the primal.
#[derive(Debug, Clone, PartialEq)]
pub struct DualLassoSolution {
    pub alpha: Vec<f64>,
    /// `½‖α + b‖²`.
    pub dual_objective: f64,
    /// Primal lasso solution read off the constraint multipliers, `x = −τλ`.
    pub x: Vec<f64>,
    /// Coordinates with `|Dᵀα|ⱼ` at the bound (relative tolerance 1e-6).
    pub active_set: Vec<usize>,
    /// `max(‖Dᵀα‖∞ − μ, 0)`.
    pub constraint_violation: f64,
}

fn recover_dual(
    problem: &ProblemSpec,
    info: &DualInfo,
    state: &IterateState,
    tau: f64,
) -> Result<DualLassoSolution> {
    let alpha = state.x.clone();
    let dual_objective = problem.blocks[0].loss.finite_value(&alpha);
    let mut x = Vec::new();
    let mut dta = Vec::new();
    for (b, lam) in problem.blocks.iter().zip(&state.lambda).skip(1) {
        x.extend(lam.iter().map(|l| -tau * l));
        dta.extend(b.matrix.apply(&alpha, false)?);
    }
    let active_set = dta
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= info.mu * (1.0 - 1e-6))
        .map(|(j, _)| j)
        .collect();
    Ok(DualLassoSolution {
        alpha,
        dual_objective,
        x,
        active_set,
        constraint_violation: (norm_inf(&dta) - info.mu).max(0.0),
    })
}

/// Least-squares refit on a given support with signs fixed by `Dᵀα`:
/// solves `D_SᵀD_S x_S = D_Sᵀb − μ·s`. Exact when the support and signs are
/// the lasso's, which the thresholded active set does not guarantee.
pub fn support_refit(dual_problem: &ProblemSpec, sol: &DualLassoSolution) -> Result<Vec<f64>> {
    let info = dual_problem
        .dual
        .as_ref()
        .ok_or_else(|| Error::param("support refit needs a dualized problem"))?;
    let rows: Vec<&[f64]> = dual_problem
        .blocks
        .iter()
        .skip(1)
        .flat_map(|b| (0..b.matrix.rows()).map(move |r| b.matrix.row(r)))
        .collect();
    let s = &sol.active_set;
    let n_total: usize = info.col_sizes.iter().sum();
    let mut x = vec![0.0; n_total];
    if s.is_empty() {
        return Ok(x);
    }
    let g = DenseMatrix::from_fn(s.len(), s.len(), |i, j| dot(rows[s[i]], rows[s[j]]))?;
    let rhs: Vec<f64> = s
        .iter()
        .map(|&j| {
            let sign = -dot(rows[j], &sol.alpha).signum();
            dot(rows[j], &info.targets) - info.mu * sign
        })
        .collect();
    let sys = GramSystem::new(g, vec![0.0; s.len()])?;
    let xs = solve_spd(&sys, &rhs)?;
    for (&j, v) in s.iter().zip(xs) {
        x[j] = v;
    }
    Ok(x)
}

#[derive(Debug, Clone, Default)]
pub struct UnwrappedOptions {
    pub warm: Option<IterateState>,
    /// Keep every `xᵏ` in the outcome.
    pub keep_iterates: bool,
}

#[derive(Debug, Clone)]
pub struct UnwrappedOutcome {
    pub x: Vec<f64>,
    pub record: ConvergenceRecord,
    pub state: IterateState,
    pub tau: f64,
    pub iterates: Vec<Vec<f64>>,
    pub dual: Option<DualLassoSolution>,
    /// The problem actually solved (after any ℓ1 augmentation).
    pub solved: ProblemSpec,
}

struct Slot {
    y: Vec<f64>,
    lam: Vec<f64>,
    u: Vec<f64>,
    dy: Vec<f64>,
}

struct Diag {
    dty: Vec<f64>,
    dtl: Vec<f64>,
    grad: Option<Vec<f64>>,
    constraint_sq: f64,
    dx_sq: f64,
    y_sq: f64,
    dy_sq: f64,
    loss: f64,
}

impl Payload for Diag {
    fn byte_len(&self) -> u64 {
        self.dty.byte_len() + self.dtl.byte_len() + self.grad.byte_len() + 5 * 8
    }
}

fn sum_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

pub fn unwrapped_admm(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<UnwrappedOutcome> {
    unwrapped_admm_with(problem, cfg, &UnwrappedOptions::default())
}

/// Runs unwrapped ADMM on a simulated cluster with one worker per block.
/// Problems with an ℓ1 term are augmented first.
pub fn unwrapped_admm_with(
    problem: &ProblemSpec,
    cfg: &SolverConfig,
    opts: &UnwrappedOptions,
) -> Result<UnwrappedOutcome> {
    cfg.validate()?;
    problem.validate()?;
    if problem.layout != Layout::Rows {
        return Err(Error::Unsupported(
            "column-sharded problems must be dualized before the unwrapped solve".into(),
        ));
    }
    let problem = if problem.l1 > 0.0 && !problem.augmented {
        let scale = match cfg.augment_scale {
            Some(s) => s,
            None => rms_column_norm(problem),
        };
        augment_sparse_scaled(problem, problem.l1, scale)?
    } else {
        problem.clone()
    };
    let n = problem.n();
    let tau = cfg
        .tau
        .unwrap_or(TauRule::Fixed(default_tau(problem.kind)))
        .resolve(problem.m())?;
    let delta = 1.0 / tau;
    let smooth =
        problem.kind.is_smooth() && problem.blocks.iter().all(|b| b.role == BlockRole::Loss);

    let init = match &opts.warm {
        Some(w) => {
            w.check(&problem)?;
            w.clone()
        }
        None => IterateState::zeros(&problem),
    };
    let slots: Vec<Slot> = init
        .y
        .iter()
        .zip(&init.lambda)
        .map(|(y, l)| Slot {
            y: y.clone(),
            lam: l.clone(),
            u: vec![0.0; y.len()],
            dy: vec![0.0; y.len()],
        })
        .collect();
    let mut cluster = Cluster::spawn_with_threads(problem.blocks.clone(), slots, cfg.threads)?;
    let start = Instant::now();

    // setup: one Gram reduction, factored once
    let parts = cluster.all_execute(|_, b, _| gram_accumulate(&b.matrix, None))?;
    let parts = cluster.gather(parts)?;
    let shift: Vec<f64> = problem.ridge_weights().iter().map(|w| w / tau).collect();
    let sys = gram_reduce_with_retry(&parts, shift)?;
    let setup = cluster.stats();

    let mut meta = RunMeta::new(
        SolverKind::Unwrapped,
        problem.kind,
        problem.m(),
        n,
        cluster.n_workers(),
        tau,
        cfg.seed,
    );
    meta.setup_bytes_up = setup.bytes_up;
    meta.setup_bytes_down = setup.bytes_down;
    if smooth {
        let rho = spectral_radius(sys.gram());
        let l = problem.loss_lipschitz().unwrap_or(0.0);
        meta.rho = Some(rho);
        meta.loss_lipschitz = Some(l);
        meta.bound_constant = Some((l + tau) * (l + tau) * rho);
    }
    let mut record = ConvergenceRecord::new(meta);

    let table: Option<Arc<ProxLookupTable>> = if cfg.use_lookup
        && problem
            .blocks
            .iter()
            .any(|b| matches!(b.loss, SeparableProx::Logistic { .. }))
    {
        Some(default_logistic_table(delta)?)
    } else {
        None
    };
    let table_ref = table.as_deref();

    let mut x = init.x.clone();
    let mut iterates = Vec::new();
    let mut status = Status::MaxIter;
    let mut k = init.k;
    for _ in 0..cfg.max_iter {
        k += 1;
        let before = cluster.stats();

        let d = cluster.all_execute(|_, b, s| {
            let v: Vec<f64> = s.y.iter().zip(&s.lam).map(|(y, l)| y - l).collect();
            b.matrix.apply(&v, true)
        })?;
        let sum = cluster.reduce_sum(d)?.payload;
        x = solve_spd(&sys, &sum)?;
        cluster.broadcast(x.clone())?;

        cluster.all_execute(|ctx, b, s| {
            let u = b.matrix.apply(ctx.shared, false)?;
            let v: Vec<f64> = u.iter().zip(&s.lam).map(|(a, l)| a + l).collect();
            let y_new = b.loss.apply_with(&v, delta, table_ref)?;
            for j in 0..u.len() {
                s.dy[j] = y_new[j] - s.y[j];
                s.lam[j] += u[j] - y_new[j];
            }
            s.y = y_new;
            s.u = u;
            Ok(())
        })?;

        let diags = cluster.all_execute_diagnostic(|_, b, s| {
            let grad = if smooth {
                let g = b
                    .loss
                    .gradient(&s.u)
                    .ok_or(Error::param("loss is not differentiable"))?;
                Some(b.matrix.apply(&g, true)?)
            } else {
                None
            };
            Ok(Diag {
                dty: b.matrix.apply(&s.dy, true)?,
                dtl: b.matrix.apply(&s.lam, true)?,
                grad,
                constraint_sq: s.u.iter().zip(&s.y).map(|(a, c)| (a - c) * (a - c)).sum(),
                dx_sq: norm_sq(&s.u),
                y_sq: norm_sq(&s.y),
                dy_sq: norm_sq(&s.dy),
                loss: if b.role == BlockRole::Loss {
                    b.loss.finite_value(&s.u)
                } else {
                    0.0
                },
            })
        })?;
        let diags = cluster.gather_diagnostic(diags)?;

        let mut dty = vec![0.0; n];
        let mut dtl = vec![0.0; n];
        let mut grad = vec![0.0; n];
        let (mut c_sq, mut dx_sq, mut y_sq, mut dy_sq, mut loss) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for dg in &diags {
            sum_into(&mut dty, &dg.dty);
            sum_into(&mut dtl, &dg.dtl);
            if let Some(g) = &dg.grad {
                sum_into(&mut grad, g);
            }
            c_sq += dg.constraint_sq;
            dx_sq += dg.dx_sq;
            y_sq += dg.y_sq;
            dy_sq += dg.dy_sq;
            loss += dg.loss;
        }
        let m_rows = problem.total_rows() as f64;
        let res = Residuals {
            primal: c_sq.sqrt(),
            dual: tau * norm(&dty),
            eps_primal: m_rows.sqrt() * cfg.eps_abs + cfg.eps_rel * dx_sq.sqrt().max(y_sq.sqrt()),
            eps_dual: (n as f64).sqrt() * cfg.eps_abs + cfg.eps_rel * tau * norm(&dtl),
        };

        let step = cluster.stats().since(&before);
        record.rows.push(IterRow {
            k,
            wall_seconds: start.elapsed().as_secs_f64(),
            compute_seconds: step.compute_seconds,
            barrier_wait_seconds: step.barrier_wait_seconds,
            objective: loss + problem.regularizer(&x),
            primal_residual: res.primal,
            dual_residual: res.dual,
            eps_primal: res.eps_primal,
            eps_dual: res.eps_dual,
            grad_norm_sq: smooth.then(|| norm_sq(&grad)),
            y_change_sq: Some(dy_sq),
            constraint_sq: Some(c_sq),
            bytes_up: step.bytes_up,
            bytes_down: step.bytes_down,
            diag_bytes_up: step.diag_bytes_up,
            diag_bytes_down: step.diag_bytes_down,
            inner_iterations: 0,
        });
        if opts.keep_iterates {
            iterates.push(x.clone());
        }
        if !res.primal.is_finite() || !res.dual.is_finite() {
            return Err(Error::param(format!("residuals diverged at iteration {k}")));
        }
        if res.converged() {
            status = Status::Converged;
            break;
        }
    }
    record.meta.status = status;

    let slots = cluster.into_states();
    let state = IterateState {
        x: x.clone(),
        y: slots.iter().map(|s| s.y.clone()).collect(),
        lambda: slots.iter().map(|s| s.lam.clone()).collect(),
        k,
    };
    let dual = match &problem.dual {
        Some(info) => Some(recover_dual(&problem, info, &state, tau)?),
        None => None,
    };
    Ok(UnwrappedOutcome {
        x,
        record,
        state,
        tau,
        iterates,
        dual,
        solved: problem,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gram_reduce;
    use crate::testutil::{gaussian_matrix, gaussian_vec, random_labels};

    fn split_rows(d: &DenseMatrix, t: &[f64], parts: usize) -> (Vec<DenseMatrix>, Vec<Vec<f64>>) {
        let m = d.rows();
        let mut mats = Vec::new();
        let mut ts = Vec::new();
        for p in 0..parts {
            let (a, b) = (p * m / parts, (p + 1) * m / parts);
            mats.push(d.row_block(a, b));
            ts.push(t[a..b].to_vec());
        }
        (mats, ts)
    }

    fn tight() -> SolverConfig {
        SolverConfig {
            eps_abs: 1e-10,
            eps_rel: 1e-10,
            max_iter: 20_000,
            ..Default::default()
        }
    }

    #[test]
    fn least_squares_reaches_normal_equations() {
        let d = gaussian_matrix(60, 5, 1);
        let t = gaussian_vec(60, 2);
        let c = gram_accumulate(&d, Some(&t)).unwrap();
        let x_ne = solve_spd(
            &gram_reduce(std::slice::from_ref(&c), 0.0).unwrap(),
            c.rhs.as_ref().unwrap(),
        )
        .unwrap();
        let (mats, ts) = split_rows(&d, &t, 3);
        let p = ProblemSpec::least_squares(mats, ts).unwrap();
        let out = unwrapped_admm(&p, &tight()).unwrap();
        assert_eq!(out.record.meta.status, Status::Converged);
        for (a, b) in out.x.iter().zip(&x_ne) {
            assert!((a - b).abs() <= 1e-6 * norm(&x_ne));
        }
    }

    #[test]
    fn shard_count_does_not_change_iterates() {
        let d = gaussian_matrix(40, 4, 3);
        let l = random_labels(40, 4);
        let cfg = SolverConfig {
            max_iter: 30,
            ..tight()
        };
        let opts = UnwrappedOptions {
            keep_iterates: true,
            ..Default::default()
        };
        let one = unwrapped_admm_with(
            &ProblemSpec::logistic(vec![d.clone()], vec![l.clone()]).unwrap(),
            &cfg,
            &opts,
        )
        .unwrap();
        let (mats, ls) = split_rows(&d, &l, 4);
        let four =
            unwrapped_admm_with(&ProblemSpec::logistic(mats, ls).unwrap(), &cfg, &opts).unwrap();
        for (a, b) in one.iterates.iter().zip(&four.iterates) {
            for (p, q) in a.iter().zip(b) {
                assert!((p - q).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn lambda_identity_and_residual_function() {
        let d = gaussian_matrix(30, 3, 5);
        let t = gaussian_vec(30, 6);
        let p = ProblemSpec::least_squares(vec![d.clone()], vec![t]).unwrap();
        let cfg = SolverConfig {
            max_iter: 1,
            ..Default::default()
        };
        let one = unwrapped_admm(&p, &cfg).unwrap();
        let two = unwrapped_admm_with(
            &p,
            &cfg,
            &UnwrappedOptions {
                warm: Some(one.state.clone()),
                ..Default::default()
            },
        )
        .unwrap();
        // λ¹ = λ⁰ + Dx¹ − y¹ with λ⁰ = 0
        let u = d.apply(&two.state.x, false).unwrap();
        for j in 0..30 {
            let expect = one.state.lambda[0][j] + (u[j] - two.state.y[0][j]);
            assert_eq!(two.state.lambda[0][j], expect);
        }
        let r = residuals(&p, &two.state, Some(&one.state.y), two.tau, 1e-6, 1e-3).unwrap();
        let row = &two.record.rows[0];
        assert!((r.primal - row.primal_residual).abs() <= 1e-12 * r.primal.max(1.0));
        assert!((r.dual - row.dual_residual).abs() <= 1e-10 * r.dual.max(1.0));
        assert!(r.primal > 0.0 && r.dual > 0.0);
        let first = residuals(&p, &one.state, None, one.tau, 1e-6, 1e-3).unwrap();
        assert!(first.dual.is_infinite());
    }

    #[test]
    fn residuals_vanish_at_fixed_point() {
        let d = gaussian_matrix(20, 3, 7);
        let x = gaussian_vec(3, 8);
        let t = d.apply(&x, false).unwrap();
        let p = ProblemSpec::least_squares(vec![d], vec![t.clone()]).unwrap();
        // y = Dx = t, λ = ∇f(y)/τ = 0
        let state = IterateState {
            x,
            y: vec![t.clone()],
            lambda: vec![vec![0.0; 20]],
            k: 5,
        };
        let r = residuals(&p, &state, Some(&[t]), 1.0, 1e-6, 1e-3).unwrap();
        assert!(r.primal < 1e-12 && r.dual == 0.0);
    }

    #[test]
    fn svm_x_update_is_stationary() {
        let d = gaussian_matrix(30, 4, 9);
        let l = random_labels(30, 10);
        let p = ProblemSpec::svm(vec![d.clone()], vec![l], 1.0, None).unwrap();
        let cfg = SolverConfig {
            max_iter: 3,
            ..Default::default()
        };
        let a = unwrapped_admm(&p, &cfg).unwrap();
        // one more iteration from the stored state: x solves (DᵀD + I/τ)x = Dᵀ(y − λ)
        let b = unwrapped_admm_with(
            &p,
            &SolverConfig {
                max_iter: 1,
                ..Default::default()
            },
            &UnwrappedOptions {
                warm: Some(a.state.clone()),
                ..Default::default()
            },
        )
        .unwrap();
        let x = &b.state.x;
        let dx = d.apply(x, false).unwrap();
        let r: Vec<f64> = (0..30)
            .map(|j| dx[j] - a.state.y[0][j] + a.state.lambda[0][j])
            .collect();
        let dtr = d.apply(&r, true).unwrap();
        for i in 0..4 {
            assert!((x[i] + b.tau * dtr[i]).abs() <= 1e-8);
        }
    }

    #[test]
    fn augmentation_adds_identity() {
        let d = gaussian_matrix(10, 3, 11);
        let p = ProblemSpec::lasso(vec![d], vec![gaussian_vec(10, 12)], 0.1).unwrap();
        let a = augment_sparse(&p, 0.1).unwrap();
        assert_eq!(a.total_rows(), 13);
        let ga = gram_accumulate(&a.blocks[1].matrix, None).unwrap();
        assert_eq!(ga.gram, DenseMatrix::identity(3));
        assert!(augment_sparse(&a, 0.1).is_err());
        assert!(augment_sparse(&p, 0.0).is_err());
    }

    #[test]
    fn heavy_penalty_zeroes_lasso() {
        let d = gaussian_matrix(30, 4, 13);
        let t = gaussian_vec(30, 14);
        let p = ProblemSpec::lasso(vec![d], vec![t], 1e6).unwrap();
        let out = unwrapped_admm(&p, &tight()).unwrap();
        assert!(norm_inf(&out.x) < 1e-8);
    }

    #[test]
    fn dual_of_identity_is_negative_targets() {
        let b = vec![0.3, -0.2, 0.1];
        let p =
            ProblemSpec::lasso_columns(vec![DenseMatrix::identity(3)], b.clone(), 10.0).unwrap();
        let dual = dualize_columns(&p).unwrap();
        let out = unwrapped_admm(&dual, &tight()).unwrap();
        let sol = out.dual.unwrap();
        for (a, t) in sol.alpha.iter().zip(&b) {
            assert!((a + t).abs() < 1e-6);
        }
        assert!(dualize_columns(
            &ProblemSpec::least_squares(vec![DenseMatrix::identity(2)], vec![vec![0.0; 2]])
                .unwrap()
        )
        .is_err());
    }
}
