//! Consensus ADMM baseline: every node fits its own copy `xᵢ` of the model
//! against its rows, and a central `z` enforces agreement.

use std::time::Instant;

use crate::cluster::{Cluster, Payload};
use crate::error::{Error, Result};
use crate::inner::{
    lbfgs_solve, svm_dual_cd, DualSvmState, LbfgsOptions, LogisticOracle, SvmDualOptions,
};
use crate::linalg::{gram_accumulate, norm_sq, solve_spd, GramSystem};
use crate::problem::{
    Block, Layout, ProblemKind, ProblemSpec, SolverConfig, SvmSplit, TauRule, TAU_REFERENCE_ROWS,
};
use crate::prox::{soft_threshold, SeparableProx};
use crate::record::{ConvergenceRecord, IterRow, RunMeta, SolverKind, Status};

/// Stepsize used when none is configured: proportional to the total row
/// count, with the per-loss constant tuned at the reference size.
pub fn default_tau(kind: ProblemKind) -> TauRule {
    let tau0 = match kind {
        ProblemKind::LeastSquares | ProblemKind::Lasso => 1000.0,
        ProblemKind::Logistic | ProblemKind::SparseLogistic => 100.0,
        ProblemKind::Svm | ProblemKind::DualLasso => 100.0,
    };
    TauRule::Proportional {
        m0: TAU_REFERENCE_ROWS,
        tau0,
    }
}

/// The central regularizer `g(z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CenterTerm {
    Free,
    L1 {
        mu: f64,
    },
    /// `½ Σ wⱼ zⱼ²`.
    Ridge {
        weights: Vec<f64>,
    },
}

/// `argmin_z g(z) + (Nτ/2)‖z − mean‖²`.
pub fn z_update(mean: &[f64], term: &CenterTerm, n_workers: usize, tau: f64) -> Result<Vec<f64>> {
    if n_workers == 0 {
        return Err(Error::Empty("z_update needs at least one worker"));
    }
    let nt = n_workers as f64 * tau;
    Ok(match term {
        CenterTerm::Free => mean.to_vec(),
        CenterTerm::L1 { mu } => mean.iter().map(|&m| soft_threshold(m, mu / nt)).collect(),
        CenterTerm::Ridge { weights } => {
            Error::check_len("ridge weights", mean.len(), weights.len())?;
            mean.iter()
                .zip(weights)
                .map(|(m, w)| nt / (w + nt) * m)
                .collect()
        }
    })
}

/// Per-worker `xᵢ`, `λᵢ`, and the central `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub xs: Vec<Vec<f64>>,
    pub lambdas: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct ConsensusOutcome {
    pub z: Vec<f64>,
    pub record: ConvergenceRecord,
    pub state: ConsensusState,
    pub tau: f64,
}

enum Local {
    Gram {
        sys: GramSystem,
        dtb: Vec<f64>,
    },
    Logistic,
    Svm {
        c: f64,
        reg: f64,
        warm: Option<DualSvmState>,
    },
}

struct Slot {
    x: Vec<f64>,
    lam: Vec<f64>,
    local: Option<Local>,
}

struct StepInfo {
    inner: usize,
    inexact: bool,
}

/// `xᵢ = argmin fᵢ(x) + (τ/2)‖x − v‖²`.
fn local_solve(
    b: &Block,
    slot: &mut Slot,
    v: &[f64],
    tau: f64,
    cfg: &SolverConfig,
) -> Result<StepInfo> {
    match slot
        .local
        .as_mut()
        .ok_or(Error::param("local solver not initialised"))?
    {
        Local::Gram { sys, dtb } => {
            let rhs: Vec<f64> = dtb.iter().zip(v).map(|(d, vi)| d + tau * vi).collect();
            slot.x = solve_spd(sys, &rhs)?;
            Ok(StepInfo {
                inner: 1,
                inexact: false,
            })
        }
        Local::Logistic => {
            let labels = b
                .labels()
                .ok_or(Error::param("logistic block without labels"))?;
            let oracle = LogisticOracle {
                data: &b.matrix,
                labels,
                proximal: Some((tau, v)),
            };
            let opts = LbfgsOptions {
                tol: cfg.inner_tol,
                max_iter: cfg.inner_max_iter,
                ..Default::default()
            };
            let out = lbfgs_solve(&oracle, &slot.x, &opts)?;
            slot.x = out.x;
            Ok(StepInfo {
                inner: out.iterations,
                inexact: !out.converged,
            })
        }
        Local::Svm { c, reg, warm } => {
            let labels = b
                .labels()
                .ok_or(Error::param("hinge block without labels"))?;
            let opts = SvmDualOptions {
                tol: cfg.inner_tol,
                max_passes: cfg.inner_max_iter,
                reg: *reg,
            };
            let out = svm_dual_cd(&b.matrix, labels, *c, tau, v, warm.take(), &opts)?;
            slot.x = out.w;
            *warm = Some(out.state);
            Ok(StepInfo {
                inner: out.passes,
                inexact: !out.converged,
            })
        }
    }
}

struct Diag {
    gap_sq: f64,
    x_sq: f64,
    lam_sq: f64,
    loss: f64,
}

impl Payload for Diag {
    fn byte_len(&self) -> u64 {
        4 * 8
    }
}

pub fn consensus_admm(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<ConsensusOutcome> {
    consensus_admm_with(problem, cfg, None)
}

/// Runs consensus ADMM with one worker per loss block. An ℓ1 term (carried
/// either as `problem.l1` or as an augmentation block) goes to the center.
pub fn consensus_admm_with(
    problem: &ProblemSpec,
    cfg: &SolverConfig,
    warm: Option<ConsensusState>,
) -> Result<ConsensusOutcome> {
    cfg.validate()?;
    problem.validate()?;
    if problem.layout != Layout::Rows || problem.kind == ProblemKind::DualLasso {
        return Err(Error::Unsupported(format!(
            "consensus form of {}",
            problem.kind
        )));
    }
    let blocks: Vec<Block> = problem.loss_blocks_iter().cloned().collect();
    let n = problem.n();
    let nodes = blocks.len();
    let tau = cfg
        .tau
        .unwrap_or(default_tau(problem.kind))
        .resolve(problem.m())?;

    let term = if problem.l1 > 0.0 {
        CenterTerm::L1 { mu: problem.l1 }
    } else if problem.ridge && cfg.svm_split == SvmSplit::Center {
        CenterTerm::Ridge {
            weights: problem.ridge_weights(),
        }
    } else {
        CenterTerm::Free
    };
    let svm_reg = if problem.ridge && cfg.svm_split == SvmSplit::PerNode {
        1.0
    } else {
        0.0
    };
    if svm_reg > 0.0 && problem.bias.is_some() {
        return Err(Error::Unsupported(
            "per-node SVM regularizer with an exempt bias".into(),
        ));
    }

    let init = match warm {
        Some(w) => {
            Error::check_len("warm xs", nodes, w.xs.len())?;
            Error::check_len("warm lambdas", nodes, w.lambdas.len())?;
            Error::check_len("warm z", n, w.z.len())?;
            for (x, l) in w.xs.iter().zip(&w.lambdas) {
                Error::check_len("warm x", n, x.len())?;
                Error::check_len("warm lambda", n, l.len())?;
            }
            w
        }
        None => ConsensusState {
            xs: vec![vec![0.0; n]; nodes],
            lambdas: vec![vec![0.0; n]; nodes],
            z: vec![0.0; n],
            k: 0,
        },
    };
    let slots: Vec<Slot> = init
        .xs
        .iter()
        .zip(&init.lambdas)
        .map(|(x, l)| Slot {
            x: x.clone(),
            lam: l.clone(),
            local: None,
        })
        .collect();
    let mut cluster = Cluster::spawn_with_threads(blocks, slots, cfg.threads)?;
    let start = Instant::now();

    // setup: local factorizations and the initial z
    cluster.all_execute(|_, b, s| {
        s.local = Some(match &b.loss {
            SeparableProx::Quadratic { .. } => {
                let t = b
                    .targets()
                    .ok_or(Error::param("quadratic block without targets"))?;
                let g = gram_accumulate(&b.matrix, Some(&t))?;
                let dtb = g.rhs.clone().unwrap_or_default();
                Local::Gram {
                    sys: GramSystem::new(g.gram, vec![tau; b.matrix.cols()])?,
                    dtb,
                }
            }
            SeparableProx::Logistic { .. } => Local::Logistic,
            SeparableProx::Hinge { c, .. } => Local::Svm {
                c: *c,
                reg: svm_reg,
                warm: None,
            },
            other => {
                return Err(Error::Unsupported(format!(
                    "consensus sub-problem for {other:?}"
                )))
            }
        });
        Ok(())
    })?;
    cluster.broadcast(init.z.clone())?;
    let setup = cluster.stats();

    let mut meta = RunMeta::new(
        SolverKind::Consensus,
        problem.kind,
        problem.m(),
        n,
        nodes,
        tau,
        cfg.seed,
    );
    meta.setup_bytes_up = setup.bytes_up;
    meta.setup_bytes_down = setup.bytes_down;
    let mut record = ConvergenceRecord::new(meta);

    let mut z = init.z.clone();
    let mut k = init.k;
    let mut status = Status::MaxIter;
    let mut inexact_total = 0usize;
    for _ in 0..cfg.max_iter {
        k += 1;
        let before = cluster.stats();

        let infos = cluster.all_execute(|ctx, b, s| {
            let v: Vec<f64> = ctx
                .shared
                .iter()
                .zip(&s.lam)
                .map(|(zj, l)| zj - l)
                .collect();
            let info = local_solve(b, s, &v, tau, cfg)?;
            let up: Vec<f64> = s.x.iter().zip(&s.lam).map(|(x, l)| x + l).collect();
            Ok((info, up))
        })?;
        let (infos, ups): (Vec<StepInfo>, Vec<Vec<f64>>) = infos.into_iter().unzip();
        let sum = cluster.reduce_sum(ups)?.payload;
        let mean: Vec<f64> = sum.iter().map(|s| s / nodes as f64).collect();
        let z_prev = std::mem::replace(&mut z, z_update(&mean, &term, nodes, tau)?);
        cluster.broadcast(z.clone())?;
        cluster.all_execute(|ctx, _, s| {
            for (l, (x, zj)) in s.lam.iter_mut().zip(s.x.iter().zip(ctx.shared)) {
                *l += x - zj;
            }
            Ok(())
        })?;

        let diags = cluster.all_execute_diagnostic(|ctx, b, s| {
            Ok(Diag {
                gap_sq: s
                    .x
                    .iter()
                    .zip(ctx.shared)
                    .map(|(x, zj)| (x - zj) * (x - zj))
                    .sum(),
                x_sq: norm_sq(&s.x),
                lam_sq: norm_sq(&s.lam),
                loss: b.loss.finite_value(&b.matrix.apply(ctx.shared, false)?),
            })
        })?;
        let diags = cluster.gather_diagnostic(diags)?;
        let (mut gap, mut xs, mut ls, mut loss) = (0.0, 0.0, 0.0, 0.0);
        for d in &diags {
            gap += d.gap_sq;
            xs += d.x_sq;
            ls += d.lam_sq;
            loss += d.loss;
        }
        let inexact = infos.iter().filter(|i| i.inexact).count();
        if inexact > 0 && inexact_total == 0 {
            log::warn!("consensus: inexact local solve at iteration {k}");
        }
        inexact_total += inexact;

        let nn = (n * nodes) as f64;
        let dz: f64 = z
            .iter()
            .zip(&z_prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let primal = gap.sqrt();
        let dual = tau * (nodes as f64).sqrt() * dz;
        let eps_primal = nn.sqrt() * cfg.eps_abs
            + cfg.eps_rel * xs.sqrt().max((nodes as f64).sqrt() * norm_sq(&z).sqrt());
        let eps_dual = nn.sqrt() * cfg.eps_abs + cfg.eps_rel * tau * ls.sqrt();

        let step = cluster.stats().since(&before);
        record.rows.push(IterRow {
            k,
            wall_seconds: start.elapsed().as_secs_f64(),
            compute_seconds: step.compute_seconds,
            barrier_wait_seconds: step.barrier_wait_seconds,
            objective: loss + problem.regularizer(&z),
            primal_residual: primal,
            dual_residual: dual,
            eps_primal,
            eps_dual,
            grad_norm_sq: None,
            y_change_sq: None,
            constraint_sq: None,
            bytes_up: step.bytes_up,
            bytes_down: step.bytes_down,
            diag_bytes_up: step.diag_bytes_up,
            diag_bytes_down: step.diag_bytes_down,
            inner_iterations: infos.iter().map(|i| i.inner as u64).sum(),
        });
        if !primal.is_finite() || !dual.is_finite() {
            return Err(Error::param(format!(
                "consensus residuals diverged at iteration {k}"
            )));
        }
        if primal <= eps_primal && dual <= eps_dual {
            status = Status::Converged;
            break;
        }
    }
    record.meta.status = status;
    record.meta.inexact_steps = inexact_total as u64;

    let slots = cluster.into_states();
    let state = ConsensusState {
        xs: slots.iter().map(|s| s.x.clone()).collect(),
        lambdas: slots.iter().map(|s| s.lam.clone()).collect(),
        z: z.clone(),
        k,
    };
    Ok(ConsensusOutcome {
        z,
        record,
        state,
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, gram_reduce, norm, DenseMatrix};
    use crate::problem::BlockRole;
    use crate::testutil::{gaussian_matrix, gaussian_vec, random_labels};

    fn tight(tau: f64) -> SolverConfig {
        SolverConfig {
            tau: Some(TauRule::Fixed(tau)),
            eps_abs: 1e-10,
            eps_rel: 1e-10,
            max_iter: 20_000,
            ..Default::default()
        }
    }

    #[test]
    fn single_node_least_squares_is_normal_equations() {
        let d = gaussian_matrix(50, 4, 1);
        let t = gaussian_vec(50, 2);
        let c = gram_accumulate(&d, Some(&t)).unwrap();
        let x_ne = solve_spd(
            &gram_reduce(std::slice::from_ref(&c), 0.0).unwrap(),
            c.rhs.as_ref().unwrap(),
        )
        .unwrap();
        let p = ProblemSpec::least_squares(vec![d], vec![t]).unwrap();
        let out = consensus_admm(&p, &tight(5.0)).unwrap();
        assert_eq!(out.record.meta.status, Status::Converged);
        for (a, b) in out.z.iter().zip(&x_ne) {
            assert!((a - b).abs() <= 1e-6 * norm(&x_ne));
        }
    }

    #[test]
    fn least_squares_substep_is_stationary() {
        let d = gaussian_matrix(25, 5, 3);
        let t = gaussian_vec(25, 4);
        let v = gaussian_vec(5, 5);
        let tau = 2.5;
        let b = Block::new(d.clone(), SeparableProx::least_squares(&t), BlockRole::Loss).unwrap();
        let g = gram_accumulate(&d, Some(&t)).unwrap();
        let mut slot = Slot {
            x: vec![0.0; 5],
            lam: vec![0.0; 5],
            local: Some(Local::Gram {
                sys: GramSystem::new(g.gram, vec![tau; 5]).unwrap(),
                dtb: g.rhs.unwrap(),
            }),
        };
        local_solve(&b, &mut slot, &v, tau, &SolverConfig::default()).unwrap();
        let r: Vec<f64> = d
            .apply(&slot.x, false)
            .unwrap()
            .iter()
            .zip(&t)
            .map(|(a, c)| a - c)
            .collect();
        let grad = d.apply(&r, true).unwrap();
        for j in 0..5 {
            assert!((grad[j] + tau * (slot.x[j] - v[j])).abs() <= 1e-8);
        }
    }

    #[test]
    fn z_update_cases() {
        assert_eq!(
            z_update(&[1.0, -2.0], &CenterTerm::Free, 1, 1.0).unwrap(),
            vec![1.0, -2.0]
        );
        assert_eq!(
            z_update(&[0.5, -0.3], &CenterTerm::L1 { mu: 10.0 }, 2, 1.0).unwrap(),
            vec![0.0, 0.0]
        );
        let z = z_update(
            &[3.0, 3.0],
            &CenterTerm::Ridge {
                weights: vec![1.0, 0.0],
            },
            2,
            1.0,
        )
        .unwrap();
        assert_eq!(z, vec![2.0, 3.0]);
        assert!(z_update(&[1.0], &CenterTerm::Free, 0, 1.0).is_err());
    }

    #[test]
    fn z_update_minimizes_its_objective() {
        let mean = gaussian_vec(6, 7);
        let (nodes, tau) = (3usize, 0.7);
        let nt = nodes as f64 * tau;
        let l1 = z_update(&mean, &CenterTerm::L1 { mu: 0.8 }, nodes, tau).unwrap();
        for (z, m) in l1.iter().zip(&mean) {
            // 0 ∈ μ∂|z| + Nτ(z − m)
            let g = nt * (z - m);
            if *z == 0.0 {
                assert!(g.abs() <= 0.8 + 1e-12);
            } else {
                assert!((g + 0.8 * z.signum()).abs() <= 1e-12);
            }
        }
        let w = vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let r = z_update(&mean, &CenterTerm::Ridge { weights: w.clone() }, nodes, tau).unwrap();
        for j in 0..6 {
            assert!((w[j] * r[j] + nt * (r[j] - mean[j])).abs() <= 1e-12);
        }
    }

    #[test]
    fn lasso_agrees_with_unwrapped() {
        let d = gaussian_matrix(80, 6, 9);
        let t = gaussian_vec(80, 10);
        let shards = vec![d.row_block(0, 40), d.row_block(40, 80)];
        let ts = vec![t[..40].to_vec(), t[40..].to_vec()];
        let p = ProblemSpec::lasso(shards, ts, 2.0).unwrap();
        let c = consensus_admm(&p, &tight(20.0)).unwrap();
        let u = crate::unwrapped::unwrapped_admm(&p, &tight(1.0)).unwrap();
        let (fc, fu) = (p.objective(&c.z).unwrap(), p.objective(&u.x).unwrap());
        assert!((fc - fu).abs() <= 1e-7 * fu.abs(), "{fc} vs {fu}");
    }

    #[test]
    fn svm_center_split_matches_unwrapped() {
        let d = gaussian_matrix(60, 4, 11);
        let l = random_labels(60, 12);
        let p = ProblemSpec::svm(
            vec![d.row_block(0, 30), d.row_block(30, 60)],
            vec![l[..30].to_vec(), l[30..].to_vec()],
            1.0,
            None,
        )
        .unwrap();
        let mut cfg = tight(1.0);
        cfg.eps_abs = 1e-9;
        cfg.eps_rel = 1e-9;
        cfg.inner_tol = 1e-12;
        cfg.inner_max_iter = 2000;
        let c = consensus_admm(&p, &cfg).unwrap();
        let u = crate::unwrapped::unwrapped_admm(&p, &cfg).unwrap();
        let (fc, fu) = (p.objective(&c.z).unwrap(), p.objective(&u.x).unwrap());
        assert!((fc - fu).abs() <= 1e-5 * fu.abs(), "{fc} vs {fu}");
    }

    #[test]
    fn logistic_substep_counts_inner_iterations() {
        let d = gaussian_matrix(40, 3, 13);
        let l = random_labels(40, 14);
        let p = ProblemSpec::logistic(
            vec![d.row_block(0, 20), d.row_block(20, 40)],
            vec![l[..20].to_vec(), l[20..].to_vec()],
        )
        .unwrap();
        let out = consensus_admm(
            &p,
            &SolverConfig {
                max_iter: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.record.rows.iter().all(|r| r.inner_iterations > 0));
        assert_eq!(out.record.rows[0].bytes_up, 2 * 3 * 8);
        assert_eq!(out.state.xs.len(), 2);
        let _ = dot(&out.z, &out.z);
    }

    #[test]
    fn dual_lasso_is_rejected() {
        let p =
            ProblemSpec::lasso_columns(vec![DenseMatrix::identity(3)], vec![1.0; 3], 0.1).unwrap();
        let dual = crate::unwrapped::dualize_columns(&p).unwrap();
        assert!(consensus_admm(&dual, &SolverConfig::default()).is_err());
    }
}
