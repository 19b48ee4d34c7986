mod common;

use common::{direct_lasso, gaussian_matrix, gaussian_vec, labels, rel_diff};

use tadmm::bench::{build_problem, run_method, Method, ProblemParams};
use tadmm::consensus::consensus_admm;
use tadmm::data::{gen_classification, SyntheticRecipe};
use tadmm::inner::{
    fbs_solve, lbfgs_solve, svm_dual_cd, FbsOptions, LbfgsOptions, LogisticOracle, SvmDualOptions,
};
use tadmm::linalg::{norm_sq, DenseMatrix};
use tadmm::problem::{ProblemKind, ProblemSpec, SolverConfig, TauRule};
use tadmm::prox::SeparableProx;
use tadmm::record::Status;
use tadmm::transpose_lasso::transpose_lasso;
use tadmm::unwrapped::{support_refit, unwrapped_admm};

fn tight() -> SolverConfig {
    SolverConfig {
        eps_abs: 1e-9,
        eps_rel: 1e-9,
        max_iter: 50_000,
        ..Default::default()
    }
}

fn stacked(problem: &ProblemSpec) -> (DenseMatrix, Vec<f64>) {
    let merged = problem.merged().unwrap();
    let b = &merged.blocks[0];
    (b.matrix.clone(), b.labels().unwrap().to_vec())
}

#[test]
fn logistic_matches_full_lbfgs() {
    let p = build_problem(&ProblemParams::new(ProblemKind::Logistic, 600, 15, 3, 5)).unwrap();
    let (d, l) = stacked(&p);
    let oracle = lbfgs_solve(
        &LogisticOracle {
            data: &d,
            labels: &l,
            proximal: None,
        },
        &vec![0.0; 15],
        &LbfgsOptions {
            tol: 1e-10,
            max_iter: 5000,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(oracle.converged);
    let want = p.objective(&oracle.x).unwrap();
    for method in [Method::Unwrapped, Method::Consensus] {
        let run = run_method(&p, method, &tight()).unwrap();
        assert_eq!(run.record.meta.status, Status::Converged);
        assert!(
            rel_diff(run.objective, want) <= 1e-7,
            "{method:?}: {} vs {want}",
            run.objective
        );
    }
}

#[test]
fn sparse_logistic_matches_proximal_gradient() {
    let p = build_problem(&ProblemParams::new(
        ProblemKind::SparseLogistic,
        500,
        20,
        4,
        6,
    ))
    .unwrap();
    let (d, l) = stacked(&p);
    let fbs = fbs_solve(
        &LogisticOracle {
            data: &d,
            labels: &l,
            proximal: None,
        },
        &SeparableProx::L1 { mu: p.l1 },
        &vec![0.0; 20],
        &FbsOptions {
            tol: 1e-9,
            ..Default::default()
        },
    )
    .unwrap();
    let want = p.objective(&fbs.x).unwrap();
    let zeros = fbs.x.iter().filter(|v| **v == 0.0).count();
    assert!(
        zeros > 0 && zeros < 20,
        "ten-percent penalty should give a partly sparse model"
    );
    for method in [Method::Unwrapped, Method::Consensus] {
        let run = run_method(&p, method, &tight()).unwrap();
        assert!(
            rel_diff(run.objective, want) <= 1e-6,
            "{method:?}: {} vs {want}",
            run.objective
        );
    }
}

#[test]
fn lasso_methods_agree_with_direct_solve() {
    let p = build_problem(&ProblemParams::new(ProblemKind::Lasso, 400, 30, 4, 2)).unwrap();
    let (_, want) = direct_lasso(&p, 1e-12);
    for method in [Method::Transpose, Method::Unwrapped, Method::Consensus] {
        let run = run_method(&p, method, &tight()).unwrap();
        assert!(
            rel_diff(run.objective, want) <= 1e-8,
            "{method:?}: {} vs {want}",
            run.objective
        );
    }
}

#[test]
fn transpose_lasso_certificate_and_traffic() {
    let (n, nodes) = (25, 5);
    let p = build_problem(&ProblemParams::new(ProblemKind::Lasso, 300, n, nodes, 4)).unwrap();
    let out = transpose_lasso(&p, &SolverConfig::default()).unwrap();
    assert!(out.violation <= 1e-5, "violation {}", out.violation);
    // one Gram, one right-hand side and one squared norm per worker
    assert_eq!(
        out.record.meta.setup_bytes_up,
        (8 * nodes * (n * n + n + 1)) as u64
    );
    assert!(out
        .record
        .rows
        .iter()
        .all(|r| r.bytes_up == 0 && r.bytes_down == 0));
}

#[test]
fn dual_lasso_strong_duality() {
    let mut params = ProblemParams::new(ProblemKind::DualLasso, 40, 24, 3, 8);
    params.mu = Some(3.0);
    let dual = build_problem(&params).unwrap();
    let out = unwrapped_admm(&dual, &tight()).unwrap();
    let sol = out.dual.clone().unwrap();
    let info = dual.dual.as_ref().unwrap();
    assert!(sol.constraint_violation <= 1e-6);

    let mut lp = ProblemParams::new(ProblemKind::Lasso, 40, 24, 1, 8);
    lp.mu = Some(3.0);
    let primal = build_problem(&lp).unwrap();
    let (x_ref, p_star) = direct_lasso(&primal, 1e-13);
    // P* = ½‖b‖² − min ½‖α + b‖²
    let d_star = 0.5 * norm_sq(&info.targets) - sol.dual_objective;
    assert!(rel_diff(p_star, d_star) <= 1e-6, "{p_star} vs {d_star}");
    let p_rec = primal.objective(&sol.x).unwrap();
    assert!(rel_diff(p_rec, p_star) <= 1e-6, "{p_rec} vs {p_star}");
    // the refit is exact when the active set is the true support
    let support: Vec<usize> = (0..24).filter(|&j| x_ref[j].abs() > 1e-8).collect();
    if sol.active_set == support {
        let refit = support_refit(&dual, &sol).unwrap();
        assert!(rel_diff(primal.objective(&refit).unwrap(), p_star) <= 1e-6);
    }
}

#[test]
fn svm_consensus_agrees_with_unwrapped() {
    let p = build_problem(&ProblemParams::new(ProblemKind::Svm, 400, 10, 4, 3)).unwrap();
    let u = run_method(&p, Method::Unwrapped, &tight()).unwrap();
    let c = run_method(&p, Method::Consensus, &tight()).unwrap();
    assert!(
        rel_diff(u.objective, c.objective) <= 1e-3,
        "{} vs {}",
        u.objective,
        c.objective
    );
}

#[test]
fn consensus_stops_with_small_disagreement() {
    let p = build_problem(&ProblemParams::new(ProblemKind::Logistic, 800, 12, 4, 9)).unwrap();
    let out = consensus_admm(&p, &SolverConfig::default()).unwrap();
    assert_eq!(out.record.meta.status, Status::Converged);
    let last = out.record.rows.last().unwrap();
    assert!(last.primal_residual <= last.eps_primal);
    let spread = out
        .state
        .xs
        .iter()
        .map(|x| {
            x.iter()
                .zip(&out.z)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    assert!(spread <= last.eps_primal);
}

#[test]
fn homogeneous_methods_reach_same_objective() {
    for kind in [
        ProblemKind::Logistic,
        ProblemKind::LeastSquares,
        ProblemKind::SparseLogistic,
    ] {
        let p = build_problem(&ProblemParams::new(kind, 1200, 20, 4, 12)).unwrap();
        let cfg = SolverConfig::default();
        let u = run_method(&p, Method::Unwrapped, &cfg).unwrap();
        let c = run_method(&p, Method::Consensus, &cfg).unwrap();
        assert!(
            rel_diff(u.objective, c.objective) <= 1e-3,
            "{kind}: {} vs {}",
            u.objective,
            c.objective
        );
    }
}

#[test]
fn heterogeneous_shards_slow_consensus_only() {
    let mut iters = Vec::new();
    for hetero in [false, true] {
        let mut params = ProblemParams::new(ProblemKind::Logistic, 0, 20, 6, 2);
        params.per_node = Some(200);
        params.hetero = hetero;
        let p = build_problem(&params).unwrap();
        let cfg = SolverConfig::default();
        iters.push((
            run_method(&p, Method::Unwrapped, &cfg)
                .unwrap()
                .record
                .iterations(),
            run_method(&p, Method::Consensus, &cfg)
                .unwrap()
                .record
                .iterations(),
        ));
    }
    assert!(iters[1].1 >= iters[0].1, "{iters:?}");
}

#[test]
fn tau_rule_scales_with_rows() {
    let p = build_problem(&ProblemParams::new(ProblemKind::LeastSquares, 500, 5, 2, 1)).unwrap();
    let cfg = SolverConfig {
        tau: Some(TauRule::Proportional {
            m0: 10_000.0,
            tau0: 2.0,
        }),
        ..Default::default()
    };
    let out = unwrapped_admm(&p, &cfg).unwrap();
    assert!((out.tau - 0.1).abs() < 1e-15);
    assert_eq!(out.record.meta.tau, out.tau);
}

#[test]
fn lbfgs_reaches_tight_tolerance_on_large_objectives() {
    // f is in the thousands here, so the Armijo decrease falls below rounding
    // well before the gradient reaches 1e-8
    let (d, l) = gen_classification(&SyntheticRecipe::classification(2500, 100, 4)).unwrap();
    let v = gaussian_vec(100, 5);
    let f = LogisticOracle {
        data: &d,
        labels: &l,
        proximal: Some((100.0, &v)),
    };
    let out = lbfgs_solve(&f, &vec![0.0; 100], &LbfgsOptions::default()).unwrap();
    assert!(out.converged, "gradient stalled at {}", out.grad_inf);
    assert!(out.iterations < 100);
}

#[test]
fn fbs_objective_is_monotone() {
    let d = gaussian_matrix(80, 10, 3);
    let l = labels(80, 4);
    let out = fbs_solve(
        &LogisticOracle {
            data: &d,
            labels: &l,
            proximal: None,
        },
        &SeparableProx::L1 { mu: 2.0 },
        &[0.0; 10],
        &FbsOptions::default(),
    )
    .unwrap();
    assert!(out.converged);
    for w in out.objective.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
    }
}

#[test]
fn svm_dual_passes_are_monotone_and_feasible() {
    let a = gaussian_matrix(40, 6, 7);
    let l = labels(40, 8);
    let z = gaussian_vec(6, 9);
    let (c, tau) = (0.7, 2.0);
    let opts = SvmDualOptions {
        tol: 1e-14,
        max_passes: 1,
        reg: 1.0,
    };
    let mut warm = None;
    let mut last = f64::INFINITY;
    for _ in 0..60 {
        let out = svm_dual_cd(&a, &l, c, tau, &z, warm, &opts).unwrap();
        assert!(out.dual_objective <= last + 1e-12 * last.abs().max(1.0));
        assert!(out.state.alpha.iter().all(|&x| (0.0..=c).contains(&x)));
        last = out.dual_objective;
        warm = Some(out.state);
    }
}
