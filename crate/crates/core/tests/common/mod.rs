#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tadmm::inner::{fbs_solve, FbsOptions, QuadraticOracle};
use tadmm::linalg::{gram_accumulate, DenseMatrix};
use tadmm::problem::ProblemSpec;
use tadmm::prox::SeparableProx;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::new(
        rows,
        cols,
        gaussian_vec(rows * cols, seed.wrapping_add(0x5151)),
    )
    .unwrap()
}

pub fn labels(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| if r.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Lasso objective and minimizer from proximal gradient on the stacked data.
pub fn direct_lasso(problem: &ProblemSpec, tol: f64) -> (Vec<f64>, f64) {
    let merged = problem.merged().unwrap();
    let block = &merged.blocks[0];
    let targets: Vec<f64> = match &block.loss {
        SeparableProx::Quadratic { b } => b.iter().map(|v| -v).collect(),
        other => panic!("not a least-squares block: {other:?}"),
    };
    let g = gram_accumulate(&block.matrix, Some(&targets)).unwrap();
    let rhs = g.rhs.clone().unwrap();
    let f = QuadraticOracle {
        gram: &g.gram,
        linear: &rhs,
        constant: 0.5 * g.target_sq.unwrap(),
    };
    let out = fbs_solve(
        &f,
        &SeparableProx::L1 { mu: problem.l1 },
        &vec![0.0; problem.n()],
        &FbsOptions {
            tol,
            max_iter: 1_000_000,
            ..Default::default()
        },
    )
    .unwrap();
    let obj = problem.objective(&out.x).unwrap();
    (out.x, obj)
}
