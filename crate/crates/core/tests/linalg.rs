mod common;

use common::{gaussian_matrix, gaussian_vec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use tadmm::linalg::{
    cholesky, gram_accumulate, gram_reduce, gram_reduce_with_retry, solve_spd, spectral_radius,
    DenseMatrix, GramContribution,
};

fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.values())
}

fn shards_of(a: &DenseMatrix, t: &[f64], cuts: &[usize]) -> Vec<GramContribution> {
    let mut out = Vec::new();
    let mut start = 0;
    for &end in cuts.iter().chain(std::iter::once(&a.rows())) {
        if end > start {
            out.push(gram_accumulate(&a.row_block(start, end), Some(&t[start..end])).unwrap());
            start = end;
        }
    }
    out
}

#[test]
fn normal_equations_match_nalgebra() {
    for seed in 0..5 {
        let a = gaussian_matrix(60, 12, seed);
        let t = gaussian_vec(60, seed + 100);
        let parts = shards_of(&a, &t, &[7, 30, 31, 50]);
        let sys = gram_reduce(&parts, 0.0).unwrap();
        let x = solve_spd(&sys, sys.agg_rhs().unwrap()).unwrap();

        let na = to_na(&a);
        let nt = DVector::from_column_slice(&t);
        let want = (na.transpose() * &na)
            .cholesky()
            .unwrap()
            .solve(&(na.transpose() * nt));
        let scale = want.norm();
        for (u, v) in x.iter().zip(want.iter()) {
            assert!((u - v).abs() <= 1e-10 * scale, "{u} vs {v}");
        }
    }
}

#[test]
fn cholesky_factor_reconstructs() {
    let a = gaussian_matrix(40, 9, 3);
    let g = gram_accumulate(&a, None).unwrap().gram;
    let l = to_na(&cholesky(&g).unwrap());
    let back = &l * l.transpose();
    let gn = to_na(&g);
    assert!((back - &gn).norm() <= 1e-12 * gn.norm());
    for i in 0..9 {
        for j in i + 1..9 {
            assert_eq!(l[(i, j)], 0.0);
        }
    }
}

#[test]
fn spectral_radius_matches_symmetric_eigen() {
    for seed in 0..4 {
        let a = gaussian_matrix(50, 10, 20 + seed);
        let g = gram_accumulate(&a, None).unwrap().gram;
        let eig = to_na(&g).symmetric_eigen().eigenvalues.max();
        let rho = spectral_radius(&g);
        assert!((rho - eig).abs() <= 1e-9 * eig, "{rho} vs {eig}");
    }
}

#[test]
fn ridge_retry_rescues_rank_deficient_gram() {
    // duplicate column makes the Gram singular
    let base = gaussian_matrix(20, 4, 8);
    let dup = DenseMatrix::from_fn(20, 5, |i, j| base.get(i, j.min(3))).unwrap();
    let part = gram_accumulate(&dup, None).unwrap();
    assert!(gram_reduce(std::slice::from_ref(&part), 0.0).is_err());
    let sys = gram_reduce_with_retry(&[part], vec![0.0; 5]).unwrap();
    assert!(sys.shift().iter().all(|&s| s > 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_reduce_is_permutation_stable(seed in 0u64..1000, cuts in proptest::collection::btree_set(1usize..39, 1..6), rot in 0usize..6) {
        let a = gaussian_matrix(40, 6, seed);
        let t = gaussian_vec(40, seed + 1);
        let cuts: Vec<usize> = cuts.into_iter().collect();
        let parts = shards_of(&a, &t, &cuts);
        let mut perm = parts.clone();
        let len = perm.len();
        perm.rotate_left(rot % len);
        perm.reverse();
        let s1 = gram_reduce(&parts, 0.0).unwrap();
        let s2 = gram_reduce(&perm, 0.0).unwrap();
        let g1 = s1.gram().values();
        let g2 = s2.gram().values();
        let scale = g1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, v) in g1.iter().zip(g2) {
            prop_assert!((u - v).abs() <= 1e-12 * scale);
        }
        // the mandated order is reproducible bit for bit
        let again = gram_reduce(&parts, 0.0).unwrap();
        prop_assert_eq!(again.gram().values(), g1);
        prop_assert_eq!(again.agg_rhs(), s1.agg_rhs());
    }

    #[test]
    fn sharded_solve_matches_single_shard(seed in 0u64..1000, cuts in proptest::collection::btree_set(1usize..29, 0..5)) {
        let a = gaussian_matrix(30, 5, seed);
        let t = gaussian_vec(30, seed + 7);
        let cuts: Vec<usize> = cuts.into_iter().collect();
        let one = gram_reduce(&shards_of(&a, &t, &[]), 0.0).unwrap();
        let many = gram_reduce(&shards_of(&a, &t, &cuts), 0.0).unwrap();
        let x1 = solve_spd(&one, one.agg_rhs().unwrap()).unwrap();
        let x2 = solve_spd(&many, many.agg_rhs().unwrap()).unwrap();
        let scale = x1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, v) in x1.iter().zip(&x2) {
            prop_assert!((u - v).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn repeated_solve_is_idempotent(seed in 0u64..1000) {
        let a = gaussian_matrix(25, 4, seed);
        let sys = gram_reduce(&[gram_accumulate(&a, None).unwrap()], 0.0).unwrap();
        let rhs = gaussian_vec(4, seed + 3);
        prop_assert_eq!(solve_spd(&sys, &rhs).unwrap(), solve_spd(&sys, &rhs).unwrap());
    }
}
