mod common;

use common::gaussian_matrix;
use proptest::prelude::*;

use tadmm::cluster::Cluster;
use tadmm::linalg::{dot, DenseMatrix};

fn row_sums(threads: usize, shards: &[DenseMatrix], v: &[f64]) -> (Vec<f64>, u64, u64) {
    let mut c =
        Cluster::spawn_with_threads(shards.to_vec(), vec![0usize; shards.len()], Some(threads))
            .unwrap();
    c.broadcast(v.to_vec()).unwrap();
    let parts = c
        .all_execute(|ctx, d: &DenseMatrix, calls: &mut usize| {
            *calls += 1;
            let mut out = vec![0.0; ctx.shared.len()];
            for i in 0..d.rows() {
                let s = dot(d.row(i), ctx.shared);
                for (o, a) in out.iter_mut().zip(d.row(i)) {
                    *o += s * a;
                }
            }
            Ok(out)
        })
        .unwrap();
    let sum = c.reduce_sum(parts).unwrap().payload;
    let st = c.stats();
    assert!(c.states().iter().all(|&n| n == 1));
    (sum, st.bytes_up, st.bytes_down)
}

#[test]
fn byte_counters_follow_payload_sizes() {
    let shards: Vec<DenseMatrix> = (0..5).map(|i| gaussian_matrix(7, 4, i)).collect();
    let (_, up, down) = row_sums(2, &shards, &[1.0, 0.5, -1.0, 2.0]);
    assert_eq!(up, 5 * 4 * 8);
    assert_eq!(down, 5 * 4 * 8);
}

#[test]
fn worker_errors_surface() {
    let shards = vec![gaussian_matrix(3, 2, 1), gaussian_matrix(3, 2, 2)];
    let mut c = Cluster::spawn(shards, vec![(), ()]).unwrap();
    let r = c.all_execute(|ctx, _: &DenseMatrix, _: &mut ()| {
        if ctx.index == 1 {
            Err(tadmm::Error::InvalidParameter("boom".into()))
        } else {
            Ok(())
        }
    });
    assert!(r.is_err());
    assert!(Cluster::spawn(
        vec![gaussian_matrix(2, 2, 1), gaussian_matrix(2, 3, 1)],
        vec![(), ()]
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reductions_do_not_depend_on_thread_count(seed in 0u64..500, workers in 1usize..9, threads in 1usize..9) {
        let shards: Vec<DenseMatrix> = (0..workers as u64).map(|i| gaussian_matrix(6, 3, seed * 31 + i)).collect();
        let v = [0.3, -1.2, 2.0];
        let (a, ..) = row_sums(1, &shards, &v);
        let (b, ..) = row_sums(threads, &shards, &v);
        prop_assert_eq!(a, b);
    }
}
