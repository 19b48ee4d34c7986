//! Synthetic problem generators, heterogeneity injection and partitioning.
//!
//! Every random quantity comes from its own ChaCha stream of the recipe seed,
//! so changing one part of a recipe does not perturb the others.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, DenseMatrix};

pub const STREAM_MATRIX: u64 = 1;
pub const STREAM_SUPPORT: u64 = 2;
pub const STREAM_NOISE: u64 = 3;
pub const STREAM_HETERO: u64 = 4;
pub const STREAM_SHUFFLE: u64 = 5;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecipeKind {
    Lasso,
    Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecipe {
    pub kind: RecipeKind,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    /// Number of unit-magnitude entries in the true lasso model.
    pub sparsity: usize,
    pub noise_sigma: f64,
    /// Add a per-shard Gaussian offset to the data after partitioning.
    pub heterogeneous: bool,
}

impl SyntheticRecipe {
    pub fn lasso(m: usize, n: usize, seed: u64) -> Self {
        Self {
            kind: RecipeKind::Lasso,
            m,
            n,
            seed,
            sparsity: 10.min(n),
            noise_sigma: 1.0,
            heterogeneous: false,
        }
    }

    pub fn classification(m: usize, n: usize, seed: u64) -> Self {
        Self {
            kind: RecipeKind::Classification,
            sparsity: 0,
            ..Self::lasso(m, n, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::param("recipe needs m >= 1 and n >= 1"));
        }
        if self.sparsity > self.n {
            return Err(Error::param(format!(
                "sparsity {} exceeds n = {}",
                self.sparsity, self.n
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::param("noise sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let values = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DenseMatrix::new(rows, cols, values).expect("shape is consistent")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoData {
    pub matrix: DenseMatrix,
    pub targets: Vec<f64>,
    pub x_true: Vec<f64>,
    /// Ten percent of `‖Dᵀb‖∞`.
    pub mu: f64,
}

/// `‖Dᵀb‖∞`, the smallest penalty with an all-zero lasso solution.
pub fn lambda_max(shards: &[DenseMatrix], targets: &[Vec<f64>]) -> Result<f64> {
    Error::check_len("targets per shard", shards.len(), targets.len())?;
    let n = shards
        .first()
        .ok_or(Error::Empty("lambda_max shards"))?
        .cols();
    let mut dtb = vec![0.0; n];
    for (d, t) in shards.iter().zip(targets) {
        crate::linalg::axpy(1.0, &d.apply(t, true)?, &mut dtb);
    }
    Ok(norm_inf(&dtb))
}

/// Gaussian `D`, a sparse unit-magnitude `x_true`, `b = D·x_true + η`.
pub fn gen_lasso(recipe: &SyntheticRecipe) -> Result<LassoData> {
    recipe.validate()?;
    if recipe.kind != RecipeKind::Lasso {
        return Err(Error::param("gen_lasso needs a lasso recipe"));
    }
    let matrix = gaussian_matrix(
        recipe.m,
        recipe.n,
        &mut stream_rng(recipe.seed, STREAM_MATRIX),
    );
    let mut support_rng = stream_rng(recipe.seed, STREAM_SUPPORT);
    let mut idx: Vec<usize> = (0..recipe.n).collect();
    idx.shuffle(&mut support_rng);
    let mut x_true = vec![0.0; recipe.n];
    for &j in &idx[..recipe.sparsity] {
        x_true[j] = if support_rng.random::<bool>() {
            1.0
        } else {
            -1.0
        };
    }
    let mut noise = stream_rng(recipe.seed, STREAM_NOISE);
    let targets: Vec<f64> = matrix
        .apply(&x_true, false)?
        .into_iter()
        .map(|v| v + recipe.noise_sigma * noise.sample::<f64, _>(StandardNormal))
        .collect();
    let mu = 0.1
        * lambda_max(
            std::slice::from_ref(&matrix),
            std::slice::from_ref(&targets),
        )?;
    Ok(LassoData {
        matrix,
        targets,
        x_true,
        mu,
    })
}

/// Two Gaussian classes: label −1 rows are standard normal, label +1 rows
/// have mean 1 in the first five columns. The +1 class gets the extra row
/// when `m` is odd, and rows are shuffled with a seeded permutation.
pub fn gen_classification(recipe: &SyntheticRecipe) -> Result<(DenseMatrix, Vec<f64>)> {
    recipe.validate()?;
    if recipe.kind != RecipeKind::Classification {
        return Err(Error::param(
            "gen_classification needs a classification recipe",
        ));
    }
    if recipe.n < 5 {
        return Err(Error::param(format!(
            "classification needs n >= 5, got {}",
            recipe.n
        )));
    }
    let (m, n) = (recipe.m, recipe.n);
    let neg = m / 2;
    let mut base = gaussian_matrix(m, n, &mut stream_rng(recipe.seed, STREAM_MATRIX)).into_values();
    for row in neg..m {
        for v in &mut base[row * n..row * n + 5] {
            *v += 1.0;
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut stream_rng(recipe.seed, STREAM_SHUFFLE));
    let mut values = Vec::with_capacity(m * n);
    let mut labels = Vec::with_capacity(m);
    for &r in &order {
        values.extend_from_slice(&base[r * n..(r + 1) * n]);
        labels.push(if r < neg { -1.0 } else { 1.0 });
    }
    Ok((DenseMatrix::new(m, n, values)?, labels))
}

/// One standard Gaussian offset per shard, drawn from the heterogeneity
/// stream.
pub fn heterogeneity_offsets(n_shards: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, STREAM_HETERO);
    (0..n_shards).map(|_| rng.sample(StandardNormal)).collect()
}

/// Adds `offsets[i]` to every entry of shard `i`.
pub fn heterogenize_with(
    mut shards: Vec<DenseMatrix>,
    offsets: &[f64],
) -> Result<Vec<DenseMatrix>> {
    if shards.is_empty() {
        return Err(Error::Empty("heterogenize shards"));
    }
    Error::check_len("heterogeneity offsets", shards.len(), offsets.len())?;
    for (s, &c) in shards.iter_mut().zip(offsets) {
        s.shift_entries(c);
    }
    Ok(shards)
}

pub fn heterogenize(shards: Vec<DenseMatrix>, seed: u64) -> Result<Vec<DenseMatrix>> {
    let offsets = heterogeneity_offsets(shards.len(), seed);
    heterogenize_with(shards, &offsets)
}

/// Balanced contiguous sizes: the first `total % parts` blocks get one extra.
pub fn balanced_sizes(total: usize, parts: usize) -> Result<Vec<usize>> {
    if parts == 0 || parts > total {
        return Err(Error::param(format!(
            "cannot split {total} into {parts} non-empty blocks"
        )));
    }
    Ok((0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect())
}

pub fn partition_rows(
    d: &DenseMatrix,
    targets: &[f64],
    parts: usize,
) -> Result<(Vec<DenseMatrix>, Vec<Vec<f64>>)> {
    Error::check_len("partition targets", d.rows(), targets.len())?;
    let mut start = 0;
    let mut mats = Vec::with_capacity(parts);
    let mut ts = Vec::with_capacity(parts);
    for size in balanced_sizes(d.rows(), parts)? {
        mats.push(d.row_block(start, start + size));
        ts.push(targets[start..start + size].to_vec());
        start += size;
    }
    Ok((mats, ts))
}

pub fn partition_cols(d: &DenseMatrix, parts: usize) -> Result<Vec<DenseMatrix>> {
    let mut start = 0;
    let mut out = Vec::with_capacity(parts);
    for size in balanced_sizes(d.cols(), parts)? {
        out.push(d.col_block(start, start + size));
        start += size;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sparsity_and_noise_gives_zero_targets() {
        let mut r = SyntheticRecipe::lasso(20, 5, 1);
        r.sparsity = 0;
        r.noise_sigma = 0.0;
        let data = gen_lasso(&r).unwrap();
        assert!(data.targets.iter().all(|&v| v == 0.0));
        assert_eq!(data.mu, 0.0);
    }

    #[test]
    fn lasso_generation_is_reproducible() {
        let r = SyntheticRecipe::lasso(30, 12, 9);
        let a = gen_lasso(&r).unwrap();
        assert_eq!(a, gen_lasso(&r).unwrap());
        assert_eq!(a.x_true.iter().filter(|v| v.abs() == 1.0).count(), 10);
        let mut bad = r.clone();
        bad.sparsity = 13;
        assert!(gen_lasso(&bad).is_err());
    }

    #[test]
    fn classification_is_balanced_and_shifted() {
        let r = SyntheticRecipe::classification(4000, 8, 3);
        let (d, l) = gen_classification(&r).unwrap();
        assert_eq!(l.iter().filter(|&&v| v > 0.0).count(), 2000);
        let pos: Vec<usize> = (0..4000).filter(|&i| l[i] > 0.0).collect();
        let tol = 5.0 / (pos.len() as f64).sqrt();
        for j in 0..8 {
            let mean = pos.iter().map(|&i| d.get(i, j)).sum::<f64>() / pos.len() as f64;
            let expect = if j < 5 { 1.0 } else { 0.0 };
            assert!((mean - expect).abs() <= tol);
        }
        let (_, odd) = gen_classification(&SyntheticRecipe::classification(5, 6, 1)).unwrap();
        assert_eq!(odd.iter().filter(|&&v| v > 0.0).count(), 3);
        assert!(gen_classification(&SyntheticRecipe::classification(10, 4, 1)).is_err());
    }

    #[test]
    fn heterogenize_shifts_entries() {
        let s = vec![DenseMatrix::zeros(2, 2)];
        assert_eq!(heterogenize_with(s.clone(), &[0.0]).unwrap(), s);
        let one = heterogenize_with(s, &[1.0]).unwrap();
        assert!(one[0].values().iter().all(|&v| v == 1.0));
        assert!(heterogenize(vec![], 1).is_err());
    }

    #[test]
    fn partitions_are_balanced_and_exact() {
        assert_eq!(balanced_sizes(10, 3).unwrap(), vec![4, 3, 3]);
        assert!(balanced_sizes(3, 4).is_err());
        let d = DenseMatrix::from_fn(10, 4, |i, j| (i * 4 + j) as f64).unwrap();
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let (rows, ts) = partition_rows(&d, &t, 3).unwrap();
        let refs: Vec<&DenseMatrix> = rows.iter().collect();
        assert_eq!(DenseMatrix::vstack(&refs).unwrap(), d);
        assert_eq!(ts.concat(), t);
        let cols = partition_cols(&d, 3).unwrap();
        assert_eq!(
            cols.iter().map(|c| c.cols()).collect::<Vec<_>>(),
            vec![2, 1, 1]
        );
        let refs: Vec<&DenseMatrix> = cols.iter().collect();
        assert_eq!(DenseMatrix::hstack(&refs).unwrap(), d);
        let (one, _) = partition_rows(&d, &t, 1).unwrap();
        assert_eq!(one[0], d);
    }
}
