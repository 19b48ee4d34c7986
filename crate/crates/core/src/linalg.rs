//! Dense row-major matrices, shard-local Gram products, and Cholesky-based
//! solves for the global least-squares x-update.
//!
//! The aggregate Gram matrix `Σ DᵢᵀDᵢ` is only `n × n`, so once every shard has
//! reduced its contribution the central node can factor it once and answer
//! every later x-update with two triangular solves.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Error::check_len("matrix storage", rows * cols, values.len())?;
        Error::check_finite("matrix entries", &values)?;
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            Error::check_len("row length", cols, r.len())?;
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        t
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Stacks matrices vertically. All inputs must share a column count.
    pub fn vstack(parts: &[&DenseMatrix]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("vstack parts"))?;
        let cols = first.cols;
        let mut values = Vec::new();
        let mut rows = 0;
        for p in parts {
            Error::check_len("vstack column count", cols, p.cols)?;
            values.extend_from_slice(&p.values);
            rows += p.rows;
        }
        Ok(Self { rows, cols, values })
    }

    /// Concatenates matrices horizontally. All inputs must share a row count.
    pub fn hstack(parts: &[&DenseMatrix]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("hstack parts"))?;
        let rows = first.rows;
        for p in parts {
            Error::check_len("hstack row count", rows, p.rows)?;
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                values.extend_from_slice(p.row(i));
            }
        }
        Ok(Self { rows, cols, values })
    }

    pub fn row_block(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            values: self.values[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn col_block(&self, start: usize, end: usize) -> Self {
        let cols = end - start;
        let mut values = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            values.extend_from_slice(&self.row(i)[start..end]);
        }
        Self {
            rows: self.rows,
            cols,
            values,
        }
    }

    /// Adds `c` to every entry.
    pub fn shift_entries(&mut self, c: f64) {
        for v in &mut self.values {
            *v += c;
        }
    }

    pub fn apply(&self, v: &[f64], transposed: bool) -> Result<Vec<f64>> {
        apply(self, v, transposed)
    }
}

/// Matrix-vector product `mat·v`, or `matᵀ·v` when `transposed` is set.
pub fn apply(mat: &DenseMatrix, v: &[f64], transposed: bool) -> Result<Vec<f64>> {
    if transposed {
        Error::check_len("transposed apply", mat.rows, v.len())?;
        let mut out = vec![0.0; mat.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(vi, mat.row(i), &mut out);
            }
        }
        Ok(out)
    } else {
        Error::check_len("apply", mat.cols, v.len())?;
        Ok((0..mat.rows).map(|i| dot(mat.row(i), v)).collect())
    }
}

/// One shard's share of the global normal equations.
#[derive(Debug, Clone, PartialEq)]
pub struct GramContribution {
    /// `DᵢᵀDᵢ`, stored exactly symmetric.
    pub gram: DenseMatrix,
    /// `Dᵢᵀbᵢ` when targets were supplied.
    pub rhs: Option<Vec<f64>>,
    /// `‖bᵢ‖²` when targets were supplied.
    pub target_sq: Option<f64>,
}

impl GramContribution {
    pub fn dim(&self) -> usize {
        self.gram.rows()
    }
}

/// Computes `shardᵀ·shard` (and `shardᵀ·rhs_src` if given).
pub fn gram_accumulate(shard: &DenseMatrix, rhs_src: Option<&[f64]>) -> Result<GramContribution> {
    if shard.rows() == 0 {
        return Err(Error::Empty("gram_accumulate shard"));
    }
    Error::check_finite("gram_accumulate shard", shard.values())?;
    let n = shard.cols();
    let mut g = vec![0.0; n * n];
    for k in 0..shard.rows() {
        let r = shard.row(k);
        for i in 0..n {
            let ri = r[i];
            if ri == 0.0 {
                continue;
            }
            let gi = &mut g[i * n..(i + 1) * n];
            for j in i..n {
                gi[j] += ri * r[j];
            }
        }
    }
    // mirror the upper triangle so the result is bitwise symmetric
    for i in 0..n {
        for j in 0..i {
            g[i * n + j] = g[j * n + i];
        }
    }
    let (rhs, target_sq) = match rhs_src {
        Some(b) => {
            Error::check_len("gram_accumulate rhs", shard.rows(), b.len())?;
            Error::check_finite("gram_accumulate rhs", b)?;
            (Some(apply(shard, b, true)?), Some(norm_sq(b)))
        }
        None => (None, None),
    };
    Ok(GramContribution {
        gram: DenseMatrix {
            rows: n,
            cols: n,
            values: g,
        },
        rhs,
        target_sq,
    })
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = a`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    Error::check_len("cholesky (square)", a.rows(), a.cols())?;
    let n = a.rows();
    let max_diag = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    let tiny = n as f64 * f64::EPSILON * max_diag;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j);
        let d = a.get(j, j) - dot(&lj[..j], &lj[..j]);
        if !(d > tiny) {
            return Err(Error::Singular { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in j + 1..n {
            let s = a.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l.set(i, j, s / djj);
        }
    }
    Ok(l)
}

/// Factorized `Σ DᵢᵀDᵢ + diag(shift)` together with the aggregated
/// right-hand side, ready for repeated solves.
#[derive(Debug, Clone)]
pub struct GramSystem {
    gram: DenseMatrix,
    shift: Vec<f64>,
    factor: DenseMatrix,
    agg_rhs: Option<Vec<f64>>,
    target_sq: Option<f64>,
}

impl GramSystem {
    /// Factors `gram + diag(shift)`.
    pub fn new(gram: DenseMatrix, shift: Vec<f64>) -> Result<Self> {
        Error::check_len("gram (square)", gram.rows(), gram.cols())?;
        Error::check_len("diagonal shift", gram.rows(), shift.len())?;
        if shift.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::param("diagonal shift must be non-negative"));
        }
        let mut shifted = gram.clone();
        for (i, s) in shift.iter().enumerate() {
            shifted.set(i, i, gram.get(i, i) + s);
        }
        let factor = cholesky(&shifted)?;
        Ok(Self {
            gram,
            shift,
            factor,
            agg_rhs: None,
            target_sq: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.gram.rows()
    }

    /// The aggregated, unshifted Gram matrix.
    pub fn gram(&self) -> &DenseMatrix {
        &self.gram
    }

    pub fn factor(&self) -> &DenseMatrix {
        &self.factor
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn agg_rhs(&self) -> Option<&[f64]> {
        self.agg_rhs.as_deref()
    }

    pub fn target_sq(&self) -> Option<f64> {
        self.target_sq
    }

    /// Same Gram, different diagonal shift.
    pub fn refactor(&self, shift: Vec<f64>) -> Result<Self> {
        let mut sys = Self::new(self.gram.clone(), shift)?;
        sys.agg_rhs = self.agg_rhs.clone();
        sys.target_sq = self.target_sq;
        Ok(sys)
    }

    /// `(gram + diag(shift))·v`
    pub fn shifted_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = apply(&self.gram, v, false)?;
        for ((o, s), vi) in out.iter_mut().zip(&self.shift).zip(v) {
            *o += s * vi;
        }
        Ok(out)
    }
}

/// Sums contributions in ascending index order and factors the result plus
/// `ridge·I`.
pub fn gram_reduce(parts: &[GramContribution], ridge: f64) -> Result<GramSystem> {
    if !(ridge >= 0.0) {
        return Err(Error::param(format!("ridge must be >= 0, got {ridge}")));
    }
    let n = parts
        .first()
        .ok_or(Error::Empty("gram_reduce parts"))?
        .dim();
    gram_reduce_shifted(parts, vec![ridge; n])
}

/// Like [`gram_reduce`] with an arbitrary non-negative diagonal shift.
pub fn gram_reduce_shifted(parts: &[GramContribution], shift: Vec<f64>) -> Result<GramSystem> {
    let first = parts.first().ok_or(Error::Empty("gram_reduce parts"))?;
    let n = first.dim();
    let mut gram = vec![0.0; n * n];
    let with_rhs = first.rhs.is_some();
    let mut rhs = vec![0.0; n];
    let mut target_sq = 0.0;
    for p in parts {
        Error::check_len("gram_reduce part dimension", n, p.dim())?;
        for (g, v) in gram.iter_mut().zip(p.gram.values()) {
            *g += v;
        }
        if with_rhs {
            let r = p
                .rhs
                .as_ref()
                .ok_or(Error::param("mixed rhs presence in gram parts"))?;
            for (a, v) in rhs.iter_mut().zip(r) {
                *a += v;
            }
            target_sq += p.target_sq.unwrap_or(0.0);
        }
    }
    let mut sys = GramSystem::new(DenseMatrix::new(n, n, gram)?, shift)?;
    if with_rhs {
        sys.agg_rhs = Some(rhs);
        sys.target_sq = Some(target_sq);
    }
    Ok(sys)
}

/// Reduces with the given shift; if the factorization fails and the shift is
/// identically zero, retries once with `σ = 1e-10·trace/n` and logs a warning.
pub fn gram_reduce_with_retry(parts: &[GramContribution], shift: Vec<f64>) -> Result<GramSystem> {
    let zero_shift = shift.iter().all(|s| *s == 0.0);
    match gram_reduce_shifted(parts, shift) {
        Err(Error::Singular { pivot, value }) if zero_shift => {
            let n = parts[0].dim();
            let trace: f64 = parts.iter().map(|p| p.gram.trace()).sum();
            let sigma = 1e-10 * trace / n as f64;
            log::warn!(
                "aggregate Gram is singular (pivot {pivot} = {value:e}); retrying with ridge {sigma:e}"
            );
            gram_reduce_shifted(parts, vec![sigma; n])
        }
        other => other,
    }
}

/// Solves `(gram + diag(shift))·v = rhs` with the cached factor.
pub fn solve_spd(sys: &GramSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = sys.dim();
    Error::check_len("solve_spd rhs", n, rhs.len())?;
    let l = &sys.factor;
    let mut z = rhs.to_vec();
    for i in 0..n {
        let s = z[i] - dot(&l.row(i)[..i], &z[..i]);
        z[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l.get(k, i) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    Ok(z)
}

/// Power iteration on a symmetric PSD matrix. Runs `steps` iterations, or
/// stops early once the Rayleigh quotient changes by less than `tol`
/// (relative). Returns the largest-eigenvalue estimate.
pub fn power_iteration(sym: &DenseMatrix, steps: usize, tol: f64) -> f64 {
    let n = sym.rows();
    if n == 0 {
        return 0.0;
    }
    // deterministic start that is unlikely to be orthogonal to the top eigenvector
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + (i as f64 * 0.618_033_988_7).fract())
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut estimate = 0.0;
    for _ in 0..steps {
        let w = apply(sym, &v, false).expect("square matrix");
        let next = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / nw).collect();
        let done = (next - estimate).abs() <= tol * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// Spectral radius of a symmetric PSD matrix via power iteration run to
/// relative convergence 1e-13.
pub fn spectral_radius(sym: &DenseMatrix) -> f64 {
    power_iteration(sym, 100_000, 1e-13)
}
