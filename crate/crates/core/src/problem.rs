//! Problem descriptions shared by every solver family.
//!
//! A row-sharded problem is `minimize Σ fᵢ(Dᵢx) + μ‖x‖₁ + ½‖x‖²` where the
//! last two terms are optional. Each shard is a [`Block`] pairing `Dᵢ` with
//! its separable `fᵢ`.

use std::fmt;
use std::str::FromStr;

use crate::cluster::ShardShape;
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::prox::{check_labels, SeparableProx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    LeastSquares,
    Lasso,
    Logistic,
    SparseLogistic,
    Svm,
    DualLasso,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::LeastSquares => "least-squares",
            ProblemKind::Lasso => "lasso",
            ProblemKind::Logistic => "logistic",
            ProblemKind::SparseLogistic => "sparse-logistic",
            ProblemKind::Svm => "svm",
            ProblemKind::DualLasso => "dual-lasso",
        }
    }

    /// Whether the data-fit term is differentiable everywhere.
    pub fn is_smooth(self) -> bool {
        matches!(self, ProblemKind::LeastSquares | ProblemKind::Logistic)
    }

    /// Whether the problem carries ±1 labels rather than real targets.
    pub fn is_classification(self) -> bool {
        matches!(
            self,
            ProblemKind::Logistic | ProblemKind::SparseLogistic | ProblemKind::Svm
        )
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "least-squares" | "ls" => ProblemKind::LeastSquares,
            "lasso" => ProblemKind::Lasso,
            "logistic" => ProblemKind::Logistic,
            "sparse-logistic" => ProblemKind::SparseLogistic,
            "svm" => ProblemKind::Svm,
            "dual-lasso" => ProblemKind::DualLasso,
            other => return Err(Error::param(format!("unknown problem kind '{other}'"))),
        })
    }
}

/// Whether a block's term belongs to the reported objective or only to the
/// solver's splitting (penalty and constraint rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRole {
    Loss,
    Penalty,
}

/// One shard: rows `Dᵢ` and the separable function applied to `Dᵢx`.
#[derive(Debug, Clone)]
pub struct Block {
    pub matrix: DenseMatrix,
    pub loss: SeparableProx,
    pub role: BlockRole,
}

impl Block {
    pub fn new(matrix: DenseMatrix, loss: SeparableProx, role: BlockRole) -> Result<Self> {
        loss.validate()?;
        if let Some(len) = loss.len_hint() {
            Error::check_len("block loss length", matrix.rows(), len)?;
        }
        Ok(Self { matrix, loss, role })
    }

    /// `fᵢ(Dᵢx)`, with constraint indicators counted as zero.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.loss.finite_value(&self.matrix.apply(x, false)?))
    }

    /// Regression targets of a least-squares block.
    pub fn targets(&self) -> Option<Vec<f64>> {
        match &self.loss {
            SeparableProx::Quadratic { b } => Some(b.iter().map(|v| -v).collect()),
            _ => None,
        }
    }

    pub fn labels(&self) -> Option<&[f64]> {
        match &self.loss {
            SeparableProx::Logistic { labels } | SeparableProx::Hinge { labels, .. } => {
                Some(labels)
            }
            _ => None,
        }
    }
}

impl ShardShape for Block {
    fn rows(&self) -> usize {
        self.matrix.rows()
    }
    fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

/// How the data matrix is split across workers.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// Each block holds a set of rows.
    Rows,
    /// Each block holds a set of columns of an `m × n` matrix; only lasso is
    /// supported, through its dual.
    Columns { targets: Vec<f64> },
}

/// Bookkeeping kept by [`crate::unwrapped::dualize_columns`] to map the dual
/// solution back to the primal lasso.
#[derive(Debug, Clone, PartialEq)]
pub struct DualInfo {
    pub targets: Vec<f64>,
    pub mu: f64,
    pub col_sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub blocks: Vec<Block>,
    /// Weight of the global `μ‖x‖₁` term.
    pub l1: f64,
    /// The `ℓ1` term is carried by a [`BlockRole::Penalty`] identity block.
    pub augmented: bool,
    /// Adds `½‖x‖²` (the SVM regularizer).
    pub ridge: bool,
    /// Coordinate excluded from the `½‖x‖²` term.
    pub bias: Option<usize>,
    pub layout: Layout,
    pub dual: Option<DualInfo>,
}

fn check_mu(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "mu must be finite and >= 0, got {mu}"
        )))
    }
}

impl ProblemSpec {
    fn from_blocks(kind: ProblemKind, blocks: Vec<Block>) -> Result<Self> {
        let spec = Self {
            kind,
            blocks,
            l1: 0.0,
            augmented: false,
            ridge: false,
            bias: None,
            layout: Layout::Rows,
            dual: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn loss_blocks(
        shards: Vec<DenseMatrix>,
        per_shard: Vec<Vec<f64>>,
        make: impl Fn(Vec<f64>) -> SeparableProx,
    ) -> Result<Vec<Block>> {
        Error::check_len("targets per shard", shards.len(), per_shard.len())?;
        shards
            .into_iter()
            .zip(per_shard)
            .map(|(d, t)| Block::new(d, make(t), BlockRole::Loss))
            .collect()
    }

    /// `½‖Dx − b‖²`.
    pub fn least_squares(shards: Vec<DenseMatrix>, targets: Vec<Vec<f64>>) -> Result<Self> {
        let blocks = Self::loss_blocks(shards, targets, |t| SeparableProx::least_squares(&t))?;
        Self::from_blocks(ProblemKind::LeastSquares, blocks)
    }

    /// `μ‖x‖₁ + ½‖Dx − b‖²`.
    pub fn lasso(shards: Vec<DenseMatrix>, targets: Vec<Vec<f64>>, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        let mut spec = Self::least_squares(shards, targets)?;
        spec.kind = ProblemKind::Lasso;
        spec.l1 = mu;
        Ok(spec)
    }

    /// `Σ log(1 + exp(−lₖdₖx))`.
    pub fn logistic(shards: Vec<DenseMatrix>, labels: Vec<Vec<f64>>) -> Result<Self> {
        let blocks = Self::loss_blocks(shards, labels, |l| SeparableProx::Logistic { labels: l })?;
        Self::from_blocks(ProblemKind::Logistic, blocks)
    }

    /// `μ‖x‖₁ + Σ log(1 + exp(−lₖdₖx))`.
    pub fn sparse_logistic(
        shards: Vec<DenseMatrix>,
        labels: Vec<Vec<f64>>,
        mu: f64,
    ) -> Result<Self> {
        check_mu(mu)?;
        let mut spec = Self::logistic(shards, labels)?;
        spec.kind = ProblemKind::SparseLogistic;
        spec.l1 = mu;
        Ok(spec)
    }

    /// `½‖x‖² + C·Σ max(1 − lₖdₖx, 0)`, optionally leaving coordinate `bias`
    /// out of the quadratic term.
    pub fn svm(
        shards: Vec<DenseMatrix>,
        labels: Vec<Vec<f64>>,
        c: f64,
        bias: Option<usize>,
    ) -> Result<Self> {
        let blocks = Self::loss_blocks(shards, labels, |l| SeparableProx::Hinge { labels: l, c })?;
        let mut spec = Self::from_blocks(ProblemKind::Svm, blocks)?;
        spec.ridge = true;
        if let Some(b) = bias {
            if b >= spec.n() {
                return Err(Error::param(format!("bias index {b} out of range")));
            }
        }
        spec.bias = bias;
        Ok(spec)
    }

    /// Lasso whose matrix is split by columns: `shards[i]` is `m × nᵢ`.
    pub fn lasso_columns(shards: Vec<DenseMatrix>, targets: Vec<f64>, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        let first = shards.first().ok_or(Error::Empty("column shards"))?;
        let m = first.rows();
        Error::check_len("lasso targets", m, targets.len())?;
        Error::check_finite("lasso targets", &targets)?;
        let blocks = shards
            .into_iter()
            .map(|d| {
                Error::check_len("column shard rows", m, d.rows())?;
                Block::new(d, SeparableProx::Identity, BlockRole::Loss)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: ProblemKind::Lasso,
            blocks,
            l1: mu,
            augmented: false,
            ridge: false,
            bias: None,
            layout: Layout::Columns { targets },
            dual: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.blocks.first().ok_or(Error::Empty("problem blocks"))?;
        if let Layout::Rows = self.layout {
            let n = first.matrix.cols();
            for b in &self.blocks {
                Error::check_len("block column count", n, b.matrix.cols())?;
            }
        }
        for b in &self.blocks {
            b.loss.validate()?;
            if let Some(len) = b.loss.len_hint() {
                Error::check_len("block loss length", b.matrix.rows(), len)?;
            }
            if let Some(l) = b.labels() {
                check_labels(l)?;
            }
        }
        check_mu(self.l1)
    }

    /// Number of unknowns.
    pub fn n(&self) -> usize {
        match self.layout {
            Layout::Rows => self.blocks[0].matrix.cols(),
            Layout::Columns { .. } => self.blocks.iter().map(|b| b.matrix.cols()).sum(),
        }
    }

    /// Rows of the data matrix (penalty rows excluded).
    pub fn m(&self) -> usize {
        match self.layout {
            Layout::Rows => self
                .blocks
                .iter()
                .filter(|b| b.role == BlockRole::Loss)
                .map(|b| b.matrix.rows())
                .sum(),
            Layout::Columns { ref targets } => targets.len(),
        }
    }

    /// Rows across all blocks, including penalty rows.
    pub fn total_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.matrix.rows()).sum()
    }

    pub fn loss_blocks_iter(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.role == BlockRole::Loss)
    }

    /// Diagonal weights of the `½‖x‖²` term.
    pub fn ridge_weights(&self) -> Vec<f64> {
        let mut w = vec![if self.ridge { 1.0 } else { 0.0 }; self.n()];
        if let Some(b) = self.bias {
            w[b] = 0.0;
        }
        w
    }

    /// The regularizer terms `μ‖x‖₁ + ½‖x‖²` (bias exempt).
    pub fn regularizer(&self, x: &[f64]) -> f64 {
        let mut r = self.l1 * x.iter().map(|v| v.abs()).sum::<f64>();
        if self.ridge {
            r += 0.5
                * x.iter()
                    .zip(self.ridge_weights())
                    .map(|(v, w)| w * v * v)
                    .sum::<f64>();
        }
        r
    }

    /// Objective at `x`. Constraint indicators are not included; feasibility
    /// is reported separately by the solvers that need it.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        Error::check_len("objective point", self.n(), x.len())?;
        if let Layout::Columns { targets } = &self.layout {
            let mut r: Vec<f64> = targets.iter().map(|t| -t).collect();
            let mut offset = 0;
            for b in &self.blocks {
                let k = b.matrix.cols();
                let part = b.matrix.apply(&x[offset..offset + k], false)?;
                for (a, v) in r.iter_mut().zip(part) {
                    *a += v;
                }
                offset += k;
            }
            return Ok(0.5 * dot(&r, &r) + self.regularizer(x));
        }
        let mut total = 0.0;
        for b in self.loss_blocks_iter() {
            total += b.value_at(x)?;
        }
        Ok(total + self.regularizer(x))
    }

    /// `L(∇f)` of the per-row loss when it is differentiable.
    pub fn loss_lipschitz(&self) -> Option<f64> {
        match self.kind {
            ProblemKind::LeastSquares => Some(1.0),
            ProblemKind::Logistic => Some(0.25),
            _ => None,
        }
    }

    /// The same problem with all loss blocks stacked into a single shard.
    /// Penalty blocks are kept as they are.
    pub fn merged(&self) -> Result<Self> {
        if self.layout != Layout::Rows {
            return Err(Error::Unsupported("merging column-sharded problems".into()));
        }
        let loss: Vec<&Block> = self.loss_blocks_iter().collect();
        let mats: Vec<&DenseMatrix> = loss.iter().map(|b| &b.matrix).collect();
        let matrix = DenseMatrix::vstack(&mats)?;
        let cat = |f: &dyn Fn(&Block) -> Option<Vec<f64>>| -> Option<Vec<f64>> {
            let mut out = Vec::new();
            for b in &loss {
                out.extend(f(b)?);
            }
            Some(out)
        };
        let merged_loss = match &loss[0].loss {
            SeparableProx::Quadratic { .. } => SeparableProx::Quadratic {
                b: cat(&|b| match &b.loss {
                    SeparableProx::Quadratic { b } => Some(b.clone()),
                    _ => None,
                })
                .ok_or(Error::param("mixed loss kinds"))?,
            },
            SeparableProx::Logistic { .. } => SeparableProx::Logistic {
                labels: cat(&|b| b.labels().map(<[f64]>::to_vec))
                    .ok_or(Error::param("mixed loss kinds"))?,
            },
            SeparableProx::Hinge { c, .. } => SeparableProx::Hinge {
                labels: cat(&|b| b.labels().map(<[f64]>::to_vec))
                    .ok_or(Error::param("mixed loss kinds"))?,
                c: *c,
            },
            other => {
                return Err(Error::Unsupported(format!(
                    "merging blocks with loss {other:?}"
                )))
            }
        };
        let mut blocks = vec![Block::new(matrix, merged_loss, BlockRole::Loss)?];
        blocks.extend(
            self.blocks
                .iter()
                .filter(|b| b.role == BlockRole::Penalty)
                .cloned(),
        );
        Ok(Self {
            blocks,
            ..self.clone()
        })
    }
}

/// How the stepsize is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauRule {
    Fixed(f64),
    /// `τ = τ₀·m/m₀`.
    Proportional {
        m0: f64,
        tau0: f64,
    },
}

impl TauRule {
    pub fn resolve(&self, m: usize) -> Result<f64> {
        let tau = match *self {
            TauRule::Fixed(t) => t,
            TauRule::Proportional { m0, tau0 } => tau0 * m as f64 / m0,
        };
        if tau > 0.0 && tau.is_finite() {
            Ok(tau)
        } else {
            Err(Error::param(format!(
                "stepsize must be positive, got {tau}"
            )))
        }
    }
}

/// Reference size for proportional stepsize scaling.
pub const TAU_REFERENCE_ROWS: f64 = 10_000.0;

/// Where the SVM's `½‖x‖²` goes in consensus form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvmSplit {
    /// Regularizer on the central variable; each node solves
    /// `C·h(Aᵢx) + (τ/2)‖x − v‖²`. Same objective as the unwrapped solver.
    Center,
    /// `½‖x‖²` inside every node's sub-problem and a plain average at the
    /// center, which weights the regularizer by the node count.
    PerNode,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// `None` selects the per-method, per-loss default.
    pub tau: Option<TauRule>,
    pub eps_rel: f64,
    pub eps_abs: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub use_lookup: bool,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub threads: Option<usize>,
    pub svm_split: SvmSplit,
    /// Diagonal of the identity block used to carry an ℓ1 term. `None` uses
    /// the root-mean-square column norm of the data, which balances the
    /// block against `D`.
    pub augment_scale: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: None,
            eps_rel: 1e-3,
            eps_abs: 1e-6,
            max_iter: 5000,
            seed: 0,
            use_lookup: false,
            inner_tol: 1e-8,
            inner_max_iter: 200,
            threads: None,
            svm_split: SvmSplit::Center,
            augment_scale: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_rel > 0.0) || !(self.eps_abs > 0.0) {
            return Err(Error::param("stopping tolerances must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be at least 1"));
        }
        if !(self.inner_tol > 0.0) || self.inner_max_iter == 0 {
            return Err(Error::param(
                "inner solver tolerance and iteration cap must be positive",
            ));
        }
        if let Some(rule) = self.tau {
            rule.resolve(1)?;
        }
        Ok(())
    }
}
