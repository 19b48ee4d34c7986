//! Problem construction and method dispatch shared by the CLI and the
//! acceptance tests.

use std::path::PathBuf;

use crate::consensus::consensus_admm;
use crate::data::{
    gen_classification, gen_lasso, heterogenize, lambda_max, partition_cols, partition_rows,
    SyntheticRecipe,
};
use crate::error::{Error, Result};
use crate::io::{load_dataset, Dataset, TargetKind};
use crate::linalg::{norm_inf, DenseMatrix};
use crate::problem::{ProblemKind, ProblemSpec, SolverConfig};
use crate::record::ConvergenceRecord;
use crate::transpose_lasso::transpose_lasso;
use crate::unwrapped::{dualize_columns, unwrapped_admm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Transpose reduction: the one-shot Gram pipeline for lasso, unwrapped
    /// ADMM for everything else.
    Transpose,
    /// Unwrapped ADMM for every problem (lasso through ℓ1 augmentation).
    Unwrapped,
    Consensus,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Transpose => "transpose",
            Method::Unwrapped => "unwrapped",
            Method::Consensus => "consensus",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transpose" => Ok(Method::Transpose),
            "unwrapped" => Ok(Method::Unwrapped),
            "consensus" => Ok(Method::Consensus),
            other => Err(Error::param(format!("unknown method `{other}`"))),
        }
    }
}

/// Everything needed to build a problem instance.
#[derive(Debug, Clone)]
pub struct ProblemParams {
    pub kind: ProblemKind,
    /// Total rows; `per_node` takes precedence when set.
    pub m: usize,
    pub per_node: Option<usize>,
    pub n: usize,
    pub nodes: usize,
    pub seed: u64,
    pub hetero: bool,
    /// Overrides the ten-percent penalty rule.
    pub mu: Option<f64>,
    pub c: f64,
    pub data: Option<PathBuf>,
}

impl ProblemParams {
    pub fn new(kind: ProblemKind, m: usize, n: usize, nodes: usize, seed: u64) -> Self {
        Self {
            kind,
            m,
            per_node: None,
            n,
            nodes,
            seed,
            hetero: false,
            mu: None,
            c: 1.0,
            data: None,
        }
    }

    pub fn total_rows(&self) -> usize {
        self.per_node.map_or(self.m, |p| p * self.nodes)
    }
}

/// Ten percent of `‖Dᵀ∇f(0)‖∞`, the penalty above which the sparse solution
/// is zero.
pub fn default_mu(kind: ProblemKind, shards: &[DenseMatrix], targets: &[Vec<f64>]) -> Result<f64> {
    let lmax = match kind {
        ProblemKind::SparseLogistic => {
            let half: Vec<Vec<f64>> = targets
                .iter()
                .map(|t| t.iter().map(|l| 0.5 * l).collect())
                .collect();
            lambda_max(shards, &half)?
        }
        _ => lambda_max(shards, targets)?,
    };
    Ok(0.1 * lmax)
}

fn source(params: &ProblemParams) -> Result<Dataset> {
    if let Some(path) = &params.data {
        let ds = load_dataset(path)?;
        let want = if params.kind.is_classification() {
            TargetKind::Labels
        } else {
            TargetKind::Values
        };
        if ds.kind != want {
            return Err(Error::param(format!(
                "{} needs a dataset with {:?} targets",
                params.kind, want
            )));
        }
        return Ok(ds);
    }
    let m = params.total_rows();
    if params.kind.is_classification() {
        let (d, l) =
            gen_classification(&SyntheticRecipe::classification(m, params.n, params.seed))?;
        Dataset::new(d, l, TargetKind::Labels)
    } else {
        let data = gen_lasso(&SyntheticRecipe::lasso(m, params.n, params.seed))?;
        Dataset::new(data.matrix, data.targets, TargetKind::Values)
    }
}

/// Generates (or loads), shards and optionally heterogenizes the data, then
/// builds the problem. Penalties from the ten-percent rule are computed on
/// the final shards. SVM data gets a trailing all-ones bias column that is
/// exempt from the regularizer.
pub fn build_problem(params: &ProblemParams) -> Result<ProblemSpec> {
    if params.nodes == 0 {
        return Err(Error::param("need at least one node"));
    }
    let ds = source(params)?;
    if params.kind == ProblemKind::DualLasso {
        let mut cols = partition_cols(&ds.matrix, params.nodes)?;
        if params.hetero {
            cols = heterogenize(cols, params.seed)?;
        }
        let mu = match params.mu {
            Some(mu) => mu,
            None => {
                let refs: Vec<&DenseMatrix> = cols.iter().collect();
                0.1 * lambda_max(
                    &[DenseMatrix::hstack(&refs)?],
                    std::slice::from_ref(&ds.targets),
                )?
            }
        };
        return dualize_columns(&ProblemSpec::lasso_columns(cols, ds.targets, mu)?);
    }
    let (mut shards, targets) = partition_rows(&ds.matrix, &ds.targets, params.nodes)?;
    if params.hetero {
        shards = heterogenize(shards, params.seed)?;
    }
    let mu = |shards: &[DenseMatrix], targets: &[Vec<f64>]| match params.mu {
        Some(mu) => Ok(mu),
        None => default_mu(params.kind, shards, targets),
    };
    match params.kind {
        ProblemKind::LeastSquares => ProblemSpec::least_squares(shards, targets),
        ProblemKind::Lasso => {
            let mu = mu(&shards, &targets)?;
            ProblemSpec::lasso(shards, targets, mu)
        }
        ProblemKind::Logistic => ProblemSpec::logistic(shards, targets),
        ProblemKind::SparseLogistic => {
            let mu = mu(&shards, &targets)?;
            ProblemSpec::sparse_logistic(shards, targets, mu)
        }
        ProblemKind::Svm => {
            let n = shards[0].cols();
            let with_bias = shards
                .iter()
                .map(|s| {
                    let ones = DenseMatrix::from_fn(s.rows(), 1, |_, _| 1.0)?;
                    DenseMatrix::hstack(&[s, &ones])
                })
                .collect::<Result<Vec<_>>>()?;
            ProblemSpec::svm(with_bias, targets, params.c, Some(n))
        }
        ProblemKind::DualLasso => unreachable!("handled above"),
    }
}

/// Result of one solver run in a uniform shape.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub x: Vec<f64>,
    pub objective: f64,
    pub record: ConvergenceRecord,
}

pub fn run_method(problem: &ProblemSpec, method: Method, cfg: &SolverConfig) -> Result<RunResult> {
    let (x, record) = match (method, problem.kind) {
        (Method::Transpose, ProblemKind::Lasso) => {
            let out = transpose_lasso(problem, cfg)?;
            (out.x, out.record)
        }
        (Method::Transpose | Method::Unwrapped, ProblemKind::DualLasso) => {
            let out = unwrapped_admm(problem, cfg)?;
            let dual = out.dual.ok_or(Error::param("dual recovery missing"))?;
            (dual.x, out.record)
        }
        (Method::Transpose | Method::Unwrapped, _) => {
            let out = unwrapped_admm(problem, cfg)?;
            (out.x, out.record)
        }
        (Method::Consensus, _) => {
            let out = consensus_admm(problem, cfg)?;
            (out.z, out.record)
        }
    };
    let objective = match (&problem.dual, problem.kind) {
        (Some(info), ProblemKind::DualLasso) => {
            // primal lasso objective at the recovered x
            let mut r: Vec<f64> = info.targets.iter().map(|t| -t).collect();
            let mut offset = 0;
            for b in problem.blocks.iter().skip(1) {
                let k = b.matrix.rows();
                let part = b.matrix.apply(&x[offset..offset + k], true)?;
                for (a, v) in r.iter_mut().zip(part) {
                    *a += v;
                }
                offset += k;
            }
            0.5 * r.iter().map(|v| v * v).sum::<f64>()
                + info.mu * x.iter().map(|v| v.abs()).sum::<f64>()
        }
        _ => problem.objective(&x)?,
    };
    if !objective.is_finite() {
        return Err(Error::param(format!(
            "non-finite objective {}",
            norm_inf(&x)
        )));
    }
    Ok(RunResult {
        method,
        x,
        objective,
        record,
    })
}

/// Columns of the comparison CSV.
pub const COMPARE_COLUMNS: [&str; 13] = [
    "method",
    "problem",
    "hetero",
    "status",
    "iterations",
    "final_objective",
    "wall_seconds",
    "compute_seconds",
    "setup_bytes_up",
    "bytes_up",
    "bytes_down",
    "bytes_up_per_iter",
    "tau",
];

pub fn compare_row(r: &RunResult, hetero: bool) -> Vec<String> {
    let rec = &r.record;
    let iters = rec.iterations().max(1) as f64;
    vec![
        r.method.name().to_string(),
        rec.meta.problem.name().to_string(),
        hetero.to_string(),
        rec.meta.status.name().to_string(),
        rec.iterations().to_string(),
        format!("{:e}", r.objective),
        format!("{:e}", rec.wall_seconds()),
        format!("{:e}", rec.total_compute_seconds()),
        rec.meta.setup_bytes_up.to_string(),
        rec.total_bytes_up().to_string(),
        rec.total_bytes_down().to_string(),
        format!("{}", rec.total_bytes_up() as f64 / iters),
        format!("{:e}", rec.meta.tau),
    ]
}
