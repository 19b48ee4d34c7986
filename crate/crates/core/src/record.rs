//! Per-iteration convergence records and their CSV form.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::problem::ProblemKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIter,
    Error,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::Error => "error",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Unwrapped,
    Consensus,
    TransposeLasso,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Unwrapped => "unwrapped",
            SolverKind::Consensus => "consensus",
            SolverKind::TransposeLasso => "transpose-lasso",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One iteration. Byte and time columns are increments for this iteration,
/// not running totals; `wall_seconds` is elapsed time since the solve began.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterRow {
    pub k: usize,
    pub wall_seconds: f64,
    pub compute_seconds: f64,
    pub barrier_wait_seconds: f64,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    /// `‖Dᵀ∇f(Dxᵏ)‖²` for differentiable losses.
    pub grad_norm_sq: Option<f64>,
    /// `‖yᵏ − yᵏ⁻¹‖²` (unwrapped only).
    pub y_change_sq: Option<f64>,
    /// `‖Dxᵏ − yᵏ‖²` (unwrapped only).
    pub constraint_sq: Option<f64>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub diag_bytes_up: u64,
    pub diag_bytes_down: u64,
    pub inner_iterations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub solver: SolverKind,
    pub problem: ProblemKind,
    pub m: usize,
    pub n: usize,
    pub nodes: usize,
    pub tau: f64,
    pub seed: u64,
    pub status: Status,
    /// `ρ(DᵀD)` of the matrix the solver factored.
    pub rho: Option<f64>,
    pub loss_lipschitz: Option<f64>,
    /// `(L + τ)²·ρ(DᵀD)`.
    pub bound_constant: Option<f64>,
    pub setup_bytes_up: u64,
    pub setup_bytes_down: u64,
    /// Outer iterations in which some sub-solver stopped short of tolerance.
    pub inexact_steps: u64,
}

impl RunMeta {
    pub fn new(
        solver: SolverKind,
        problem: ProblemKind,
        m: usize,
        n: usize,
        nodes: usize,
        tau: f64,
        seed: u64,
    ) -> Self {
        Self {
            solver,
            problem,
            m,
            n,
            nodes,
            tau,
            seed,
            status: Status::MaxIter,
            rho: None,
            loss_lipschitz: None,
            bound_constant: None,
            setup_bytes_up: 0,
            setup_bytes_down: 0,
            inexact_steps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub meta: RunMeta,
    pub rows: Vec<IterRow>,
}

/// CSV header. Metadata is repeated on every row so each row stands alone.
pub const CSV_COLUMNS: [&str; 33] = [
    "solver",
    "problem",
    "m",
    "n",
    "nodes",
    "tau",
    "seed",
    "status",
    "k",
    "wall_seconds",
    "compute_seconds",
    "barrier_wait_seconds",
    "objective",
    "primal_residual",
    "dual_residual",
    "eps_primal",
    "eps_dual",
    "grad_norm_sq",
    "y_change_sq",
    "constraint_sq",
    "bytes_up",
    "bytes_down",
    "diag_bytes_up",
    "diag_bytes_down",
    "inner_iterations",
    "rho",
    "loss_lipschitz",
    "bound_constant",
    "setup_bytes_up",
    "setup_bytes_down",
    "inexact_steps",
    "final_objective",
    "iterations",
];

/// Columns whose values depend on machine timing.
pub const TIMING_COLUMNS: [&str; 3] = ["wall_seconds", "compute_seconds", "barrier_wait_seconds"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ConvergenceRecord {
    pub fn new(meta: RunMeta) -> Self {
        Self {
            meta,
            rows: Vec::new(),
        }
    }

    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.k)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.rows.last().map(|r| r.objective)
    }

    /// Sum of per-worker compute time over all iterations.
    pub fn total_compute_seconds(&self) -> f64 {
        self.rows.iter().map(|r| r.compute_seconds).sum()
    }

    pub fn total_bytes_up(&self) -> u64 {
        self.rows.iter().map(|r| r.bytes_up).sum()
    }

    pub fn total_bytes_down(&self) -> u64 {
        self.rows.iter().map(|r| r.bytes_down).sum()
    }

    pub fn wall_seconds(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.wall_seconds)
    }

    /// Checks the row invariants: strictly increasing `k` and finite
    /// residuals.
    pub fn validate(&self) -> Result<()> {
        let mut last = None;
        for r in &self.rows {
            if last.is_some_and(|k| r.k <= k) {
                return Err(Error::param(format!(
                    "record rows not strictly increasing at k = {}",
                    r.k
                )));
            }
            last = Some(r.k);
            if !r.primal_residual.is_finite() || !r.dual_residual.is_finite() {
                return Err(Error::param(format!("non-finite residual at k = {}", r.k)));
            }
        }
        Ok(())
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        format!(
            "solver={} problem={} status={} iterations={} objective={}",
            self.meta.solver,
            self.meta.problem,
            self.meta.status,
            self.iterations(),
            self.final_objective()
                .map_or_else(|| "nan".to_string(), |v| format!("{v:.12e}")),
        )
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        let m = &self.meta;
        let final_obj = opt(self.final_objective());
        let iterations = self.iterations().to_string();
        for r in &self.rows {
            w.write_record([
                m.solver.name().to_string(),
                m.problem.name().to_string(),
                m.m.to_string(),
                m.n.to_string(),
                m.nodes.to_string(),
                m.tau.to_string(),
                m.seed.to_string(),
                m.status.name().to_string(),
                r.k.to_string(),
                r.wall_seconds.to_string(),
                r.compute_seconds.to_string(),
                r.barrier_wait_seconds.to_string(),
                r.objective.to_string(),
                r.primal_residual.to_string(),
                r.dual_residual.to_string(),
                r.eps_primal.to_string(),
                r.eps_dual.to_string(),
                opt(r.grad_norm_sq),
                opt(r.y_change_sq),
                opt(r.constraint_sq),
                r.bytes_up.to_string(),
                r.bytes_down.to_string(),
                r.diag_bytes_up.to_string(),
                r.diag_bytes_down.to_string(),
                r.inner_iterations.to_string(),
                opt(m.rho),
                opt(m.loss_lipschitz),
                opt(m.bound_constant),
                m.setup_bytes_up.to_string(),
                m.setup_bytes_down.to_string(),
                m.inexact_steps.to_string(),
                final_obj.clone(),
                iterations.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::param(format!("csv is not utf-8: {e}")))
    }

    /// Writes to a temporary file next to `path` and renames it into place,
    /// so a failed run never leaves a partial file behind.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        self.write_csv_to(tmp.as_file_mut())?;
        tmp.as_file_mut().sync_all()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

/// Drops the timing columns from a CSV produced by [`ConvergenceRecord`],
/// leaving only content that is expected to be reproducible.
pub fn strip_timing_columns(csv_text: &str) -> Result<String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(csv_text.as_bytes());
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut keep: Option<Vec<bool>> = None;
    for rec in rdr.records() {
        let rec = rec?;
        let mask =
            keep.get_or_insert_with(|| rec.iter().map(|h| !TIMING_COLUMNS.contains(&h)).collect());
        out.write_record(
            rec.iter()
                .zip(mask.iter())
                .filter(|(_, k)| **k)
                .map(|(v, _)| v),
        )?;
    }
    let bytes = out
        .into_inner()
        .map_err(|e| Error::param(format!("csv flush: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::param(format!("csv is not utf-8: {e}")))
}
