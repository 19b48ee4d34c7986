use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm_sq, DenseMatrix};
use crate::prox::check_labels;

/// Dual iterate of the proximal SVM sub-problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSvmState {
    pub alpha: Vec<f64>,
    /// `AᵀLα`, updated incrementally.
    pub w_cache: Vec<f64>,
    /// Projected gradient per coordinate at the last full evaluation.
    pub residuals: Vec<f64>,
}

impl DualSvmState {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            alpha: vec![0.0; m],
            w_cache: vec![0.0; n],
            residuals: vec![0.0; m],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvmDualOptions {
    pub tol: f64,
    pub max_passes: usize,
    /// Weight `r` of the `(r/2)‖w‖²` term inside the sub-problem. `1` gives
    /// the textbook proximal SVM; `0` leaves only the proximal term, used when
    /// the regularizer lives elsewhere.
    pub reg: f64,
}

impl Default for SvmDualOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_passes: 200,
            reg: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvmDualOutcome {
    pub w: Vec<f64>,
    pub state: DualSvmState,
    pub passes: usize,
    pub converged: bool,
    pub dual_objective: f64,
}

/// `q_k = (r + τ) − τ l_k a_kᵀz`.
fn linear_term(data: &DenseMatrix, labels: &[f64], reg: f64, tau: f64, z: &[f64]) -> Vec<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(k, &l)| reg + tau - tau * l * dot(data.row(k), z))
        .collect()
}

/// `½‖AᵀLα‖² − αᵀq`.
pub fn svm_dual_objective(
    data: &DenseMatrix,
    labels: &[f64],
    alpha: &[f64],
    reg: f64,
    tau: f64,
    z: &[f64],
) -> Result<f64> {
    Error::check_len("svm dual labels", data.rows(), labels.len())?;
    Error::check_len("svm dual alpha", data.rows(), alpha.len())?;
    Error::check_len("svm dual z", data.cols(), z.len())?;
    let la: Vec<f64> = alpha.iter().zip(labels).map(|(a, l)| a * l).collect();
    let w = data.apply(&la, true)?;
    let q = linear_term(data, labels, reg, tau, z);
    Ok(0.5 * norm_sq(&w) - dot(alpha, &q))
}

fn projected(alpha: f64, g: f64, c: f64) -> f64 {
    if alpha <= 0.0 {
        g.min(0.0)
    } else if alpha >= c {
        g.max(0.0)
    } else {
        g
    }
}

/// Dual coordinate descent for
/// `min_w (r/2)‖w‖² + (τ/2)‖w − z‖² + C Σ max(0, 1 − l_k a_kᵀw)`.
///
/// Coordinates are swept in descending order of projected-gradient magnitude,
/// recomputed once per pass.
pub fn svm_dual_cd(
    data: &DenseMatrix,
    labels: &[f64],
    c: f64,
    tau: f64,
    z: &[f64],
    warm: Option<DualSvmState>,
    opts: &SvmDualOptions,
) -> Result<SvmDualOutcome> {
    let (m, n) = (data.rows(), data.cols());
    Error::check_len("svm_dual_cd labels", m, labels.len())?;
    Error::check_len("svm_dual_cd z", n, z.len())?;
    check_labels(labels)?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::param(format!("SVM C must be positive, got {c}")));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::param(format!("tau must be positive, got {tau}")));
    }
    if !(opts.reg >= 0.0) {
        return Err(Error::param("SVM regularizer weight must be non-negative"));
    }

    let mut state = match warm {
        Some(mut s) => {
            Error::check_len("svm_dual_cd warm alpha", m, s.alpha.len())?;
            s.alpha.iter_mut().for_each(|a| *a = a.clamp(0.0, c));
            let la: Vec<f64> = s.alpha.iter().zip(labels).map(|(a, l)| a * l).collect();
            s.w_cache = data.apply(&la, true)?;
            s.residuals.resize(m, 0.0);
            s
        }
        None => DualSvmState::zeros(m, n),
    };
    let q = linear_term(data, labels, opts.reg, tau, z);
    let diag: Vec<f64> = (0..m).map(|k| norm_sq(data.row(k))).collect();

    let grad = |k: usize, w: &[f64]| labels[k] * dot(data.row(k), w) - q[k];

    let mut passes = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..m).collect();
    loop {
        let mut worst = 0.0f64;
        for k in 0..m {
            let pg = projected(state.alpha[k], grad(k, &state.w_cache), c);
            state.residuals[k] = pg;
            worst = worst.max(pg.abs());
        }
        if worst <= opts.tol {
            converged = true;
            break;
        }
        if passes >= opts.max_passes {
            break;
        }
        passes += 1;
        order.sort_by(|&a, &b| {
            state.residuals[b]
                .abs()
                .total_cmp(&state.residuals[a].abs())
                .then(a.cmp(&b))
        });
        for &k in &order {
            let g = grad(k, &state.w_cache);
            let old = state.alpha[k];
            let new = if diag[k] > 0.0 {
                (old - g / diag[k]).clamp(0.0, c)
            } else if g < 0.0 {
                c
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                state.alpha[k] = new;
                axpy(delta * labels[k], data.row(k), &mut state.w_cache);
            }
        }
    }

    let scale = 1.0 / (opts.reg + tau);
    let w: Vec<f64> = state
        .w_cache
        .iter()
        .zip(z)
        .map(|(a, zi)| (a + tau * zi) * scale)
        .collect();
    let dual_objective = 0.5 * norm_sq(&state.w_cache) - dot(&state.alpha, &q);
    Ok(SvmDualOutcome {
        w,
        state,
        passes,
        converged,
        dual_objective,
    })
}
