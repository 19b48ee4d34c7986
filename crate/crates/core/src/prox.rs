//! Coordinate-separable proximal operators.
//!
//! `prox_f(z, δ) = argmin_y f(y) + (1/2δ)‖y − z‖²`. Every loss used by the
//! y-updates is a sum of one-dimensional terms, so each operator here works
//! coordinate by coordinate.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Numerically stable `log(1 + exp(t))`.
pub fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic sigmoid `1 / (1 + exp(−t))` without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_labels(labels: &[f64]) -> Result<()> {
    match labels.iter().position(|&l| l != 1.0 && l != -1.0) {
        Some(index) => Err(Error::InvalidLabel {
            index,
            value: labels[index],
        }),
        None => Ok(()),
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "prox step must be positive, got {delta}"
        )))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "{name} must be non-negative, got {v}"
        )))
    }
}

/// Soft thresholding: `sign(z)·max(|z| − μδ, 0)`.
pub fn prox_l1(z: &[f64], delta: f64, mu: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    check_nonneg("mu", mu)?;
    Error::check_finite("prox_l1 input", z)?;
    let t = mu * delta;
    Ok(z.iter().map(|&v| soft_threshold(v, t)).collect())
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Prox of the hinge loss `Σ max(1 − lₖzₖ, 0)`:
/// `zₖ + lₖ·max(min(1 − lₖzₖ, δ), 0)`.
pub fn prox_hinge(z: &[f64], labels: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    Error::check_len("prox_hinge labels", z.len(), labels.len())?;
    check_labels(labels)?;
    Ok(z.iter()
        .zip(labels)
        .map(|(&zk, &lk)| zk + lk * (1.0 - lk * zk).min(delta).max(0.0))
        .collect())
}

/// Scalar logistic prox for label `+1`: minimizes
/// `log(1 + exp(−y)) + (y − z)²/(2δ)`.
///
/// The minimizer lies in `[z, z + δ]` because the loss slope is in `(−1, 0)`.
/// Newton steps that leave the current bracket, or that do not halve the
/// previous step, are replaced by bisection.
pub fn logistic_prox_scalar(z: f64, delta: f64) -> f64 {
    let grad = |y: f64| -sigmoid(-y) + (y - z) / delta;
    let (mut lo, mut hi) = (z, z + delta);
    let mut y = z;
    let mut last_step = hi - lo;
    for _ in 0..200 {
        let g = grad(y);
        if g.abs() <= 1e-10 {
            return y;
        }
        if g < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let s = sigmoid(y);
        let h = s * (1.0 - s) + 1.0 / delta;
        let mut next = y - g / h;
        // bisect when Newton leaves the bracket or fails to halve the step
        if !(next > lo && next < hi) || (next - y).abs() > 0.5 * last_step {
            next = 0.5 * (lo + hi);
        }
        last_step = (next - y).abs();
        if next == y || hi - lo <= 4.0 * f64::EPSILON * y.abs().max(1.0) {
            return next;
        }
        y = next;
    }
    y
}

/// Prox of `Σ log(1 + exp(−lₖyₖ))`, solved per coordinate by safeguarded
/// Newton. Uses `prox(l = −1, z) = −prox(l = +1, −z)`.
pub fn prox_logistic(z: &[f64], labels: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    Error::check_len("prox_logistic labels", z.len(), labels.len())?;
    check_labels(labels)?;
    Error::check_finite("prox_logistic input", z)?;
    Ok(z.iter()
        .zip(labels)
        .map(|(&zk, &lk)| lk * logistic_prox_scalar(lk * zk, delta))
        .collect())
}

/// Prox of `½‖y + b‖²`: `(z − δb)/(1 + δ)`.
pub fn prox_quadratic(z: &[f64], b: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    Error::check_len("prox_quadratic offsets", z.len(), b.len())?;
    Ok(z.iter()
        .zip(b)
        .map(|(&zk, &bk)| (zk - delta * bk) / (1.0 + delta))
        .collect())
}

/// Projection onto the ℓ∞ ball of radius `mu`.
pub fn project_linf(z: &[f64], mu: f64) -> Result<Vec<f64>> {
    check_nonneg("radius", mu)?;
    Ok(z.iter().map(|&v| v.clamp(-mu, mu)).collect())
}

/// A separable convex function together with its proximal map.
#[derive(Debug, Clone, PartialEq)]
pub enum SeparableProx {
    /// `μ‖y‖₁`
    L1 { mu: f64 },
    /// `C·Σ max(1 − lₖyₖ, 0)`
    Hinge { labels: Vec<f64>, c: f64 },
    /// `Σ log(1 + exp(−lₖyₖ))`
    Logistic { labels: Vec<f64> },
    /// `½‖y + b‖²`. Least squares `½‖y − t‖²` is `b = −t`.
    Quadratic { b: Vec<f64> },
    /// Indicator of `‖y‖∞ ≤ radius`.
    LinfBall { radius: f64 },
    /// `f = 0`
    Identity,
}

impl SeparableProx {
    pub fn least_squares(targets: &[f64]) -> Self {
        SeparableProx::Quadratic {
            b: targets.iter().map(|t| -t).collect(),
        }
    }

    /// Coordinate count the function is tied to, if any.
    pub fn len_hint(&self) -> Option<usize> {
        match self {
            SeparableProx::Hinge { labels, .. } | SeparableProx::Logistic { labels } => {
                Some(labels.len())
            }
            SeparableProx::Quadratic { b } => Some(b.len()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SeparableProx::L1 { mu } => check_nonneg("mu", *mu),
            SeparableProx::Hinge { labels, c } => {
                if !(*c > 0.0) {
                    return Err(Error::param(format!("C must be positive, got {c}")));
                }
                check_labels(labels)
            }
            SeparableProx::Logistic { labels } => check_labels(labels),
            SeparableProx::Quadratic { b } => Error::check_finite("quadratic offsets", b),
            SeparableProx::LinfBall { radius } => check_nonneg("radius", *radius),
            SeparableProx::Identity => Ok(()),
        }
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if let Some(n) = self.len_hint() {
            Error::check_len("separable prox input", n, z.len())?;
        }
        Ok(())
    }

    pub fn apply(&self, z: &[f64], delta: f64) -> Result<Vec<f64>> {
        self.apply_with(z, delta, None)
    }

    /// Evaluates the prox, using `table` for logistic terms when given.
    pub fn apply_with(
        &self,
        z: &[f64],
        delta: f64,
        table: Option<&ProxLookupTable>,
    ) -> Result<Vec<f64>> {
        self.check_input(z)?;
        match self {
            SeparableProx::L1 { mu } => prox_l1(z, delta, *mu),
            SeparableProx::Hinge { labels, c } => {
                check_delta(delta)?;
                prox_hinge(z, labels, c * delta)
            }
            SeparableProx::Logistic { labels } => match table {
                Some(t) => {
                    if t.delta() != delta {
                        return Err(Error::param(format!(
                            "lookup table built for delta {} used with delta {delta}",
                            t.delta()
                        )));
                    }
                    check_labels(labels)?;
                    Ok(z.iter()
                        .zip(labels)
                        .map(|(&zk, &lk)| t.eval(zk, lk))
                        .collect())
                }
                None => prox_logistic(z, labels, delta),
            },
            SeparableProx::Quadratic { b } => prox_quadratic(z, b, delta),
            SeparableProx::LinfBall { radius } => {
                check_delta(delta)?;
                project_linf(z, *radius)
            }
            SeparableProx::Identity => {
                check_delta(delta)?;
                Ok(z.to_vec())
            }
        }
    }

    /// `f(y)`; the ball indicator is `+∞` outside a relative 1e-9 margin.
    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            SeparableProx::LinfBall { radius } => {
                let margin = radius * (1.0 + 1e-9) + 1e-12;
                if y.iter().all(|v| v.abs() <= margin) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            _ => self.finite_value(y),
        }
    }

    /// `f(y)` with the ball indicator counted as zero. Used for progress
    /// reporting, where the constraint is tracked through the residuals.
    pub fn finite_value(&self, y: &[f64]) -> f64 {
        match self {
            SeparableProx::L1 { mu } => mu * y.iter().map(|v| v.abs()).sum::<f64>(),
            SeparableProx::Hinge { labels, c } => {
                c * y
                    .iter()
                    .zip(labels)
                    .map(|(v, l)| (1.0 - l * v).max(0.0))
                    .sum::<f64>()
            }
            SeparableProx::Logistic { labels } => {
                y.iter().zip(labels).map(|(v, l)| log1p_exp(-l * v)).sum()
            }
            SeparableProx::Quadratic { b } => {
                0.5 * y
                    .iter()
                    .zip(b)
                    .map(|(v, bk)| (v + bk) * (v + bk))
                    .sum::<f64>()
            }
            SeparableProx::LinfBall { .. } | SeparableProx::Identity => 0.0,
        }
    }

    /// `∇f(y)` for the differentiable kinds.
    pub fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        match self {
            SeparableProx::Logistic { labels } => Some(
                y.iter()
                    .zip(labels)
                    .map(|(v, l)| -l * sigmoid(-l * v))
                    .collect(),
            ),
            SeparableProx::Quadratic { b } => Some(y.iter().zip(b).map(|(v, bk)| v + bk).collect()),
            SeparableProx::Identity => Some(vec![0.0; y.len()]),
            _ => None,
        }
    }

    /// Lipschitz constant of `∇f` for the differentiable kinds.
    pub fn gradient_lipschitz(&self) -> Option<f64> {
        match self {
            SeparableProx::Logistic { .. } => Some(0.25),
            SeparableProx::Quadratic { .. } => Some(1.0),
            SeparableProx::Identity => Some(0.0),
            _ => None,
        }
    }
}

/// Which scalar prox a lookup table tabulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupKind {
    Logistic,
}

/// Tabulated logistic prox (label `+1`) on a uniform grid with linear
/// interpolation. Queries outside the grid are evaluated exactly.
#[derive(Debug, Clone)]
pub struct ProxLookupTable {
    lo: f64,
    hi: f64,
    step: f64,
    delta: f64,
    values: Vec<f64>,
}

pub const LOOKUP_DEFAULT_LO: f64 = -30.0;
pub const LOOKUP_DEFAULT_HI: f64 = 30.0;
pub const LOOKUP_DEFAULT_STEP: f64 = 1e-3;
const LOOKUP_MAX_ERROR: f64 = 1e-6;

impl ProxLookupTable {
    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Prox value for input `z` and label `±1`.
    pub fn eval(&self, z: f64, label: f64) -> f64 {
        let t = label * z;
        label * self.eval_positive(t)
    }

    fn eval_positive(&self, t: f64) -> f64 {
        if !(t >= self.lo && t <= self.hi) {
            return logistic_prox_scalar(t, self.delta);
        }
        let pos = (t - self.lo) / self.step;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - i as f64;
        if frac == 0.0 {
            return self.values[i];
        }
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Largest interpolation error seen at cell midpoints.
    fn midpoint_error(&self) -> f64 {
        (0..self.values.len() - 1)
            .map(|i| {
                let t = self.lo + (i as f64 + 0.5) * self.step;
                if t > self.hi {
                    return 0.0;
                }
                (self.eval_positive(t) - logistic_prox_scalar(t, self.delta)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Builds a table over `[lo, hi]`. If the requested spacing cannot reach the
/// 1e-6 interpolation bound for this `δ`, the spacing is halved (up to ten
/// times) until it does.
pub fn build_lookup(
    kind: LookupKind,
    delta: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<ProxLookupTable> {
    let LookupKind::Logistic = kind;
    check_delta(delta)?;
    if !(lo < hi) || !(step > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::param(format!(
            "invalid lookup grid [{lo}, {hi}] step {step}"
        )));
    }
    let mut step = step;
    for _ in 0..=10 {
        let cells = ((hi - lo) / step).ceil() as usize;
        if !(1..=50_000_000).contains(&cells) {
            return Err(Error::param(format!("lookup grid with {cells} cells")));
        }
        let values = (0..=cells)
            .map(|i| logistic_prox_scalar(lo + i as f64 * step, delta))
            .collect();
        let table = ProxLookupTable {
            lo,
            hi,
            step,
            delta,
            values,
        };
        if table.midpoint_error() <= LOOKUP_MAX_ERROR {
            return Ok(table);
        }
        step *= 0.5;
    }
    Err(Error::param(format!(
        "lookup table for delta {delta} cannot reach interpolation error {LOOKUP_MAX_ERROR}"
    )))
}

pub fn default_logistic_table(delta: f64) -> Result<Arc<ProxLookupTable>> {
    build_lookup(
        LookupKind::Logistic,
        delta,
        LOOKUP_DEFAULT_LO,
        LOOKUP_DEFAULT_HI,
        LOOKUP_DEFAULT_STEP,
    )
    .map(Arc::new)
}

pub fn eval_lookup(table: &ProxLookupTable, z: f64, label: f64) -> f64 {
    table.eval(z, label)
}
