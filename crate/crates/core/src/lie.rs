//! Numeric Lie brackets, controllability span analysis, and first-order
//! singularity detection.
//!
//! `[f, g](x) = (dg/dx) f(x) - (df/dx) g(x)` is the net infinitesimal motion
//! produced by flowing along `f`, then `g`, then `-f`, then `-g`. Depth-one
//! brackets of the control columns (and of the drift with each column) are
//! exactly the directions the second-order insertion Hessian can exploit, so
//! the span of `{h_i} + {[h_i,h_j]} + {[g,h_i]}` decides whether a descent
//! direction exists at states where the first-order gradient is singular.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::models::ControlAffine;

/// A vector field with an optional analytic Jacobian. Without one, the
/// bracket falls back to central differences with step 1e-5.
pub struct VectorField<'a> {
    pub eval: &'a dyn Fn(&DVector<f64>) -> DVector<f64>,
    pub jacobian: Option<&'a dyn Fn(&DVector<f64>) -> DMatrix<f64>>,
}

const FD_STEP: f64 = 1e-5;

fn field_jacobian(f: &VectorField, x: &DVector<f64>) -> DMatrix<f64> {
    if let Some(j) = f.jacobian {
        return j(x);
    }
    let fx = (f.eval)(x);
    let mut jac = DMatrix::zeros(fx.len(), x.len());
    for c in 0..x.len() {
        let mut xp = x.clone();
        xp[c] += FD_STEP;
        let mut xm = x.clone();
        xm[c] -= FD_STEP;
        jac.set_column(c, &((&(f.eval)(&xp) - (f.eval)(&xm)) / (2.0 * FD_STEP)));
    }
    jac
}

/// `[f, g](x) = (dg/dx) f(x) - (df/dx) g(x)`.
pub fn lie_bracket(f: &VectorField, g: &VectorField, x: &DVector<f64>) -> DVector<f64> {
    let fx = (f.eval)(x);
    let gx = (g.eval)(x);
    field_jacobian(g, x) * fx - field_jacobian(f, x) * gx
}

/// Span analysis of the control columns and their depth-one brackets.
#[derive(Debug, Clone, Serialize)]
pub struct SpanReport {
    /// Numerical rank of the stacked columns (after any tangent projection).
    pub rank: usize,
    /// Label of every stacked column, in order.
    pub basis_labels: Vec<String>,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
    /// Evaluation state.
    pub state: Vec<f64>,
}

fn bracket_columns(model: &dyn ControlAffine, t: f64, x: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<String>) {
    let m = model.control_dim();
    let h = model.control_matrix(t, x);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut labels = Vec::new();
    for i in 0..m {
        cols.push(DVector::from(h.column(i)));
        labels.push(format!("h{}", i + 1));
    }
    let hi: Vec<DVector<f64>> = cols.clone();
    let dhi: Vec<DMatrix<f64>> = (0..m).map(|k| model.control_column_jacobian(k, t, x)).collect();
    for i in 0..m {
        for j in (i + 1)..m {
            // [h_i, h_j] = (D_x h_j) h_i - (D_x h_i) h_j.
            cols.push(&dhi[j] * &hi[i] - &dhi[i] * &hi[j]);
            labels.push(format!("[h{},h{}]", i + 1, j + 1));
        }
    }
    let g = model.drift(t, x);
    let dg = model.drift_jacobian(t, x);
    for i in 0..m {
        // [g, h_i] = (D_x h_i) g - (D_x g) h_i.
        cols.push(&dhi[i] * &g - &dg * &hi[i]);
        labels.push(format!("[g,h{}]", i + 1));
    }
    (cols, labels)
}

fn rank_report(
    model: &dyn ControlAffine,
    x: &DVector<f64>,
    tol: f64,
    cols: Vec<DVector<f64>>,
    labels: Vec<String>,
) -> SpanReport {
    let n = model.state_dim();
    let mut stack = DMatrix::zeros(n, cols.len());
    for (c, col) in cols.iter().enumerate() {
        stack.set_column(c, col);
    }
    // On quaternion systems the raw ambient rank is misleading: project the
    // quaternion rows onto the tangent space of the unit-norm constraint.
    if let Some(off) = model.quat_block() {
        let q = DVector::from(x.rows(off, 4));
        for c in 0..stack.ncols() {
            let dot = (0..4).map(|i| stack[(off + i, c)] * q[i]).sum::<f64>();
            for i in 0..4 {
                stack[(off + i, c)] -= dot * q[i];
            }
        }
    }
    let svals = stack.svd(false, false).singular_values;
    let mut singular_values: Vec<f64> = svals.iter().copied().collect();
    singular_values.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let rank = if smax == 0.0 {
        0
    } else {
        singular_values.iter().filter(|s| **s > tol * smax).count()
    };
    SpanReport { rank, basis_labels: labels, singular_values, state: x.iter().copied().collect() }
}

/// Rank of `{h_i} + {[h_i, h_j]} + {[g, h_i]}` at `x`.
pub fn span_rank(model: &dyn ControlAffine, x: &DVector<f64>, tol: f64) -> SpanReport {
    let (cols, labels) = bracket_columns(model, 0.0, x);
    rank_report(model, x, tol, cols, labels)
}

/// Rank of the control columns alone at `x`.
pub fn span_rank_controls_only(model: &dyn ControlAffine, x: &DVector<f64>, tol: f64) -> SpanReport {
    let m = model.control_dim();
    let h = model.control_matrix(0.0, x);
    let cols: Vec<DVector<f64>> = (0..m).map(|i| DVector::from(h.column(i))).collect();
    let labels = (0..m).map(|i| format!("h{}", i + 1)).collect();
    rank_report(model, x, tol, cols, labels)
}

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Outcome of the first-order singularity test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SingularityReport {
    /// `rho` is orthogonal (to tolerance) to every control column.
    pub singular: bool,
    /// `rho` itself vanishes, which can also mean the trajectory is already
    /// a local optimizer rather than a genuinely stuck configuration.
    pub possible_optimizer: bool,
}

/// True iff `|rho . h_i| < tol * |rho| * |h_i|` for every control column.
pub fn first_order_singular(
    rho: &DVector<f64>,
    model: &dyn ControlAffine,
    t: f64,
    x: &DVector<f64>,
    tol: f64,
) -> SingularityReport {
    let rho_norm = rho.norm();
    if rho_norm == 0.0 {
        return SingularityReport { singular: true, possible_optimizer: true };
    }
    let h = model.control_matrix(t, x);
    for i in 0..model.control_dim() {
        let col = h.column(i);
        let scale = rho_norm * col.norm();
        if col.dot(rho).abs() >= tol * scale {
            return SingularityReport { singular: false, possible_optimizer: false };
        }
    }
    SingularityReport { singular: true, possible_optimizer: false }
}
