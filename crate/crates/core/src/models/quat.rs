//! Unit-quaternion kinematics shared by the 3D rigid-body models.
//!
//! Convention: `q = [q0, q1, q2, q3]` with scalar part first. Every entry of
//! the rotation matrix is an exact quadratic form in `q`, so the constant
//! Hessians [`rotation_entry_hessians`] serve as the single source of truth:
//! `R[i][j] = 0.5 * q^T * HQ[i][j] * q`, the gradient is `HQ[i][j] * q`, and
//! the second derivative is `HQ[i][j]` itself.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rotation matrix for a unit quaternion, entries written out explicitly.
pub fn rotation(q: &[f64]) -> DMatrix<f64> {
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    DMatrix::from_row_slice(
        3,
        3,
        &[
            q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3,
            2.0 * (q1 * q2 - q0 * q3),
            2.0 * (q1 * q3 + q0 * q2),
            2.0 * (q1 * q2 + q0 * q3),
            q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3,
            2.0 * (q2 * q3 - q0 * q1),
            2.0 * (q1 * q3 - q0 * q2),
            2.0 * (q2 * q3 + q0 * q1),
            q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3,
        ],
    )
}

/// Rotation matrix with a unit-norm contract check (tolerance 1e-6).
pub fn quaternion_rotation(q: &[f64]) -> Result<DMatrix<f64>> {
    if q.len() != 4 {
        return Err(Error::Contract(format!("quaternion needs 4 components, got {}", q.len())));
    }
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if (norm - 1.0).abs() >= 1e-6 {
        return Err(Error::Contract(format!("quaternion norm {norm} is not within 1e-6 of 1")));
    }
    Ok(rotation(q))
}

fn hess_diag(d: [f64; 4]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 * d[0], 2.0 * d[1], 2.0 * d[2], 2.0 * d[3]]))
}

fn hess_pairs(pairs: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(4, 4);
    for &(a, b, v) in pairs {
        h[(a, b)] = v;
        h[(b, a)] = v;
    }
    h
}

/// Constant 4x4 Hessians of the nine rotation-matrix entries with respect to
/// `q`, indexed `[row][col]`.
pub fn rotation_entry_hessians() -> [[DMatrix<f64>; 3]; 3] {
    [
        [
            hess_diag([1.0, 1.0, -1.0, -1.0]),
            hess_pairs(&[(1, 2, 2.0), (0, 3, -2.0)]),
            hess_pairs(&[(1, 3, 2.0), (0, 2, 2.0)]),
        ],
        [
            hess_pairs(&[(1, 2, 2.0), (0, 3, 2.0)]),
            hess_diag([1.0, -1.0, 1.0, -1.0]),
            hess_pairs(&[(2, 3, 2.0), (0, 1, -2.0)]),
        ],
        [
            hess_pairs(&[(1, 3, 2.0), (0, 2, -2.0)]),
            hess_pairs(&[(2, 3, 2.0), (0, 1, 2.0)]),
            hess_diag([1.0, -1.0, -1.0, 1.0]),
        ],
    ]
}

/// The 4x3 map from body angular velocity to quaternion rate:
/// `q_dot = 0.5 * body_rate_matrix(q) * omega`.
pub fn body_rate_matrix(q: &[f64]) -> DMatrix<f64> {
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    DMatrix::from_row_slice(4, 3, &[-q1, -q2, -q3, q0, -q3, q2, q3, q0, -q1, -q2, q1, q0])
}

/// The equivalent 4x4 form acting on the quaternion:
/// `q_dot = 0.5 * angular_matrix(omega) * q`.
pub fn angular_matrix(w: &[f64]) -> DMatrix<f64> {
    let (w1, w2, w3) = (w[0], w[1], w[2]);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, -w1, -w2, -w3, //
            w1, 0.0, w3, -w2, //
            w2, -w3, 0.0, w1, //
            w3, w2, -w1, 0.0,
        ],
    )
}

/// `d(angular_matrix)[i][a] / d omega_b`; all entries are 0 or +/-1.
pub fn angular_matrix_derivative(i: usize, a: usize, b: usize) -> f64 {
    // Entry (i, a) of angular_matrix is a signed omega component.
    const SIGNED: [[i8; 4]; 4] = [
        // 0 means zero entry; +/-k means +/- omega_k (1-based).
        [0, -1, -2, -3],
        [1, 0, 3, -2],
        [2, -3, 0, 1],
        [3, 2, -1, 0],
    ];
    let s = SIGNED[i][a];
    if s.unsigned_abs() as usize == b + 1 {
        if s > 0 {
            1.0
        } else {
            -1.0
        }
    } else {
        0.0
    }
}

/// Renormalize the 4-component block starting at `offset` to unit length.
pub fn renormalize_block(x: &mut DVector<f64>, offset: usize) {
    let norm = (x[offset] * x[offset]
        + x[offset + 1] * x[offset + 1]
        + x[offset + 2] * x[offset + 2]
        + x[offset + 3] * x[offset + 3])
        .sqrt();
    if norm > 0.0 {
        for i in 0..4 {
            x[offset + i] /= norm;
        }
    }
}
