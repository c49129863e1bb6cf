//! Underactuated kinematic rigid body in 3D.
//!
//! States `[x, y, z, q0, q1, q2, q3]` (cm and unit quaternion), controls
//! `[F1, F3, T1, T2]`: surge and heave body velocities (cm/s) plus roll and
//! pitch body rates (rad/s). Sway `F2` and yaw `T3` are removed, which makes
//! the body underactuated; the missing translation directions are recovered
//! by first-order Lie brackets of the remaining columns.
//!
//! ```text
//! b' = R_q * [F1, 0, F3]
//! q' = 0.5 * body_rate_matrix(q) * [T1, T2, 0]
//! ```

use nalgebra::{DMatrix, DVector};

use super::quat;
use super::{ControlAffine, Overrides};
use crate::error::Result;

const LINEAR_LIMIT: f64 = 10.0; // cm/s
const ANGULAR_LIMIT: f64 = 10.0; // rad/s

#[derive(Debug, Clone)]
pub struct KinBody3d {
    saturation: Vec<(f64, f64)>,
    drift: Option<[f64; 3]>,
    hq: [[DMatrix<f64>; 3]; 3],
}

impl KinBody3d {
    pub fn new(overrides: &Overrides) -> Result<Self> {
        Ok(Self {
            saturation: overrides.saturation.clone().unwrap_or_else(|| {
                vec![
                    (-LINEAR_LIMIT, LINEAR_LIMIT),
                    (-LINEAR_LIMIT, LINEAR_LIMIT),
                    (-ANGULAR_LIMIT, ANGULAR_LIMIT),
                    (-ANGULAR_LIMIT, ANGULAR_LIMIT),
                ]
            }),
            drift: overrides.drift,
            hq: quat::rotation_entry_hessians(),
        })
    }

    fn q_slice<'a>(&self, x: &'a DVector<f64>) -> &'a [f64] {
        &x.as_slice()[3..7]
    }
}

impl ControlAffine for KinBody3d {
    fn state_dim(&self) -> usize {
        7
    }

    fn control_dim(&self) -> usize {
        4
    }

    fn drift(&self, _t: f64, _x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(7);
        if let Some(d) = self.drift {
            g[0] = d[0];
            g[1] = d[1];
            g[2] = d[2];
        }
        g
    }

    fn control_matrix(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let q = self.q_slice(x);
        let r = quat::rotation(q);
        let b = quat::body_rate_matrix(q);
        let mut h = DMatrix::zeros(7, 4);
        for i in 0..3 {
            h[(i, 0)] = r[(i, 0)]; // surge: first rotation column
            h[(i, 1)] = r[(i, 2)]; // heave: third rotation column
        }
        for i in 0..4 {
            h[(3 + i, 2)] = 0.5 * b[(i, 0)]; // roll rate
            h[(3 + i, 3)] = 0.5 * b[(i, 1)]; // pitch rate
        }
        h
    }

    fn drift_jacobian(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(7, 7)
    }

    fn control_column_jacobian(&self, k: usize, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(7, 7);
        match k {
            0 | 1 => {
                // Rotation-column entries are quadratic forms: gradient = HQ q.
                let q = DVector::from_column_slice(self.q_slice(x));
                let col = if k == 0 { 0 } else { 2 };
                for i in 0..3 {
                    let grad = &self.hq[i][col] * &q;
                    for a in 0..4 {
                        j[(i, 3 + a)] = grad[a];
                    }
                }
            }
            2 | 3 => {
                // 0.5 * body_rate_matrix column is linear in q.
                let b = k - 2;
                for i in 0..4 {
                    for a in 0..4 {
                        j[(3 + i, 3 + a)] = 0.5 * quat::angular_matrix_derivative(i, a, b);
                    }
                }
            }
            _ => unreachable!("kinbody3d has 4 control channels"),
        }
        j
    }

    fn weighted_hessian_sum(
        &self,
        _t: f64,
        _x: &DVector<f64>,
        u: &DVector<f64>,
        weights: &DVector<f64>,
    ) -> DMatrix<f64> {
        // Only the position rates are nonlinear (quadratic) in the state.
        let mut h = DMatrix::zeros(7, 7);
        for i in 0..3 {
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            let block = &self.hq[i][0] * (w * u[0]) + &self.hq[i][2] * (w * u[1]);
            for a in 0..4 {
                for b in 0..4 {
                    h[(3 + a, 3 + b)] += block[(a, b)];
                }
            }
        }
        h
    }

    fn saturation(&self) -> &[(f64, f64)] {
        &self.saturation
    }

    fn project(&self, x: &mut DVector<f64>) {
        quat::renormalize_block(x, 3);
    }

    fn quat_block(&self) -> Option<usize> {
        Some(3)
    }

    fn state_labels(&self) -> &'static [&'static str] {
        &["x_cm", "y_cm", "z_cm", "q0", "q1", "q2", "q3"]
    }

    fn control_labels(&self) -> &'static [&'static str] {
        &["f1_cm_s", "f3_cm_s", "t1_rad_s", "t2_rad_s"]
    }

    fn name(&self) -> &'static str {
        "kinbody3d"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_state() -> DVector<f64> {
        DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn surge_moves_along_body_x() {
        let kb = KinBody3d::new(&Overrides::default()).unwrap();
        let dx = kb.dynamics(0.0, &identity_state(), &DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(dx[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(dx.rows(1, 6).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn heave_moves_along_body_z() {
        let kb = KinBody3d::new(&Overrides::default()).unwrap();
        let dx = kb.dynamics(0.0, &identity_state(), &DVector::from_vec(vec![0.0, 3.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(dx[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn roll_rate_drives_quaternion() {
        let kb = KinBody3d::new(&Overrides::default()).unwrap();
        let dx = kb.dynamics(0.0, &identity_state(), &DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0])).unwrap();
        // q' = 0.5 * [ -q1, q0, q3, -q2 ] * T1 at identity = [0, 0.5, 0, 0].
        assert_relative_eq!(dx[4], 0.5, epsilon = 1e-12);
        assert_relative_eq!(dx[3], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_restores_unit_norm() {
        let kb = KinBody3d::new(&Overrides::default()).unwrap();
        let mut x = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.1, 0.2, -0.05, 0.3]);
        kb.project(&mut x);
        let n = x.rows(3, 4).norm();
        assert_relative_eq!(n, 1.0, epsilon = 1e-12);
    }
}
