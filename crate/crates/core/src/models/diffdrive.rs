//! Planar differential-drive cart with iRobot-class geometry.
//!
//! States `[x, y, theta]` in mm/mm/rad, controls `[u_r, u_l]` (wheel angular
//! velocities, rad/s). Purely kinematic: `g = 0` and
//!
//! ```text
//! x' = r cos(theta) (u_r + u_l)
//! y' = r sin(theta) (u_r + u_l)
//! theta' = (r / L) (u_r - u_l)
//! ```

use nalgebra::{DMatrix, DVector};

use super::{ControlAffine, Overrides};
use crate::error::Result;

/// Wheel radius in mm.
const WHEEL_RADIUS_MM: f64 = 36.0;
/// Wheel separation in mm.
const WHEEL_BASE_MM: f64 = 258.0;
/// Wheel angular speed limit: 150 mm/s of rim speed at the stock radius.
const WHEEL_RATE_LIMIT: f64 = 150.0 / 36.0;

#[derive(Debug, Clone)]
pub struct DiffDrive {
    r: f64,
    l: f64,
    saturation: Vec<(f64, f64)>,
}

impl DiffDrive {
    pub fn new(overrides: &Overrides) -> Result<Self> {
        Ok(Self {
            r: overrides.r.unwrap_or(WHEEL_RADIUS_MM),
            l: overrides.l.unwrap_or(WHEEL_BASE_MM),
            saturation: overrides
                .saturation
                .clone()
                .unwrap_or_else(|| vec![(-WHEEL_RATE_LIMIT, WHEEL_RATE_LIMIT); 2]),
        })
    }

    pub fn wheel_base(&self) -> f64 {
        self.l
    }

    pub fn wheel_radius(&self) -> f64 {
        self.r
    }
}

impl ControlAffine for DiffDrive {
    fn state_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn drift(&self, _t: f64, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(3)
    }

    fn control_matrix(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let (c, s) = (x[2].cos(), x[2].sin());
        DMatrix::from_row_slice(
            3,
            2,
            &[
                self.r * c,
                self.r * c,
                self.r * s,
                self.r * s,
                self.r / self.l,
                -self.r / self.l,
            ],
        )
    }

    fn drift_jacobian(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(3, 3)
    }

    fn control_column_jacobian(&self, _k: usize, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        // Both columns share the same theta dependence.
        let (c, s) = (x[2].cos(), x[2].sin());
        let mut j = DMatrix::zeros(3, 3);
        j[(0, 2)] = -self.r * s;
        j[(1, 2)] = self.r * c;
        j
    }

    fn weighted_hessian_sum(
        &self,
        _t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        weights: &DVector<f64>,
    ) -> DMatrix<f64> {
        let (c, s) = (x[2].cos(), x[2].sin());
        let total = u[0] + u[1];
        let mut h = DMatrix::zeros(3, 3);
        // d^2 x'/dtheta^2 = -r cos(theta) (u_r+u_l); d^2 y'/dtheta^2 = -r sin(theta) (u_r+u_l).
        h[(2, 2)] = weights[0] * (-self.r * c * total) + weights[1] * (-self.r * s * total);
        h
    }

    fn saturation(&self) -> &[(f64, f64)] {
        &self.saturation
    }

    fn state_labels(&self) -> &'static [&'static str] {
        &["x_mm", "y_mm", "theta_rad"]
    }

    fn control_labels(&self) -> &'static [&'static str] {
        &["u_r_rad_s", "u_l_rad_s"]
    }

    fn name(&self) -> &'static str {
        "diffdrive"
    }
}
