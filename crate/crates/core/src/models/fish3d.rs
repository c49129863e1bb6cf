//! Underactuated dynamic rigid body in 3D (effective fish parameters).
//!
//! States `[b, q, v, w]`: world position (cm), unit quaternion, body-frame
//! linear velocity (cm/s), body-frame angular velocity (rad/s). Controls
//! `[F1, F3, T1, T2]` are surge/heave forces in mN and roll/pitch torques in
//! uN*m; sway force and yaw torque are absent and heave is one-sided
//! (`F3 >= 0`).
//!
//! ```text
//! b' = R_q v (+ drift)
//! q' = 0.5 * body_rate_matrix(q) * w
//! M v' = (M v) x w + F
//! J w' = (J w) x w + T
//! ```
//!
//! `M` and `J` are diagonal effective mass/inertia in g and g*cm^2. Working
//! in the g-cm-s unit system, the input channels convert as
//! 1 mN = 100 g*cm/s^2 and 1 uN*m = 10 g*cm^2/s^2; the factors are folded
//! into the (constant) control matrix.

use nalgebra::{DMatrix, DVector};

use super::quat;
use super::{ControlAffine, Overrides};
use crate::error::Result;

const MASS_G: [f64; 3] = [6.04, 17.31, 8.39];
const INERTIA_GCM2: [f64; 3] = [1.57, 27.78, 54.11];
/// mN expressed in g*cm/s^2.
const FORCE_SCALE: f64 = 100.0;
/// uN*m expressed in g*cm^2/s^2.
const TORQUE_SCALE: f64 = 10.0;

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[derive(Debug, Clone)]
pub struct Fish3d {
    mass: [f64; 3],
    inertia: [f64; 3],
    saturation: Vec<(f64, f64)>,
    drift: Option<[f64; 3]>,
    hq: [[DMatrix<f64>; 3]; 3],
}

impl Fish3d {
    pub fn new(overrides: &Overrides) -> Result<Self> {
        Ok(Self {
            mass: overrides.mass.unwrap_or(MASS_G),
            inertia: overrides.inertia.unwrap_or(INERTIA_GCM2),
            saturation: overrides
                .saturation
                .clone()
                .unwrap_or_else(|| vec![(-1.0, 1.0), (0.0, 1.0), (-0.1, 0.1), (-0.1, 0.1)]),
            drift: overrides.drift,
            hq: quat::rotation_entry_hessians(),
        })
    }

    pub fn with_drift(mut self, drift: [f64; 3]) -> Self {
        self.drift = Some(drift);
        self
    }

    fn split<'a>(&self, x: &'a DVector<f64>) -> (&'a [f64], &'a [f64], [f64; 3], [f64; 3]) {
        let s = x.as_slice();
        (&s[0..3], &s[3..7], [s[7], s[8], s[9]], [s[10], s[11], s[12]])
    }
}

impl ControlAffine for Fish3d {
    fn state_dim(&self) -> usize {
        13
    }

    fn control_dim(&self) -> usize {
        4
    }

    fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        let (_, q, v, w) = self.split(x);
        let m = self.mass;
        let j = self.inertia;
        let mut g = DVector::zeros(13);

        let r = quat::rotation(q);
        for i in 0..3 {
            g[i] = r[(i, 0)] * v[0] + r[(i, 1)] * v[1] + r[(i, 2)] * v[2];
        }
        if let Some(d) = self.drift {
            g[0] += d[0];
            g[1] += d[1];
            g[2] += d[2];
        }

        let b = quat::body_rate_matrix(q);
        for i in 0..4 {
            g[3 + i] = 0.5 * (b[(i, 0)] * w[0] + b[(i, 1)] * w[1] + b[(i, 2)] * w[2]);
        }

        let mv_cross_w = cross([m[0] * v[0], m[1] * v[1], m[2] * v[2]], w);
        let jw_cross_w = cross([j[0] * w[0], j[1] * w[1], j[2] * w[2]], w);
        for i in 0..3 {
            g[7 + i] = mv_cross_w[i] / m[i];
            g[10 + i] = jw_cross_w[i] / j[i];
        }
        g
    }

    fn control_matrix(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(13, 4);
        h[(7, 0)] = FORCE_SCALE / self.mass[0];
        h[(9, 1)] = FORCE_SCALE / self.mass[2];
        h[(10, 2)] = TORQUE_SCALE / self.inertia[0];
        h[(11, 3)] = TORQUE_SCALE / self.inertia[1];
        h
    }

    fn control_state_dependent(&self) -> bool {
        false
    }

    fn drift_jacobian(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let (_, q, v, w) = self.split(x);
        let m = self.mass;
        let jd = self.inertia;
        let qv = DVector::from_column_slice(q);
        let mut j = DMatrix::zeros(13, 13);

        // d b'/d q and d b'/d v.
        let r = quat::rotation(q);
        for i in 0..3 {
            for c in 0..3 {
                j[(i, 7 + c)] = r[(i, c)];
            }
            for jj in 0..3 {
                if v[jj] != 0.0 {
                    let grad = &self.hq[i][jj] * &qv;
                    for a in 0..4 {
                        j[(i, 3 + a)] += v[jj] * grad[a];
                    }
                }
            }
        }

        // d q'/d q = 0.5 W(w); d q'/d w = 0.5 B(q).
        let wmat = quat::angular_matrix(&w);
        let bmat = quat::body_rate_matrix(q);
        for i in 0..4 {
            for a in 0..4 {
                j[(3 + i, 3 + a)] = 0.5 * wmat[(i, a)];
            }
            for b in 0..3 {
                j[(3 + i, 10 + b)] = 0.5 * bmat[(i, b)];
            }
        }

        // d v'/d v and d v'/d w.
        j[(7, 8)] = m[1] * w[2] / m[0];
        j[(7, 9)] = -m[2] * w[1] / m[0];
        j[(8, 7)] = -m[0] * w[2] / m[1];
        j[(8, 9)] = m[2] * w[0] / m[1];
        j[(9, 7)] = m[0] * w[1] / m[2];
        j[(9, 8)] = -m[1] * w[0] / m[2];

        j[(7, 11)] = -m[2] * v[2] / m[0];
        j[(7, 12)] = m[1] * v[1] / m[0];
        j[(8, 10)] = m[2] * v[2] / m[1];
        j[(8, 12)] = -m[0] * v[0] / m[1];
        j[(9, 10)] = -m[1] * v[1] / m[2];
        j[(9, 11)] = m[0] * v[0] / m[2];

        // d w'/d w (Euler top).
        let a1 = (jd[1] - jd[2]) / jd[0];
        let a2 = (jd[2] - jd[0]) / jd[1];
        let a3 = (jd[0] - jd[1]) / jd[2];
        j[(10, 11)] = a1 * w[2];
        j[(10, 12)] = a1 * w[1];
        j[(11, 10)] = a2 * w[2];
        j[(11, 12)] = a2 * w[0];
        j[(12, 10)] = a3 * w[1];
        j[(12, 11)] = a3 * w[0];

        j
    }

    fn control_column_jacobian(&self, _k: usize, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(13, 13)
    }

    fn weighted_hessian_sum(
        &self,
        _t: f64,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        weights: &DVector<f64>,
    ) -> DMatrix<f64> {
        let (_, q, v, _) = self.split(x);
        let m = self.mass;
        let jd = self.inertia;
        let qv = DVector::from_column_slice(q);
        let mut h = DMatrix::zeros(13, 13);
        let sym_add = |h: &mut DMatrix<f64>, a: usize, b: usize, val: f64| {
            h[(a, b)] += val;
            h[(b, a)] += val;
        };

        // Position rates: quadratic in q, bilinear in (q, v).
        for i in 0..3 {
            let wi = weights[i];
            if wi == 0.0 {
                continue;
            }
            for jj in 0..3 {
                let grad = &self.hq[i][jj] * &qv;
                for a in 0..4 {
                    if v[jj] != 0.0 {
                        for b in 0..4 {
                            h[(3 + a, 3 + b)] += wi * v[jj] * self.hq[i][jj][(a, b)];
                        }
                    }
                    sym_add(&mut h, 3 + a, 7 + jj, wi * grad[a]);
                }
            }
        }

        // Quaternion rates: bilinear in (q, w).
        for i in 0..4 {
            let wi = weights[3 + i];
            if wi == 0.0 {
                continue;
            }
            for a in 0..4 {
                for b in 0..3 {
                    let d = quat::angular_matrix_derivative(i, a, b);
                    if d != 0.0 {
                        sym_add(&mut h, 3 + a, 10 + b, wi * 0.5 * d);
                    }
                }
            }
        }

        // Linear accelerations: bilinear in (v, w).
        sym_add(&mut h, 8, 12, weights[7] * m[1] / m[0]);
        sym_add(&mut h, 9, 11, -weights[7] * m[2] / m[0]);
        sym_add(&mut h, 9, 10, weights[8] * m[2] / m[1]);
        sym_add(&mut h, 7, 12, -weights[8] * m[0] / m[1]);
        sym_add(&mut h, 7, 11, weights[9] * m[0] / m[2]);
        sym_add(&mut h, 8, 10, -weights[9] * m[1] / m[2]);

        // Angular accelerations: quadratic in w.
        sym_add(&mut h, 11, 12, weights[10] * (jd[1] - jd[2]) / jd[0]);
        sym_add(&mut h, 10, 12, weights[11] * (jd[2] - jd[0]) / jd[1]);
        sym_add(&mut h, 10, 11, weights[12] * (jd[0] - jd[1]) / jd[2]);

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
        &[
            "x_cm", "y_cm", "z_cm", "q0", "q1", "q2", "q3", "vx_cm_s", "vy_cm_s", "vz_cm_s",
            "wx_rad_s", "wy_rad_s", "wz_rad_s",
        ]
    }

    fn control_labels(&self) -> &'static [&'static str] {
        &["f1_mN", "f3_mN", "t1_uNm", "t2_uNm"]
    }

    fn name(&self) -> &'static str {
        "fish3d"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate, TimeGrid};
    use approx::assert_relative_eq;

    fn rest_state() -> DVector<f64> {
        let mut x = DVector::zeros(13);
        x[3] = 1.0;
        x
    }

    #[test]
    fn rest_with_no_input_is_an_equilibrium() {
        let fish = Fish3d::new(&Overrides::default()).unwrap();
        let dx = fish.dynamics(0.0, &rest_state(), &DVector::zeros(4)).unwrap();
        assert_relative_eq!(dx.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn surge_force_accelerates_body_x() {
        let fish = Fish3d::new(&Overrides::default()).unwrap();
        let dx = fish.dynamics(0.0, &rest_state(), &DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])).unwrap();
        // 1 mN on 6.04 g: 100/6.04 cm/s^2.
        assert_relative_eq!(dx[7], 100.0 / 6.04, epsilon = 1e-12);
    }

    #[test]
    fn drift_advects_position_only() {
        let fish = Fish3d::new(&Overrides::default()).unwrap().with_drift([0.0, 10.0, 0.0]);
        let dx = fish.dynamics(0.0, &rest_state(), &DVector::zeros(4)).unwrap();
        assert_relative_eq!(dx[1], 10.0, epsilon = 1e-15);
        assert_relative_eq!(dx.rows(2, 11).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn free_rotation_conserves_rotational_energy() {
        // Pure Euler-top motion: 0.5 w'Jw is an exact invariant; the
        // translational term stays zero because v starts at zero.
        let fish = Fish3d::new(&Overrides::default()).unwrap();
        let mut x0 = rest_state();
        x0[10] = 1.3;
        x0[11] = -0.6;
        x0[12] = 0.4;
        let energy = |x: &DVector<f64>| -> f64 {
            0.5 * (INERTIA_GCM2[0] * x[10] * x[10]
                + INERTIA_GCM2[1] * x[11] * x[11]
                + INERTIA_GCM2[2] * x[12] * x[12])
                + 0.5 * (MASS_G[0] * x[7] * x[7] + MASS_G[1] * x[8] * x[8] + MASS_G[2] * x[9] * x[9])
        };
        let e0 = energy(&x0);
        let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
        let proj = |x: &mut DVector<f64>| fish.project(x);
        let traj = integrate(
            |t, x: &DVector<f64>| fish.dynamics_unchecked(t, x, &DVector::zeros(4)),
            &x0,
            &grid,
            Some(&proj),
        )
        .unwrap();
        for s in &traj.states {
            assert!(((energy(s) - e0) / e0).abs() < 1e-6, "energy drift {}", energy(s) - e0);
        }
    }

    #[test]
    fn quaternion_norm_stays_unit_under_integration() {
        let fish = Fish3d::new(&Overrides::default()).unwrap();
        let mut x0 = rest_state();
        x0[10] = 2.0;
        x0[11] = 1.0;
        let grid = TimeGrid::new(0.0, 1.0, 1e-2).unwrap();
        let proj = |x: &mut DVector<f64>| fish.project(x);
        let traj = integrate(
            |t, x: &DVector<f64>| fish.dynamics_unchecked(t, x, &DVector::from_vec(vec![0.3, 0.2, 0.05, -0.02])),
            &x0,
            &grid,
            Some(&proj),
        )
        .unwrap();
        for s in &traj.states {
            assert!((s.rows(3, 4).norm() - 1.0).abs() < 1e-9);
        }
    }
}
