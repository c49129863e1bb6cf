//! Backward integration of the first- and second-order costates.
//!
//! Along the default trajectory (dynamics `f1` at control `v`):
//!
//! ```text
//! rho'   = -D_x l1^T - D_x f1^T rho                      rho(tf)   = D_x m^T
//! Omega' = -D_x f1^T Omega - Omega D_x f1 - D_x^2 l1
//!          - sum_i rho_i D_x^2 f1^i                      Omega(tf) = D_x^2 m
//! ```
//!
//! `rho(t)` is the sensitivity of the objective to a state perturbation at
//! time `t`; `Omega(t)` is the corresponding second-order sensitivity. Both
//! are integrated with the same fixed-step RK4 as the forward pass, on the
//! same grid, with the stored trajectory interpolated linearly at the RK4
//! stage times. `Omega` is re-symmetrized after every step to stop asymmetry
//! drift.

use nalgebra::{DMatrix, DVector};

use crate::cost::CostSpec;
use crate::error::Result;
use crate::models::ControlAffine;
use crate::numerics::{integrate_reverse, TimeGrid, Trajectory};

/// Default control signal `v(t)`.
#[derive(Debug, Clone)]
pub enum ControlLaw {
    Zero(usize),
    Constant(DVector<f64>),
}

impl ControlLaw {
    pub fn zero(dim: usize) -> Self {
        ControlLaw::Zero(dim)
    }

    pub fn at(&self, _t: f64) -> DVector<f64> {
        match self {
            ControlLaw::Zero(m) => DVector::zeros(*m),
            ControlLaw::Constant(u) => u.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlLaw::Zero(m) => *m,
            ControlLaw::Constant(u) => u.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ControlLaw::Zero(_) => true,
            ControlLaw::Constant(u) => u.iter().all(|v| *v == 0.0),
        }
    }
}

/// First- and second-order costates on the forward trajectory's grid.
#[derive(Debug, Clone)]
pub struct AdjointPair {
    pub grid: TimeGrid,
    pub rho: Vec<DVector<f64>>,
    pub omega: Vec<DMatrix<f64>>,
}

impl AdjointPair {
    pub fn rho_at(&self, t: f64) -> DVector<f64> {
        let (k, alpha) = self.locate(t);
        if alpha == 0.0 {
            self.rho[k].clone()
        } else {
            &self.rho[k] * (1.0 - alpha) + &self.rho[k + 1] * alpha
        }
    }

    pub fn omega_at(&self, t: f64) -> DMatrix<f64> {
        let (k, alpha) = self.locate(t);
        if alpha == 0.0 {
            self.omega[k].clone()
        } else {
            &self.omega[k] * (1.0 - alpha) + &self.omega[k + 1] * alpha
        }
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let k = self.grid.floor_index(t);
        if k + 1 >= self.grid.count() {
            return (self.grid.count() - 1, 0.0);
        }
        let alpha = ((t - self.grid.node(k)) / self.grid.dt()).clamp(0.0, 1.0);
        (k, alpha)
    }
}

fn pack(rho: &DVector<f64>, omega: &DMatrix<f64>) -> DVector<f64> {
    let n = rho.len();
    let mut y = DVector::zeros(n + n * n);
    y.rows_mut(0, n).copy_from(rho);
    y.rows_mut(n, n * n).copy_from(&DVector::from_column_slice(omega.as_slice()));
    y
}

fn unpack(y: &DVector<f64>, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let rho = DVector::from(y.rows(0, n));
    let omega = DMatrix::from_column_slice(n, n, y.rows(n, n * n).as_slice());
    (rho, omega)
}

/// Integrate the costate pair backward along `default_traj`, which must have
/// been produced by the default dynamics `f1(x) = g + h v`.
pub fn simulate_adjoints(
    model: &dyn ControlAffine,
    spec: &CostSpec,
    default_traj: &Trajectory,
    v: &ControlLaw,
) -> Result<AdjointPair> {
    let n = model.state_dim();
    let grid = default_traj.grid.clone();
    let tf = grid.tf();
    let xf = default_traj.last();

    let rho_f = spec.terminal_gradient(tf, xf);
    let omega_f = spec.terminal_hessian().clone();
    let yf = pack(&rho_f, &omega_f);

    let rhs = |t: f64, y: &DVector<f64>| -> DVector<f64> {
        let x = default_traj.state_at(t);
        let vt = v.at(t);
        let (rho, omega) = unpack(y, n);
        let dxf = model.dynamics_jacobian(t, &x, &vt);
        let dxf_t = dxf.transpose();

        let rho_dot = -spec.running_gradient(t, &x) - &dxf_t * &rho;

        let mut omega_dot = -(&dxf_t * &omega) - &omega * &dxf;
        omega_dot -= spec.running_hessian();
        omega_dot -= model.weighted_hessian_sum(t, &x, &vt, &rho);

        pack(&rho_dot, &omega_dot)
    };

    // Re-symmetrize the Omega block after each step.
    let symmetrize = move |y: &mut DVector<f64>| {
        for i in 0..n {
            for j in (i + 1)..n {
                let a = y[n + j * n + i];
                let b = y[n + i * n + j];
                let avg = 0.5 * (a + b);
                y[n + j * n + i] = avg;
                y[n + i * n + j] = avg;
            }
        }
    };

    let packed = integrate_reverse(rhs, &yf, &grid, Some(&symmetrize))?;
    let mut rho = Vec::with_capacity(grid.count());
    let mut omega = Vec::with_capacity(grid.count());
    for y in &packed {
        let (r, o) = unpack(y, n);
        rho.push(r);
        omega.push(o);
    }
    Ok(AdjointPair { grid, rho, omega })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::Target;
    use crate::models::{make_system, Overrides, SystemName};
    use crate::numerics::integrate;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    /// Scalar linear test system: x' = a x + u.
    struct ScalarLinear {
        a: f64,
    }

    impl ControlAffine for ScalarLinear {
        fn state_dim(&self) -> usize {
            1
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![self.a * x[0]])
        }
        fn control_matrix(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, 1.0)
        }
        fn drift_jacobian(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, self.a)
        }
        fn control_column_jacobian(&self, _k: usize, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn control_state_dependent(&self) -> bool {
            false
        }
        fn weighted_hessian_sum(
            &self,
            _t: f64,
            _x: &DVector<f64>,
            _u: &DVector<f64>,
            _w: &DVector<f64>,
        ) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn saturation(&self) -> &[(f64, f64)] {
            &[(-1e9, 1e9)]
        }
        fn state_labels(&self) -> &'static [&'static str] {
            &["x"]
        }
        fn control_labels(&self) -> &'static [&'static str] {
            &["u"]
        }
        fn name(&self) -> &'static str {
            "scalar-linear"
        }
    }

    #[test]
    fn zero_weights_give_zero_costates() {
        let model = ScalarLinear { a: -0.5 };
        let spec = CostSpec::new(
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            Target::Point(DVector::zeros(1)),
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let traj = integrate(
            |t, x: &DVector<f64>| model.dynamics_unchecked(t, x, &DVector::zeros(1)),
            &DVector::from_vec(vec![1.0]),
            &grid,
            None,
        )
        .unwrap();
        let adj = simulate_adjoints(&model, &spec, &traj, &ControlLaw::zero(1)).unwrap();
        for k in 0..grid.count() {
            assert_eq!(adj.rho[k].norm(), 0.0);
            assert_eq!(adj.omega[k].norm(), 0.0);
        }
    }

    #[test]
    fn scalar_linear_costate_matches_closed_form() {
        // x' = a x, l1 = 0.5 q x^2, m = 0: the costate obeys
        // rho' = -q x - a rho, rho(tf) = 0, with x(t) = x0 e^{a t}, giving
        // rho(t) = (q x0 / 2a) (e^{a(2 tf - t)} - e^{a t}) ... verified here
        // against a direct quadrature of the variational formula
        // rho(t) = int_t^tf e^{a(s-t)} q x(s) ds.
        let a = -0.7;
        let q = 2.0;
        let x0 = 1.3;
        let model = ScalarLinear { a };
        let spec = CostSpec::new(
            DMatrix::from_element(1, 1, q),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            Target::Point(DVector::zeros(1)),
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
        let traj = integrate(
            |t, x: &DVector<f64>| model.dynamics_unchecked(t, x, &DVector::zeros(1)),
            &DVector::from_vec(vec![x0]),
            &grid,
            None,
        )
        .unwrap();
        let adj = simulate_adjoints(&model, &spec, &traj, &ControlLaw::zero(1)).unwrap();

        let tf = grid.tf();
        let closed = |t: f64| -> f64 {
            // int_t^tf e^{a(s-t)} q x0 e^{a s} ds = q x0 e^{-a t} (e^{2 a tf} - e^{2 a t}) / (2a)
            q * x0 * (-a * t).exp() * ((2.0 * a * tf).exp() - (2.0 * a * t).exp()) / (2.0 * a)
        };
        for k in (0..grid.count()).step_by(100) {
            let t = grid.node(k);
            let expect = closed(t);
            assert!(
                (adj.rho[k][0] - expect).abs() <= 1e-6 * expect.abs().max(1e-3),
                "t={t}: {} vs {expect}",
                adj.rho[k][0]
            );
        }
    }

    #[test]
    fn omega_stays_symmetric_on_the_fish() {
        let model = make_system(SystemName::Fish3d, &Overrides::default()).unwrap();
        let spec = CostSpec::new(
            DMatrix::identity(13, 13),
            DMatrix::identity(13, 13),
            DMatrix::identity(4, 4),
            Target::Point(DVector::zeros(13)),
        )
        .unwrap();
        let mut x0 = DVector::zeros(13);
        x0[0] = 30.0;
        x0[3] = 1.0;
        x0[8] = 2.0;
        x0[10] = 0.8;
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let proj = |x: &mut DVector<f64>| model.project(x);
        let traj = integrate(
            |t, x: &DVector<f64>| model.dynamics_unchecked(t, x, &DVector::zeros(4)),
            &x0,
            &grid,
            Some(&proj),
        )
        .unwrap();
        let adj = simulate_adjoints(model.as_ref(), &spec, &traj, &ControlLaw::zero(4)).unwrap();
        for om in &adj.omega {
            let asym = (om - om.transpose()).norm();
            assert!(asym < 1e-8, "omega asymmetry {asym}");
        }
        // Terminal conditions match the cost derivatives.
        let last = adj.rho.last().unwrap();
        assert_relative_eq!(
            (last - spec.terminal_gradient(grid.tf(), traj.last())).norm(),
            0.0,
            epsilon = 1e-12
        );
    }
}
