//! Quadratic tracking objective and the derivatives the costate equations need.
//!
//! `J = integral of 0.5 |x - x_d(t)|^2_Q dt + 0.5 |x(tf) - x_d(tf)|^2_P1`,
//! with `R` the control-effort metric used by the action synthesis (it does
//! not enter `J` itself). The integral is evaluated by trapezoidal quadrature
//! on the trajectory grid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::Trajectory;

/// Reference signal for the tracking error.
#[derive(Debug, Clone)]
pub enum Target {
    /// Constant set point.
    Point(DVector<f64>),
    /// Built-in periodic 3D curve used by the underwater tracking study:
    /// position `[20 + 10 cos(t/5) cos(3t/10), 20 + 10 cos(t/5) sin(3t/10),
    /// 10 sin(2t/5)]` cm, all other components zero.
    FishCurve { dim: usize },
}

impl Target {
    pub fn at(&self, t: f64) -> DVector<f64> {
        match self {
            Target::Point(p) => p.clone(),
            Target::FishCurve { dim } => {
                let mut x = DVector::zeros(*dim);
                let a = (t / 5.0).cos();
                x[0] = 20.0 + 10.0 * a * (3.0 * t / 10.0).cos();
                x[1] = 20.0 + 10.0 * a * (3.0 * t / 10.0).sin();
                x[2] = 10.0 * (2.0 * t / 5.0).sin();
                x
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Target::Point(p) => p.len(),
            Target::FishCurve { dim } => *dim,
        }
    }
}

/// Quadratic tracking objective specification.
#[derive(Debug, Clone)]
pub struct CostSpec {
    q: DMatrix<f64>,
    p1: DMatrix<f64>,
    r: DMatrix<f64>,
    target: Target,
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Contract(format!("{name} must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    let scale = m.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::Contract(format!("{name} must be symmetric")));
            }
        }
    }
    Ok(())
}

impl CostSpec {
    /// Validates `Q = Q^T >= 0`, `P1 = P1^T >= 0`, `R = R^T > 0`.
    pub fn new(q: DMatrix<f64>, p1: DMatrix<f64>, r: DMatrix<f64>, target: Target) -> Result<Self> {
        check_symmetric(&q, "Q")?;
        check_symmetric(&p1, "P1")?;
        check_symmetric(&r, "R")?;
        if q.nrows() != p1.nrows() || q.nrows() != target.dim() {
            return Err(Error::Contract("Q, P1, and target dimensions must agree".into()));
        }
        for (m, name) in [(&q, "Q"), (&p1, "P1")] {
            let eig = m.clone().symmetric_eigen();
            let scale = eig.eigenvalues.amax().max(1.0);
            if eig.eigenvalues.min() < -1e-9 * scale {
                return Err(Error::Contract(format!("{name} must be positive semidefinite")));
            }
        }
        if r.clone().cholesky().is_none() {
            return Err(Error::Contract("R must be positive definite".into()));
        }
        Ok(Self { q, p1, r, target })
    }

    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn p1(&self) -> &DMatrix<f64> {
        &self.p1
    }

    /// Control-effort metric for the active synthesis mode.
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn error(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        x - self.target.at(t)
    }

    /// `l1 = 0.5 e' Q e`.
    pub fn running_cost(&self, t: f64, x: &DVector<f64>) -> f64 {
        let e = self.error(t, x);
        0.5 * (&self.q * &e).dot(&e)
    }

    /// `D_x l1 = Q e` (as a column vector).
    pub fn running_gradient(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.q * self.error(t, x)
    }

    /// `D_x^2 l1 = Q`.
    pub fn running_hessian(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `m = 0.5 e' P1 e` at the horizon end.
    pub fn terminal_cost(&self, tf: f64, xf: &DVector<f64>) -> f64 {
        let e = self.error(tf, xf);
        0.5 * (&self.p1 * &e).dot(&e)
    }

    /// `D_x m = P1 e`.
    pub fn terminal_gradient(&self, tf: f64, xf: &DVector<f64>) -> DVector<f64> {
        &self.p1 * self.error(tf, xf)
    }

    /// `D_x^2 m = P1`.
    pub fn terminal_hessian(&self) -> &DMatrix<f64> {
        &self.p1
    }

    /// Trapezoidal quadrature of the running cost plus the terminal term.
    pub fn total_cost(&self, traj: &Trajectory) -> f64 {
        let grid = &traj.grid;
        let n = grid.count();
        let mut sum = 0.0;
        for (k, state) in traj.states.iter().enumerate() {
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            sum += w * self.running_cost(grid.node(k), state);
        }
        sum * grid.dt() + self.terminal_cost(grid.tf(), traj.last())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::TimeGrid;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn simple_spec(n: usize) -> CostSpec {
        CostSpec::new(
            DMatrix::identity(n, n),
            DMatrix::zeros(n, n),
            DMatrix::identity(1, 1),
            Target::Point(DVector::zeros(n)),
        )
        .unwrap()
    }

    #[test]
    fn on_target_costs_nothing() {
        let spec = simple_spec(3);
        let x = DVector::zeros(3);
        assert_eq!(spec.running_cost(0.0, &x), 0.0);
        assert_eq!(spec.running_gradient(0.0, &x).norm(), 0.0);
    }

    #[test]
    fn identity_weight_gives_half_squared_error() {
        let spec = simple_spec(2);
        let e = DVector::from_vec(vec![3.0, 4.0]);
        assert_relative_eq!(spec.running_cost(0.0, &e), 12.5);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let q = &a * a.transpose();
        let spec = CostSpec::new(
            q,
            DMatrix::zeros(4, 4),
            DMatrix::identity(2, 2),
            Target::Point(DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0))),
        )
        .unwrap();
        let x = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let grad = spec.running_gradient(0.3, &x);
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (spec.running_cost(0.3, &xp) - spec.running_cost(0.3, &xm)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6, "component {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn constant_error_total_cost_is_exact() {
        // Trapezoid quadrature is exact for a constant integrand.
        let spec = simple_spec(2);
        let grid = TimeGrid::new(0.0, 1.0, 0.125).unwrap();
        let e = DVector::from_vec(vec![1.0, 2.0]);
        let traj = Trajectory::new(grid, vec![e.clone(); 9]).unwrap();
        assert_relative_eq!(spec.total_cost(&traj), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_q_leaves_terminal_term_only() {
        let p1 = DMatrix::identity(2, 2) * 2.0;
        let spec = CostSpec::new(
            DMatrix::zeros(2, 2),
            p1,
            DMatrix::identity(1, 1),
            Target::Point(DVector::zeros(2)),
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 0.5).unwrap();
        let traj = Trajectory::new(grid, vec![DVector::from_vec(vec![1.0, 0.0]); 3]).unwrap();
        assert_relative_eq!(spec.total_cost(&traj), 1.0);
    }

    #[test]
    fn quadrature_refines_cleanly() {
        let spec = simple_spec(1);
        let eval = |dt: f64| {
            let grid = TimeGrid::new(0.0, 1.0, dt).unwrap();
            let states: Vec<_> = grid.nodes().map(|t| DVector::from_vec(vec![(2.0 * t).sin()])).collect();
            spec.total_cost(&Trajectory::new(grid, states).unwrap())
        };
        let coarse = eval(5e-4);
        let fine = eval(2.5e-4);
        assert!(((coarse - fine) / fine).abs() < 1e-6);
    }

    #[test]
    fn indefinite_q_is_rejected() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert!(CostSpec::new(
            q,
            DMatrix::zeros(2, 2),
            DMatrix::identity(1, 1),
            Target::Point(DVector::zeros(2))
        )
        .is_err());
    }

    #[test]
    fn fish_curve_starts_at_30_20_0() {
        let t = Target::FishCurve { dim: 13 };
        let x = t.at(0.0);
        assert_relative_eq!(x[0], 30.0);
        assert_relative_eq!(x[1], 20.0);
        assert_relative_eq!(x[2], 0.0);
        assert_eq!(x.rows(3, 10).norm(), 0.0);
    }
}
