//! Fixed-step ODE integration and small dense symmetric linear algebra.
//!
//! Everything here is deliberately fixed-step: the feedback loop replans at a
//! fixed rate, so deterministic per-window runtimes matter more than adaptive
//! accuracy. The classical RK4 update has local error O(dt^5), which at the
//! substeps used by the presets keeps discretization error well below every
//! oracle tolerance in the test suites.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Uniform time grid over `[t0, tf]` with nodes at exactly `t0 + k*dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    count: usize,
}

impl TimeGrid {
    /// Grid covering `[t0, tf]` with step `dt`; the node count is
    /// `floor((tf - t0)/dt) + 1` (with a small guard against fp division
    /// landing just below an integer).
    pub fn new(t0: f64, tf: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Contract(format!("grid dt must be positive, got {dt}")));
        }
        if !(tf > t0) {
            return Err(Error::Contract(format!("grid needs tf > t0, got [{t0}, {tf}]")));
        }
        let count = ((tf - t0) / dt + 1e-9).floor() as usize + 1;
        Ok(Self { t0, dt, count })
    }

    pub fn from_count(t0: f64, dt: f64, count: usize) -> Result<Self> {
        if !(dt > 0.0) || count < 2 {
            return Err(Error::Contract("grid needs dt > 0 and at least two nodes".into()));
        }
        Ok(Self { t0, dt, count })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Last grid node.
    pub fn tf(&self) -> f64 {
        self.node(self.count - 1)
    }

    /// Time of node `k`, computed as `t0 + k*dt` (no accumulation).
    pub fn node(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|k| self.node(k))
    }

    /// Index of the last node at or before `t` (clamped to the grid).
    pub fn floor_index(&self, t: f64) -> usize {
        if t <= self.t0 {
            return 0;
        }
        let k = ((t - self.t0) / self.dt).floor() as usize;
        k.min(self.count - 1)
    }
}

/// States (and optionally controls) recorded on a uniform time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<DVector<f64>>,
    pub controls: Option<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, states: Vec<DVector<f64>>) -> Result<Self> {
        if states.len() != grid.count() {
            return Err(Error::Contract(format!(
                "trajectory has {} states for a {}-node grid",
                states.len(),
                grid.count()
            )));
        }
        if let Some((k, _)) = states.iter().enumerate().find(|(_, x)| !x.iter().all(|v| v.is_finite())) {
            return Err(Error::IntegrationFailure { t: grid.node(k) });
        }
        Ok(Self { grid, states, controls: None })
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    /// Linear interpolation between grid nodes, clamped at the ends.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        let k = self.grid.floor_index(t);
        if k + 1 >= self.grid.count() {
            return self.states[self.grid.count() - 1].clone();
        }
        let tk = self.grid.node(k);
        let alpha = ((t - tk) / self.grid.dt()).clamp(0.0, 1.0);
        &self.states[k] * (1.0 - alpha) + &self.states[k + 1] * alpha
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one state")
    }
}

fn check_finite(x: &DVector<f64>, t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationFailure { t })
    }
}

/// One classical 4th-order Runge-Kutta step of size `dt` (which may be
/// negative for reverse-time integration).
pub fn rk4_step<F>(f: &mut F, x: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, x);
    check_finite(&k1, t)?;
    let k2 = f(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)));
    check_finite(&k2, t)?;
    let k3 = f(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)));
    check_finite(&k3, t)?;
    let k4 = f(t + dt, &(x + &k3 * dt));
    check_finite(&k4, t)?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    check_finite(&next, t)?;
    Ok(next)
}

/// Per-step projection applied after each integrator update (for example
/// quaternion renormalization).
pub type PostStep<'a> = &'a dyn Fn(&mut DVector<f64>);

/// Integrate `x' = f(t, x)` forward over `grid` starting from `x0`.
pub fn integrate<F>(
    mut f: F,
    x0: &DVector<f64>,
    grid: &TimeGrid,
    post_step: Option<PostStep>,
) -> Result<Trajectory>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    check_finite(x0, grid.t0())?;
    let mut states = Vec::with_capacity(grid.count());
    states.push(x0.clone());
    for k in 0..grid.count() - 1 {
        let t = grid.node(k);
        let mut next = rk4_step(&mut f, &states[k], t, grid.dt())?;
        if let Some(p) = post_step {
            p(&mut next);
        }
        check_finite(&next, t)?;
        states.push(next);
    }
    Trajectory::new(grid.clone(), states)
}

/// Integrate backward from the final grid node to the first, starting from
/// `x_final` at `grid.tf()`. The step is `-dt`; returned states are indexed
/// forward (entry `k` belongs to `grid.node(k)`).
pub fn integrate_reverse<F>(
    mut f: F,
    x_final: &DVector<f64>,
    grid: &TimeGrid,
    post_step: Option<PostStep>,
) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    check_finite(x_final, grid.tf())?;
    let n = grid.count();
    let mut states = vec![DVector::zeros(0); n];
    states[n - 1] = x_final.clone();
    for k in (1..n).rev() {
        let t = grid.node(k);
        let mut prev = rk4_step(&mut f, &states[k], t, -grid.dt())?;
        if let Some(p) = post_step {
            p(&mut prev);
        }
        check_finite(&prev, t)?;
        states[k - 1] = prev;
    }
    Ok(states)
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in descending order.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors, column `i` pairing with `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    /// Reassemble `V * diag(values) * V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.values);
        &self.vectors * d * self.vectors.transpose()
    }

    /// Apply `V * diag(g(values)) * V^T` to `rhs` (used for floored inverses).
    pub fn apply_with(&self, g: impl Fn(f64) -> f64, rhs: &DVector<f64>) -> DVector<f64> {
        let mut y = self.vectors.transpose() * rhs;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi *= g(self.values[i]);
        }
        &self.vectors * y
    }
}

/// Symmetric eigen-decomposition. The input must be symmetric within an
/// absolute tolerance of `1e-9 * max(1, max|H|)`; it is symmetrized by
/// averaging before factorization.
pub fn sym_eig(h: &DMatrix<f64>) -> Result<SymEig> {
    if h.nrows() != h.ncols() {
        return Err(Error::Contract(format!("sym_eig needs a square matrix, got {}x{}", h.nrows(), h.ncols())));
    }
    let scale = h.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0_f64;
    for i in 0..h.nrows() {
        for j in (i + 1)..h.ncols() {
            asym = asym.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    if asym > 1e-9 * scale {
        return Err(Error::Contract(format!(
            "sym_eig input is not symmetric: max asymmetry {asym:.3e} exceeds tolerance"
        )));
    }
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let m = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues"));
    let values = DVector::from_fn(m, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(m, m);
    for (i, &src) in order.iter().enumerate() {
        vectors.set_column(i, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}
