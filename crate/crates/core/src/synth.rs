//! Receding-horizon single-action feedback.
//!
//! Each sampling period: simulate the default (v = 0) trajectory over the
//! horizon, integrate the costates backward, synthesize a saturated needle
//! control at every grid time, pick the insertion time with the most negative
//! insertion gradient, then backtrack on the duration until the switched
//! window cost actually drops. The accepted needle is applied during the
//! period that follows the planning instant; everything outside the needle
//! window runs the default control.
//!
//! The duration line search guarantees the loop's defining property: every
//! accepted (non-null) action strictly reduces the predicted window cost.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::adjoint::{simulate_adjoints, ControlLaw};
use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::models::ControlAffine;
use crate::needle::{
    first_order_action, mode_insertion_gradient, mode_insertion_hessian, second_order_action,
};
use crate::numerics::{integrate, rk4_step, TimeGrid, Trajectory};

/// Which needle sensitivity order drives the control synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "first")]
    FirstOrder,
    #[serde(rename = "second")]
    SecondOrder,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" | "first_order" | "1" => Ok(Mode::FirstOrder),
            "second" | "second_order" | "2" => Ok(Mode::SecondOrder),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected first or second)"))),
        }
    }
}

/// Backtracking duration search parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineSearchConfig {
    /// Initial duration; defaults to the sampling period when unset.
    pub lambda0: Option<f64>,
    /// Shrink factor in (0, 1).
    pub beta: f64,
    /// Maximum candidate durations to try.
    pub max_iters: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self { lambda0: None, beta: 0.5, max_iters: 20 }
    }
}

/// Feedback-loop configuration.
#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    pub mode: Mode,
    /// Prediction horizon T in seconds.
    pub horizon: f64,
    /// Sampling (replanning) period in seconds.
    pub period: f64,
    /// Duration parameter of the second-order action's Taylor model.
    pub lambda_nominal: f64,
    /// First-order target-gradient factor: `alpha_d = gamma * J0`, `gamma <= 0`.
    pub gamma: f64,
    /// Spectral floor; `None` selects `1e-9 * max(1, |H|_inf)` per solve.
    pub epsilon: Option<f64>,
    /// Integration substep; `None` selects `period / 10`.
    pub dt: Option<f64>,
    pub line_search: LineSearchConfig,
}

impl SynthesisConfig {
    pub fn new(mode: Mode, horizon: f64, period: f64, lambda_nominal: f64, gamma: f64) -> Self {
        Self {
            mode,
            horizon,
            period,
            lambda_nominal,
            gamma,
            epsilon: None,
            dt: None,
            line_search: LineSearchConfig::default(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.period / 10.0)
    }

    pub fn lambda0(&self) -> f64 {
        self.line_search.lambda0.unwrap_or(self.period)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.period > 0.0) || self.period > self.horizon {
            return Err(Error::Config(format!(
                "period must lie in (0, horizon], got {} with horizon {}",
                self.period, self.horizon
            )));
        }
        if !(self.lambda_nominal > 0.0) || self.lambda_nominal >= self.horizon {
            return Err(Error::Config(format!(
                "lambda_nominal must lie in (0, horizon), got {}",
                self.lambda_nominal
            )));
        }
        if self.gamma > 0.0 {
            return Err(Error::Config(format!("gamma must be non-positive, got {}", self.gamma)));
        }
        if !(self.line_search.beta > 0.0 && self.line_search.beta < 1.0) {
            return Err(Error::Config(format!("line-search beta must lie in (0,1), got {}", self.line_search.beta)));
        }
        if self.line_search.max_iters == 0 {
            return Err(Error::Config("line-search max_iters must be at least 1".into()));
        }
        let dt = self.dt();
        if !(dt > 0.0) || dt > self.period {
            return Err(Error::Config(format!("dt must lie in (0, period], got {dt}")));
        }
        let ratio = self.period / dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("the period ({}) must be an integer multiple of dt ({dt})", self.period)));
        }
        Ok(())
    }
}

/// A synthesized needle action. `lambda == 0` means no duration has been
/// accepted (pending search, failed search, or a null action).
#[derive(Debug, Clone, Serialize)]
pub struct NeedleAction {
    pub u_star: Vec<f64>,
    pub tau: f64,
    pub lambda: f64,
    /// `J(lambda) - J(0)` for the accepted duration (0 until accepted).
    pub predicted_dj: f64,
    /// Insertion gradient at `(tau, u_star)`.
    pub mig: f64,
    /// Insertion Hessian at `(tau, u_star)` (second-order mode only).
    pub mih: Option<f64>,
}

impl NeedleAction {
    pub fn control(&self) -> DVector<f64> {
        DVector::from_vec(self.u_star.clone())
    }

    pub fn is_null(&self) -> bool {
        self.lambda == 0.0
    }
}

/// Everything a planning pass produces.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    /// `None` when no candidate time offers first- (or second-) order descent.
    pub action: Option<NeedleAction>,
    /// Default-trajectory cost over the window.
    pub j0: f64,
    /// Minimum insertion gradient over the candidate insertion times.
    pub grid_min_mig: f64,
    /// Minimum insertion Hessian over the candidates (second-order mode).
    pub grid_min_mih: Option<f64>,
    pub window: TimeGrid,
    pub default_traj: Trajectory,
}

/// Grid values at or above `-NULL_TOL` count as "no descent available".
pub const NULL_TOL: f64 = 1e-12;

/// Earliest index attaining the minimum (ties break toward earlier times).
fn argmin_earliest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Plan a single needle action on the window `[t0, t0 + horizon]`.
///
/// Costates and the default cost use the whole horizon; insertion-time
/// candidates are limited to the control period that follows `t0`, because
/// that is the only stretch the action will actually execute on before the
/// next replan. (Without the restriction, a receding-horizon loop can keep
/// scheduling needles deeper in the window than it ever reaches.)
pub fn plan_action(
    model: &dyn ControlAffine,
    spec: &CostSpec,
    x0: &DVector<f64>,
    t0: f64,
    cfg: &SynthesisConfig,
) -> Result<PlanOutcome> {
    let m = model.control_dim();
    let v_zero = DVector::zeros(m);
    model.check_dims(x0, &v_zero)?;
    let grid = TimeGrid::new(t0, t0 + cfg.horizon, cfg.dt())?;

    let proj = |x: &mut DVector<f64>| model.project(x);
    let traj = integrate(|t, x| model.dynamics_unchecked(t, x, &v_zero), x0, &grid, Some(&proj))?;
    let adjoints = simulate_adjoints(model, spec, &traj, &ControlLaw::zero(m))?;
    let j0 = spec.total_cost(&traj);
    let alpha_d = cfg.gamma * j0;

    // Candidates: nodes inside the upcoming period, excluding the final grid
    // node (the sensitivities treat the window as extending forward from tau,
    // which leaves no room at the horizon end).
    let steps_per_period = (cfg.period / cfg.dt()).round() as usize;
    let count = (steps_per_period + 1).min(grid.count() - 1);
    let mut migs = Vec::with_capacity(count);
    let mut mihs = Vec::with_capacity(count);
    let mut controls = Vec::with_capacity(count);
    for k in 0..count {
        let t = grid.node(k);
        let x = &traj.states[k];
        let rho = &adjoints.rho[k];
        let omega = &adjoints.omega[k];
        let u_raw = match cfg.mode {
            Mode::FirstOrder => {
                first_order_action(rho, &model.control_matrix(t, x), &v_zero, spec.r(), alpha_d)?
            }
            Mode::SecondOrder => second_order_action(
                rho,
                omega,
                model,
                spec,
                t,
                x,
                &v_zero,
                cfg.lambda_nominal,
                spec.r(),
                cfg.epsilon,
            )?,
        };
        let u = model.saturate(&u_raw);
        let f1 = model.dynamics_unchecked(t, x, &v_zero);
        let f2 = model.dynamics_unchecked(t, x, &u);
        migs.push(mode_insertion_gradient(rho, &f1, &f2));
        if cfg.mode == Mode::SecondOrder {
            mihs.push(mode_insertion_hessian(rho, omega, model, spec, t, x, &u, &v_zero));
        }
        controls.push(u);
    }

    let k_mig = argmin_earliest(&migs);
    let grid_min_mig = migs[k_mig];
    let grid_min_mih = if cfg.mode == Mode::SecondOrder {
        Some(mihs[argmin_earliest(&mihs)])
    } else {
        None
    };

    let null = grid_min_mig >= -NULL_TOL
        && match grid_min_mih {
            Some(mih) => mih >= -NULL_TOL,
            None => true,
        };

    let action = if null {
        None
    } else {
        // First-order descent drives the time choice; when the whole grid is
        // first-order singular, fall back to the most negative curvature.
        let k = if cfg.mode == Mode::SecondOrder && grid_min_mig >= -NULL_TOL {
            argmin_earliest(&mihs)
        } else {
            k_mig
        };
        Some(NeedleAction {
            u_star: controls[k].iter().copied().collect(),
            tau: grid.node(k),
            lambda: 0.0,
            predicted_dj: 0.0,
            mig: migs[k],
            mih: if cfg.mode == Mode::SecondOrder { Some(mihs[k]) } else { None },
        })
    };

    Ok(PlanOutcome { action, j0, grid_min_mig, grid_min_mih, window: grid, default_traj: traj })
}

/// A needle in absolute time: inserted control on `[start, end)`.
#[derive(Debug, Clone)]
pub struct NeedleWindow {
    pub control: DVector<f64>,
    pub start: f64,
    pub end: f64,
}

impl NeedleWindow {
    fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Fit a duration-`lambda` window centered at `tau` inside `[t0, tf]`,
/// shifting (not shrinking) when it pokes past either end.
pub fn needle_window(tau: f64, lambda: f64, t0: f64, tf: f64) -> (f64, f64) {
    let lam = lambda.min(tf - t0);
    let mut a = tau - 0.5 * lam;
    let mut b = tau + 0.5 * lam;
    if a < t0 {
        b += t0 - a;
        a = t0;
    }
    if b > tf {
        a -= b - tf;
        b = tf;
        a = a.max(t0);
    }
    (a, b)
}

/// Integrate over `grid` with default control `v` everywhere except inside
/// the needle window. Steps straddling a window edge are split at the exact
/// switch time so the discontinuity never smears through an RK4 stage.
pub fn simulate_switched(
    model: &dyn ControlAffine,
    x0: &DVector<f64>,
    grid: &TimeGrid,
    v: &ControlLaw,
    needle: Option<&NeedleWindow>,
) -> Result<Trajectory> {
    let select = |t: f64| -> DVector<f64> {
        match needle {
            Some(nd) if nd.contains(t) => nd.control.clone(),
            _ => v.at(t),
        }
    };
    let n = grid.count();
    let mut states = Vec::with_capacity(n);
    let mut controls = Vec::with_capacity(n);
    states.push(x0.clone());
    controls.push(select(grid.t0()));
    for k in 0..n - 1 {
        let ta = grid.node(k);
        let tb = grid.node(k + 1);
        let mut cuts = vec![ta];
        if let Some(nd) = needle {
            for s in [nd.start, nd.end] {
                if s > ta + 1e-12 && s < tb - 1e-12 {
                    cuts.push(s);
                }
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        cuts.push(tb);
        let mut x = states[k].clone();
        for seg in cuts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if b - a <= 0.0 {
                continue;
            }
            let u = select(0.5 * (a + b));
            x = rk4_step(&mut |t, y: &DVector<f64>| model.dynamics_unchecked(t, y, &u), &x, a, b - a)?;
        }
        model.project(&mut x);
        states.push(x);
        controls.push(select(tb));
    }
    let mut traj = Trajectory::new(grid.clone(), states)?;
    traj.controls = Some(controls);
    Ok(traj)
}

/// Backtracking duration search: accept the first `lambda0 * beta^k` whose
/// switched window cost beats the default window cost. Returns the fitted
/// window `(start, end)` and the accepted cost.
pub fn line_search_duration(
    model: &dyn ControlAffine,
    spec: &CostSpec,
    plan: &PlanOutcome,
    x0: &DVector<f64>,
    cfg: &SynthesisConfig,
) -> Result<(f64, f64, f64)> {
    let action = plan
        .action
        .as_ref()
        .ok_or_else(|| Error::Contract("line search needs a non-null planned action".into()))?;
    let grid = &plan.window;
    let v = ControlLaw::zero(model.control_dim());
    let control = action.control();
    let mut lambda = cfg.lambda0();
    for attempt in 0..cfg.line_search.max_iters {
        let (a, b) = needle_window(action.tau, lambda, grid.t0(), grid.tf());
        if b > a {
            let needle = NeedleWindow { control: control.clone(), start: a, end: b };
            let traj = simulate_switched(model, x0, grid, &v, Some(&needle))?;
            let j = spec.total_cost(&traj);
            if j < plan.j0 {
                return Ok((a, b, j));
            }
        }
        lambda *= cfg.line_search.beta;
        if attempt + 1 == cfg.line_search.max_iters {
            return Err(Error::NoDescent { tau: action.tau, tried: cfg.line_search.max_iters });
        }
    }
    Err(Error::NoDescent { tau: action.tau, tried: cfg.line_search.max_iters })
}

/// Outcome of one planning period inside the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    /// A duration was accepted and the needle was scheduled.
    Applied,
    /// No grid time offered descent; the default control ran all period.
    Null,
    /// A direction existed but the duration search found no cost reduction.
    NoDescent,
}

/// Log entry for one sampling period.
#[derive(Debug, Clone, Serialize)]
pub struct ActionRecord {
    pub period_start: f64,
    pub status: ActionStatus,
    pub action: Option<NeedleAction>,
    /// Default window cost at planning time.
    pub j_window: f64,
    /// Accepted switched window cost, when `status == Applied`.
    pub j_accepted: Option<f64>,
}

/// Full closed-loop result.
#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub traj: Trajectory,
    pub actions: Vec<ActionRecord>,
    /// Earliest time the stop predicate fired, if one was supplied.
    pub stopped_at: Option<f64>,
}

impl ClosedLoopRun {
    pub fn final_state(&self) -> &DVector<f64> {
        self.traj.last()
    }
}

pub fn closed_loop(
    model: &dyn ControlAffine,
    spec: &CostSpec,
    x0: &DVector<f64>,
    duration: f64,
    cfg: &SynthesisConfig,
) -> Result<ClosedLoopRun> {
    closed_loop_with_stop(model, spec, x0, duration, cfg, None)
}

/// Closed loop with an optional early-stop predicate, evaluated at every
/// integration node (its first firing time is recorded and the run ends).
pub fn closed_loop_with_stop(
    model: &dyn ControlAffine,
    spec: &CostSpec,
    x0: &DVector<f64>,
    duration: f64,
    cfg: &SynthesisConfig,
    stop: Option<&dyn Fn(f64, &DVector<f64>) -> bool>,
) -> Result<ClosedLoopRun> {
    cfg.validate()?;
    if !(duration > 0.0) {
        return Err(Error::Config(format!("duration must be positive, got {duration}")));
    }
    let periods = duration / cfg.period;
    if (periods - periods.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "duration ({duration}) must be an integer multiple of the period ({})",
            cfg.period
        )));
    }
    let n_periods = periods.round() as usize;
    let dt = cfg.dt();
    let m = model.control_dim();
    let v = ControlLaw::zero(m);

    let mut states: Vec<DVector<f64>> = vec![x0.clone()];
    let mut controls: Vec<DVector<f64>> = vec![DVector::zeros(m)];
    let mut actions = Vec::with_capacity(n_periods);
    let mut stopped_at = None;

    if let Some(pred) = stop {
        if pred(0.0, x0) {
            stopped_at = Some(0.0);
        }
    }

    let mut state = x0.clone();
    'periods: for p in 0..n_periods {
        if stopped_at.is_some() {
            break;
        }
        let t_k = p as f64 * cfg.period;
        let plan = plan_action(model, spec, &state, t_k, cfg)?;

        let (status, needle, record_action, j_accepted) = match &plan.action {
            None => (ActionStatus::Null, None, None, None),
            Some(act) => match line_search_duration(model, spec, &plan, &state, cfg) {
                Ok((a, b, j)) => {
                    let mut accepted = act.clone();
                    accepted.lambda = b - a;
                    accepted.predicted_dj = j - plan.j0;
                    let needle = NeedleWindow { control: accepted.control(), start: a, end: b };
                    (ActionStatus::Applied, Some(needle), Some(accepted), Some(j))
                }
                Err(Error::NoDescent { .. }) => (ActionStatus::NoDescent, None, Some(act.clone()), None),
                Err(e) => return Err(e),
            },
        };

        let exec_grid = TimeGrid::new(t_k, t_k + cfg.period, dt)?;
        let chunk = simulate_switched(model, &state, &exec_grid, &v, needle.as_ref())?;
        let chunk_controls = chunk.controls.as_ref().expect("switched simulation records controls");
        // Node 0 duplicates the previous period's last node; refresh its
        // control so the recorded signal reflects what runs on [t_k, t_k+dt).
        *controls.last_mut().expect("at least the initial node") = chunk_controls[0].clone();

        actions.push(ActionRecord {
            period_start: t_k,
            status,
            action: record_action,
            j_window: plan.j0,
            j_accepted,
        });

        for k in 1..chunk.states.len() {
            states.push(chunk.states[k].clone());
            controls.push(chunk_controls[k].clone());
            if let Some(pred) = stop {
                if stopped_at.is_none() && pred(exec_grid.node(k), &chunk.states[k]) {
                    stopped_at = Some(exec_grid.node(k));
                    break 'periods;
                }
            }
        }
        state = chunk.last().clone();
    }

    let grid = TimeGrid::from_count(0.0, dt, states.len().max(2))?;
    let mut traj = Trajectory::new(grid, if states.len() >= 2 { states } else { vec![x0.clone(), x0.clone()] })?;
    traj.controls = Some(controls);
    Ok(ClosedLoopRun { traj, actions, stopped_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::Target;
    use crate::models::{make_system, Overrides, SystemName};
    use nalgebra::DMatrix;

    fn diffdrive_cfg(mode: Mode) -> SynthesisConfig {
        let mut cfg = SynthesisConfig::new(mode, 0.5, 0.25, 0.1, -15.0);
        cfg.dt = Some(0.025);
        cfg
    }

    fn diffdrive_spec(target: DVector<f64>, mode: Mode) -> CostSpec {
        let r = match mode {
            Mode::FirstOrder => DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 100.0])),
            Mode::SecondOrder => DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.1])),
        };
        CostSpec::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 10.0, 1000.0])),
            DMatrix::zeros(3, 3),
            r,
            Target::Point(target),
        )
        .unwrap()
    }

    #[test]
    fn argmin_prefers_the_earliest_tie() {
        assert_eq!(argmin_earliest(&[3.0, 1.0, 1.0, 2.0]), 1);
        assert_eq!(argmin_earliest(&[0.0, 0.0]), 0);
        assert_eq!(argmin_earliest(&[5.0]), 0);
    }

    #[test]
    fn window_shifts_right_at_the_horizon_start() {
        let (a, b) = needle_window(0.0, 0.2, 0.0, 1.0);
        assert_eq!((a, b), (0.0, 0.2));
        let (a, b) = needle_window(0.5, 0.2, 0.0, 1.0);
        assert!((a - 0.4).abs() < 1e-12 && (b - 0.6).abs() < 1e-12);
        let (a, b) = needle_window(1.0, 0.2, 0.0, 1.0);
        assert!((a - 0.8).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        // Longer than the horizon: capped to it.
        let (a, b) = needle_window(0.3, 5.0, 0.0, 1.0);
        assert_eq!((a, b), (0.0, 1.0));
    }

    #[test]
    fn on_target_start_plans_a_null_action() {
        let model = make_system(SystemName::DiffDrive, &Overrides::default()).unwrap();
        let spec = diffdrive_spec(DVector::zeros(3), Mode::SecondOrder);
        let cfg = diffdrive_cfg(Mode::SecondOrder);
        let plan = plan_action(model.as_ref(), &spec, &DVector::zeros(3), 0.0, &cfg).unwrap();
        assert!(plan.action.is_none());
        assert!(plan.grid_min_mig >= -NULL_TOL);
        assert_eq!(plan.j0, 0.0);
    }

    #[test]
    fn generic_start_descends_and_respects_lambda0() {
        let model = make_system(SystemName::DiffDrive, &Overrides::default()).unwrap();
        let spec = diffdrive_spec(DVector::from_vec(vec![1000.0, 1000.0, 0.0]), Mode::SecondOrder);
        let cfg = diffdrive_cfg(Mode::SecondOrder);
        let plan = plan_action(model.as_ref(), &spec, &DVector::zeros(3), 0.0, &cfg).unwrap();
        let action = plan.action.as_ref().expect("descent direction exists");
        assert!(action.mig < 0.0);
        let (a, b, j) = line_search_duration(model.as_ref(), &spec, &plan, &DVector::zeros(3), &cfg).unwrap();
        assert!(j < plan.j0);
        assert!(b - a <= cfg.lambda0() + 1e-12);
    }

    #[test]
    fn lateral_target_is_first_order_singular_but_second_order_descends() {
        // Start at the origin facing +x with the target directly to the side:
        // rho is orthogonal to both wheel columns everywhere on the window.
        let model = make_system(SystemName::DiffDrive, &Overrides::default()).unwrap();
        let target = DVector::from_vec(vec![0.0, 800.0, 0.0]);
        let x0 = DVector::zeros(3);

        let spec1 = diffdrive_spec(target.clone(), Mode::FirstOrder);
        let cfg1 = diffdrive_cfg(Mode::FirstOrder);
        let plan1 = plan_action(model.as_ref(), &spec1, &x0, 0.0, &cfg1).unwrap();
        assert!(plan1.action.is_none(), "first-order synthesis should be null here");
        assert!(plan1.grid_min_mig.abs() <= NULL_TOL);

        let spec2 = diffdrive_spec(target, Mode::SecondOrder);
        let cfg2 = diffdrive_cfg(Mode::SecondOrder);
        let plan2 = plan_action(model.as_ref(), &spec2, &x0, 0.0, &cfg2).unwrap();
        let action = plan2.action.as_ref().expect("second order finds curvature descent");
        assert!(action.mih.unwrap() < 0.0);
        let (a, b, j) = line_search_duration(model.as_ref(), &spec2, &plan2, &x0, &cfg2).unwrap();
        assert!(b > a);
        assert!(j < plan2.j0);
    }

    #[test]
    fn closed_loop_is_deterministic_and_null_on_target() {
        let model = make_system(SystemName::DiffDrive, &Overrides::default()).unwrap();
        let spec = diffdrive_spec(DVector::zeros(3), Mode::SecondOrder);
        let cfg = diffdrive_cfg(Mode::SecondOrder);
        let run = closed_loop(model.as_ref(), &spec, &DVector::zeros(3), 1.0, &cfg).unwrap();
        assert_eq!(run.actions.len(), 4);
        assert!(run.actions.iter().all(|a| a.status == ActionStatus::Null));
        assert!((run.final_state() - DVector::zeros(3)).norm() < 1e-12);

        let run2 = closed_loop(model.as_ref(), &spec, &DVector::zeros(3), 1.0, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&run.actions).unwrap(),
            serde_json::to_string(&run2.actions).unwrap()
        );
    }

    #[test]
    fn accepted_actions_reduce_window_cost() {
        let model = make_system(SystemName::DiffDrive, &Overrides::default()).unwrap();
        let spec = diffdrive_spec(DVector::from_vec(vec![500.0, 300.0, 0.0]), Mode::SecondOrder);
        let cfg = diffdrive_cfg(Mode::SecondOrder);
        let run = closed_loop(model.as_ref(), &spec, &DVector::zeros(3), 2.0, &cfg).unwrap();
        let mut applied = 0;
        for rec in &run.actions {
            if rec.status == ActionStatus::Applied {
                applied += 1;
                let act = rec.action.as_ref().unwrap();
                assert!(act.lambda > 0.0);
                assert!(rec.j_accepted.unwrap() < rec.j_window);
                assert!(act.predicted_dj < 0.0);
            }
        }
        assert!(applied > 0, "expected at least one applied action");
    }

    #[test]
    fn stop_predicate_ends_the_run_early() {
        let model = make_system(SystemName::DiffDrive, &Overrides::default()).unwrap();
        let spec = diffdrive_spec(DVector::from_vec(vec![500.0, 0.0, 0.0]), Mode::SecondOrder);
        let cfg = diffdrive_cfg(Mode::SecondOrder);
        let stop = |_t: f64, x: &DVector<f64>| x[0] > 50.0;
        let run =
            closed_loop_with_stop(model.as_ref(), &spec, &DVector::zeros(3), 60.0, &cfg, Some(&stop)).unwrap();
        let t_stop = run.stopped_at.expect("run should stop early");
        assert!(t_stop < 60.0);
        assert!(run.final_state()[0] > 50.0);
    }

    #[test]
    fn switched_simulation_handles_sub_step_needles() {
        let model = make_system(SystemName::DiffDrive, &Overrides::default()).unwrap();
        let grid = TimeGrid::new(0.0, 0.5, 0.025).unwrap();
        let x0 = DVector::zeros(3);
        let lam = 1e-5;
        let needle = NeedleWindow {
            control: DVector::from_vec(vec![1.0, 1.0]),
            start: 0.1 - lam / 2.0,
            end: 0.1 + lam / 2.0,
        };
        let traj =
            simulate_switched(model.as_ref(), &x0, &grid, &ControlLaw::zero(2), Some(&needle)).unwrap();
        // Forward displacement equals 2 r * lambda regardless of grid layout.
        let expect = 2.0 * 36.0 * lam;
        assert!(
            (traj.last()[0] - expect).abs() < 1e-12 + 1e-9 * expect,
            "{} vs {expect}",
            traj.last()[0]
        );
    }

    #[test]
    fn config_validation_catches_bad_setups() {
        let mut cfg = diffdrive_cfg(Mode::FirstOrder);
        cfg.period = 0.7; // > horizon
        assert!(cfg.validate().is_err());
        let mut cfg = diffdrive_cfg(Mode::FirstOrder);
        cfg.dt = Some(0.024); // not a divisor of the period
        assert!(cfg.validate().is_err());
        let mut cfg = diffdrive_cfg(Mode::FirstOrder);
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = diffdrive_cfg(Mode::FirstOrder);
        cfg.line_search.beta = 1.5;
        assert!(cfg.validate().is_err());
    }
}
