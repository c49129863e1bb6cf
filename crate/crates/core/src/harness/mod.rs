//! Scenario presets, Monte Carlo experiment runner, and reporting.
//!
//! Trials are embarrassingly parallel: each one derives its own RNG stream
//! from `(seed, trial index)`, so results are identical whether the batch
//! runs on the rayon pool (default, `parallel` feature) or sequentially.

mod config;
mod presets;

pub use config::ScenarioFile;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostSpec, Target};
use crate::error::{Error, Result};
use crate::models::{make_system, ControlAffine, Overrides, SystemName};
use crate::synth::{closed_loop_with_stop, ActionStatus, LineSearchConfig, Mode, SynthesisConfig};

/// Initial-position sampling region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Region {
    /// Independent uniform draws per axis.
    Box(Vec<(f64, f64)>),
    /// Uniform draw inside a centered ball of this radius.
    Ball(f64),
}

impl Region {
    pub fn dims(&self) -> usize {
        match self {
            Region::Box(ranges) => ranges.len(),
            Region::Ball(_) => 3,
        }
    }

    fn extent(&self) -> f64 {
        match self {
            Region::Box(ranges) => ranges.iter().map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2)).sum::<f64>().sqrt(),
            Region::Ball(r) => *r,
        }
    }
}

/// Uniform initial-state sampler with a central exclusion radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sampler {
    pub region: Region,
    pub exclusion_radius: f64,
}

impl Sampler {
    fn draw_positions(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        for _ in 0..100_000 {
            let p: Vec<f64> = match &self.region {
                Region::Box(ranges) => ranges.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect(),
                Region::Ball(r) => {
                    let cand: Vec<f64> = (0..3).map(|_| rng.gen_range(-*r..*r)).collect();
                    if cand.iter().map(|v| v * v).sum::<f64>().sqrt() > *r {
                        continue;
                    }
                    cand
                }
            };
            let dist = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dist > self.exclusion_radius {
                return Ok(p);
            }
        }
        Err(Error::Config("sampler exclusion radius rejects every draw".into()))
    }
}

/// Success predicate parameters, evaluated continuously along each trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccessSpec {
    /// Position error below this radius counts as arrived.
    pub radius: f64,
    /// Additionally require |wrapped heading error| below this (planar only).
    #[serde(default)]
    pub heading_tol: Option<f64>,
    /// Additionally require body linear speed below this (dynamic 3D only).
    #[serde(default)]
    pub speed_limit: Option<f64>,
    /// Trial length in seconds; success must occur before it.
    pub deadline: f64,
}

/// Wrap an angle difference into (-pi, pi].
pub fn wrap_angle(d: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (d + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// A complete benchmark scenario: system, objective, synthesis parameters,
/// initial-state distribution, and success criterion.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub system: SystemName,
    pub overrides: Overrides,
    pub q: DMatrix<f64>,
    pub p1: DMatrix<f64>,
    pub r_first: DMatrix<f64>,
    pub r_second: DMatrix<f64>,
    pub target: Target,
    pub mode: Mode,
    pub horizon: f64,
    pub rate_hz: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub epsilon: Option<f64>,
    pub dt: Option<f64>,
    pub line_search: LineSearchConfig,
    pub sampler: Sampler,
    pub success: SuccessSpec,
    pub trials: usize,
    pub seed: u64,
}

impl Scenario {
    /// Look up a built-in preset by name.
    pub fn preset(name: &str) -> Result<Scenario> {
        presets::preset(name)
    }

    /// Names of all built-in presets.
    pub fn preset_names() -> &'static [&'static str] {
        presets::PRESET_NAMES
    }

    /// Parse the JSON scenario-file schema.
    pub fn from_json(text: &str) -> Result<Scenario> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario JSON: {e}")))?;
        file.into_scenario()
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn build_model(&self) -> Result<Box<dyn ControlAffine>> {
        make_system(self.system, &self.overrides)
    }

    /// Objective with the active mode's control metric.
    pub fn cost_spec(&self) -> Result<CostSpec> {
        let r = match self.mode {
            Mode::FirstOrder => self.r_first.clone(),
            Mode::SecondOrder => self.r_second.clone(),
        };
        CostSpec::new(self.q.clone(), self.p1.clone(), r, self.target.clone())
    }

    pub fn synth_config(&self) -> SynthesisConfig {
        SynthesisConfig {
            mode: self.mode,
            horizon: self.horizon,
            period: self.period(),
            lambda_nominal: self.lambda,
            gamma: self.gamma,
            epsilon: self.epsilon,
            dt: self.dt,
            line_search: self.line_search.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trial count must be at least 1".into()));
        }
        if !(self.success.deadline > 0.0) {
            return Err(Error::Config("success deadline must be positive".into()));
        }
        if self.sampler.exclusion_radius >= self.sampler.region.extent() {
            return Err(Error::Config("sampler exclusion radius must be smaller than the region extent".into()));
        }
        if self.sampler.region.dims() != self.position_dims() {
            return Err(Error::Config(format!(
                "sampler region has {} axes but {} has {} position states",
                self.sampler.region.dims(),
                self.system,
                self.position_dims()
            )));
        }
        if self.success.speed_limit.is_some() && self.system != SystemName::Fish3d {
            return Err(Error::Config("speed_limit only applies to the dynamic 3D body".into()));
        }
        if self.success.heading_tol.is_some() && self.system != SystemName::DiffDrive {
            return Err(Error::Config("heading_tol only applies to the planar system".into()));
        }
        self.synth_config().validate()?;
        self.cost_spec().map(|_| ())
    }

    pub fn position_dims(&self) -> usize {
        match self.system {
            SystemName::DiffDrive => 2,
            _ => 3,
        }
    }

    /// Deterministic initial state for trial `index` under `seed`.
    pub fn sample_initial(&self, index: usize, seed: u64) -> Result<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        let pos = self.sampler.draw_positions(&mut rng)?;
        let mut x = match self.system {
            SystemName::DiffDrive => DVector::zeros(3),
            SystemName::KinBody3d => {
                let mut x = DVector::zeros(7);
                x[3] = 1.0;
                x
            }
            SystemName::Fish3d => {
                let mut x = DVector::zeros(13);
                x[3] = 1.0;
                x
            }
        };
        for (i, p) in pos.iter().enumerate() {
            x[i] = *p;
        }
        Ok(x)
    }

    /// The success predicate as a closure over `(t, x)`.
    pub fn success_predicate(&self) -> impl Fn(f64, &DVector<f64>) -> bool + Sync + '_ {
        let pd = self.position_dims();
        let spec = self.success.clone();
        let target = self.target.clone();
        move |t: f64, x: &DVector<f64>| {
            let tgt = target.at(t);
            let mut dist2 = 0.0;
            for i in 0..pd {
                let d = x[i] - tgt[i];
                dist2 += d * d;
            }
            if dist2.sqrt() >= spec.radius {
                return false;
            }
            if let Some(tol) = spec.heading_tol {
                if wrap_angle(x[2] - tgt[2]).abs() >= tol {
                    return false;
                }
            }
            if let Some(limit) = spec.speed_limit {
                let v2 = x[7] * x[7] + x[8] * x[8] + x[9] * x[9];
                if v2.sqrt() >= limit {
                    return false;
                }
            }
            true
        }
    }
}

/// Outcome of one Monte Carlo trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub initial_state: Vec<f64>,
    pub success: bool,
    /// Earliest time the success predicate held.
    pub convergence_time: Option<f64>,
    /// Default-window cost at the last planning step (cost-to-go proxy).
    pub final_cost: f64,
    /// Number of applied (non-null, accepted-duration) actions.
    pub action_count: usize,
    /// Failure tag when the trial errored instead of finishing.
    pub failure: Option<String>,
}

/// Wall-clock statistics for a batch.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub total_ms: f64,
    pub mean_trial_ms: f64,
    pub max_trial_ms: f64,
}

/// Aggregated Monte Carlo report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub system: String,
    pub mode: Mode,
    pub trials: usize,
    pub seed: u64,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_convergence_time: Option<f64>,
    pub median_convergence_time: Option<f64>,
    pub runtime: RuntimeStats,
    pub results: Vec<TrialResult>,
}

/// Run one trial: sample the initial state, run the closed loop against the
/// success predicate, and record the outcome. Errors become failure tags on
/// the result, never panics or batch aborts.
pub fn run_trial(scenario: &Scenario, index: usize, seed: u64) -> TrialResult {
    let fail = |msg: String| TrialResult {
        index,
        initial_state: Vec::new(),
        success: false,
        convergence_time: None,
        final_cost: f64::NAN,
        action_count: 0,
        failure: Some(msg),
    };
    let x0 = match scenario.sample_initial(index, seed) {
        Ok(x) => x,
        Err(e) => return fail(format!("sampling: {e}")),
    };
    let model = match scenario.build_model() {
        Ok(m) => m,
        Err(e) => return fail(format!("model: {e}")),
    };
    let spec = match scenario.cost_spec() {
        Ok(s) => s,
        Err(e) => return fail(format!("cost: {e}")),
    };
    let cfg = scenario.synth_config();
    let pred = scenario.success_predicate();
    match closed_loop_with_stop(model.as_ref(), &spec, &x0, scenario.success.deadline, &cfg, Some(&pred)) {
        Ok(run) => TrialResult {
            index,
            initial_state: x0.iter().copied().collect(),
            success: run.stopped_at.is_some(),
            convergence_time: run.stopped_at,
            final_cost: run.actions.last().map(|a| a.j_window).unwrap_or(0.0),
            action_count: run.actions.iter().filter(|a| a.status == ActionStatus::Applied).count(),
            failure: None,
        },
        Err(e) => TrialResult {
            index,
            initial_state: x0.iter().copied().collect(),
            success: false,
            convergence_time: None,
            final_cost: f64::NAN,
            action_count: 0,
            failure: Some(e.to_string()),
        },
    }
}

fn assemble_report(scenario: &Scenario, results: Vec<TrialResult>, runtime: RuntimeStats) -> Report {
    let successes = results.iter().filter(|r| r.success).count();
    let mut times: Vec<f64> = results.iter().filter_map(|r| r.convergence_time).collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let mean = if times.is_empty() {
        None
    } else {
        Some(times.iter().sum::<f64>() / times.len() as f64)
    };
    let median = if times.is_empty() {
        None
    } else if times.len() % 2 == 1 {
        Some(times[times.len() / 2])
    } else {
        Some(0.5 * (times[times.len() / 2 - 1] + times[times.len() / 2]))
    };
    Report {
        scenario: scenario.name.clone(),
        system: scenario.system.to_string(),
        mode: scenario.mode,
        trials: results.len(),
        seed: scenario.seed,
        successes,
        success_rate: successes as f64 / results.len().max(1) as f64,
        mean_convergence_time: mean,
        median_convergence_time: median,
        runtime,
        results,
    }
}

/// Run every trial sequentially on the calling thread.
pub fn run_monte_carlo_sequential(scenario: &Scenario) -> Result<Report> {
    scenario.validate()?;
    let start = Instant::now();
    let mut results = Vec::with_capacity(scenario.trials);
    let mut max_ms = 0.0_f64;
    for i in 0..scenario.trials {
        let t = Instant::now();
        results.push(run_trial(scenario, i, scenario.seed));
        max_ms = max_ms.max(t.elapsed().as_secs_f64() * 1e3);
    }
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    let runtime = RuntimeStats {
        total_ms,
        mean_trial_ms: total_ms / scenario.trials as f64,
        max_trial_ms: max_ms,
    };
    Ok(assemble_report(scenario, results, runtime))
}

/// Run the batch on the rayon pool (or sequentially without the `parallel`
/// feature). Identical `(scenario, seed)` gives identical results either way.
#[cfg(feature = "parallel")]
pub fn run_monte_carlo(scenario: &Scenario) -> Result<Report> {
    use rayon::prelude::*;
    scenario.validate()?;
    let start = Instant::now();
    let timed: Vec<(TrialResult, f64)> = (0..scenario.trials)
        .into_par_iter()
        .map(|i| {
            let t = Instant::now();
            let r = run_trial(scenario, i, scenario.seed);
            (r, t.elapsed().as_secs_f64() * 1e3)
        })
        .collect();
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    let max_ms = timed.iter().map(|(_, ms)| *ms).fold(0.0, f64::max);
    let results = timed.into_iter().map(|(r, _)| r).collect();
    let runtime = RuntimeStats {
        total_ms,
        mean_trial_ms: total_ms / scenario.trials as f64,
        max_trial_ms: max_ms,
    };
    Ok(assemble_report(scenario, results, runtime))
}

#[cfg(not(feature = "parallel"))]
pub fn run_monte_carlo(scenario: &Scenario) -> Result<Report> {
    run_monte_carlo_sequential(scenario)
}
