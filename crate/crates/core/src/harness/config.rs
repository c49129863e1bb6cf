//! JSON scenario-file schema.
//!
//! ```json
//! {
//!   "name": "my-run",
//!   "system": "fish3d",
//!   "overrides": {"drift": [0.0, 10.0, 0.0]},
//!   "cost": {
//!     "q": {"diag": [5.0, 5.0, 5.0, 0, 0, 0, 0, 0.005, 0.005, 0.005, 10, 5, 5]},
//!     "p1": {"diag": [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]},
//!     "r": {"first": {"diag": [1e3, 1e3, 1e6, 1e6]},
//!            "second": {"diag": [5e-7, 5e-7, 5e-4, 5e-4]}},
//!     "target": {"point": [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]}
//!   },
//!   "synth": {"mode": "second", "T": 1.5, "rate": 20.0, "lambda": 1e-4,
//!              "gamma": -5.0, "dt": 0.01,
//!              "line_search": {"lambda0": null, "beta": 0.5, "max_iters": 20}},
//!   "sampler": {"box": [[-100, 100], [-100, 100], [-100, 100]],
//!                "exclusion_radius": 15.0},
//!   "success": {"radius": 5.0, "speed_limit": 5.0, "deadline": 60.0},
//!   "trials": 100,
//!   "seed": 7
//! }
//! ```
//!
//! `q`/`p1`/`r` entries accept either `{"diag": [...]}` or
//! `{"dense": [[...], ...]}`; `r` may be a single matrix for both modes or a
//! `{"first", "second"}` pair. `target` is `{"point": [...]}` or
//! `{"curve": "fish-track"}`. A top-level `"drift"` key overrides
//! `overrides.drift`.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::{Region, Sampler, Scenario, SuccessSpec};
use crate::cost::Target;
use crate::error::{Error, Result};
use crate::models::{Overrides, SystemName};
use crate::synth::{LineSearchConfig, Mode};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Diag { diag: Vec<f64> },
    Dense { dense: Vec<Vec<f64>> },
}

impl MatrixSpec {
    fn build(&self, n: usize, what: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Diag { diag } => {
                if diag.len() != n {
                    return Err(Error::Config(format!("{what}: expected {n} diagonal entries, got {}", diag.len())));
                }
                Ok(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
            }
            MatrixSpec::Dense { dense } => {
                if dense.len() != n || dense.iter().any(|row| row.len() != n) {
                    return Err(Error::Config(format!("{what}: expected a dense {n}x{n} matrix")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| dense[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RSpec {
    PerMode { first: MatrixSpec, second: MatrixSpec },
    Single(MatrixSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Point { point: Vec<f64> },
    Curve { curve: String },
}

#[derive(Debug, Clone, Deserialize)]
pub struct CostSection {
    pub q: MatrixSpec,
    pub p1: MatrixSpec,
    pub r: RSpec,
    pub target: TargetSpec,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SynthSection {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(alias = "T")]
    pub t: f64,
    pub rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub line_search: Option<LineSearchConfig>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SamplerSpec {
    #[serde(default, rename = "box")]
    pub box_ranges: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub ball: Option<f64>,
    pub exclusion_radius: f64,
}

/// Top-level scenario file.
#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub system: String,
    #[serde(default)]
    pub overrides: Option<Overrides>,
    pub cost: CostSection,
    pub synth: SynthSection,
    pub sampler: SamplerSpec,
    pub success: SuccessSpec,
    #[serde(default)]
    pub drift: Option<[f64; 3]>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        let system: SystemName = self.system.parse()?;
        let (n, m) = match system {
            SystemName::DiffDrive => (3, 2),
            SystemName::KinBody3d => (7, 4),
            SystemName::Fish3d => (13, 4),
        };
        let mut overrides = self.overrides.unwrap_or_default();
        if self.drift.is_some() {
            overrides.drift = self.drift;
        }
        let q = self.cost.q.build(n, "cost.q")?;
        let p1 = self.cost.p1.build(n, "cost.p1")?;
        let (r_first, r_second) = match &self.cost.r {
            RSpec::Single(spec) => (spec.build(m, "cost.r")?, spec.build(m, "cost.r")?),
            RSpec::PerMode { first, second } => {
                (first.build(m, "cost.r.first")?, second.build(m, "cost.r.second")?)
            }
        };
        let target = match &self.cost.target {
            TargetSpec::Point { point } => {
                if point.len() != n {
                    return Err(Error::Config(format!(
                        "cost.target.point: expected {n} components, got {}",
                        point.len()
                    )));
                }
                Target::Point(DVector::from_row_slice(point))
            }
            TargetSpec::Curve { curve } => match curve.as_str() {
                "fish-track" => {
                    if system != SystemName::Fish3d {
                        return Err(Error::Config("the fish-track curve needs the fish3d system".into()));
                    }
                    Target::FishCurve { dim: n }
                }
                other => return Err(Error::Config(format!("unknown target curve '{other}'"))),
            },
        };
        let region = match (self.sampler.box_ranges, self.sampler.ball) {
            (Some(ranges), None) => Region::Box(ranges),
            (None, Some(r)) => Region::Ball(r),
            _ => return Err(Error::Config("sampler needs exactly one of 'box' or 'ball'".into())),
        };
        let scenario = Scenario {
            name: self.name.unwrap_or_else(|| format!("{system}-custom")),
            system,
            overrides,
            q,
            p1,
            r_first,
            r_second,
            target,
            mode: self.synth.mode.unwrap_or(Mode::SecondOrder),
            horizon: self.synth.t,
            rate_hz: self.synth.rate,
            lambda: self.synth.lambda,
            gamma: self.synth.gamma,
            epsilon: self.synth.epsilon,
            dt: self.synth.dt,
            line_search: self.synth.line_search.unwrap_or_default(),
            sampler: Sampler { region, exclusion_radius: self.sampler.exclusion_radius },
            success: self.success,
            trials: self.trials.unwrap_or(100),
            seed: self.seed.unwrap_or(7),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_scenario_file() {
        let text = r#"{
            "system": "diffdrive",
            "cost": {
                "q": {"diag": [10, 10, 1000]},
                "p1": {"diag": [0, 0, 0]},
                "r": {"first": {"diag": [100, 100]}, "second": {"diag": [0.1, 0.1]}},
                "target": {"point": [0, 0, 0]}
            },
            "synth": {"mode": "second", "T": 0.5, "rate": 4.0, "lambda": 0.1, "gamma": -15.0},
            "sampler": {"box": [[-1500, 1500], [-1500, 1500]], "exclusion_radius": 51.6},
            "success": {"radius": 51.6, "heading_tol": 0.2617993877991494, "deadline": 60.0},
            "trials": 10,
            "seed": 3
        }"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.system, SystemName::DiffDrive);
        assert_eq!(s.trials, 10);
        assert_eq!(s.seed, 3);
        assert_eq!(s.mode, Mode::SecondOrder);
        assert_eq!(s.q[(2, 2)], 1000.0);
    }

    #[test]
    fn dense_matrices_and_single_r_parse() {
        let text = r#"{
            "system": "diffdrive",
            "cost": {
                "q": {"dense": [[10, 0, 0], [0, 10, 0], [0, 0, 1000]]},
                "p1": {"diag": [0, 0, 0]},
                "r": {"diag": [1, 1]},
                "target": {"point": [100, 0, 0]}
            },
            "synth": {"T": 0.5, "rate": 4.0, "lambda": 0.1, "gamma": -15.0},
            "sampler": {"box": [[-500, 500], [-500, 500]], "exclusion_radius": 51.6},
            "success": {"radius": 51.6, "deadline": 60.0}
        }"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.r_first, s.r_second);
        assert_eq!(s.q[(0, 0)], 10.0);
    }

    #[test]
    fn rejects_wrong_dimensions_and_unknown_curves() {
        let bad_dim = r#"{
            "system": "diffdrive",
            "cost": {
                "q": {"diag": [10, 10]},
                "p1": {"diag": [0, 0, 0]},
                "r": {"diag": [1, 1]},
                "target": {"point": [0, 0, 0]}
            },
            "synth": {"T": 0.5, "rate": 4.0, "lambda": 0.1, "gamma": -15.0},
            "sampler": {"box": [[-500, 500], [-500, 500]], "exclusion_radius": 51.6},
            "success": {"radius": 51.6, "deadline": 60.0}
        }"#;
        assert!(Scenario::from_json(bad_dim).is_err());

        let bad_curve = r#"{
            "system": "diffdrive",
            "cost": {
                "q": {"diag": [10, 10, 1000]},
                "p1": {"diag": [0, 0, 0]},
                "r": {"diag": [1, 1]},
                "target": {"curve": "fish-track"}
            },
            "synth": {"T": 0.5, "rate": 4.0, "lambda": 0.1, "gamma": -15.0},
            "sampler": {"box": [[-500, 500], [-500, 500]], "exclusion_radius": 51.6},
            "success": {"radius": 51.6, "deadline": 60.0}
        }"#;
        assert!(Scenario::from_json(bad_curve).is_err());
    }
}
