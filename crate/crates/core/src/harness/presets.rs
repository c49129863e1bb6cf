//! Built-in benchmark scenarios.
//!
//! Weights, horizons, rates, durations, saturations, and samplers follow the
//! published studies for each vehicle. Trial counts default to a desk-scale
//! 100 (the original campaigns used 280-1000); scale up via the config or
//! CLI flags. The 20 Hz presets pin the integration substep to 0.01 s.

use nalgebra::{DMatrix, DVector};

use super::{Region, Sampler, Scenario, SuccessSpec};
use crate::cost::Target;
use crate::error::{Error, Result};
use crate::models::{Overrides, SystemName};
use crate::synth::{LineSearchConfig, Mode};

pub const PRESET_NAMES: &[&str] =
    &["diffdrive-mc", "kinbody3d-mc", "fish3d-mc", "fish3d-track", "fish3d-drift-mc"];

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(values))
}

const DEFAULT_TRIALS: usize = 100;
const DEFAULT_SEED: u64 = 7;

fn diffdrive_mc() -> Scenario {
    let l5 = 258.0 / 5.0;
    Scenario {
        name: "diffdrive-mc".into(),
        system: SystemName::DiffDrive,
        overrides: Overrides::default(),
        q: diag(&[10.0, 10.0, 1000.0]),
        p1: DMatrix::zeros(3, 3),
        r_first: diag(&[100.0, 100.0]),
        r_second: diag(&[0.1, 0.1]),
        target: Target::Point(DVector::zeros(3)),
        mode: Mode::SecondOrder,
        horizon: 0.5,
        rate_hz: 4.0,
        lambda: 0.1,
        gamma: -15.0,
        epsilon: None,
        dt: None,
        line_search: LineSearchConfig::default(),
        sampler: Sampler {
            region: Region::Box(vec![(-1500.0, 1500.0), (-1500.0, 1500.0)]),
            exclusion_radius: l5,
        },
        success: SuccessSpec {
            radius: l5,
            heading_tol: Some(std::f64::consts::PI / 12.0),
            speed_limit: None,
            deadline: 60.0,
        },
        trials: DEFAULT_TRIALS,
        seed: DEFAULT_SEED,
    }
}

fn kinbody3d_mc() -> Scenario {
    Scenario {
        name: "kinbody3d-mc".into(),
        system: SystemName::KinBody3d,
        overrides: Overrides::default(),
        q: DMatrix::zeros(7, 7),
        p1: diag(&[100.0, 200.0, 100.0, 0.0, 0.0, 0.0, 0.0]),
        r_first: diag(&[10.0, 10.0, 1000.0, 1000.0]),
        r_second: diag(&[1e-6, 1e-6, 1e-4, 1e-4]),
        target: Target::Point(DVector::zeros(7)),
        mode: Mode::SecondOrder,
        horizon: 1.0,
        rate_hz: 20.0,
        lambda: 1e-3,
        gamma: -50_000.0,
        epsilon: None,
        dt: Some(0.01),
        line_search: LineSearchConfig::default(),
        sampler: Sampler {
            region: Region::Box(vec![(-50.0, 50.0), (-50.0, 50.0), (-50.0, 50.0)]),
            exclusion_radius: 6.0,
        },
        success: SuccessSpec { radius: 6.0, heading_tol: None, speed_limit: None, deadline: 60.0 },
        trials: DEFAULT_TRIALS,
        seed: DEFAULT_SEED,
    }
}

fn fish3d_mc() -> Scenario {
    let q = [1000.0, 1000.0, 1000.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2000.0, 1000.0, 1000.0]
        .map(|v| v / 200.0);
    Scenario {
        name: "fish3d-mc".into(),
        system: SystemName::Fish3d,
        overrides: Overrides::default(),
        q: diag(&q),
        p1: DMatrix::zeros(13, 13),
        r_first: diag(&[1e3, 1e3, 1e6, 1e6]),
        r_second: diag(&[0.5e-6, 0.5e-6, 0.5e-3, 0.5e-3]),
        target: Target::Point(DVector::zeros(13)),
        mode: Mode::SecondOrder,
        horizon: 1.5,
        rate_hz: 20.0,
        lambda: 1e-4,
        gamma: -5.0,
        epsilon: None,
        dt: Some(0.01),
        line_search: LineSearchConfig::default(),
        sampler: Sampler {
            region: Region::Box(vec![(-100.0, 100.0), (-100.0, 100.0), (-100.0, 100.0)]),
            exclusion_radius: 15.0,
        },
        success: SuccessSpec { radius: 5.0, heading_tol: None, speed_limit: Some(5.0), deadline: 60.0 },
        trials: DEFAULT_TRIALS,
        seed: DEFAULT_SEED,
    }
}

fn fish3d_track() -> Scenario {
    Scenario {
        name: "fish3d-track".into(),
        system: SystemName::Fish3d,
        overrides: Overrides { drift: Some([0.0, 10.0, 0.0]), ..Default::default() },
        q: diag(&[10.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.1]),
        p1: diag(&[10.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        r_first: diag(&[1e3, 1e3, 1e6, 1e6]),
        r_second: diag(&[10.0, 10.0, 1e4, 1e4]),
        target: Target::FishCurve { dim: 13 },
        mode: Mode::SecondOrder,
        horizon: 2.0,
        rate_hz: 20.0,
        lambda: 0.01,
        gamma: -50_000.0,
        epsilon: None,
        dt: Some(0.01),
        line_search: LineSearchConfig::default(),
        sampler: Sampler { region: Region::Ball(30.0), exclusion_radius: 0.0 },
        success: SuccessSpec { radius: 5.0, heading_tol: None, speed_limit: None, deadline: 10.0 },
        trials: 10,
        seed: DEFAULT_SEED,
    }
}

fn fish3d_drift_mc() -> Scenario {
    let q = [10.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0].map(|v| v * 1e-3);
    Scenario {
        name: "fish3d-drift-mc".into(),
        system: SystemName::Fish3d,
        overrides: Overrides { drift: Some([0.0, 10.0, 0.0]), ..Default::default() },
        q: diag(&q),
        p1: diag(&[100.0, 100.0, 100.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0]),
        r_first: diag(&[0.1, 0.1, 1e4, 1e4]),
        r_second: diag(&[0.5e-5, 0.5e-5, 0.5, 0.5]),
        target: Target::Point(DVector::zeros(13)),
        mode: Mode::SecondOrder,
        horizon: 1.0,
        rate_hz: 20.0,
        lambda: 1e-4,
        gamma: -25_000.0,
        epsilon: None,
        dt: Some(0.01),
        line_search: LineSearchConfig::default(),
        sampler: Sampler { region: Region::Ball(30.0), exclusion_radius: 5.0 },
        success: SuccessSpec { radius: 5.0, heading_tol: None, speed_limit: None, deadline: 60.0 },
        trials: DEFAULT_TRIALS,
        seed: DEFAULT_SEED,
    }
}

pub fn preset(name: &str) -> Result<Scenario> {
    match name {
        "diffdrive-mc" => Ok(diffdrive_mc()),
        "kinbody3d-mc" => Ok(kinbody3d_mc()),
        "fish3d-mc" => Ok(fish3d_mc()),
        "fish3d-track" => Ok(fish3d_track()),
        "fish3d-drift-mc" => Ok(fish3d_drift_mc()),
        other => Err(Error::Config(format!(
            "unknown preset '{other}' (available: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}
