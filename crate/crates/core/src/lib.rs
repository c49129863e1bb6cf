//! Feedback synthesis for underactuated control-affine systems from first-
//! and second-order needle variations.
//!
//! A needle variation swaps the default control `v` for an inserted control
//! `u` over an infinitesimal window of duration `lambda` centered at a time
//! `tau`. The first derivative of a tracking objective with respect to that
//! duration (the mode insertion gradient) and the second derivative (the mode
//! insertion Hessian) are cheap to evaluate along a single forward/backward
//! simulation pass, and they support a closed-form control law that descends
//! the objective even at states where first-order synthesis is singular.
//!
//! Crate layout:
//! - [`numerics`]: fixed-step RK4 integration, time grids, symmetric eigen.
//! - [`models`]: the control-affine system trait and three benchmark vehicles.
//! - [`cost`]: quadratic tracking objectives and their derivatives.
//! - [`adjoint`]: backward integration of the first/second-order costates.
//! - [`needle`]: insertion sensitivities and the first/second-order actions.
//! - [`lie`]: numeric Lie brackets and controllability span analysis.
//! - [`synth`]: the receding-horizon single-action feedback loop.
//! - [`harness`]: scenario presets, Monte Carlo runner, reports.

pub mod adjoint;
pub mod cost;
pub mod error;
pub mod harness;
pub mod lie;
pub mod models;
pub mod needle;
pub mod numerics;
pub mod synth;

pub use error::{Error, Result};
