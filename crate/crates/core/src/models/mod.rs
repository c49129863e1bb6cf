//! Control-affine system abstraction and the three benchmark vehicles.
//!
//! Dynamics take the form `x' = g(t, x) + h(t, x) * u` with a per-channel
//! saturation box on `u`. Each model supplies analytic Jacobians of `g` and of
//! every control column, plus the state Hessians of each dynamics component
//! (needed by the second-order costate equation); a finite-difference
//! validation suite in the tests keeps the analytic derivatives honest.
//!
//! Units follow the source studies per system and are recorded in the
//! state/control labels: the differential drive uses millimeters, the two 3D
//! bodies use centimeters/grams. The underwater body's control channels are
//! specified in mN and uN*m, which the model converts internally to the
//! g-cm-s unit system (1 mN = 100 g*cm/s^2, 1 uN*m = 10 g*cm^2/s^2).

mod diffdrive;
mod fish3d;
mod kinbody3d;
pub mod quat;

pub use diffdrive::DiffDrive;
pub use fish3d::Fish3d;
pub use kinbody3d::KinBody3d;
pub use quat::quaternion_rotation;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant world-frame velocity added to the position rates (fluid flow).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    pub velocity: [f64; 3],
}

impl DriftField {
    pub fn new(velocity: [f64; 3]) -> Result<Self> {
        if velocity.iter().all(|v| v.is_finite()) {
            Ok(Self { velocity })
        } else {
            Err(Error::Contract("drift velocity must be finite".into()))
        }
    }
}

/// A control-affine system `x' = g(t,x) + h(t,x) u` with analytic derivatives.
pub trait ControlAffine: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;

    /// Drift field `g(t, x)` (includes any attached [`DriftField`]).
    fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    /// Control matrix `h(t, x)`, one column per control channel.
    fn control_matrix(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64>;

    /// State Jacobian of the drift field.
    fn drift_jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64>;

    /// State Jacobian of control column `k`.
    fn control_column_jacobian(&self, k: usize, t: f64, x: &DVector<f64>) -> DMatrix<f64>;

    /// False when `h` is state-independent (skips zero work in hot paths).
    fn control_state_dependent(&self) -> bool {
        true
    }

    /// `sum_i weights[i] * D_x^2 f_i(t, x, u)` where `f_i` is the i-th
    /// component of the full dynamics.
    fn weighted_hessian_sum(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        weights: &DVector<f64>,
    ) -> DMatrix<f64>;

    /// Per-channel control bounds `[lo, hi]`.
    fn saturation(&self) -> &[(f64, f64)];

    /// Post-integration projection (identity by default).
    fn project(&self, _x: &mut DVector<f64>) {}

    /// Offset of a unit-quaternion block in the state, if any.
    fn quat_block(&self) -> Option<usize> {
        None
    }

    fn state_labels(&self) -> &'static [&'static str];
    fn control_labels(&self) -> &'static [&'static str];
    fn name(&self) -> &'static str;

    fn check_dims(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::Contract(format!(
                "{}: state has {} components, expected {}",
                self.name(),
                x.len(),
                self.state_dim()
            )));
        }
        if u.len() != self.control_dim() {
            return Err(Error::Contract(format!(
                "{}: control has {} components, expected {}",
                self.name(),
                u.len(),
                self.control_dim()
            )));
        }
        Ok(())
    }

    /// Full dynamics `g + h u` with dimension checks.
    fn dynamics(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(x, u)?;
        Ok(self.dynamics_unchecked(t, x, u))
    }

    fn dynamics_unchecked(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut dx = self.drift(t, x);
        dx.gemv(1.0, &self.control_matrix(t, x), u, 1.0);
        dx
    }

    /// State Jacobian of the full dynamics at control value `u`.
    fn dynamics_jacobian(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.drift_jacobian(t, x);
        if self.control_state_dependent() {
            for k in 0..self.control_dim() {
                if u[k] != 0.0 {
                    j += self.control_column_jacobian(k, t, x) * u[k];
                }
            }
        }
        j
    }

    /// Componentwise clamp of `u` into the saturation box.
    fn saturate(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |j, _| {
            let (lo, hi) = self.saturation()[j];
            u[j].clamp(lo, hi)
        })
    }

    /// `D_x^2 f_i`, assembled through the weighted sum (validation helper).
    fn hessian_component(&self, i: usize, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut w = DVector::zeros(self.state_dim());
        w[i] = 1.0;
        self.weighted_hessian_sum(t, x, u, &w)
    }
}

/// Benchmark system identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemName {
    DiffDrive,
    KinBody3d,
    Fish3d,
}

impl std::str::FromStr for SystemName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffdrive" => Ok(Self::DiffDrive),
            "kinbody3d" => Ok(Self::KinBody3d),
            "fish3d" => Ok(Self::Fish3d),
            other => Err(Error::Config(format!(
                "unknown system '{other}' (expected diffdrive, kinbody3d, or fish3d)"
            ))),
        }
    }
}

impl std::fmt::Display for SystemName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::DiffDrive => "diffdrive",
            Self::KinBody3d => "kinbody3d",
            Self::Fish3d => "fish3d",
        };
        f.write_str(s)
    }
}

/// Optional parameter overrides for [`make_system`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Wheel radius in mm (differential drive only).
    pub r: Option<f64>,
    /// Wheel separation in mm (differential drive only).
    pub l: Option<f64>,
    /// Effective mass diagonal in g (underwater body only).
    pub mass: Option<[f64; 3]>,
    /// Effective inertia diagonal in g*cm^2 (underwater body only).
    pub inertia: Option<[f64; 3]>,
    /// Per-channel control bounds.
    pub saturation: Option<Vec<(f64, f64)>>,
    /// World-frame drift velocity (3D systems only).
    pub drift: Option<[f64; 3]>,
}

/// Build one of the three benchmark systems with optional overrides.
pub fn make_system(name: SystemName, overrides: &Overrides) -> Result<Box<dyn ControlAffine>> {
    let check_sat = |sat: &Option<Vec<(f64, f64)>>, m: usize| -> Result<()> {
        if let Some(s) = sat {
            if s.len() != m {
                return Err(Error::Config(format!("saturation needs {m} channel bounds, got {}", s.len())));
            }
            for &(lo, hi) in s {
                if !(lo <= hi) {
                    return Err(Error::Config(format!("saturation bound [{lo}, {hi}] has lo > hi")));
                }
            }
        }
        Ok(())
    };
    match name {
        SystemName::DiffDrive => {
            if overrides.drift.is_some() {
                return Err(Error::Config("the differential drive does not take a drift field".into()));
            }
            check_sat(&overrides.saturation, 2)?;
            Ok(Box::new(DiffDrive::new(overrides)?))
        }
        SystemName::KinBody3d => {
            check_sat(&overrides.saturation, 4)?;
            Ok(Box::new(KinBody3d::new(overrides)?))
        }
        SystemName::Fish3d => {
            check_sat(&overrides.saturation, 4)?;
            Ok(Box::new(Fish3d::new(overrides)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(model: &dyn ControlAffine, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let mut x: DVector<f64> = DVector::from_fn(model.state_dim(), |_, _| rng.gen_range(-1.0..1.0));
        if let Some(off) = model.quat_block() {
            let norm = (x[off] * x[off] + x[off + 1] * x[off + 1] + x[off + 2] * x[off + 2] + x[off + 3] * x[off + 3])
                .sqrt()
                .max(0.2);
            for i in 0..4 {
                x[off + i] /= norm;
            }
        }
        x
    }

    fn random_control(model: &dyn ControlAffine, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(model.control_dim(), |j, _| {
            let (lo, hi) = model.saturation()[j];
            rng.gen_range(lo..hi.max(lo + 1e-12))
        })
    }

    /// Central finite-difference Jacobian of `f` at `x`.
    fn fd_jacobian(
        f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
        x: &DVector<f64>,
        step: f64,
    ) -> DMatrix<f64> {
        let n_out = f(x).len();
        let mut j = DMatrix::zeros(n_out, x.len());
        for c in 0..x.len() {
            let mut xp = x.clone();
            xp[c] += step;
            let mut xm = x.clone();
            xm[c] -= step;
            let col = (f(&xp) - f(&xm)) / (2.0 * step);
            j.set_column(c, &col);
        }
        j
    }

    fn assert_close_rel(a: &DMatrix<f64>, b: &DMatrix<f64>, rel: f64, what: &str) {
        let scale = a.norm().max(b.norm()).max(1.0);
        let diff = (a - b).norm();
        assert!(diff <= rel * scale, "{what}: |diff| = {diff:.3e} vs scale {scale:.3e}");
    }

    fn all_models() -> Vec<Box<dyn ControlAffine>> {
        vec![
            make_system(SystemName::DiffDrive, &Overrides::default()).unwrap(),
            make_system(SystemName::KinBody3d, &Overrides::default()).unwrap(),
            make_system(
                SystemName::Fish3d,
                &Overrides { drift: Some([0.0, 10.0, 0.0]), ..Default::default() },
            )
            .unwrap(),
            make_system(SystemName::Fish3d, &Overrides::default()).unwrap(),
        ]
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let step = 1e-5;
        for model in all_models() {
            for _ in 0..100 {
                let x = random_state(model.as_ref(), &mut rng);
                let u = random_control(model.as_ref(), &mut rng);
                let t = rng.gen_range(0.0..2.0);

                let fd_g = fd_jacobian(&|y| model.drift(t, y), &x, step);
                assert_close_rel(&model.drift_jacobian(t, &x), &fd_g, 1e-4, model.name());

                for k in 0..model.control_dim() {
                    let fd_h = fd_jacobian(
                        &|y| DVector::from(model.control_matrix(t, y).column(k)),
                        &x,
                        step,
                    );
                    assert_close_rel(
                        &model.control_column_jacobian(k, t, &x),
                        &fd_h,
                        1e-4,
                        &format!("{} h{k}", model.name()),
                    );
                }

                // Hessians of the full dynamics, component by component.
                for i in 0..model.state_dim() {
                    let fd_hess = fd_jacobian(
                        &|y| {
                            let j = model.dynamics_jacobian(t, y, &u);
                            j.row(i).transpose()
                        },
                        &x,
                        step,
                    );
                    assert_close_rel(
                        &model.hessian_component(i, t, &x, &u),
                        &fd_hess,
                        1e-4,
                        &format!("{} hess f_{i}", model.name()),
                    );
                }
            }
        }
    }

    #[test]
    fn make_system_dimensions() {
        let dd = make_system(SystemName::DiffDrive, &Overrides::default()).unwrap();
        assert_eq!((dd.state_dim(), dd.control_dim()), (3, 2));
        let kb = make_system(SystemName::KinBody3d, &Overrides::default()).unwrap();
        assert_eq!((kb.state_dim(), kb.control_dim()), (7, 4));
        assert_eq!(kb.quat_block(), Some(3));
        let fish = make_system(SystemName::Fish3d, &Overrides::default()).unwrap();
        assert_eq!((fish.state_dim(), fish.control_dim()), (13, 4));
        assert_eq!(fish.saturation()[0], (-1.0, 1.0));
        assert_eq!(fish.saturation()[1], (0.0, 1.0));
        assert_eq!(fish.saturation()[2], (-0.1, 0.1));
    }

    #[test]
    fn make_system_rejects_unknown_name() {
        assert!("hovercraft".parse::<SystemName>().is_err());
    }

    #[test]
    fn saturate_clamps_componentwise() {
        let dd = make_system(SystemName::DiffDrive, &Overrides::default()).unwrap();
        let lim = 150.0 / 36.0;
        let inside = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(dd.saturate(&inside), inside);
        let out = dd.saturate(&DVector::from_vec(vec![10.0, -10.0]));
        assert_relative_eq!(out[0], lim);
        assert_relative_eq!(out[1], -lim);

        let fish = make_system(SystemName::Fish3d, &Overrides::default()).unwrap();
        let s = fish.saturate(&DVector::from_vec(vec![0.0, -0.5, 0.0, 0.0]));
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let dd = make_system(SystemName::DiffDrive, &Overrides::default()).unwrap();
        let err = dd.dynamics(0.0, &DVector::zeros(4), &DVector::zeros(2));
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn drift_on_diffdrive_is_rejected() {
        let err = make_system(
            SystemName::DiffDrive,
            &Overrides { drift: Some([1.0, 0.0, 0.0]), ..Default::default() },
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    proptest::proptest! {
        #[test]
        fn saturate_is_idempotent_and_in_box(u0 in -20.0..20.0f64, u1 in -20.0..20.0f64, u2 in -20.0..20.0f64, u3 in -20.0..20.0f64) {
            let fish = make_system(SystemName::Fish3d, &Overrides::default()).unwrap();
            let u = DVector::from_vec(vec![u0, u1, u2, u3]);
            let s = fish.saturate(&u);
            for (j, &(lo, hi)) in fish.saturation().iter().enumerate() {
                proptest::prop_assert!(s[j] >= lo && s[j] <= hi);
            }
            proptest::prop_assert_eq!(fish.saturate(&s), s);
        }
    }
}
