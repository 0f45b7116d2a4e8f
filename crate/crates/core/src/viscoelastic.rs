//! Passive joint torque `h(q, q̇)`: elastic torque, damping and
//! direction-dependent joint friction.
//!
//! `h` is the torque the passive elements exert on the joint. Damping and
//! friction oppose motion, so a flexing joint (`q̇ > 0`) sees `τ_k − τ_f`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::coupling::LIMIT_TOL;
use crate::dynamics::JointState;
use crate::error::{check_len, Error, Result};
use crate::poly::Polynomial;

/// Half-width of the velocity band over which `sign(q̇)` is regularized (rad/s).
pub const SIGN_BAND: f64 = 1e-3;

/// Odd C¹ saturation: a cubic inside `|x| < band`, exactly `±1` outside.
pub fn sign_smooth(x: f64, band: f64) -> f64 {
    if band <= 0.0 {
        return if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    let u = x / band;
    if u >= 1.0 {
        1.0
    } else if u <= -1.0 {
        -1.0
    } else {
        0.5 * u * (3.0 - u * u)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointViscoelasticity {
    /// `τ_k(q)` (N·m).
    pub elastic_poly: Polynomial,
    /// `τ_d = −d q̇` (N·m·s/rad).
    pub damping_coeff: f64,
    /// Magnitude of the static joint friction `τ_f(q) ≥ 0` (N·m).
    pub static_friction_poly: Polynomial,
    /// Viscous joint friction (N·m·s/rad).
    pub viscous_friction_coeff: f64,
}

impl JointViscoelasticity {
    pub fn elastic(&self, q: f64) -> f64 {
        self.elastic_poly.eval(q)
    }

    /// Static friction magnitude, floored at zero.
    pub fn friction_magnitude(&self, q: f64) -> f64 {
        self.static_friction_poly.eval(q).max(0.0)
    }

    pub fn rate_coeff(&self) -> f64 {
        self.damping_coeff + self.viscous_friction_coeff
    }

    pub fn torque(&self, q: f64, qdot: f64, band: f64) -> f64 {
        self.elastic(q)
            - self.damping_coeff * qdot
            - sign_smooth(qdot, band) * self.friction_magnitude(q)
            - self.viscous_friction_coeff * qdot
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscoelasticModel {
    pub joints: Vec<JointViscoelasticity>,
    pub joint_limits: Vec<[f64; 2]>,
    #[serde(default = "default_band")]
    pub sign_band: f64,
}

fn default_band() -> f64 {
    SIGN_BAND
}

impl ViscoelasticModel {
    pub fn zero(joint_limits: Vec<[f64; 2]>) -> Self {
        ViscoelasticModel {
            joints: vec![JointViscoelasticity::default(); joint_limits.len()],
            joint_limits,
            sign_band: SIGN_BAND,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_len("viscoelastic joints", self.joint_limits.len(), self.joints.len())?;
        for (i, (j, [lo, hi])) in self.joints.iter().zip(&self.joint_limits).enumerate() {
            if !(j.damping_coeff >= 0.0) {
                return Err(Error::validation(format!("viscoelastic[{i}].damping"), "must be >= 0"));
            }
            if !(j.viscous_friction_coeff >= 0.0) {
                return Err(Error::validation(
                    format!("viscoelastic[{i}].viscous_friction"),
                    "must be >= 0",
                ));
            }
            let (_, min, _, _) = j.static_friction_poly.extrema(*lo, *hi);
            if min < 0.0 {
                return Err(Error::validation(
                    format!("viscoelastic[{i}].static_friction_poly"),
                    format!("evaluates to {min:.3e} N·m < 0 inside the joint limits"),
                ));
            }
        }
        Ok(())
    }

    fn check_pose(&self, q: &DVector<f64>) -> Result<()> {
        check_len("joint positions", self.joints.len(), q.len())?;
        for (i, (&qi, [lo, hi])) in q.iter().zip(&self.joint_limits).enumerate() {
            if qi < lo - LIMIT_TOL || qi > hi + LIMIT_TOL || !qi.is_finite() {
                return Err(Error::Domain {
                    what: format!("q[{i}]"),
                    value: qi,
                    lo: *lo,
                    hi: *hi,
                });
            }
        }
        Ok(())
    }

    pub fn h_torque(&self, state: &JointState) -> Result<DVector<f64>> {
        self.check_pose(&state.q)?;
        check_len("joint velocities", self.joints.len(), state.qdot.len())?;
        Ok(DVector::from_iterator(
            self.joints.len(),
            self.joints
                .iter()
                .enumerate()
                .map(|(i, j)| j.torque(state.q[i], state.qdot[i], self.sign_band)),
        ))
    }

    /// `(h_flexion, h_extension) = τ_k ∓ τ_f`: the two branches a slowly
    /// moving joint sees in each direction.
    pub fn static_h_bounds(&self, q: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_pose(q)?;
        let m = self.joints.len();
        let flex = DVector::from_fn(m, |i, _| {
            self.joints[i].elastic(q[i]) - self.joints[i].friction_magnitude(q[i])
        });
        let ext = DVector::from_fn(m, |i, _| {
            self.joints[i].elastic(q[i]) + self.joints[i].friction_magnitude(q[i])
        });
        Ok((flex, ext))
    }

    /// Elastic torque only: the bracket midpoint used for a joint at rest.
    pub fn elastic_torque(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_pose(q)?;
        Ok(DVector::from_fn(self.joints.len(), |i, _| self.joints[i].elastic(q[i])))
    }
}
