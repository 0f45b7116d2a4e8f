//! Tendon routing: excursion map `l = f(q)`, coupling matrix `C(q) = ∂f/∂q`
//! and the tendon-to-joint torque map `Cᵀ f`.
//!
//! Routes are separable: each tendon's excursion is a sum of single-joint
//! contributions, each zero at `q_i = 0`. A positive moment arm flexes the
//! joint.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::poly::Polynomial;

/// Slack allowed when checking poses against joint limits, absorbing
/// round-off from trajectory evaluation.
pub const LIMIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcursionFn {
    /// Excursion polynomial in the joint angle (m per radⁿ); the value at
    /// `q = 0` is subtracted.
    Polynomial(Polynomial),
    /// Circular pulley of constant radius (m).
    Pulley(f64),
}

impl ExcursionFn {
    pub fn excursion(&self, q: f64) -> f64 {
        match self {
            ExcursionFn::Polynomial(p) => p.eval(q) - p.eval(0.0),
            ExcursionFn::Pulley(r) => r * q,
        }
    }

    pub fn moment_arm(&self, q: f64) -> f64 {
        match self {
            ExcursionFn::Polynomial(p) => p.derivative().eval(q),
            ExcursionFn::Pulley(r) => *r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCrossing {
    pub joint: usize,
    pub excursion: ExcursionFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TendonKind {
    Active,
    /// Elastic coupling tendon: tension `max(0, pretension + stiffness · l)`.
    Passive {
        stiffness: f64,
        pretension: f64,
        enabled: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TendonRoute {
    pub id: String,
    pub kind: TendonKind,
    pub crossings: Vec<JointCrossing>,
}

impl TendonRoute {
    pub fn is_active(&self) -> bool {
        matches!(self.kind, TendonKind::Active)
    }

    fn crossing(&self, joint: usize) -> Option<&JointCrossing> {
        self.crossings.iter().find(|c| c.joint == joint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingModel {
    pub routes: Vec<TendonRoute>,
    pub joint_limits: Vec<[f64; 2]>,
}

impl CouplingModel {
    pub fn tendons(&self) -> usize {
        self.routes.len()
    }

    pub fn joints(&self) -> usize {
        self.joint_limits.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.routes.is_empty() {
            return Err(Error::validation("tendons", "at least one tendon is required"));
        }
        for (k, route) in self.routes.iter().enumerate() {
            for (c, crossing) in route.crossings.iter().enumerate() {
                if crossing.joint >= self.joints() {
                    return Err(Error::validation(
                        format!("tendons[{k}].routing[{c}].joint"),
                        format!("joint index {} does not exist", crossing.joint),
                    ));
                }
                if route.crossings[..c].iter().any(|o| o.joint == crossing.joint) {
                    return Err(Error::validation(
                        format!("tendons[{k}].routing[{c}].joint"),
                        "joint crossed twice by the same tendon",
                    ));
                }
                if let ExcursionFn::Polynomial(p) = &crossing.excursion {
                    if p.coeffs().iter().any(|c| !c.is_finite()) {
                        return Err(Error::validation(
                            format!("tendons[{k}].routing[{c}].excursion_poly"),
                            "coefficients must be finite",
                        ));
                    }
                }
            }
            if let TendonKind::Passive { stiffness, .. } = route.kind {
                if !(stiffness >= 0.0) {
                    return Err(Error::validation(
                        format!("tendons[{k}].kind.passive.stiffness"),
                        "must be >= 0",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Every joint is crossed by at least one active tendon.
    pub fn is_actuatable(&self) -> bool {
        (0..self.joints()).all(|i| {
            self.routes
                .iter()
                .any(|r| r.is_active() && r.crossing(i).is_some())
        })
    }

    pub fn check_pose(&self, q: &DVector<f64>) -> Result<()> {
        check_len("joint positions", self.joints(), q.len())?;
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

    /// Total excursion of every tendon relative to the reference pose `q = 0`.
    pub fn excursion(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_pose(q)?;
        Ok(DVector::from_iterator(
            self.tendons(),
            self.routes.iter().map(|r| {
                r.crossings
                    .iter()
                    .map(|c| c.excursion.excursion(q[c.joint]))
                    .sum::<f64>()
            }),
        ))
    }

    /// `C(q)`, n tendons × m joints.
    pub fn coupling_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_pose(q)?;
        let mut c = DMatrix::zeros(self.tendons(), self.joints());
        for (k, r) in self.routes.iter().enumerate() {
            for crossing in &r.crossings {
                c[(k, crossing.joint)] = crossing.excursion.moment_arm(q[crossing.joint]);
            }
        }
        Ok(c)
    }

    /// Joint torques `Cᵀ(q) f` produced by non-negative tendon tensions.
    pub fn tendon_torque(&self, q: &DVector<f64>, tension: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("tendon tensions", self.tendons(), tension.len())?;
        if let Some(k) = tension.iter().position(|&f| f < 0.0 || f.is_nan()) {
            return Err(Error::Contract(format!(
                "tendon `{}` tension {} N is negative; tendons can only pull",
                self.routes[k].id, tension[k]
            )));
        }
        Ok(self.coupling_matrix(q)?.transpose() * tension)
    }

    /// Tension of enabled passive tendons at pose `q`; zero for active ones.
    pub fn passive_tension(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let l = self.excursion(q)?;
        Ok(DVector::from_iterator(
            self.tendons(),
            self.routes.iter().zip(l.iter()).map(|(r, &lk)| match r.kind {
                TendonKind::Passive {
                    stiffness,
                    pretension,
                    enabled: true,
                } => (pretension + stiffness * lk).max(0.0),
                _ => 0.0,
            }),
        ))
    }
}

/// Fitted moment arm of one tendon at one joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentArmCurve {
    pub joint: usize,
    pub tendon: usize,
    /// Moment-arm polynomial in the joint angle (m per radⁿ).
    pub poly_coeffs: Polynomial,
    /// Joint range the fit is valid over (rad).
    pub domain: [f64; 2],
    /// RMS residual of the underlying excursion fit (m).
    pub residual_rms: f64,
}

impl MomentArmCurve {
    pub fn eval(&self, q: f64) -> Result<f64> {
        let [lo, hi] = self.domain;
        if q < lo || q > hi || !q.is_finite() {
            return Err(Error::Domain {
                what: format!("moment arm (tendon {}, joint {}) argument", self.tendon, self.joint),
                value: q,
                lo,
                hi,
            });
        }
        Ok(self.poly_coeffs.eval(q))
    }

    /// Evaluation with the argument clamped into the domain; the flag reports
    /// whether clamping happened.
    pub fn eval_clamped(&self, q: f64) -> (f64, bool) {
        let [lo, hi] = self.domain;
        let qc = q.clamp(lo, hi);
        (self.poly_coeffs.eval(qc), qc != q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulley_model(r: f64) -> CouplingModel {
        CouplingModel {
            routes: vec![TendonRoute {
                id: "t".into(),
                kind: TendonKind::Active,
                crossings: vec![JointCrossing {
                    joint: 0,
                    excursion: ExcursionFn::Pulley(r),
                }],
            }],
            joint_limits: vec![[-1.0, 2.0]],
        }
    }

    #[test]
    fn pulley_arc_length_and_torque() {
        let cm = pulley_model(0.008);
        let q = DVector::from_vec(vec![0.6]);
        assert_eq!(cm.excursion(&q).unwrap()[0], 0.008 * 0.6);
        assert_eq!(cm.coupling_matrix(&q).unwrap()[(0, 0)], 0.008);
        let tau = cm.tendon_torque(&q, &DVector::from_vec(vec![5.0])).unwrap();
        assert_eq!(tau[0], 0.04);
    }

    #[test]
    fn reference_pose_has_zero_excursion() {
        let mut cm = pulley_model(0.008);
        cm.routes[0].crossings[0].excursion =
            ExcursionFn::Polynomial(Polynomial::new(vec![3.0, 1e-3, 2e-4]));
        assert_eq!(cm.excursion(&DVector::zeros(1)).unwrap()[0], 0.0);
    }

    #[test]
    fn out_of_limits_pose_is_a_domain_error() {
        let cm = pulley_model(0.008);
        let err = cm.excursion(&DVector::from_vec(vec![2.5])).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
        assert!(cm.coupling_matrix(&DVector::from_vec(vec![-1.5])).is_err());
    }

    #[test]
    fn negative_tension_is_rejected() {
        let cm = pulley_model(0.008);
        let err = cm
            .tendon_torque(&DVector::zeros(1), &DVector::from_vec(vec![-0.1]))
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn zero_tension_gives_zero_torque() {
        let cm = pulley_model(0.008);
        let tau = cm.tendon_torque(&DVector::from_vec(vec![0.3]), &DVector::zeros(1)).unwrap();
        assert_eq!(tau[0], 0.0);
    }

    #[test]
    fn curve_refuses_to_extrapolate() {
        let curve = MomentArmCurve {
            joint: 0,
            tendon: 0,
            poly_coeffs: Polynomial::constant(0.01),
            domain: [0.0, 1.0],
            residual_rms: 0.0,
        };
        assert_eq!(curve.eval(0.5).unwrap(), 0.01);
        assert!(curve.eval(1.0001).is_err());
        assert_eq!(curve.eval_clamped(1.2), (0.01, true));
    }

    #[test]
    fn routing_to_missing_joint_is_invalid() {
        let mut cm = pulley_model(0.008);
        cm.routes[0].crossings[0].joint = 3;
        assert!(cm.validate().unwrap_err().to_string().contains("routing[0].joint"));
    }
}
