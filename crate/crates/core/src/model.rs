//! The complete ground-truth plant and the default three-joint finger.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingModel, ExcursionFn, JointCrossing, TendonKind, TendonRoute};
use crate::dynamics::{FingerKinematics, LinkParams};
use crate::error::{check_len, Error, Result};
use crate::poly::Polynomial;
use crate::tendon_friction::{TendonFriction, TendonFrictionModel};
use crate::viscoelastic::{JointViscoelasticity, ViscoelasticModel, SIGN_BAND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerModel {
    pub name: String,
    pub joint_names: Vec<String>,
    pub kinematics: FingerKinematics,
    pub coupling: CouplingModel,
    pub viscoelastic: ViscoelasticModel,
    pub tendon_friction: TendonFrictionModel,
    /// Free-text notes on parameter provenance.
    pub assumptions: Vec<String>,
}

impl FingerModel {
    pub fn dof(&self) -> usize {
        self.kinematics.dof()
    }

    pub fn tendons(&self) -> usize {
        self.coupling.tendons()
    }

    pub fn tendon_names(&self) -> Vec<String> {
        self.coupling.routes.iter().map(|r| r.id.clone()).collect()
    }

    pub fn active_tendons(&self) -> Vec<usize> {
        (0..self.tendons())
            .filter(|&k| self.coupling.routes[k].is_active())
            .collect()
    }

    pub fn joint_index(&self, name: &str) -> Result<usize> {
        self.joint_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Input(format!("unknown joint `{name}`")))
    }

    pub fn tendon_index(&self, name: &str) -> Result<usize> {
        self.coupling
            .routes
            .iter()
            .position(|r| r.id == name)
            .ok_or_else(|| Error::Input(format!("unknown tendon `{name}`")))
    }

    /// Re-checks every module-level invariant.
    pub fn validate(&self) -> Result<()> {
        self.kinematics.validate()?;
        check_len("joint names", self.dof(), self.joint_names.len())?;
        if self.coupling.joint_limits != self.kinematics.joint_limits
            || self.viscoelastic.joint_limits != self.kinematics.joint_limits
        {
            return Err(Error::validation(
                "joints",
                "coupling and viscoelastic limits must match the kinematic limits",
            ));
        }
        self.coupling.validate()?;
        self.viscoelastic.validate()?;
        self.tendon_friction.validate()?;
        check_len("tendon friction entries", self.tendons(), self.tendon_friction.tendons.len())?;
        Ok(())
    }

    /// Three-joint index finger patterned on the Dexmart tendon layout.
    pub fn dexmart_default() -> FingerModel {
        let limits = vec![
            [0.0, FRAC_PI_2],
            [0.0, 100f64.to_radians()],
            [0.0, 80f64.to_radians()],
        ];
        let kinematics = FingerKinematics {
            links: vec![
                LinkParams::uniform_rod(0.045, 0.014),
                LinkParams::uniform_rod(0.030, 0.009),
                LinkParams::uniform_rod(0.025, 0.006),
            ],
            joint_limits: limits.clone(),
            gravity: [
                9.81 * 15f64.to_radians().sin(),
                -9.81 * 15f64.to_radians().cos(),
            ],
            fingertip_offset: [0.0, 0.0],
        };

        let (mcp, pip, dip) = (limits[0][1], limits[1][1], limits[2][1]);
        let poly = |lo_mm: f64, hi_mm: f64, phi: &[f64], qmax: f64| {
            ExcursionFn::Polynomial(moment_arm_shape(lo_mm, hi_mm, phi, qmax).antiderivative())
        };
        let cross = |joint, excursion| JointCrossing { joint, excursion };
        // Shapes are normalized profiles φ(s), s = q / q_max, with min 0 and max 1.
        let routes = vec![
            TendonRoute {
                id: "t1".into(),
                kind: TendonKind::Active,
                crossings: vec![
                    // decreasing, flexor at extension and extensor near 90°
                    cross(0, poly(3.7, -0.9, &[0.0, 1.5, -0.5], mcp)),
                    cross(1, poly(4.3, 8.8, &[0.0, 0.0, 3.0, -2.0], pip)),
                ],
            },
            TendonRoute {
                id: "t2".into(),
                kind: TendonKind::Active,
                crossings: vec![
                    cross(0, poly(-7.7, -5.9, &[0.0, 1.0], mcp)),
                    cross(1, poly(-7.7, -4.8, &[0.0, 0.0, 1.0], pip)),
                    cross(2, poly(-6.6, -5.8, &[0.0, 6.75, -13.5, 6.75], dip)),
                ],
            },
            TendonRoute {
                id: "t3".into(),
                kind: TendonKind::Active,
                crossings: vec![cross(0, poly(5.8, 10.3, &[0.0, 0.0, 1.0], mcp))],
            },
            TendonRoute {
                id: "t4".into(),
                kind: TendonKind::Active,
                crossings: vec![cross(0, poly(5.8, 10.3, &[0.0, 0.0, 1.0], mcp))],
            },
            TendonRoute {
                id: "t5".into(),
                kind: TendonKind::Passive {
                    stiffness: 2000.0,
                    pretension: 0.0,
                    enabled: false,
                },
                crossings: vec![
                    cross(1, ExcursionFn::Pulley(-0.003)),
                    cross(2, ExcursionFn::Pulley(0.004)),
                ],
            },
        ];

        // MCP rubber band: extension torque peaking at 30 N·mm at 45°, 15 N·mm at the limits.
        let a = 0.015 / (FRAC_PI_4 * FRAC_PI_4);
        let elastic = Polynomial::new(vec![-0.015, -2.0 * a * FRAC_PI_4, a]);
        // MCP joint friction: 2 N·mm at 0°, maximal 9 N·mm at 70°.
        let q70 = 70f64.to_radians();
        let b = 0.007 / (q70 * q70);
        let friction = Polynomial::new(vec![0.002, 2.0 * b * q70, -b]);
        let viscoelastic = ViscoelasticModel {
            joints: vec![
                JointViscoelasticity {
                    elastic_poly: elastic,
                    static_friction_poly: friction,
                    ..Default::default()
                },
                JointViscoelasticity {
                    static_friction_poly: Polynomial::constant(0.001),
                    ..Default::default()
                },
                JointViscoelasticity {
                    static_friction_poly: Polynomial::constant(0.0005),
                    ..Default::default()
                },
            ],
            joint_limits: limits.clone(),
            sign_band: SIGN_BAND,
        };

        let tendon_friction = TendonFrictionModel {
            tendons: vec![
                TendonFriction {
                    slope: 0.5,
                    intercept: -0.8,
                },
                TendonFriction {
                    slope: 0.3,
                    intercept: 0.2,
                },
                TendonFriction {
                    slope: 2.5 / 6.0,
                    intercept: 1.5 - 4.0 * 2.5 / 6.0,
                },
                TendonFriction {
                    slope: 2.5 / 6.0,
                    intercept: 1.5 - 4.0 * 2.5 / 6.0,
                },
                TendonFriction::default(),
            ],
        };

        FingerModel {
            name: "dexmart-like index finger".into(),
            joint_names: vec!["mcp".into(), "pip".into(), "dip".into()],
            kinematics,
            coupling: CouplingModel {
                routes,
                joint_limits: limits,
            },
            viscoelastic,
            tendon_friction,
            assumptions: vec![
                "link lengths and masses are assumed; inertias use the uniform-rod approximation".into(),
                "gravity is tilted 15 degrees in the finger plane (assumed hand orientation)".into(),
                "moment-arm profiles are cubic shapes spanning the tabulated min/max ranges; t4 mirrors t3".into(),
                "joint friction at pip/dip and all tendon-friction lines other than t3 are assumed".into(),
                "passive tendon t5 stiffness is assumed and disabled by default".into(),
            ],
        }
    }
}

/// Moment arm `lo + (hi − lo) φ(q / q_max)` in metres, from millimetre bounds.
fn moment_arm_shape(lo_mm: f64, hi_mm: f64, phi: &[f64], qmax: f64) -> Polynomial {
    let span = (hi_mm - lo_mm) * 1e-3;
    let mut c: Vec<f64> = phi
        .iter()
        .enumerate()
        .map(|(n, &p)| span * p / qmax.powi(n as i32))
        .collect();
    c[0] += lo_mm * 1e-3;
    Polynomial::new(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_valid_and_actuatable() {
        let m = FingerModel::dexmart_default();
        m.validate().unwrap();
        assert!(m.coupling.is_actuatable());
        assert_eq!(m.dof(), 3);
        assert_eq!(m.active_tendons(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn tabulated_moment_arm_ranges() {
        let m = FingerModel::dexmart_default();
        // (tendon, joint, min mm, max mm)
        let table = [
            (0, 0, -0.9, 3.7),
            (0, 1, 4.3, 8.8),
            (1, 0, -7.7, -5.9),
            (1, 1, -7.7, -4.8),
            (1, 2, -6.6, -5.8),
            (2, 0, 5.8, 10.3),
            (3, 0, 5.8, 10.3),
        ];
        for (k, i, lo, hi) in table {
            let crossing = m.coupling.routes[k]
                .crossings
                .iter()
                .find(|c| c.joint == i)
                .unwrap();
            let [qlo, qhi] = m.kinematics.joint_limits[i];
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for s in 0..=2000 {
                let q = qlo + (qhi - qlo) * s as f64 / 2000.0;
                let c = crossing.excursion.moment_arm(q) * 1e3;
                mn = mn.min(c);
                mx = mx.max(c);
            }
            assert!((mn - lo).abs() < 1e-3 && (mx - hi).abs() < 1e-3, "t{} j{i}: [{mn}, {mx}]", k + 1);
        }
    }

    #[test]
    fn t1_turns_from_flexor_to_extensor_at_mcp() {
        let m = FingerModel::dexmart_default();
        let arm = |q: f64| m.coupling.routes[0].crossings[0].excursion.moment_arm(q);
        assert!(arm(0.0) > 0.0 && arm(FRAC_PI_2) < 0.0);
    }

    #[test]
    fn t1_friction_is_lower_at_low_force_but_steeper() {
        let f = &FingerModel::dexmart_default().tendon_friction.tendons;
        assert!(f[0].magnitude(4.0) < f[2].magnitude(4.0));
        assert!(f[0].slope > f[2].slope);
    }
}
