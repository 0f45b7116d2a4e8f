//! Finger spec file: the JSON form of a [`FingerModel`].
//!
//! Every quantity carries its unit in the key. Joints and tendons are
//! referenced by name.

use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingModel, ExcursionFn, JointCrossing, TendonKind, TendonRoute};
use crate::dynamics::{FingerKinematics, LinkParams};
use crate::error::{Error, Result};
use crate::model::FingerModel;
use crate::poly::Polynomial;
use crate::tendon_friction::{TendonFriction, TendonFrictionModel};
use crate::viscoelastic::{JointViscoelasticity, ViscoelasticModel, SIGN_BAND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerSpecFile {
    pub name: String,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    pub tendons: Vec<TendonSpec>,
    /// Base frame, m/s².
    pub gravity_m_s2: [f64; 2],
    #[serde(default)]
    pub fingertip_offset_m: [f64; 2],
    #[serde(default = "default_band")]
    pub sign_band_rad_s: f64,
    #[serde(default)]
    pub assumptions: Vec<String>,
}

fn default_band() -> f64 {
    SIGN_BAND
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub length_m: f64,
    pub mass_kg: f64,
    pub com_m: [f64; 2],
    pub inertia_kgm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub name: String,
    pub limits_rad: [f64; 2],
    #[serde(default)]
    pub viscoelastic: ViscoelasticSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViscoelasticSpec {
    /// Ascending coefficients of `τ_k(q)`, N·m per radⁿ.
    pub elastic_poly_nm: Vec<f64>,
    pub damping_nms_per_rad: f64,
    /// Ascending coefficients of the static friction magnitude, N·m per radⁿ.
    pub static_friction_poly_nm: Vec<f64>,
    pub viscous_friction_nms_per_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TendonKindSpec {
    Active,
    Passive {
        stiffness_n_per_m: f64,
        pretension_n: f64,
        enabled: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TendonSpec {
    pub id: String,
    pub kind: TendonKindSpec,
    pub routing: Vec<RoutingSpec>,
    #[serde(default)]
    pub friction: FrictionSpec,
}

/// One joint crossing: either an excursion polynomial or a pulley radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingSpec {
    pub joint: String,
    /// Ascending coefficients of `l(q)`, m per radⁿ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excursion_poly_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulley_radius_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrictionSpec {
    pub slope: f64,
    pub intercept_n: f64,
}

impl FingerSpecFile {
    pub fn from_model(model: &FingerModel) -> Self {
        let k = &model.kinematics;
        FingerSpecFile {
            name: model.name.clone(),
            links: k
                .links
                .iter()
                .map(|l| LinkSpec {
                    length_m: l.length,
                    mass_kg: l.mass,
                    com_m: l.com_offset,
                    inertia_kgm2: l.inertia_zz,
                })
                .collect(),
            joints: model
                .joint_names
                .iter()
                .zip(&k.joint_limits)
                .zip(&model.viscoelastic.joints)
                .map(|((name, lim), v)| JointSpec {
                    name: name.clone(),
                    limits_rad: *lim,
                    viscoelastic: ViscoelasticSpec {
                        elastic_poly_nm: v.elastic_poly.0.clone(),
                        damping_nms_per_rad: v.damping_coeff,
                        static_friction_poly_nm: v.static_friction_poly.0.clone(),
                        viscous_friction_nms_per_rad: v.viscous_friction_coeff,
                    },
                })
                .collect(),
            tendons: model
                .coupling
                .routes
                .iter()
                .zip(&model.tendon_friction.tendons)
                .map(|(r, f)| TendonSpec {
                    id: r.id.clone(),
                    kind: match r.kind {
                        TendonKind::Active => TendonKindSpec::Active,
                        TendonKind::Passive {
                            stiffness,
                            pretension,
                            enabled,
                        } => TendonKindSpec::Passive {
                            stiffness_n_per_m: stiffness,
                            pretension_n: pretension,
                            enabled,
                        },
                    },
                    routing: r
                        .crossings
                        .iter()
                        .map(|c| {
                            let joint = model.joint_names[c.joint].clone();
                            match &c.excursion {
                                ExcursionFn::Polynomial(p) => RoutingSpec {
                                    joint,
                                    excursion_poly_m: Some(p.0.clone()),
                                    pulley_radius_m: None,
                                },
                                ExcursionFn::Pulley(r) => RoutingSpec {
                                    joint,
                                    excursion_poly_m: None,
                                    pulley_radius_m: Some(*r),
                                },
                            }
                        })
                        .collect(),
                    friction: FrictionSpec {
                        slope: f.slope,
                        intercept_n: f.intercept,
                    },
                })
                .collect(),
            gravity_m_s2: k.gravity,
            fingertip_offset_m: k.fingertip_offset,
            sign_band_rad_s: model.viscoelastic.sign_band,
            assumptions: model.assumptions.clone(),
        }
    }

    /// Builds the model and re-checks every invariant.
    pub fn to_model(&self) -> Result<FingerModel> {
        if self.links.len() != self.joints.len() {
            return Err(Error::validation(
                "joints",
                format!("{} joints for {} links", self.joints.len(), self.links.len()),
            ));
        }
        let joint_names: Vec<String> = self.joints.iter().map(|j| j.name.clone()).collect();
        for (i, n) in joint_names.iter().enumerate() {
            if joint_names[..i].contains(n) {
                return Err(Error::validation(format!("joints[{i}].name"), format!("duplicate joint `{n}`")));
            }
        }
        let limits: Vec<[f64; 2]> = self.joints.iter().map(|j| j.limits_rad).collect();
        let kinematics = FingerKinematics {
            links: self
                .links
                .iter()
                .map(|l| LinkParams {
                    length: l.length_m,
                    mass: l.mass_kg,
                    com_offset: l.com_m,
                    inertia_zz: l.inertia_kgm2,
                })
                .collect(),
            joint_limits: limits.clone(),
            gravity: self.gravity_m_s2,
            fingertip_offset: self.fingertip_offset_m,
        };
        let mut routes = Vec::new();
        for (k, t) in self.tendons.iter().enumerate() {
            if self.tendons[..k].iter().any(|o| o.id == t.id) {
                return Err(Error::validation(format!("tendons[{k}].id"), format!("duplicate tendon `{}`", t.id)));
            }
            let mut crossings = Vec::new();
            for (c, r) in t.routing.iter().enumerate() {
                let field = format!("tendons[{k}].routing[{c}]");
                let joint = joint_names.iter().position(|n| *n == r.joint).ok_or_else(|| {
                    Error::validation(format!("{field}.joint"), format!("unknown joint `{}`", r.joint))
                })?;
                let excursion = match (&r.excursion_poly_m, r.pulley_radius_m) {
                    (Some(p), None) => ExcursionFn::Polynomial(Polynomial(p.clone())),
                    (None, Some(radius)) => ExcursionFn::Pulley(radius),
                    _ => {
                        return Err(Error::validation(
                            field,
                            "exactly one of `excursion_poly_m` and `pulley_radius_m` is required",
                        ))
                    }
                };
                crossings.push(JointCrossing { joint, excursion });
            }
            routes.push(TendonRoute {
                id: t.id.clone(),
                kind: match t.kind {
                    TendonKindSpec::Active => TendonKind::Active,
                    TendonKindSpec::Passive {
                        stiffness_n_per_m,
                        pretension_n,
                        enabled,
                    } => TendonKind::Passive {
                        stiffness: stiffness_n_per_m,
                        pretension: pretension_n,
                        enabled,
                    },
                },
                crossings,
            });
        }
        let model = FingerModel {
            name: self.name.clone(),
            joint_names,
            kinematics,
            coupling: CouplingModel {
                routes,
                joint_limits: limits.clone(),
            },
            viscoelastic: ViscoelasticModel {
                joints: self
                    .joints
                    .iter()
                    .map(|j| JointViscoelasticity {
                        elastic_poly: Polynomial(j.viscoelastic.elastic_poly_nm.clone()),
                        damping_coeff: j.viscoelastic.damping_nms_per_rad,
                        static_friction_poly: Polynomial(j.viscoelastic.static_friction_poly_nm.clone()),
                        viscous_friction_coeff: j.viscoelastic.viscous_friction_nms_per_rad,
                    })
                    .collect(),
                joint_limits: limits,
                sign_band: self.sign_band_rad_s,
            },
            tendon_friction: TendonFrictionModel {
                tendons: self
                    .tendons
                    .iter()
                    .map(|t| TendonFriction {
                        slope: t.friction.slope,
                        intercept: t.friction.intercept_n,
                    })
                    .collect(),
            },
            assumptions: self.assumptions.clone(),
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_round_trips() {
        let m = FingerModel::dexmart_default();
        let file = FingerSpecFile::from_model(&m);
        assert_eq!(file.to_model().unwrap(), m);
    }

    #[test]
    fn routing_needs_exactly_one_excursion() {
        let mut file = FingerSpecFile::from_model(&FingerModel::dexmart_default());
        file.tendons[0].routing[0].pulley_radius_m = Some(0.005);
        let err = file.to_model().unwrap_err().to_string();
        assert!(err.contains("tendons[0].routing[0]"), "{err}");
    }

    #[test]
    fn unknown_joint_is_named() {
        let mut file = FingerSpecFile::from_model(&FingerModel::dexmart_default());
        file.tendons[1].routing[0].joint = "wrist".into();
        let err = file.to_model().unwrap_err().to_string();
        assert!(err.contains("tendons[1].routing[0].joint") && err.contains("wrist"), "{err}");
    }
}
