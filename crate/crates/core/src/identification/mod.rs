//! Step-wise identification: moment arms (ID.2), joint viscoelasticity
//! (ID.3), tendon friction (ID.4), with excursion (VD.1) and fingertip force
//! (VD.2) validation.

mod friction;
mod moment_arms;
mod pipeline;
mod plateau;
mod protocol;
mod viscoelastic;

pub use friction::{id4_tendon_friction, vd2_fingertip_force, Id4Fit, Vd2Level, Vd2Result};
pub use moment_arms::{id2_fit_moment_arms, vd1_tendon_excursion, Id2Result, Vd1Result};
pub use pipeline::{
    id1_report, identify_stage, run_many, run_pipeline, run_pipeline_with, stage_experiments, PipelineRun,
    StageArtifacts, Table,
};
pub use plateau::{detect_plateaus, Plateau};
pub use protocol::{
    id2_experiment, id3_dynamic_experiment, id3_hold_trajectory, id3_static_experiment, id4_experiment,
    stage_seed, vd1_experiment, vd2_experiment, Id2Protocol, Id3Protocol, Id4Protocol, Id4Test, ProtocolConfig, Staircase, Vd1Protocol,
    Vd2Protocol,
};
pub use viscoelastic::{
    extract_holds, id3_dynamic, id3_static, Hold, Id3DynamicFit, Id3StaticFit, Id3StaticResult,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coupling::MomentArmCurve;
use crate::dynamics::FingerKinematics;
use crate::error::{Error, Result};
use crate::model::FingerModel;
use crate::tendon_friction::TendonFrictionModel;
use crate::viscoelastic::ViscoelasticModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Id1,
    Id2,
    Vd1,
    Id3Static,
    Id3Dynamic,
    Id4,
    Vd2,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Id1,
        Stage::Id2,
        Stage::Vd1,
        Stage::Id3Static,
        Stage::Id3Dynamic,
        Stage::Id4,
        Stage::Vd2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Id1 => "id1",
            Stage::Id2 => "id2",
            Stage::Vd1 => "vd1",
            Stage::Id3Static => "id3_static",
            Stage::Id3Dynamic => "id3_dynamic",
            Stage::Id4 => "id4",
            Stage::Vd2 => "vd2",
        }
    }

    /// Stages whose results this one consumes.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Id1 => &[],
            Stage::Id2 => &[Stage::Id1],
            Stage::Vd1 => &[Stage::Id2],
            Stage::Id3Static => &[Stage::Id1],
            Stage::Id3Dynamic => &[Stage::Id3Static],
            Stage::Id4 => &[Stage::Id2, Stage::Id3Static],
            Stage::Vd2 => &[Stage::Id2, Stage::Id3Static, Stage::Id4],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown stage `{s}`")))
    }
}

/// Per-stage provenance kept in the identified model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub logs: Vec<String>,
    pub residual_rms: f64,
}

/// The model as identified so far. Every fitted curve carries its domain and
/// residual; stage completion is recorded and prerequisites are enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedModel {
    pub joint_names: Vec<String>,
    pub tendon_names: Vec<String>,
    pub kinematics: FingerKinematics,
    pub moment_arms: Vec<MomentArmCurve>,
    /// `(tendon, joint)` pairs found not to be routed.
    pub not_routed: Vec<(usize, usize)>,
    pub viscoelastic: ViscoelasticModel,
    /// Joint range each viscoelastic fit was identified over.
    pub viscoelastic_domain: Vec<[f64; 2]>,
    pub tendon_friction: TendonFrictionModel,
    pub provenance: Vec<StageRecord>,
}

/// ID.1: kinematic and inertial parameters are taken as known.
pub fn id1_load_parameters(spec: &FingerModel) -> Result<IdentifiedModel> {
    spec.validate()?;
    let limits = spec.kinematics.joint_limits.clone();
    let mut model = IdentifiedModel {
        joint_names: spec.joint_names.clone(),
        tendon_names: spec.tendon_names(),
        kinematics: spec.kinematics.clone(),
        moment_arms: Vec::new(),
        not_routed: Vec::new(),
        viscoelastic: ViscoelasticModel::zero(limits.clone()),
        viscoelastic_domain: limits,
        tendon_friction: TendonFrictionModel::frictionless(spec.tendons()),
        provenance: Vec::new(),
    };
    model.complete(Stage::Id1, Vec::new(), 0.0);
    Ok(model)
}

impl IdentifiedModel {
    pub fn completed(&self, stage: Stage) -> bool {
        self.provenance.iter().any(|r| r.stage == stage)
    }

    pub fn require(&self, stage: Stage) -> Result<()> {
        for &p in stage.prerequisites() {
            if !self.completed(p) {
                return Err(Error::StageOrder(format!("{stage} requires {p} to have completed")));
            }
        }
        Ok(())
    }

    pub(crate) fn complete(&mut self, stage: Stage, logs: Vec<String>, residual_rms: f64) {
        self.provenance.retain(|r| r.stage != stage);
        self.provenance.push(StageRecord {
            stage,
            logs,
            residual_rms,
        });
    }

    pub fn dof(&self) -> usize {
        self.kinematics.dof()
    }

    pub fn tendon_index(&self, name: &str) -> Result<usize> {
        self.tendon_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Input(format!("identified model has no tendon `{name}`")))
    }

    pub fn curve(&self, tendon: usize, joint: usize) -> Option<&MomentArmCurve> {
        self.moment_arms
            .iter()
            .find(|c| c.tendon == tendon && c.joint == joint)
    }

    /// Estimated coupling matrix. Arguments outside a curve's domain are
    /// clamped; the second value counts how many entries needed it.
    pub fn coupling_matrix(&self, q: &DVector<f64>) -> (DMatrix<f64>, usize) {
        let mut c = DMatrix::zeros(self.tendon_names.len(), self.dof());
        let mut clamped = 0;
        for curve in &self.moment_arms {
            let (v, cl) = curve.eval_clamped(q[curve.joint]);
            c[(curve.tendon, curve.joint)] = v;
            clamped += cl as usize;
        }
        (c, clamped)
    }
}

/// One explicit pass/fail criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// One of `<`, `<=`, `==`, `>`, `>=`.
    pub comparator: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, comparator: &str, threshold: f64) -> Self {
        let pass = match comparator {
            "<" => value < threshold,
            "<=" => value <= threshold,
            "==" => value == threshold,
            ">" => value > threshold,
            ">=" => value >= threshold,
            _ => false,
        };
        Check {
            name: name.into(),
            value,
            threshold,
            comparator: comparator.to_string(),
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub stage: Stage,
    pub parameters: BTreeMap<String, f64>,
    pub residual_rms: f64,
    /// Errors against the ground-truth plant, when known.
    pub ground_truth_error: Option<BTreeMap<String, f64>>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl FitReport {
    pub fn new(stage: Stage) -> Self {
        FitReport {
            stage,
            parameters: BTreeMap::new(),
            residual_rms: 0.0,
            ground_truth_error: None,
            checks: Vec::new(),
            pass: true,
            notes: Vec::new(),
        }
    }

    pub fn param(&mut self, name: impl Into<String>, value: f64) {
        self.parameters.insert(name.into(), value);
    }

    pub fn gt_error(&mut self, name: impl Into<String>, value: f64) {
        self.ground_truth_error
            .get_or_insert_with(BTreeMap::new)
            .insert(name.into(), value);
    }

    pub fn check(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for st in Stage::ALL {
            assert_eq!(st.name().parse::<Stage>().unwrap(), st);
        }
        assert!("id9".parse::<Stage>().is_err());
    }

    #[test]
    fn prerequisites_precede_in_canonical_order() {
        for st in Stage::ALL {
            for p in st.prerequisites() {
                assert!(*p < st);
            }
        }
    }

    #[test]
    fn id4_before_id3_is_refused() {
        let mut model = id1_load_parameters(&FingerModel::dexmart_default()).unwrap();
        model.complete(Stage::Id2, vec![], 0.0);
        assert!(matches!(model.require(Stage::Id4), Err(Error::StageOrder(_))));
        model.complete(Stage::Id3Static, vec![], 0.0);
        model.require(Stage::Id4).unwrap();
    }

    #[test]
    fn check_comparators() {
        assert!(Check::new("a", 0.1, "<", 0.3).pass);
        assert!(!Check::new("a", 0.3, "<", 0.3).pass);
        assert!(Check::new("a", 0.3, "<=", 0.3).pass);
        assert!(Check::new("a", 0.0, "==", 0.0).pass);
        assert!(!Check::new("a", 1.0, "??", 0.0).pass);
    }
}
