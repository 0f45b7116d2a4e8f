//! Experiment protocols: how each stage excites the finger.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Stage;
use crate::error::{check_len, Error, Result};
use crate::model::FingerModel;
use crate::testbed::{
    monotone_hermite, simulate, ActuationCommand, ExperimentLog, JointCommand, SensorSpec,
    TendonCommand, TensionProfile, Trajectory, TrajectoryBuilder,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Staircase {
    pub from_n: f64,
    pub to_n: f64,
    pub step_n: f64,
    pub dwell_s: f64,
}

impl Staircase {
    pub fn profile(&self) -> TensionProfile {
        TensionProfile::staircase(self.from_n, self.to_n, self.step_n, self.dwell_s)
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !(self.from_n >= 0.0 && self.to_n > self.from_n && self.step_n > 0.0 && self.dwell_s > 0.0) {
            return Err(Error::validation(
                field,
                "staircase needs 0 <= from_n < to_n, step_n > 0 and dwell_s > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Id2Protocol {
    /// Cruise speed of the slow sweep (rad/s).
    pub speed_rad_s: f64,
    pub fit_degree: usize,
}

impl Default for Id2Protocol {
    fn default() -> Self {
        Id2Protocol {
            speed_rad_s: 0.1,
            fit_degree: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Vd1Protocol {
    pub duration_s: f64,
    /// Fraction of each joint's range kept clear at both ends.
    pub margin_frac: f64,
    /// Waypoint spacing is drawn uniformly from this interval (s).
    pub waypoint_interval_s: [f64; 2],
}

impl Default for Vd1Protocol {
    fn default() -> Self {
        Vd1Protocol {
            duration_s: 30.0,
            margin_frac: 0.1,
            waypoint_interval_s: [0.6, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Id3Protocol {
    /// Hold positions per joint (degrees).
    pub holds_deg: Vec<Vec<f64>>,
    /// Speed while settling through a hold (rad/s).
    pub creep_speed_rad_s: f64,
    pub creep_duration_s: f64,
    pub move_speed_rad_s: f64,
    /// Travel beyond the last hold before the direction reverses (degrees).
    pub overshoot_deg: f64,
    pub velocity_gate_rad_s: f64,
    pub sweep_speeds_rad_s: Vec<f64>,
    /// Constant-velocity sweep range per joint (degrees).
    pub sweep_range_deg: Vec<[f64; 2]>,
    /// Angle covered by each acceleration ramp (degrees).
    pub ramp_deg: f64,
    /// Include `M q̈ + N` when forming the dynamic residual.
    pub inertia_correction: bool,
}

impl Default for Id3Protocol {
    fn default() -> Self {
        let every_10 = |a: i32, b: i32| (a..=b).step_by(10).map(f64::from).collect::<Vec<_>>();
        Id3Protocol {
            holds_deg: vec![every_10(10, 70), every_10(10, 90), every_10(10, 70)],
            creep_speed_rad_s: 0.01,
            creep_duration_s: 1.0,
            move_speed_rad_s: 0.3,
            overshoot_deg: 3.0,
            velocity_gate_rad_s: 0.02,
            sweep_speeds_rad_s: vec![0.5, 1.0, 1.5],
            sweep_range_deg: vec![[10.0, 65.0], [10.0, 90.0], [10.0, 70.0]],
            ramp_deg: 4.0,
            inertia_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Id4Test {
    pub tendon: String,
    /// Joint fitted with the torque sensor: the most distal one the tendon crosses.
    pub joint: String,
    pub pose_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Id4Protocol {
    pub tests: Vec<Id4Test>,
    pub staircase: Staircase,
}

impl Default for Id4Protocol {
    fn default() -> Self {
        let test = |tendon: &str, joint: &str, pose: [f64; 3]| Id4Test {
            tendon: tendon.into(),
            joint: joint.into(),
            pose_deg: pose.to_vec(),
        };
        Id4Protocol {
            tests: vec![
                test("t1", "pip", [25.0, 60.0, 0.0]),
                test("t2", "dip", [20.0, 30.0, 20.0]),
                test("t3", "mcp", [50.0, 0.0, 0.0]),
                test("t4", "mcp", [50.0, 0.0, 0.0]),
            ],
            staircase: Staircase {
                from_n: 4.0,
                to_n: 15.0,
                step_n: 1.0,
                dwell_s: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Vd2Protocol {
    pub tendon: String,
    pub pose_deg: Vec<f64>,
    pub staircase: Staircase,
}

impl Default for Vd2Protocol {
    fn default() -> Self {
        Vd2Protocol {
            tendon: "t2".into(),
            pose_deg: vec![10.0, 40.0, 35.0],
            staircase: Staircase {
                from_n: 4.0,
                to_n: 15.0,
                step_n: 1.0,
                dwell_s: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub seed: u64,
    /// Instruments for every stage; the seed is replaced per experiment.
    pub sensors: SensorSpec,
    /// Tension keeping idle tendons taut during ID.2 and VD.1 (N).
    pub pretension_n: f64,
    pub stages: Vec<Stage>,
    pub id2: Id2Protocol,
    pub vd1: Vd1Protocol,
    pub id3: Id3Protocol,
    pub id4: Id4Protocol,
    pub vd2: Vd2Protocol,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            seed: 42,
            sensors: SensorSpec::default(),
            pretension_n: 2.0,
            stages: Stage::ALL.to_vec(),
            id2: Id2Protocol::default(),
            vd1: Vd1Protocol::default(),
            id3: Id3Protocol::default(),
            id4: Id4Protocol::default(),
            vd2: Vd2Protocol::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self, model: &FingerModel) -> Result<()> {
        self.sensors.validate()?;
        let m = model.dof();
        for (pos, st) in self.stages.iter().enumerate() {
            if self.stages[..pos].contains(st) {
                return Err(Error::validation("stages", format!("{st} is listed twice")));
            }
            for p in st.prerequisites() {
                match self.stages.iter().position(|s| s == p) {
                    Some(i) if i < pos => {}
                    Some(_) => {
                        return Err(Error::StageOrder(format!("{st} is scheduled before {p}")));
                    }
                    None => {
                        return Err(Error::StageOrder(format!("{st} needs {p}, which is not scheduled")));
                    }
                }
            }
        }
        if !(self.pretension_n >= 0.0) {
            return Err(Error::validation("pretension_n", "must be >= 0"));
        }
        if !(self.id2.speed_rad_s > 0.0 && self.id2.speed_rad_s <= 0.1) {
            return Err(Error::validation("id2.speed_rad_s", "must lie in (0, 0.1] rad/s"));
        }
        if self.id2.fit_degree == 0 {
            return Err(Error::validation("id2.fit_degree", "must be >= 1"));
        }
        if !(self.vd1.duration_s > 0.0)
            || !(0.0..0.5).contains(&self.vd1.margin_frac)
            || !(self.vd1.waypoint_interval_s[0] > 0.0
                && self.vd1.waypoint_interval_s[1] >= self.vd1.waypoint_interval_s[0])
        {
            return Err(Error::validation("vd1", "needs a positive duration, margin in [0, 0.5) and a valid waypoint interval"));
        }
        let id3 = &self.id3;
        check_len("id3.holds_deg", m, id3.holds_deg.len())?;
        check_len("id3.sweep_range_deg", m, id3.sweep_range_deg.len())?;
        for (i, holds) in id3.holds_deg.iter().enumerate() {
            let [lo, hi] = model.kinematics.joint_limits[i];
            if holds.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::validation(format!("id3.holds_deg[{i}]"), "must be increasing"));
            }
            let top = holds.last().copied().unwrap_or(0.0) + id3.overshoot_deg;
            if holds.iter().any(|h| h.to_radians() <= lo) || top.to_radians() > hi {
                return Err(Error::validation(
                    format!("id3.holds_deg[{i}]"),
                    "holds plus overshoot must lie inside the joint limits",
                ));
            }
            let [a, b] = id3.sweep_range_deg[i];
            if !(a < b && a.to_radians() >= lo && b.to_radians() <= hi) {
                return Err(Error::validation(
                    format!("id3.sweep_range_deg[{i}]"),
                    "must be an increasing range inside the joint limits",
                ));
            }
        }
        if !(id3.creep_speed_rad_s > 0.0 && id3.creep_speed_rad_s < id3.velocity_gate_rad_s) {
            return Err(Error::validation(
                "id3.creep_speed_rad_s",
                "must be positive and below the velocity gate",
            ));
        }
        if !(id3.move_speed_rad_s > 0.0 && id3.creep_duration_s > 0.0 && id3.ramp_deg > 0.0) {
            return Err(Error::validation("id3", "speeds, durations and ramps must be positive"));
        }
        if id3.sweep_speeds_rad_s.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::validation("id3.sweep_speeds_rad_s", "must be positive"));
        }
        self.id4.staircase.validate("id4.staircase")?;
        for (t, test) in self.id4.tests.iter().enumerate() {
            model.tendon_index(&test.tendon)?;
            model.joint_index(&test.joint)?;
            check_pose(model, &test.pose_deg, &format!("id4.tests[{t}].pose_deg"))?;
        }
        self.vd2.staircase.validate("vd2.staircase")?;
        model.tendon_index(&self.vd2.tendon)?;
        check_pose(model, &self.vd2.pose_deg, "vd2.pose_deg")?;
        Ok(())
    }
}

fn check_pose(model: &FingerModel, pose_deg: &[f64], field: &str) -> Result<()> {
    check_len("protocol pose", model.dof(), pose_deg.len())?;
    for (i, q) in pose_deg.iter().enumerate() {
        let [lo, hi] = model.kinematics.joint_limits[i];
        let q = q.to_radians();
        if !(q >= lo && q <= hi) {
            return Err(Error::validation(field, format!("joint {i} angle is outside its limits")));
        }
    }
    Ok(())
}

fn radians(pose_deg: &[f64]) -> Vec<f64> {
    pose_deg.iter().map(|d| d.to_radians()).collect()
}

/// Independent, well-mixed seed for experiment `index` of `stage`.
pub fn stage_seed(seed: u64, stage: Stage, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(Stage::ALL.iter().position(|s| *s == stage).unwrap_or(0) as u64 * 1024 + index);
    rng.next_u64()
}

fn sensors_for(p: &ProtocolConfig, stage: Stage, index: u64) -> SensorSpec {
    p.sensors.clone().with_seed(stage_seed(p.seed, stage, index))
}

fn pretensioned(model: &FingerModel, p: &ProtocolConfig) -> Vec<TendonCommand> {
    vec![TendonCommand::constant(p.pretension_n); model.active_tendons().len()]
}

/// ID.2: slow full-range sweep of `joint`, other joints locked at zero, every
/// tendon pretensioned.
pub fn id2_experiment(model: &FingerModel, p: &ProtocolConfig, joint: usize) -> Result<ExperimentLog> {
    let [lo, hi] = model.kinematics.joint_limits[joint];
    let traj = TrajectoryBuilder::start(lo)
        .hold(0.2)
        .move_to(hi, p.id2.speed_rad_s, 0.01)
        .hold(0.2)
        .build();
    let mut cmd = ActuationCommand::locked(model, &vec![0.0; model.dof()]);
    cmd.joints[joint] = JointCommand::Manual {
        trajectory: traj.clone(),
    };
    cmd.tendons = pretensioned(model, p);
    simulate(model, &cmd, &sensors_for(p, Stage::Id2, joint as u64), traj.end_time())
}

/// VD.1: random operator-driven motion of every joint, tendons pretensioned.
pub fn vd1_experiment(model: &FingerModel, p: &ProtocolConfig) -> Result<ExperimentLog> {
    let v = &p.vd1;
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(p.seed, Stage::Vd1, 1000));
    let mut cmd = ActuationCommand::locked(model, &vec![0.0; model.dof()]);
    for (i, [lo, hi]) in model.kinematics.joint_limits.iter().enumerate() {
        let margin = v.margin_frac * (hi - lo);
        let (a, b) = (lo + margin, hi - margin);
        let mut pts = vec![[0.0, 0.5 * (a + b)]];
        let mut t = 0.0;
        while t < v.duration_s {
            t = (t + rng.random_range(v.waypoint_interval_s[0]..=v.waypoint_interval_s[1])).min(v.duration_s);
            pts.push([t, rng.random_range(a..=b)]);
        }
        cmd.joints[i] = JointCommand::Manual {
            trajectory: monotone_hermite(&pts),
        };
    }
    cmd.tendons = pretensioned(model, p);
    simulate(model, &cmd, &sensors_for(p, Stage::Vd1, 0), v.duration_s)
}

/// Stop-and-hold trajectory: flexion through every hold, overshoot, then
/// extension back through the holds. At each hold the joint creeps slowly
/// across the hold angle so the friction branch of the approach direction is
/// engaged.
pub fn id3_hold_trajectory(p: &Id3Protocol, holds_deg: &[f64], start: f64) -> Trajectory {
    let ramp = p.ramp_deg.to_radians().min(2f64.to_radians());
    let half = 0.5 * p.creep_speed_rad_s * p.creep_duration_s;
    let creep_ramp = 0.05 * half;
    let mut b = TrajectoryBuilder::start(start).hold(0.2);
    for h in holds_deg.iter().map(|d| d.to_radians()) {
        b = b
            .move_to(h - half, p.move_speed_rad_s, ramp)
            .move_to(h + half, p.creep_speed_rad_s, creep_ramp);
    }
    let top = holds_deg.last().copied().unwrap_or(0.0) + p.overshoot_deg;
    b = b.move_to(top.to_radians(), p.move_speed_rad_s, ramp);
    for h in holds_deg.iter().rev().map(|d| d.to_radians()) {
        b = b
            .move_to(h + half, p.move_speed_rad_s, ramp)
            .move_to(h - half, p.creep_speed_rad_s, creep_ramp);
    }
    b.move_to(start, p.move_speed_rad_s, ramp).hold(0.2).build()
}

/// ID.3 static: the external motor takes `joint` through the hold sequence;
/// other joints locked at zero, tendons slack.
pub fn id3_static_experiment(model: &FingerModel, p: &ProtocolConfig, joint: usize) -> Result<ExperimentLog> {
    let start = model.kinematics.joint_limits[joint][0];
    let traj = id3_hold_trajectory(&p.id3, &p.id3.holds_deg[joint], start);
    let mut cmd = ActuationCommand::locked(model, &vec![0.0; model.dof()]);
    cmd.joints[joint] = JointCommand::Motor {
        trajectory: traj.clone(),
    };
    simulate(model, &cmd, &sensors_for(p, Stage::Id3Static, joint as u64), traj.end_time())
}

/// ID.3 dynamic: out-and-back constant-velocity sweep of `joint` at `speed`.
pub fn id3_dynamic_experiment(
    model: &FingerModel,
    p: &ProtocolConfig,
    joint: usize,
    speed_index: usize,
) -> Result<ExperimentLog> {
    let speed = p.id3.sweep_speeds_rad_s[speed_index];
    let [a, b] = p.id3.sweep_range_deg[joint];
    let (a, b) = (a.to_radians(), b.to_radians());
    let ramp = p.id3.ramp_deg.to_radians();
    let traj = TrajectoryBuilder::start(a)
        .hold(0.2)
        .move_to(b, speed, ramp)
        .hold(0.2)
        .move_to(a, speed, ramp)
        .hold(0.2)
        .build();
    let mut cmd = ActuationCommand::locked(model, &vec![0.0; model.dof()]);
    cmd.joints[joint] = JointCommand::Motor {
        trajectory: traj.clone(),
    };
    let index = (joint * 16 + speed_index) as u64;
    simulate(model, &cmd, &sensors_for(p, Stage::Id3Dynamic, index), traj.end_time())
}

/// ID.4: tension staircase on one tendon with the finger held at the test
/// pose and the torque sensor on the test joint.
pub fn id4_experiment(model: &FingerModel, p: &ProtocolConfig, test: usize) -> Result<ExperimentLog> {
    let t = &p.id4.tests[test];
    let pose = radians(&t.pose_deg);
    let joint = model.joint_index(&t.joint)?;
    let tendon = model.tendon_index(&t.tendon)?;
    let slot = active_slot(model, tendon)?;
    let mut cmd = ActuationCommand::locked(model, &pose);
    cmd.joints[joint] = JointCommand::Motor {
        trajectory: Trajectory::hold(pose[joint]),
    };
    let profile = p.id4.staircase.profile();
    let duration = profile.end_time();
    cmd.tendons[slot] = TendonCommand::Setpoint { profile };
    simulate(model, &cmd, &sensors_for(p, Stage::Id4, test as u64), duration)
}

/// VD.2: fingertip on the force sensor at the test pose, one tendon stepped.
pub fn vd2_experiment(model: &FingerModel, p: &ProtocolConfig) -> Result<ExperimentLog> {
    let pose = radians(&p.vd2.pose_deg);
    let slot = active_slot(model, model.tendon_index(&p.vd2.tendon)?)?;
    let mut cmd = ActuationCommand::locked(model, &pose);
    cmd.contact = true;
    let profile = p.vd2.staircase.profile();
    let duration = profile.end_time();
    cmd.tendons[slot] = TendonCommand::Setpoint { profile };
    simulate(model, &cmd, &sensors_for(p, Stage::Vd2, 0), duration)
}

fn active_slot(model: &FingerModel, tendon: usize) -> Result<usize> {
    model
        .active_tendons()
        .iter()
        .position(|&k| k == tendon)
        .ok_or_else(|| Error::Input(format!("tendon `{}` is not actuated", model.coupling.routes[tendon].id)))
}
