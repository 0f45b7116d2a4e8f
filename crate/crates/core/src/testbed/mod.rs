//! Virtual testbed: integrates the finger plant under tendon servos, joint
//! locks and kinematic joint drives, and samples noisy instruments.
//!
//! The external motor and the operator's hand are both modelled as perfect
//! kinematic drives. The motor additionally reports the torque it must
//! supply, taken from inverse dynamics of the ground-truth plant.

mod log;
mod trajectory;

pub use log::{ExperimentLog, GroundTruth, LogMeta, TorqueChannel};
pub use trajectory::{monotone_hermite, Knot, TensionProfile, Trajectory, TrajectoryBuilder};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::LIMIT_TOL;
use crate::dynamics::{base_to_sensor, JointState};
use crate::error::{check_len, Error, Result};
use crate::model::FingerModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSpec {
    /// Hz.
    pub sample_rate: f64,
    /// rad.
    pub encoder_noise_sd: f64,
    /// Encoder resolution (rad); 0 disables quantization.
    pub encoder_quantization: f64,
    /// N.
    pub tendon_force_noise_sd: f64,
    /// m.
    pub excursion_noise_sd: f64,
    /// N·m.
    pub torque_noise_sd: f64,
    /// N.
    pub force3d_noise_sd: f64,
    /// Cutoff of the causal first-order filter applied to the differentiated
    /// encoder signal (Hz).
    pub velocity_cutoff_hz: f64,
    pub rng_seed: u64,
    pub record_ground_truth: bool,
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec {
            sample_rate: 1000.0,
            encoder_noise_sd: 0.0,
            encoder_quantization: 2.0 * PI / 16384.0,
            tendon_force_noise_sd: 0.02,
            excursion_noise_sd: 1e-5,
            torque_noise_sd: 5e-4,
            force3d_noise_sd: 0.02,
            velocity_cutoff_hz: 20.0,
            rng_seed: 0,
            record_ground_truth: false,
        }
    }
}

impl SensorSpec {
    /// Ideal instruments: no noise and no quantization.
    pub fn noise_free() -> Self {
        SensorSpec {
            encoder_quantization: 0.0,
            ..SensorSpec::default()
        }
        .with_noise_scale(0.0)
    }

    /// Multiplies every noise standard deviation by `k`; quantization is kept.
    pub fn with_noise_scale(mut self, k: f64) -> Self {
        self.encoder_noise_sd *= k;
        self.tendon_force_noise_sd *= k;
        self.excursion_noise_sd *= k;
        self.torque_noise_sd *= k;
        self.force3d_noise_sd *= k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_ground_truth(mut self) -> Self {
        self.record_ground_truth = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::validation("sensors.sample_rate", "must be > 0"));
        }
        let sds = [
            ("sensors.encoder_noise_sd", self.encoder_noise_sd),
            ("sensors.encoder_quantization", self.encoder_quantization),
            ("sensors.tendon_force_noise_sd", self.tendon_force_noise_sd),
            ("sensors.excursion_noise_sd", self.excursion_noise_sd),
            ("sensors.torque_noise_sd", self.torque_noise_sd),
            ("sensors.force3d_noise_sd", self.force3d_noise_sd),
        ];
        for (field, v) in sds {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(field, format!("{v} must be a finite value >= 0")));
            }
        }
        if !(self.velocity_cutoff_hz > 0.0) {
            return Err(Error::validation("sensors.velocity_cutoff_hz", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum JointCommand {
    /// Integrated from the given initial condition.
    Free { q0: f64, qdot0: f64 },
    Locked { q: f64 },
    /// External motor with torque readout, following the trajectory exactly.
    Motor { trajectory: Trajectory },
    /// Moved by the operator along the trajectory; no torque readout.
    Manual { trajectory: Trajectory },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TendonCommand {
    Slack,
    Setpoint { profile: TensionProfile },
}

impl TendonCommand {
    pub fn constant(value: f64) -> Self {
        TendonCommand::Setpoint {
            profile: TensionProfile::Constant { value },
        }
    }

    fn setpoint(&self, t: f64) -> f64 {
        match self {
            TendonCommand::Slack => 0.0,
            TendonCommand::Setpoint { profile } => profile.setpoint(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuationCommand {
    /// One entry per joint.
    pub joints: Vec<JointCommand>,
    /// One entry per active tendon, in model order.
    pub tendons: Vec<TendonCommand>,
    /// Fingertip pressed on the 3-D force sensor; requires every joint locked.
    #[serde(default)]
    pub contact: bool,
}

impl ActuationCommand {
    /// Every joint locked at `pose`, every tendon slack.
    pub fn locked(model: &FingerModel, pose: &[f64]) -> Self {
        ActuationCommand {
            joints: pose.iter().map(|&q| JointCommand::Locked { q }).collect(),
            tendons: vec![TendonCommand::Slack; model.active_tendons().len()],
            contact: false,
        }
    }

    pub fn motor_joint(&self) -> Option<usize> {
        self.joints
            .iter()
            .position(|j| matches!(j, JointCommand::Motor { .. }))
    }

    pub fn validate(&self, model: &FingerModel, duration: f64) -> Result<()> {
        check_len("joint commands", model.dof(), self.joints.len())?;
        check_len("tendon commands", model.active_tendons().len(), self.tendons.len())?;
        let motors = self
            .joints
            .iter()
            .filter(|j| matches!(j, JointCommand::Motor { .. }))
            .count();
        if motors > 1 {
            return Err(Error::Input(format!(
                "{motors} joints are driven by the external motor; at most one may be"
            )));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let [lo, hi] = model.kinematics.joint_limits[i];
            let name = &model.joint_names[i];
            let out = |q: f64| q < lo - LIMIT_TOL || q > hi + LIMIT_TOL || !q.is_finite();
            match j {
                JointCommand::Free { q0, qdot0 } => {
                    if out(*q0) || !qdot0.is_finite() {
                        return Err(Error::Input(format!(
                            "joint `{name}` initial state ({q0}, {qdot0}) is outside its limits"
                        )));
                    }
                }
                JointCommand::Locked { q } => {
                    if out(*q) {
                        return Err(Error::Input(format!(
                            "joint `{name}` locked at {q} rad, outside [{lo}, {hi}]"
                        )));
                    }
                }
                JointCommand::Motor { trajectory } | JointCommand::Manual { trajectory } => {
                    trajectory.validate(duration)?;
                    let (a, b) = trajectory.range();
                    if out(a) || out(b) {
                        return Err(Error::Input(format!(
                            "joint `{name}` trajectory spans [{a}, {b}] rad, outside [{lo}, {hi}]"
                        )));
                    }
                }
            }
        }
        for t in &self.tendons {
            if let TendonCommand::Setpoint { profile } = t {
                profile.validate()?;
            }
        }
        if self.contact && !self.joints.iter().all(|j| matches!(j, JointCommand::Locked { .. })) {
            return Err(Error::Input(
                "fingertip contact requires every joint to be locked at the contact pose".into(),
            ));
        }
        Ok(())
    }
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// RK4 steps per sensor sample.
    pub substeps: usize,
    pub servo_bandwidth_hz: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            substeps: 10,
            servo_bandwidth_hz: 20.0,
        }
    }
}

/// One step of the first-order tendon tension servo.
pub fn tension_servo_step(setpoint: f64, measured: f64, dt: f64, bandwidth: f64) -> f64 {
    let target = setpoint.max(0.0);
    let alpha = 1.0 - (-2.0 * PI * bandwidth * dt).exp();
    (measured + (target - measured) * alpha).max(0.0)
}

/// Planar contact wrench `(f_x, f_y, m_z)` holding the finger at rest at `q`
/// against gravity, elastic joint torque and the delivered tendon tensions.
/// Joint friction is taken at the middle of its static bracket (zero), tendon
/// friction acts in the given per-tendon directions.
pub fn static_contact_solve(
    model: &FingerModel,
    q: &DVector<f64>,
    tensions: &DVector<f64>,
    directions: &[i8],
    contact_jacobian: &DMatrix<f64>,
) -> Result<Vector3<f64>> {
    let m = model.dof();
    if contact_jacobian.shape() != (3, m) || m != 3 {
        return Err(Error::Contract(format!(
            "contact solve needs a square 3×3 system, got a {}×{} Jacobian",
            contact_jacobian.nrows(),
            contact_jacobian.ncols()
        )));
    }
    let delivered = model.tendon_friction.delivered(tensions, directions)?;
    let rhs = model.kinematics.gravity_torque(q)?
        - model.viscoelastic.elastic_torque(q)?
        - model.coupling.tendon_torque(q, &delivered)?
        - model.coupling.tendon_torque(q, &model.coupling.passive_tension(q)?)?;
    let jt = contact_jacobian.transpose();
    let sv = jt.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition < 1e10) {
        return Err(Error::Singular { condition });
    }
    let w = jt
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular { condition })?;
    Ok(Vector3::new(w[0], w[1], w[2]))
}

/// Causal first-order low-pass of the backward difference of a sampled signal.
#[derive(Debug, Clone)]
pub struct VelocityFilter {
    alpha: f64,
    rate: f64,
    prev: Option<f64>,
    y: f64,
}

impl VelocityFilter {
    pub fn new(cutoff_hz: f64, sample_rate: f64) -> Self {
        VelocityFilter {
            alpha: 1.0 - (-2.0 * PI * cutoff_hz / sample_rate).exp(),
            rate: sample_rate,
            prev: None,
            y: 0.0,
        }
    }

    pub fn update(&mut self, x: f64) -> f64 {
        if let Some(p) = self.prev {
            self.y += self.alpha * ((x - p) * self.rate - self.y);
        }
        self.prev = Some(x);
        self.y
    }
}

fn quantize(x: f64, step: f64) -> f64 {
    if step > 0.0 {
        (x / step).round() * step
    } else {
        x
    }
}

/// SHA-256 of the model's canonical JSON encoding.
pub fn model_hash(model: &FingerModel) -> String {
    let json = serde_json::to_vec(model).expect("model serializes");
    hex::encode(Sha256::digest(&json))
}

struct Plant<'a> {
    model: &'a FingerModel,
    cmd: &'a ActuationCommand,
    free: Vec<usize>,
}

impl Plant<'_> {
    /// Full-DOF state at time `t` with free joints taken from `(qf, qdf)`.
    fn assemble(&self, t: f64, qf: &[f64], qdf: &[f64]) -> JointState {
        let m = self.model.dof();
        let mut s = JointState::at_rest(DVector::zeros(m));
        let mut k = 0;
        for (i, j) in self.cmd.joints.iter().enumerate() {
            match j {
                JointCommand::Free { .. } => {
                    s.q[i] = qf[k];
                    s.qdot[i] = qdf[k];
                    k += 1;
                }
                JointCommand::Locked { q } => s.q[i] = *q,
                JointCommand::Motor { trajectory } | JointCommand::Manual { trajectory } => {
                    let (q, v, a) = trajectory.eval(t);
                    s.q[i] = q;
                    s.qdot[i] = v;
                    s.qddot[i] = a;
                }
            }
        }
        s
    }

    fn check_limits(&self, t: f64, s: &JointState) -> Result<()> {
        for &i in &self.free {
            let [lo, hi] = self.model.kinematics.joint_limits[i];
            let q = s.q[i];
            if q < lo - LIMIT_TOL || q > hi + LIMIT_TOL || !q.is_finite() {
                return Err(Error::SimulationFault {
                    time: t,
                    joint: self.model.joint_names[i].clone(),
                    q,
                });
            }
        }
        Ok(())
    }

    /// Joint torque from tendons (delivered plus passive) and the passive joint elements.
    fn applied_torque(&self, s: &JointState, delivered: &DVector<f64>) -> Result<DVector<f64>> {
        let c = &self.model.coupling;
        let passive = c.passive_tension(&s.q)?;
        Ok(c.tendon_torque(&s.q, &(delivered + passive))? + self.model.viscoelastic.h_torque(s)?)
    }

    /// Fills `s.qddot` for free joints; returns the applied torque.
    fn solve_free(&self, s: &mut JointState, delivered: &DVector<f64>) -> Result<DVector<f64>> {
        let tau = self.applied_torque(s, delivered)?;
        if self.free.is_empty() {
            return Ok(tau);
        }
        for &i in &self.free {
            s.qddot[i] = 0.0;
        }
        let residual = self.model.kinematics.inverse_dynamics(s, &tau)?;
        let mm = self.model.kinematics.mass_matrix(&s.q)?;
        let nf = self.free.len();
        let mff = DMatrix::from_fn(nf, nf, |a, b| mm[(self.free[a], self.free[b])]);
        let rhs = DVector::from_fn(nf, |a, _| -residual[self.free[a]]);
        let acc = mff
            .cholesky()
            .ok_or_else(|| Error::Contract("free-joint mass matrix is not positive definite".into()))?
            .solve(&rhs);
        for (a, &i) in self.free.iter().enumerate() {
            s.qddot[i] = acc[a];
        }
        Ok(tau)
    }

    fn derivative(
        &self,
        t: f64,
        qf: &[f64],
        qdf: &[f64],
        delivered: &DVector<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut s = self.assemble(t, qf, qdf);
        self.check_limits(t, &s)?;
        self.solve_free(&mut s, delivered)?;
        Ok((qdf.to_vec(), self.free.iter().map(|&i| s.qddot[i]).collect()))
    }

    fn rk4(
        &self,
        t: f64,
        h: f64,
        qf: &mut [f64],
        qdf: &mut [f64],
        delivered: &DVector<f64>,
    ) -> Result<()> {
        if self.free.is_empty() {
            return Ok(());
        }
        let axpy = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> {
            x.iter().zip(k).map(|(a, b)| a + c * b).collect()
        };
        let (k1q, k1v) = self.derivative(t, qf, qdf, delivered)?;
        let (k2q, k2v) = self.derivative(
            t + 0.5 * h,
            &axpy(qf, &k1q, 0.5 * h),
            &axpy(qdf, &k1v, 0.5 * h),
            delivered,
        )?;
        let (k3q, k3v) = self.derivative(
            t + 0.5 * h,
            &axpy(qf, &k2q, 0.5 * h),
            &axpy(qdf, &k2v, 0.5 * h),
            delivered,
        )?;
        let (k4q, k4v) = self.derivative(t + h, &axpy(qf, &k3q, h), &axpy(qdf, &k3v, h), delivered)?;
        for a in 0..qf.len() {
            qf[a] += h / 6.0 * (k1q[a] + 2.0 * k2q[a] + 2.0 * k3q[a] + k4q[a]);
            qdf[a] += h / 6.0 * (k1v[a] + 2.0 * k2v[a] + 2.0 * k3v[a] + k4v[a]);
        }
        Ok(())
    }
}

/// Velocity below which a tendon counts as not sliding (m/s).
const SLIDE_EPS: f64 = 1e-7;

struct Channels {
    time: Vec<f64>,
    q: Vec<Vec<f64>>,
    qdot: Vec<Vec<f64>>,
    force: Vec<Vec<f64>>,
    excursion: Vec<Vec<f64>>,
    torque: Vec<f64>,
    tip: [Vec<f64>; 3],
}

impl Channels {
    fn new(m: usize, n: usize, cap: usize) -> Self {
        let v = || Vec::with_capacity(cap);
        Channels {
            time: v(),
            q: (0..m).map(|_| v()).collect(),
            qdot: (0..m).map(|_| v()).collect(),
            force: (0..n).map(|_| v()).collect(),
            excursion: (0..n).map(|_| v()).collect(),
            torque: v(),
            tip: [v(), v(), v()],
        }
    }
}

pub fn simulate(
    model: &FingerModel,
    cmd: &ActuationCommand,
    sensors: &SensorSpec,
    duration: f64,
) -> Result<ExperimentLog> {
    simulate_with(model, cmd, sensors, duration, &SimOptions::default())
}

pub fn simulate_with(
    model: &FingerModel,
    cmd: &ActuationCommand,
    sensors: &SensorSpec,
    duration: f64,
    opts: &SimOptions,
) -> Result<ExperimentLog> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::validation("duration", format!("{duration} s must be > 0")));
    }
    if opts.substeps == 0 || !(opts.servo_bandwidth_hz > 0.0) {
        return Err(Error::Input("simulation needs >= 1 substep and a positive servo bandwidth".into()));
    }
    model.validate()?;
    sensors.validate()?;
    cmd.validate(model, duration)?;

    let m = model.dof();
    let n = model.tendons();
    let active = model.active_tendons();
    let free: Vec<usize> = (0..m)
        .filter(|&i| matches!(cmd.joints[i], JointCommand::Free { .. }))
        .collect();
    let plant = Plant {
        model,
        cmd,
        free: free.clone(),
    };
    let motor = cmd.motor_joint();

    let rate = sensors.sample_rate;
    let samples = (duration * rate + 1e-9).floor() as usize + 1;
    let h = 1.0 / (rate * opts.substeps as f64);

    let mut qf: Vec<f64> = Vec::new();
    let mut qdf: Vec<f64> = Vec::new();
    for j in &cmd.joints {
        if let JointCommand::Free { q0, qdot0 } = j {
            qf.push(*q0);
            qdf.push(*qdot0);
        }
    }
    // actuator-side tension per model tendon; passive tendons stay at zero here
    let mut tension = DVector::zeros(n);
    for (a, &k) in active.iter().enumerate() {
        tension[k] = cmd.tendons[a].setpoint(0.0);
    }
    let mut dirs = vec![1i8; n];

    let mut rng = ChaCha8Rng::seed_from_u64(sensors.rng_seed);
    let mut noise = |sd: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        sd * z
    };
    let mut filters = vec![VelocityFilter::new(sensors.velocity_cutoff_hz, rate); m];
    let na = active.len();
    let mut meas = Channels::new(m, na, samples);
    let mut truth = Channels::new(m, na, if sensors.record_ground_truth { samples } else { 0 });

    for i in 0..samples {
        let t = i as f64 / rate;
        let mut s = plant.assemble(t, &qf, &qdf);
        plant.check_limits(t, &s)?;
        let delivered = model.tendon_friction.delivered(&tension, &dirs)?;
        let applied = plant.solve_free(&mut s, &delivered)?;
        let l = model.coupling.excursion(&s.q)?;

        let tau_motor = match motor {
            Some(j) => Some(model.kinematics.inverse_dynamics(&s, &applied)?[j]),
            None => None,
        };
        let tip = if cmd.contact {
            let jac = model.kinematics.contact_jacobian(&s.q)?;
            let w = static_contact_solve(model, &s.q, &tension, &dirs, &jac)?;
            Some(base_to_sensor() * Vector3::new(w[0], w[1], 0.0))
        } else {
            None
        };

        meas.time.push(t);
        for j in 0..m {
            let qm = quantize(s.q[j] + noise(sensors.encoder_noise_sd), sensors.encoder_quantization);
            meas.q[j].push(qm);
            meas.qdot[j].push(filters[j].update(qm));
        }
        for (a, &k) in active.iter().enumerate() {
            meas.force[a].push(tension[k] + noise(sensors.tendon_force_noise_sd));
        }
        for (a, &k) in active.iter().enumerate() {
            meas.excursion[a].push(l[k] + noise(sensors.excursion_noise_sd));
        }
        if let Some(tau) = tau_motor {
            meas.torque.push(tau + noise(sensors.torque_noise_sd));
        }
        if let Some(f) = tip {
            for c in 0..3 {
                meas.tip[c].push(f[c] + noise(sensors.force3d_noise_sd));
            }
        }
        if sensors.record_ground_truth {
            for j in 0..m {
                truth.q[j].push(s.q[j]);
                truth.qdot[j].push(s.qdot[j]);
            }
            for (a, &k) in active.iter().enumerate() {
                truth.force[a].push(tension[k]);
                truth.excursion[a].push(l[k]);
            }
            if let Some(tau) = tau_motor {
                truth.torque.push(tau);
            }
            if let Some(f) = tip {
                for c in 0..3 {
                    truth.tip[c].push(f[c]);
                }
            }
        }

        if i + 1 == samples {
            break;
        }
        for sub in 0..opts.substeps {
            let t0 = t + sub as f64 * h;
            let delivered = model.tendon_friction.delivered(&tension, &dirs)?;
            plant.rk4(t0, h, &mut qf, &mut qdf, &delivered)?;
            let t1 = t0 + h;
            let prev = tension.clone();
            for (a, &k) in active.iter().enumerate() {
                tension[k] = tension_servo_step(cmd.tendons[a].setpoint(t1), tension[k], h, opts.servo_bandwidth_hz);
            }
            let s1 = plant.assemble(t1, &qf, &qdf);
            plant.check_limits(t1, &s1)?;
            let ldot = model.coupling.coupling_matrix(&s1.q)? * &s1.qdot;
            for k in 0..n {
                let df = tension[k] - prev[k];
                if ldot[k].abs() > SLIDE_EPS {
                    dirs[k] = ldot[k].signum() as i8;
                } else if df != 0.0 {
                    dirs[k] = df.signum() as i8;
                }
            }
        }
    }

    let external_torque_meas = motor.map(|joint| TorqueChannel {
        joint,
        values: std::mem::take(&mut meas.torque),
    });
    let ground_truth = sensors.record_ground_truth.then(|| GroundTruth {
        q: truth.q,
        qdot: truth.qdot,
        tendon_force: truth.force,
        tendon_excursion: truth.excursion,
        external_torque: motor.map(|_| truth.torque),
        fingertip_force: cmd.contact.then_some(truth.tip),
    });
    Ok(ExperimentLog {
        joint_names: model.joint_names.clone(),
        tendon_names: active.iter().map(|&k| model.coupling.routes[k].id.clone()).collect(),
        time: meas.time,
        q_meas: meas.q,
        qdot_est: meas.qdot,
        tendon_force_meas: meas.force,
        tendon_excursion_meas: meas.excursion,
        external_torque_meas,
        fingertip_force_meas: cmd.contact.then_some(meas.tip),
        ground_truth,
        meta: Some(LogMeta {
            command: cmd.clone(),
            sensors: sensors.clone(),
            duration,
            seed: sensors.rng_seed,
            spec_sha256: model_hash(model),
        }),
    })
}

/// Drives `joint` along `trajectory` with the external motor while the
/// remaining joints are locked at `hold_pose` and every tendon is slack.
pub fn drive_joint(
    model: &FingerModel,
    joint: usize,
    trajectory: &Trajectory,
    hold_pose: &[f64],
    sensors: &SensorSpec,
    duration: f64,
) -> Result<ExperimentLog> {
    check_len("hold pose", model.dof(), hold_pose.len())?;
    if joint >= model.dof() {
        return Err(Error::Input(format!("joint index {joint} does not exist")));
    }
    let mut cmd = ActuationCommand::locked(model, hold_pose);
    cmd.joints[joint] = JointCommand::Motor {
        trajectory: trajectory.clone(),
    };
    simulate(model, &cmd, sensors, duration)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn servo_fixed_point_and_clamp() {
        assert_eq!(tension_servo_step(3.0, 3.0, 1e-3, 20.0), 3.0);
        assert_eq!(tension_servo_step(-2.0, 0.0, 1e-3, 20.0), 0.0);
    }

    #[test]
    fn servo_step_response_time_constant() {
        let bw = 20.0;
        let dt = 1e-5;
        let tau = 1.0 / (2.0 * PI * bw);
        let mut f = 0.0;
        let mut t = 0.0;
        while f < 0.632_120_558_8 {
            f = tension_servo_step(1.0, f, dt, bw);
            t += dt;
        }
        assert!((t - tau).abs() < 0.05 * tau, "63% at {t}, expected {tau}");
    }

    #[test]
    fn velocity_filter_converges_to_ramp_slope() {
        let mut f = VelocityFilter::new(20.0, 1000.0);
        let mut v = 0.0;
        for i in 0..1000 {
            v = f.update(0.5 * i as f64 / 1000.0);
        }
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn quantizer_rounds_to_grid() {
        assert_eq!(quantize(0.26, 0.1), 0.30000000000000004);
        assert_eq!(quantize(0.26, 0.0), 0.26);
    }

    #[test]
    fn two_motors_are_rejected() {
        let model = FingerModel::dexmart_default();
        let mut cmd = ActuationCommand::locked(&model, &[0.1, 0.1, 0.1]);
        cmd.joints[0] = JointCommand::Motor {
            trajectory: Trajectory::hold(0.1),
        };
        cmd.joints[1] = JointCommand::Motor {
            trajectory: Trajectory::hold(0.1),
        };
        assert!(simulate(&model, &cmd, &SensorSpec::default(), 0.1).is_err());
    }

    #[test]
    fn negative_tension_setpoint_is_a_contract_violation() {
        let model = FingerModel::dexmart_default();
        let mut cmd = ActuationCommand::locked(&model, &[0.1, 0.1, 0.1]);
        cmd.tendons[0] = TendonCommand::constant(-1.0);
        let err = simulate(&model, &cmd, &SensorSpec::default(), 0.1).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn contact_requires_locked_joints() {
        let model = FingerModel::dexmart_default();
        let mut cmd = ActuationCommand::locked(&model, &[0.1, 0.1, 0.1]);
        cmd.contact = true;
        cmd.joints[2] = JointCommand::Manual {
            trajectory: Trajectory::hold(0.1),
        };
        assert!(simulate(&model, &cmd, &SensorSpec::default(), 0.1).is_err());
    }

    #[test]
    fn sample_count_and_spacing() {
        let model = FingerModel::dexmart_default();
        let cmd = ActuationCommand::locked(&model, &[0.1, 0.2, 0.3]);
        let log = simulate(&model, &cmd, &SensorSpec::default(), 0.5).unwrap();
        assert_eq!(log.len(), 501);
        assert_eq!(log.time[500], 0.5);
        log.validate().unwrap();
    }
}
