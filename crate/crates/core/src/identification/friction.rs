use nalgebra::{DVector, Vector3};

use super::plateau::{detect_plateaus, mean_over, Plateau};
use super::{IdentifiedModel, Stage};
use crate::dynamics::base_to_sensor;
use crate::error::{Error, Result};
use crate::poly::fit_line;
use crate::tendon_friction::TendonFriction;
use crate::testbed::ExperimentLog;

/// Settling tolerance for tension plateaus (N per 20 ms).
const PLATEAU_TOL: f64 = 0.05;
const PLATEAU_MIN: f64 = 0.2;
/// Smallest moment arm that still makes friction observable (m).
const MIN_ARM: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Id4Fit {
    pub tendon: usize,
    pub joint: usize,
    pub moment_arm: f64,
    /// Per level: `(f_t, f_delivered, f_f)`.
    pub levels: Vec<[f64; 3]>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub residual_rms: f64,
}

/// Mean pose of a log, clamped into the joint limits.
fn mean_pose(log: &ExperimentLog, model: &IdentifiedModel) -> DVector<f64> {
    DVector::from_fn(model.dof(), |j, _| {
        let [lo, hi] = model.kinematics.joint_limits[j];
        (log.q_meas[j].iter().sum::<f64>() / log.len() as f64).clamp(lo, hi)
    })
}

/// The tendon channel carrying the staircase: largest mean measured tension.
fn loaded_channel(log: &ExperimentLog) -> Result<usize> {
    log.tendon_force_meas
        .iter()
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Input("log has no tendon channels".into()))
}

fn plateaus(log: &ExperimentLog, ch: usize) -> Result<Vec<Plateau>> {
    detect_plateaus(&log.tendon_force_meas[ch], 1.0 / log.sample_period(), PLATEAU_TOL, PLATEAU_MIN)
}

/// ID.4: per tension level, the tension delivered across the instrumented
/// joint is recovered from the torque balance of that joint alone; the
/// friction loss is regressed linearly on the actuator tension.
pub fn id4_tendon_friction(logs: &[ExperimentLog], model: &mut IdentifiedModel) -> Result<Vec<Id4Fit>> {
    model.require(Stage::Id4)?;
    let mut fits = Vec::new();
    for log in logs {
        log.validate()?;
        let tc = log
            .external_torque_meas
            .as_ref()
            .ok_or_else(|| Error::Input("ID.4 log has no external-torque channel".into()))?;
        let joint = tc.joint;
        let ch = loaded_channel(log)?;
        let tendon = model.tendon_index(&log.tendon_names[ch])?;
        let pose = mean_pose(log, model);
        let arm = model
            .curve(tendon, joint)
            .map(|c| c.eval_clamped(pose[joint]).0)
            .unwrap_or(0.0);
        if arm.abs() < MIN_ARM {
            return Err(Error::Unobservable(format!(
                "tendon `{}` has a {:.3} mm moment arm at joint `{}` in the test pose",
                log.tendon_names[ch],
                arm * 1e3,
                log.joint_names[joint]
            )));
        }
        let g = model.kinematics.gravity_torque(&pose)?[joint];
        let tk = model.viscoelastic.joints[joint].elastic(pose[joint]);
        let mut levels = Vec::new();
        for p in plateaus(log, ch)? {
            let ft = mean_over(&log.tendon_force_meas[ch], &p.samples);
            let tau = mean_over(&tc.values, &p.samples);
            let delivered = (g - tk - tau) / arm;
            levels.push([ft, delivered, ft - delivered]);
        }
        let x: Vec<f64> = levels.iter().map(|l| l[0]).collect();
        let y: Vec<f64> = levels.iter().map(|l| l[2]).collect();
        let (fit, intercept, slope) = fit_line(&x, &y)?;
        fits.push(Id4Fit {
            tendon,
            joint,
            moment_arm: arm,
            slope,
            intercept,
            slope_se: fit.std_error(1),
            intercept_se: fit.std_error(0),
            residual_rms: fit.residual_rms,
            levels,
        });
    }
    for f in &fits {
        model.tendon_friction.tendons[f.tendon] = TendonFriction {
            slope: f.slope,
            intercept: f.intercept,
        };
    }
    let rms = (fits.iter().map(|f| f.residual_rms.powi(2)).sum::<f64>() / fits.len().max(1) as f64).sqrt();
    model.complete(Stage::Id4, Vec::new(), rms);
    Ok(fits)
}

#[derive(Debug, Clone)]
pub struct Vd2Level {
    pub tension: f64,
    /// Sensor frame (N).
    pub measured: [f64; 3],
    pub estimated: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Vd2Result {
    pub tendon: String,
    pub levels: Vec<Vd2Level>,
    /// Force-vs-tension slopes per sensor axis.
    pub measured_slope: [f64; 3],
    pub estimated_slope: [f64; 3],
    pub dominant_axis: usize,
    pub relative_slope_error: f64,
}

/// VD.2: predicts the fingertip contact force from the identified model and
/// compares it against the force sensor over a tension staircase.
pub fn vd2_fingertip_force(log: &ExperimentLog, model: &IdentifiedModel) -> Result<Vd2Result> {
    model.require(Stage::Vd2)?;
    log.validate()?;
    let force = log
        .fingertip_force_meas
        .as_ref()
        .ok_or_else(|| Error::Input("VD.2 log has no fingertip force channel".into()))?;
    let ch = loaded_channel(log)?;
    let pose = mean_pose(log, model);
    let jac = model.kinematics.contact_jacobian(&pose)?;
    let jt = jac.transpose();
    let sv = jt.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition < 1e10) {
        return Err(Error::Singular { condition });
    }
    let lu = jt.lu();
    let (c, _) = model.coupling_matrix(&pose);
    let g = model.kinematics.gravity_torque(&pose)?;
    let tk = DVector::from_fn(model.dof(), |j, _| model.viscoelastic.joints[j].elastic(pose[j]));
    let tendons: Vec<usize> = log
        .tendon_names
        .iter()
        .map(|t| model.tendon_index(t))
        .collect::<Result<_>>()?;

    let mut levels = Vec::new();
    for p in plateaus(log, ch)? {
        let mut delivered = DVector::zeros(model.tendon_names.len());
        for (a, &k) in tendons.iter().enumerate() {
            let ft = mean_over(&log.tendon_force_meas[a], &p.samples).max(0.0);
            delivered[k] = model.tendon_friction.tendons[k].delivered(ft, 1);
        }
        let rhs = &g - &tk - c.transpose() * &delivered;
        let w = lu.solve(&rhs).ok_or(Error::Singular { condition })?;
        let est = base_to_sensor() * Vector3::new(w[0], w[1], 0.0);
        levels.push(Vd2Level {
            tension: mean_over(&log.tendon_force_meas[ch], &p.samples),
            measured: [0, 1, 2].map(|a| mean_over(&force[a], &p.samples)),
            estimated: [est[0], est[1], est[2]],
        });
    }
    let x: Vec<f64> = levels.iter().map(|l| l.tension).collect();
    let slope = |f: &dyn Fn(&Vd2Level) -> f64| -> Result<f64> {
        let y: Vec<f64> = levels.iter().map(f).collect();
        if y.iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        Ok(fit_line(&x, &y)?.2)
    };
    let mut measured_slope = [0.0; 3];
    let mut estimated_slope = [0.0; 3];
    for a in 0..3 {
        measured_slope[a] = slope(&|l| l.measured[a])?;
        estimated_slope[a] = slope(&|l| l.estimated[a])?;
    }
    let dominant_axis = (0..3)
        .max_by(|&a, &b| measured_slope[a].abs().total_cmp(&measured_slope[b].abs()))
        .unwrap_or(0);
    let relative_slope_error = ((estimated_slope[dominant_axis] - measured_slope[dominant_axis])
        / measured_slope[dominant_axis])
        .abs();
    Ok(Vd2Result {
        tendon: log.tendon_names[ch].clone(),
        levels,
        measured_slope,
        estimated_slope,
        dominant_axis,
        relative_slope_error,
    })
}
