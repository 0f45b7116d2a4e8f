//! ID.3: joint viscoelasticity from external-motor torque readings.
//!
//! The passive torque acting on the driven joint is recovered as
//! `h = M q̈ + N + G − τ_ext`; at near-zero velocity this reduces to
//! `G − τ_ext`.

use nalgebra::{DMatrix, DVector};

use super::{IdentifiedModel, Stage};
use crate::dynamics::JointState;
use crate::error::{Error, Result};
use crate::poly::{fit_polynomial, least_squares, Polynomial};
use crate::testbed::{ExperimentLog, VelocityFilter};

/// Samples closer than this in time belong to the same hold (s).
const HOLD_GAP: f64 = 0.1;
const MIN_HOLD_DURATION: f64 = 0.3;
/// Minimum travel inside a hold for its direction to be known (rad).
const MIN_HOLD_TRAVEL: f64 = 1e-3;
const MIN_HOLDS: usize = 5;
/// Fraction of the swept range discarded at each end of a dynamic sweep.
const SWEEP_TRIM: f64 = 0.2;
const MIN_SPEED_SEPARATION: f64 = 0.1;

/// One settled hold: mean angle and mean passive torque.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hold {
    pub q: f64,
    pub h: f64,
    /// +1 approached in flexion, −1 in extension.
    pub direction: i8,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct Id3StaticFit {
    pub joint: usize,
    pub holds: Vec<Hold>,
    pub flexion_branch: Polynomial,
    pub extension_branch: Polynomial,
    pub elastic: Polynomial,
    pub friction: Polynomial,
    pub domain: [f64; 2],
    pub residual_rms: f64,
}

#[derive(Debug, Clone)]
pub struct Id3StaticResult {
    pub fits: Vec<Id3StaticFit>,
}

fn motor_channel(log: &ExperimentLog) -> Result<(usize, &[f64])> {
    let tc = log
        .external_torque_meas
        .as_ref()
        .ok_or_else(|| Error::Input("log has no external-torque channel".into()))?;
    Ok((tc.joint, &tc.values))
}

fn gravity_at(model: &IdentifiedModel, log: &ExperimentLog, i: usize) -> Result<DVector<f64>> {
    let q = DVector::from_fn(model.dof(), |j, _| {
        let [lo, hi] = model.kinematics.joint_limits[j];
        log.q_meas[j][i].clamp(lo, hi)
    });
    model.kinematics.gravity_torque(&q)
}

/// Settled holds in a stop-and-hold log.
pub fn extract_holds(log: &ExperimentLog, model: &IdentifiedModel, gate: f64) -> Result<(usize, Vec<Hold>)> {
    let (joint, tau) = motor_channel(log)?;
    let qd = &log.qdot_est[joint];
    let q = &log.q_meas[joint];
    let dt = log.sample_period();
    let gated: Vec<usize> = (0..log.len()).filter(|&i| qd[i].abs() < gate).collect();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &gated {
        match clusters.last_mut() {
            Some(c) if (i - c[c.len() - 1]) as f64 * dt <= HOLD_GAP => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    let mut holds = Vec::new();
    for c in clusters {
        let (first, last) = (c[0], c[c.len() - 1]);
        let travel = q[last] - q[first];
        if ((last - first) as f64) * dt < MIN_HOLD_DURATION || travel.abs() < MIN_HOLD_TRAVEL {
            continue;
        }
        let mut hs = 0.0;
        let mut qs = 0.0;
        for &i in &c {
            hs += gravity_at(model, log, i)?[joint] - tau[i];
            qs += q[i];
        }
        holds.push(Hold {
            q: qs / c.len() as f64,
            h: hs / c.len() as f64,
            direction: travel.signum() as i8,
            samples: c.len(),
        });
    }
    Ok((joint, holds))
}

/// ID.3 static: branch torques at settled holds in both directions, each
/// branch fitted with a quadratic; their mean is the elastic torque and half
/// their gap the static friction magnitude.
pub fn id3_static(logs: &[ExperimentLog], model: &mut IdentifiedModel, gate: f64) -> Result<Id3StaticResult> {
    model.require(Stage::Id3Static)?;
    let mut fits = Vec::new();
    for log in logs {
        log.validate()?;
        let (joint, holds) = extract_holds(log, model, gate)?;
        let branch = |dir: i8| -> (Vec<f64>, Vec<f64>) {
            holds
                .iter()
                .filter(|h| h.direction == dir)
                .map(|h| (h.q, h.h))
                .unzip()
        };
        let (qf, hf) = branch(1);
        let (qe, he) = branch(-1);
        let distinct = |q: &[f64]| {
            let mut v = q.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() < 0.5f64.to_radians());
            v.len()
        };
        if distinct(&qf) < MIN_HOLDS || distinct(&qe) < MIN_HOLDS {
            return Err(Error::InsufficientExcitation(format!(
                "joint `{}`: {} flexion and {} extension holds found; {MIN_HOLDS} per direction are required",
                log.joint_names[joint],
                distinct(&qf),
                distinct(&qe)
            )));
        }
        let flex = fit_polynomial(&qf, &hf, 2)?;
        let ext = fit_polynomial(&qe, &he, 2)?;
        let elastic = flex.poly.add(&ext.poly).scaled(0.5);
        let friction = ext.poly.add(&flex.poly.scaled(-1.0)).scaled(0.5);
        let lo = flex.domain.0.max(ext.domain.0);
        let hi = flex.domain.1.min(ext.domain.1);
        let residual_rms = ((flex.residual_rms.powi(2) + ext.residual_rms.powi(2)) / 2.0).sqrt();
        fits.push(Id3StaticFit {
            joint,
            holds,
            flexion_branch: flex.poly,
            extension_branch: ext.poly,
            elastic,
            friction,
            domain: [lo, hi],
            residual_rms,
        });
    }
    for f in &fits {
        let j = &mut model.viscoelastic.joints[f.joint];
        j.elastic_poly = f.elastic.clone();
        j.static_friction_poly = f.friction.clone();
        model.viscoelastic_domain[f.joint] = f.domain;
    }
    let rms = (fits.iter().map(|f| f.residual_rms.powi(2)).sum::<f64>() / fits.len().max(1) as f64).sqrt();
    model.complete(Stage::Id3Static, Vec::new(), rms);
    Ok(Id3StaticResult { fits })
}

#[derive(Debug, Clone)]
pub struct Id3DynamicFit {
    pub joint: usize,
    /// Combined damping and viscous-friction coefficient (N·m·s/rad).
    pub rate_coeff: f64,
    pub rate_coeff_se: f64,
    /// Per-direction residual offsets left after the static fit (N·m).
    pub offsets: [f64; 2],
    pub speeds: Vec<f64>,
    pub residual_rms: f64,
    pub samples: usize,
}

/// ID.3 dynamic: residual torque after removing the rigid-body terms and the
/// static fit, regressed on direction offsets and velocity across sweeps at
/// several speeds.
pub fn id3_dynamic(
    logs: &[ExperimentLog],
    model: &mut IdentifiedModel,
    inertia_correction: bool,
) -> Result<Vec<Id3DynamicFit>> {
    model.require(Stage::Id3Dynamic)?;
    let mut by_joint: Vec<Vec<&ExperimentLog>> = vec![Vec::new(); model.dof()];
    for log in logs {
        log.validate()?;
        by_joint[motor_channel(log)?.0].push(log);
    }
    let mut fits = Vec::new();
    for (joint, logs) in by_joint.into_iter().enumerate() {
        if logs.is_empty() {
            continue;
        }
        let mut rows: Vec<[f64; 3]> = Vec::new();
        let mut rhs = Vec::new();
        let mut speeds = Vec::new();
        for log in logs {
            let (_, tau) = motor_channel(log)?;
            let q = &log.q_meas[joint];
            let qd = &log.qdot_est[joint];
            let (qlo, qhi) = q
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let (a, b) = (qlo + SWEEP_TRIM * (qhi - qlo), qhi - SWEEP_TRIM * (qhi - qlo));
            let mut filt = VelocityFilter::new(
                log.meta.as_ref().map_or(20.0, |m| m.sensors.velocity_cutoff_hz),
                1.0 / log.sample_period(),
            );
            let qdd: Vec<f64> = qd.iter().map(|&v| filt.update(v)).collect();
            let mut v_abs = Vec::new();
            let vp = model.viscoelastic.joints[joint].clone();
            for i in 0..log.len() {
                if q[i] < a || q[i] > b || qd[i].abs() < 1e-3 {
                    continue;
                }
                let pose = DVector::from_fn(model.dof(), |j, _| {
                    let [lo, hi] = model.kinematics.joint_limits[j];
                    log.q_meas[j][i].clamp(lo, hi)
                });
                let rigid = if inertia_correction {
                    let qdot = DVector::from_fn(model.dof(), |j, _| if j == joint { qd[i] } else { 0.0 });
                    let qddot = DVector::from_fn(model.dof(), |j, _| if j == joint { qdd[i] } else { 0.0 });
                    let s = JointState::new(pose, qdot).with_qddot(qddot);
                    model.kinematics.inverse_dynamics(&s, &DVector::zeros(model.dof()))?[joint]
                } else {
                    model.kinematics.gravity_torque(&pose)?[joint]
                };
                let sgn = qd[i].signum();
                let static_h = vp.elastic(q[i]) - sgn * vp.friction_magnitude(q[i]);
                rows.push([(sgn > 0.0) as u8 as f64, (sgn < 0.0) as u8 as f64, qd[i]]);
                rhs.push(rigid - tau[i] - static_h);
                v_abs.push(qd[i].abs());
            }
            if v_abs.is_empty() {
                return Err(Error::InsufficientExcitation(format!(
                    "joint `{}` sweep has no samples in its central range",
                    log.joint_names[joint]
                )));
            }
            v_abs.sort_by(f64::total_cmp);
            speeds.push(v_abs[v_abs.len() / 2]);
        }
        let mut sorted = speeds.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.len() < 3 {
            return Err(Error::InsufficientExcitation(format!(
                "joint {joint}: {} sweep speed(s); at least 3 are required",
                sorted.len()
            )));
        }
        if let Some(w) = sorted.windows(2).find(|w| w[1] - w[0] < MIN_SPEED_SEPARATION) {
            return Err(Error::Conditioning(format!(
                "sweep speeds {:.3} and {:.3} rad/s are closer than {MIN_SPEED_SEPARATION} rad/s",
                w[0], w[1]
            )));
        }
        let a = DMatrix::from_fn(rows.len(), 3, |r, c| rows[r][c]);
        let fit = least_squares(&a, &DVector::from_vec(rhs))?;
        let rate_coeff = -fit.params[2];
        let rate_coeff_se = fit.std_error(2);
        fits.push(Id3DynamicFit {
            joint,
            rate_coeff,
            rate_coeff_se,
            offsets: [fit.params[0], fit.params[1]],
            speeds,
            residual_rms: fit.residual_rms,
            samples: rows.len(),
        });
    }
    for f in &fits {
        // damping and viscous friction act identically on q̇; the sum is kept as damping
        let j = &mut model.viscoelastic.joints[f.joint];
        j.damping_coeff = f.rate_coeff.max(0.0);
        j.viscous_friction_coeff = 0.0;
    }
    let rms = (fits.iter().map(|f| f.residual_rms.powi(2)).sum::<f64>() / fits.len().max(1) as f64).sqrt();
    model.complete(Stage::Id3Dynamic, Vec::new(), rms);
    Ok(fits)
}
