use nalgebra::DVector;

use super::{IdentifiedModel, Stage};
use crate::coupling::MomentArmCurve;
use crate::error::{Error, Result};
use crate::poly::fit_polynomial;
use crate::testbed::ExperimentLog;

/// A joint counts as moving when its measured range exceeds this (rad).
const MOVING: f64 = 1.0_f64 * std::f64::consts::PI / 180.0;
/// Minimum sweep coverage of the joint range.
const MIN_COVERAGE: f64 = 0.8;
/// Fitted excursion range below which a tendon is taken not to cross the joint (m).
const NOT_ROUTED: f64 = 0.05e-3;

#[derive(Debug, Clone)]
pub struct Id2Result {
    pub curves: Vec<MomentArmCurve>,
    /// `(tendon, joint)` pairs with no detectable excursion.
    pub not_routed: Vec<(usize, usize)>,
    pub residual_rms: f64,
}

/// ID.2: tendon-excursion method. Each log sweeps one joint; every tendon's
/// excursion is fitted against that joint's angle and the derivative of the
/// fit is the moment arm.
pub fn id2_fit_moment_arms(
    logs: &[ExperimentLog],
    model: &mut IdentifiedModel,
    fit_degree: usize,
) -> Result<Id2Result> {
    model.require(Stage::Id2)?;
    if logs.is_empty() {
        return Err(Error::Input("ID.2 needs at least one sweep log".into()));
    }
    let mut curves = Vec::new();
    let mut not_routed = Vec::new();
    let mut sq = 0.0;
    let mut count = 0usize;
    for log in logs {
        log.validate()?;
        let ranges: Vec<(f64, f64)> = log
            .q_meas
            .iter()
            .map(|c| {
                c.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
            })
            .collect();
        let moving: Vec<usize> = (0..ranges.len())
            .filter(|&i| ranges[i].1 - ranges[i].0 > MOVING)
            .collect();
        let joint = match moving.as_slice() {
            [j] => *j,
            [] => {
                return Err(Error::InsufficientExcitation("no joint moves in the ID.2 sweep".into()));
            }
            _ => {
                return Err(Error::ProtocolViolation(format!(
                    "{} joints move in one ID.2 sweep; only one may",
                    moving.len()
                )));
            }
        };
        let [lo, hi] = model.kinematics.joint_limits[joint];
        let (qmin, qmax) = ranges[joint];
        let coverage = (qmax.min(hi) - qmin.max(lo)) / (hi - lo);
        if coverage < MIN_COVERAGE {
            return Err(Error::InsufficientExcitation(format!(
                "sweep of joint `{}` covers {:.0}% of its range; at least {:.0}% is required",
                log.joint_names[joint],
                100.0 * coverage,
                100.0 * MIN_COVERAGE
            )));
        }
        let domain = [qmin.max(lo), qmax.min(hi)];
        let x = &log.q_meas[joint];
        for (ch, name) in log.tendon_names.iter().enumerate() {
            let tendon = model.tendon_index(name)?;
            let fit = fit_polynomial(x, &log.tendon_excursion_meas[ch], fit_degree)?;
            let (_, lmin, _, lmax) = fit.poly.extrema(domain[0], domain[1]);
            sq += fit.residual_rms.powi(2);
            count += 1;
            if lmax - lmin < NOT_ROUTED {
                not_routed.push((tendon, joint));
                continue;
            }
            curves.push(MomentArmCurve {
                joint,
                tendon,
                poly_coeffs: fit.poly.derivative(),
                domain,
                residual_rms: fit.residual_rms,
            });
        }
    }
    let residual_rms = (sq / count.max(1) as f64).sqrt();
    // a later sweep of the same joint supersedes the earlier one
    for c in &curves {
        model
            .moment_arms
            .retain(|o| !(o.joint == c.joint && o.tendon == c.tendon));
        model.not_routed.retain(|&(t, j)| !(t == c.tendon && j == c.joint));
    }
    model.moment_arms.extend(curves.iter().cloned());
    for &pair in &not_routed {
        model.moment_arms.retain(|o| (o.tendon, o.joint) != pair);
        if !model.not_routed.contains(&pair) {
            model.not_routed.push(pair);
        }
    }
    model.complete(Stage::Id2, Vec::new(), residual_rms);
    Ok(Id2Result {
        curves,
        not_routed,
        residual_rms,
    })
}

#[derive(Debug, Clone)]
pub struct Vd1Result {
    pub tendon_names: Vec<String>,
    /// `l̂ − l_m` per tendon (m).
    pub error: Vec<Vec<f64>>,
    pub estimate: Vec<Vec<f64>>,
    pub mean_abs_error: Vec<f64>,
    /// Samples at which some pose lay outside a curve's domain and was clamped.
    pub clamped_samples: usize,
    pub warnings: Vec<String>,
}

/// VD.1: integrates `C(q) q̇` along a free-motion log and compares it with
/// the measured excursions.
pub fn vd1_tendon_excursion(log: &ExperimentLog, model: &IdentifiedModel) -> Result<Vd1Result> {
    model.require(Stage::Vd1)?;
    log.validate()?;
    let m = model.dof();
    if log.joint_names.len() != m {
        return Err(Error::Input("log joints do not match the model".into()));
    }
    let n = log.len();
    let dt = log.sample_period();
    let tendons: Vec<usize> = log
        .tendon_names
        .iter()
        .map(|t| model.tendon_index(t))
        .collect::<Result<_>>()?;
    let rate_at = |i: usize, clamped: &mut usize| -> Vec<f64> {
        let q = DVector::from_fn(m, |j, _| log.q_meas[j][i]);
        let qd = DVector::from_fn(m, |j, _| log.qdot_est[j][i]);
        let (c, cl) = model.coupling_matrix(&q);
        *clamped += (cl > 0) as usize;
        let ld = c * qd;
        tendons.iter().map(|&k| ld[k]).collect()
    };
    let mut clamped = 0;
    let mut estimate: Vec<Vec<f64>> = log
        .tendon_excursion_meas
        .iter()
        .map(|c| {
            let mut v = Vec::with_capacity(n);
            v.push(c[0]);
            v
        })
        .collect();
    let mut prev = rate_at(0, &mut clamped);
    for i in 1..n {
        let cur = rate_at(i, &mut clamped);
        for (a, est) in estimate.iter_mut().enumerate() {
            let last = est[i - 1];
            est.push(last + 0.5 * dt * (prev[a] + cur[a]));
        }
        prev = cur;
    }
    let error: Vec<Vec<f64>> = estimate
        .iter()
        .zip(&log.tendon_excursion_meas)
        .map(|(e, l)| e.iter().zip(l).map(|(a, b)| a - b).collect())
        .collect();
    let mean_abs_error = error
        .iter()
        .map(|e| e.iter().map(|x| x.abs()).sum::<f64>() / n as f64)
        .collect();
    let mut warnings = Vec::new();
    if clamped > 0 {
        warnings.push(format!(
            "pose left the fitted moment-arm domain at {clamped} samples; arguments were clamped"
        ));
    }
    Ok(Vd1Result {
        tendon_names: log.tendon_names.clone(),
        error,
        estimate,
        mean_abs_error,
        clamped_samples: clamped,
        warnings,
    })
}
