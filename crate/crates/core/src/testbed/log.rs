use serde::{Deserialize, Serialize};

use super::{ActuationCommand, SensorSpec};
use crate::error::{Error, Result};

/// Torque channel of the external motor and the joint it drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueChannel {
    pub joint: usize,
    pub values: Vec<f64>,
}

/// Noise-free shadow channels, sampled at the same instants as the
/// measurements.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub q: Vec<Vec<f64>>,
    pub qdot: Vec<Vec<f64>>,
    pub tendon_force: Vec<Vec<f64>>,
    pub tendon_excursion: Vec<Vec<f64>>,
    pub external_torque: Option<Vec<f64>>,
    pub fingertip_force: Option<[Vec<f64>; 3]>,
}

/// Provenance of a simulated log; absent for logs read without a sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub command: ActuationCommand,
    pub sensors: SensorSpec,
    pub duration: f64,
    pub seed: u64,
    pub spec_sha256: String,
}

/// Sampled experiment record. Channels are stored column-wise: `q_meas[i]` is
/// the whole time series of joint `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLog {
    pub joint_names: Vec<String>,
    /// Names of the logged (active) tendons, in channel order.
    pub tendon_names: Vec<String>,
    pub time: Vec<f64>,
    pub q_meas: Vec<Vec<f64>>,
    pub qdot_est: Vec<Vec<f64>>,
    pub tendon_force_meas: Vec<Vec<f64>>,
    pub tendon_excursion_meas: Vec<Vec<f64>>,
    pub external_torque_meas: Option<TorqueChannel>,
    /// Fingertip force in the sensor frame `(x, y, z)`.
    pub fingertip_force_meas: Option<[Vec<f64>; 3]>,
    pub ground_truth: Option<GroundTruth>,
    pub meta: Option<LogMeta>,
}

impl ExperimentLog {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn sample_period(&self) -> f64 {
        if self.time.len() < 2 {
            return 0.0;
        }
        (self.time[self.time.len() - 1] - self.time[0]) / (self.time.len() - 1) as f64
    }

    pub fn tendon_channel(&self, name: &str) -> Result<usize> {
        self.tendon_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Input(format!("log has no channel for tendon `{name}`")))
    }

    pub fn joint_channel(&self, name: &str) -> Result<usize> {
        self.joint_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Input(format!("log has no channel for joint `{name}`")))
    }

    /// Channel-length and sampling checks.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let bad = |what: &str| Err(Error::Input(format!("log channel {what} has the wrong length")));
        if n < 2 {
            return Err(Error::Input("log holds fewer than two samples".into()));
        }
        if self.q_meas.len() != self.joint_names.len() || self.qdot_est.len() != self.joint_names.len() {
            return bad("set for joints");
        }
        if self.tendon_force_meas.len() != self.tendon_names.len()
            || self.tendon_excursion_meas.len() != self.tendon_names.len()
        {
            return bad("set for tendons");
        }
        let series = self
            .q_meas
            .iter()
            .chain(&self.qdot_est)
            .chain(&self.tendon_force_meas)
            .chain(&self.tendon_excursion_meas);
        if series.clone().any(|c| c.len() != n) {
            return bad("q/qdot/tendon");
        }
        if let Some(tc) = &self.external_torque_meas {
            if tc.values.len() != n || tc.joint >= self.joint_names.len() {
                return bad("tau_ext");
            }
        }
        if let Some(f) = &self.fingertip_force_meas {
            if f.iter().any(|c| c.len() != n) {
                return bad("fingertip force");
            }
        }
        if let Some(gt) = &self.ground_truth {
            let all = gt
                .q
                .iter()
                .chain(&gt.qdot)
                .chain(&gt.tendon_force)
                .chain(&gt.tendon_excursion);
            if all.clone().any(|c| c.len() != n)
                || gt.q.len() != self.joint_names.len()
                || gt.tendon_force.len() != self.tendon_names.len()
            {
                return bad("ground truth");
            }
        }
        let dt = self.sample_period();
        if !(dt > 0.0) {
            return Err(Error::Input("log time stamps are not increasing".into()));
        }
        // relative slack covers the 9-significant-digit text encoding
        let tol = 1e-6 * dt + 1e-8 * self.time[n - 1].abs();
        for (i, w) in self.time.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > tol {
                return Err(Error::Input(format!("log sampling is not uniform at row {}", i + 1)));
            }
        }
        Ok(())
    }

    /// Samples whose time lies in `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let a = self.time.partition_point(|&t| t < t0);
        let b = self.time.partition_point(|&t| t <= t1);
        a..b
    }
}
