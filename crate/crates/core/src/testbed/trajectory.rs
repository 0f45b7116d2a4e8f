//! Joint trajectories and tendon tension setpoint profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    /// Time (s).
    pub t: f64,
    /// Position (rad).
    pub q: f64,
    /// Velocity (rad/s).
    pub v: f64,
}

/// Joint-angle trajectory. `Hermite` is piecewise cubic and C¹ by
/// construction; `Waypoints` is piecewise linear and only accepted when it
/// has no corners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Hold { q: f64 },
    Hermite { knots: Vec<Knot> },
    Waypoints { points: Vec<[f64; 2]> },
}

impl Trajectory {
    pub fn hold(q: f64) -> Self {
        Trajectory::Hold { q }
    }

    /// Checks the trajectory is C¹, time-ordered and defined over `[0, duration]`.
    pub fn validate(&self, duration: f64) -> Result<()> {
        match self {
            Trajectory::Hold { q } => {
                if !q.is_finite() {
                    return Err(Error::Input("hold position must be finite".into()));
                }
            }
            Trajectory::Hermite { knots } => {
                if knots.len() < 2 {
                    return Err(Error::Input("a Hermite trajectory needs at least two knots".into()));
                }
                if knots.iter().any(|k| !(k.t.is_finite() && k.q.is_finite() && k.v.is_finite())) {
                    return Err(Error::Input("trajectory knots must be finite".into()));
                }
                if knots.windows(2).any(|w| w[1].t <= w[0].t) {
                    return Err(Error::Input("trajectory knot times must be strictly increasing".into()));
                }
                covers(knots[0].t, knots[knots.len() - 1].t, duration)?;
            }
            Trajectory::Waypoints { points } => {
                if points.len() < 2 {
                    return Err(Error::Input("a waypoint trajectory needs at least two points".into()));
                }
                if points.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::Input("waypoint times must be strictly increasing".into()));
                }
                for w in points.windows(3) {
                    let s0 = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
                    let s1 = (w[2][1] - w[1][1]) / (w[2][0] - w[1][0]);
                    if (s1 - s0).abs() > 1e-9 * (1.0 + s0.abs().max(s1.abs())) {
                        return Err(Error::Input(format!(
                            "trajectory is not differentiable at t = {} s (slope {s0} -> {s1} rad/s)",
                            w[1][0]
                        )));
                    }
                }
                covers(points[0][0], points[points.len() - 1][0], duration)?;
            }
        }
        Ok(())
    }

    /// `(q, q̇, q̈)` at time `t`, clamped to the defined time span.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match self {
            Trajectory::Hold { q } => (*q, 0.0, 0.0),
            Trajectory::Hermite { knots } => {
                let last = knots.len() - 1;
                if t <= knots[0].t {
                    return (knots[0].q, knots[0].v, 0.0);
                }
                if t >= knots[last].t {
                    return (knots[last].q, knots[last].v, 0.0);
                }
                let i = knots.partition_point(|k| k.t <= t) - 1;
                hermite(&knots[i], &knots[i + 1], t)
            }
            Trajectory::Waypoints { points } => {
                let last = points.len() - 1;
                let slope = |i: usize| {
                    (points[i + 1][1] - points[i][1]) / (points[i + 1][0] - points[i][0])
                };
                if t <= points[0][0] {
                    return (points[0][1], slope(0), 0.0);
                }
                if t >= points[last][0] {
                    return (points[last][1], slope(last - 1), 0.0);
                }
                let i = points.partition_point(|p| p[0] <= t) - 1;
                let s = slope(i);
                (points[i][1] + s * (t - points[i][0]), s, 0.0)
            }
        }
    }

    pub fn end_time(&self) -> f64 {
        match self {
            Trajectory::Hold { .. } => 0.0,
            Trajectory::Hermite { knots } => knots.last().map_or(0.0, |k| k.t),
            Trajectory::Waypoints { points } => points.last().map_or(0.0, |p| p[0]),
        }
    }

    /// Position extremes over the whole trajectory, from dense sampling.
    pub fn range(&self) -> (f64, f64) {
        let t1 = self.end_time();
        let n = ((t1 * 2000.0) as usize).max(1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=n {
            let q = self.eval(t1 * i as f64 / n as f64).0;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        (lo, hi)
    }
}

fn covers(t0: f64, t1: f64, duration: f64) -> Result<()> {
    if t0 > 0.0 || t1 < duration - 1e-9 {
        return Err(Error::Input(format!(
            "trajectory spans [{t0}, {t1}] s but the experiment lasts [0, {duration}] s"
        )));
    }
    Ok(())
}

fn hermite(a: &Knot, b: &Knot, t: f64) -> (f64, f64, f64) {
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let q = h00 * a.q + h10 * h * a.v + h01 * b.q + h11 * h * b.v;
    let d00 = 6.0 * s2 - 6.0 * s;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = -d00;
    let d11 = 3.0 * s2 - 2.0 * s;
    let v = (d00 * a.q + d01 * b.q) / h + d10 * a.v + d11 * b.v;
    let e00 = 12.0 * s - 6.0;
    let e10 = 6.0 * s - 4.0;
    let e11 = 6.0 * s - 2.0;
    let acc = (e00 * (a.q - b.q) / h + e10 * a.v + e11 * b.v) / h;
    (q, v, acc)
}

/// Incremental builder for stop-and-go joint trajectories made of
/// constant-acceleration ramps, cruises and holds.
#[derive(Debug, Clone)]
pub struct TrajectoryBuilder {
    knots: Vec<Knot>,
}

impl TrajectoryBuilder {
    pub fn start(q: f64) -> Self {
        TrajectoryBuilder {
            knots: vec![Knot { t: 0.0, q, v: 0.0 }],
        }
    }

    fn last(&self) -> Knot {
        *self.knots.last().expect("builder always has a knot")
    }

    pub fn time(&self) -> f64 {
        self.last().t
    }

    pub fn position(&self) -> f64 {
        self.last().q
    }

    pub fn hold(mut self, duration: f64) -> Self {
        let k = self.last();
        if duration > 0.0 {
            self.knots.push(Knot {
                t: k.t + duration,
                q: k.q,
                v: 0.0,
            });
        }
        self
    }

    /// Rest-to-rest move at cruise `speed`, with acceleration ramps covering
    /// `ramp_angle` each. Short moves become a pure accelerate-decelerate
    /// profile at reduced peak speed.
    pub fn move_to(mut self, q: f64, speed: f64, ramp_angle: f64) -> Self {
        let k = self.last();
        let dist = q - k.q;
        if dist == 0.0 {
            return self;
        }
        let dir = dist.signum();
        let d = dist.abs();
        let ramp = ramp_angle.min(0.5 * d);
        // a ramp over `ramp` at constant acceleration reaching `v` lasts 2·ramp/v
        let v = if ramp < ramp_angle {
            speed * (ramp / ramp_angle).sqrt()
        } else {
            speed
        };
        let tr = 2.0 * ramp / v;
        let cruise = (d - 2.0 * ramp) / v;
        let mut t = k.t + tr;
        self.knots.push(Knot {
            t,
            q: k.q + dir * ramp,
            v: dir * v,
        });
        if cruise > 0.0 {
            t += cruise;
            self.knots.push(Knot {
                t,
                q: q - dir * ramp,
                v: dir * v,
            });
        }
        self.knots.push(Knot {
            t: t + tr,
            q,
            v: 0.0,
        });
        self
    }

    pub fn build(self) -> Trajectory {
        let mut knots = self.knots;
        if knots.len() == 1 {
            let k = knots[0];
            knots.push(Knot {
                t: k.t + 1e-3,
                ..k
            });
        }
        Trajectory::Hermite { knots }
    }
}

/// Interpolates through `(t, q)` waypoints with shape-preserving
/// (Fritsch–Carlson) slopes, so the curve never leaves the waypoint range;
/// velocity is zero at both ends.
pub fn monotone_hermite(points: &[[f64; 2]]) -> Trajectory {
    let n = points.len();
    let mut knots: Vec<Knot> = points.iter().map(|p| Knot { t: p[0], q: p[1], v: 0.0 }).collect();
    for i in 1..n.saturating_sub(1) {
        let d0 = (points[i][1] - points[i - 1][1]) / (points[i][0] - points[i - 1][0]);
        let d1 = (points[i + 1][1] - points[i][1]) / (points[i + 1][0] - points[i][0]);
        knots[i].v = if d0 * d1 <= 0.0 {
            0.0
        } else {
            2.0 * d0 * d1 / (d0 + d1)
        };
    }
    Trajectory::Hermite { knots }
}

/// Tendon tension setpoint over time (N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TensionProfile {
    Constant { value: f64 },
    /// `levels[i]` from `start + i·dwell`; the first level also applies before `start`.
    Staircase { levels: Vec<f64>, dwell: f64, start: f64 },
}

impl TensionProfile {
    pub fn staircase(from: f64, to: f64, step: f64, dwell: f64) -> Self {
        let n = ((to - from) / step + 1e-9).floor() as usize + 1;
        TensionProfile::Staircase {
            levels: (0..n).map(|i| from + step * i as f64).collect(),
            dwell,
            start: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let levels: &[f64] = match self {
            TensionProfile::Constant { value } => std::slice::from_ref(value),
            TensionProfile::Staircase { levels, dwell, start } => {
                if levels.is_empty() || !(*dwell > 0.0) || !start.is_finite() {
                    return Err(Error::Input(
                        "a staircase needs at least one level and a positive dwell".into(),
                    ));
                }
                levels
            }
        };
        if let Some(f) = levels.iter().find(|f| !(**f >= 0.0) || !f.is_finite()) {
            return Err(Error::Contract(format!(
                "tension setpoint {f} N is infeasible; tendons can only pull"
            )));
        }
        Ok(())
    }

    pub fn setpoint(&self, t: f64) -> f64 {
        match self {
            TensionProfile::Constant { value } => *value,
            TensionProfile::Staircase { levels, dwell, start } => {
                if t < *start {
                    return levels[0];
                }
                let i = ((t - start) / dwell).floor() as usize;
                levels[i.min(levels.len() - 1)]
            }
        }
    }

    /// Time at which the last level has been held for one dwell.
    pub fn end_time(&self) -> f64 {
        match self {
            TensionProfile::Constant { .. } => 0.0,
            TensionProfile::Staircase { levels, dwell, start } => start + dwell * levels.len() as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_constant_acceleration_exactly() {
        let traj = TrajectoryBuilder::start(0.2).move_to(1.0, 0.5, 0.05).build();
        // first ramp: q = 0.2 + a t²/2 with a = v²/(2·ramp) = 2.5
        let (q, v, a) = traj.eval(0.1);
        assert!((q - (0.2 + 1.25 * 0.01)).abs() < 1e-14);
        assert!((v - 0.25).abs() < 1e-14);
        assert!((a - 2.5).abs() < 1e-12);
        let (q, v, _) = traj.eval(traj.end_time());
        assert_eq!((q, v), (1.0, 0.0));
        let (_, v, a) = traj.eval(0.5);
        assert!((v - 0.5).abs() < 1e-14 && a.abs() < 1e-12);
    }

    #[test]
    fn hermite_velocity_matches_finite_difference() {
        let traj = Trajectory::Hermite {
            knots: vec![
                Knot { t: 0.0, q: 0.0, v: 0.3 },
                Knot { t: 0.7, q: 0.5, v: -0.2 },
                Knot { t: 1.5, q: 0.1, v: 0.0 },
            ],
        };
        let h = 1e-6;
        for &t in &[0.1, 0.5, 0.69, 0.9, 1.4] {
            let (_, v, a) = traj.eval(t);
            let fd_v = (traj.eval(t + h).0 - traj.eval(t - h).0) / (2.0 * h);
            let fd_a = (traj.eval(t + h).1 - traj.eval(t - h).1) / (2.0 * h);
            assert!((v - fd_v).abs() < 1e-8, "v at {t}");
            assert!((a - fd_a).abs() < 1e-6, "a at {t}");
        }
    }

    #[test]
    fn cornered_waypoints_are_rejected() {
        let traj = Trajectory::Waypoints {
            points: vec![[0.0, 0.0], [1.0, 0.5], [2.0, 0.2]],
        };
        let err = traj.validate(2.0).unwrap_err();
        assert!(err.to_string().contains("not differentiable"));
        let straight = Trajectory::Waypoints {
            points: vec![[0.0, 0.0], [1.0, 0.5], [2.0, 1.0]],
        };
        straight.validate(2.0).unwrap();
    }

    #[test]
    fn trajectory_must_cover_the_experiment() {
        let traj = TrajectoryBuilder::start(0.0).hold(1.0).build();
        assert!(traj.validate(2.0).is_err());
        traj.validate(1.0).unwrap();
    }

    #[test]
    fn monotone_interpolation_stays_within_waypoints() {
        let pts = [[0.0, 0.2], [0.5, 1.0], [1.1, 0.9], [1.6, 0.1], [2.0, 0.15]];
        let traj = monotone_hermite(&pts);
        let (lo, hi) = traj.range();
        assert!(lo >= 0.1 - 1e-12 && hi <= 1.0 + 1e-12);
    }

    #[test]
    fn staircase_levels() {
        let p = TensionProfile::staircase(4.0, 15.0, 1.0, 0.5);
        assert_eq!(p.setpoint(0.0), 4.0);
        assert_eq!(p.setpoint(0.49), 4.0);
        assert_eq!(p.setpoint(0.5), 5.0);
        assert_eq!(p.setpoint(100.0), 15.0);
        assert_eq!(p.end_time(), 6.0);
    }

    #[test]
    fn negative_setpoint_is_a_contract_violation() {
        let p = TensionProfile::Constant { value: -1.0 };
        assert!(matches!(p.validate(), Err(Error::Contract(_))));
    }
}
