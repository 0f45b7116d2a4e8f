//! Rigid-body dynamics of a planar serial finger.
//!
//! All joints are parallel flexion axes. Joint `j` sits at the proximal end of
//! link `j`; the absolute link angle is the cumulative sum of joint angles, so
//! at `q = 0` the finger lies along the base `+x` axis and positive angles
//! (flexion) rotate counter-clockwise. Inverse dynamics is a planar recursive
//! Newton–Euler pass; the mass matrix, bias and gravity terms are all derived
//! from it.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Joint-to-joint length (m).
    pub length: f64,
    /// Mass (kg).
    pub mass: f64,
    /// Centre of mass in the link frame (m), `x` along the link.
    pub com_offset: [f64; 2],
    /// Planar inertia about the centre of mass (kg·m²).
    pub inertia_zz: f64,
}

impl LinkParams {
    /// Uniform rod of the given length and mass.
    pub fn uniform_rod(length: f64, mass: f64) -> Self {
        LinkParams {
            length,
            mass,
            com_offset: [0.5 * length, 0.0],
            inertia_zz: mass * length * length / 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerKinematics {
    pub links: Vec<LinkParams>,
    /// `[lower, upper]` per joint (rad).
    pub joint_limits: Vec<[f64; 2]>,
    /// Gravitational acceleration in the base frame (m/s²).
    pub gravity: [f64; 2],
    /// Fingertip point relative to the distal end of the last link, in the
    /// distal link frame (m).
    pub fingertip_offset: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub qddot: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Self {
        let n = q.len();
        JointState {
            q,
            qdot,
            qddot: DVector::zeros(n),
        }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        JointState {
            q,
            qdot: DVector::zeros(n),
            qddot: DVector::zeros(n),
        }
    }

    pub fn with_qddot(mut self, qddot: DVector<f64>) -> Self {
        self.qddot = qddot;
        self
    }
}

#[inline]
fn rot(theta: f64, v: [f64; 2]) -> Vector2<f64> {
    let (s, c) = theta.sin_cos();
    Vector2::new(c * v[0] - s * v[1], s * v[0] + c * v[1])
}

/// 90° counter-clockwise rotation: `ω × r` for a planar angular rate of 1.
#[inline]
fn perp(r: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-r.y, r.x)
}

#[inline]
fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

impl FingerKinematics {
    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.links.is_empty() {
            return Err(Error::validation("links", "at least one link is required"));
        }
        check_len("joint limits", self.links.len(), self.joint_limits.len())?;
        for (i, l) in self.links.iter().enumerate() {
            if !(l.length > 0.0) {
                return Err(Error::validation(format!("links[{i}].length_m"), "must be > 0"));
            }
            if !(l.mass > 0.0) {
                return Err(Error::validation(format!("links[{i}].mass_kg"), "must be > 0"));
            }
            if !(l.inertia_zz >= 0.0) {
                return Err(Error::validation(
                    format!("links[{i}].inertia_kgm2"),
                    "must be >= 0",
                ));
            }
        }
        for (i, [lo, hi]) in self.joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::validation(
                    format!("joints[{i}].limits_rad"),
                    format!("lower bound {lo} must be below upper bound {hi}"),
                ));
            }
        }
        Ok(())
    }

    fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        check_len("joint positions", self.dof(), q.len())
    }

    /// Absolute angle of each link.
    fn link_angles(&self, q: &DVector<f64>) -> Vec<f64> {
        q.iter()
            .scan(0.0, |acc, &qi| {
                *acc += qi;
                Some(*acc)
            })
            .collect()
    }

    /// Joint positions `p_0 .. p_m` (the last entry is the distal end of the
    /// last link) in the base frame.
    pub fn joint_positions(&self, q: &DVector<f64>) -> Result<Vec<Vector2<f64>>> {
        self.check_q(q)?;
        let theta = self.link_angles(q);
        let mut p = vec![Vector2::zeros()];
        for (link, &th) in self.links.iter().zip(&theta) {
            let next = p.last().unwrap() + rot(th, [link.length, 0.0]);
            p.push(next);
        }
        Ok(p)
    }

    pub fn fingertip_position(&self, q: &DVector<f64>) -> Result<Vector2<f64>> {
        let p = self.joint_positions(q)?;
        let th: f64 = q.iter().sum();
        Ok(p[self.dof()] + rot(th, self.fingertip_offset))
    }

    /// Planar recursive Newton–Euler: `M(q) q̈ + N(q, q̇) + G(q)`, with the
    /// gravity contribution switched by `with_gravity`.
    fn rnea(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        qddot: &DVector<f64>,
        with_gravity: bool,
    ) -> DVector<f64> {
        let m = self.dof();
        let theta = self.link_angles(q);
        let g = Vector2::new(self.gravity[0], self.gravity[1]);
        let mut a_joint = if with_gravity { -g } else { Vector2::zeros() };
        let mut omega = 0.0;
        let mut alpha = 0.0;

        let mut r_len = Vec::with_capacity(m);
        let mut r_com = Vec::with_capacity(m);
        let mut a_com = Vec::with_capacity(m);
        let mut alphas = Vec::with_capacity(m);
        for j in 0..m {
            let link = &self.links[j];
            omega += qdot[j];
            alpha += qddot[j];
            let rl = rot(theta[j], [link.length, 0.0]);
            let rc = rot(theta[j], link.com_offset);
            a_com.push(a_joint + perp(&rc) * alpha - rc * (omega * omega));
            a_joint += perp(&rl) * alpha - rl * (omega * omega);
            r_len.push(rl);
            r_com.push(rc);
            alphas.push(alpha);
        }

        let mut tau = DVector::zeros(m);
        let mut f_child = Vector2::zeros();
        let mut n_child = 0.0;
        for j in (0..m).rev() {
            let link = &self.links[j];
            let inertial = a_com[j] * link.mass;
            let f = f_child + inertial;
            let n = n_child
                + cross(&r_len[j], &f_child)
                + link.inertia_zz * alphas[j]
                + cross(&r_com[j], &inertial);
            tau[j] = n;
            f_child = f;
            n_child = n;
        }
        tau
    }

    pub fn mass_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_q(q)?;
        let m = self.dof();
        let zero = DVector::zeros(m);
        let mut mm = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            mm.set_column(j, &self.rnea(q, &zero, &e, false));
        }
        // exact symmetry; RNEA columns agree to rounding
        Ok((&mm + mm.transpose()) * 0.5)
    }

    /// Centrifugal and Coriolis torques `N(q, q̇)`.
    pub fn bias_forces(&self, state: &JointState) -> Result<DVector<f64>> {
        self.check_q(&state.q)?;
        check_len("joint velocities", self.dof(), state.qdot.len())?;
        if state.qdot.iter().all(|&v| v == 0.0) {
            return Ok(DVector::zeros(self.dof()));
        }
        Ok(self.rnea(&state.q, &state.qdot, &DVector::zeros(self.dof()), false))
    }

    pub fn gravity_torque(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_q(q)?;
        let zero = DVector::zeros(self.dof());
        Ok(self.rnea(q, &zero, &zero, true))
    }

    /// Joint torque the actuation must supply: `M q̈ + N + G − extra`.
    pub fn inverse_dynamics(
        &self,
        state: &JointState,
        extra_torque: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_q(&state.q)?;
        check_len("joint velocities", self.dof(), state.qdot.len())?;
        check_len("joint accelerations", self.dof(), state.qddot.len())?;
        check_len("extra torque", self.dof(), extra_torque.len())?;
        Ok(self.rnea(&state.q, &state.qdot, &state.qddot, true) - extra_torque)
    }

    /// `q̈ = M⁻¹ (τ − N − G)`.
    pub fn forward_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        tau: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        check_len("joint torques", self.dof(), tau.len())?;
        let mm = self.mass_matrix(q)?;
        let bias = self.rnea(q, qdot, &DVector::zeros(self.dof()), true);
        let chol = mm
            .cholesky()
            .ok_or_else(|| Error::Contract("mass matrix is not positive definite".into()))?;
        Ok(chol.solve(&(tau - bias)))
    }

    /// Fingertip translational Jacobian as a 3×m matrix: rows `x`, `y` in the
    /// base frame and a zero out-of-plane row.
    pub fn fingertip_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = self.joint_positions(q)?;
        let tip = self.fingertip_position(q)?;
        let m = self.dof();
        let mut jac = DMatrix::zeros(3, m);
        for i in 0..m {
            let col = perp(&(tip - p[i]));
            jac[(0, i)] = col.x;
            jac[(1, i)] = col.y;
        }
        Ok(jac)
    }

    /// Planar contact Jacobian with rows `x`, `y`, `θ`: the map from `q̇` to
    /// fingertip linear velocity and distal-link angular rate. Its transpose
    /// maps a planar contact wrench `(f_x, f_y, m_z)` to joint torques.
    pub fn contact_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut jac = self.fingertip_jacobian(q)?;
        for i in 0..self.dof() {
            jac[(2, i)] = 1.0;
        }
        Ok(jac)
    }

    pub fn kinetic_energy(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<f64> {
        check_len("joint velocities", self.dof(), qdot.len())?;
        let mm = self.mass_matrix(q)?;
        Ok(0.5 * qdot.dot(&(&mm * qdot)))
    }

    pub fn potential_energy(&self, q: &DVector<f64>) -> Result<f64> {
        let p = self.joint_positions(q)?;
        let theta = self.link_angles(q);
        let g = Vector2::new(self.gravity[0], self.gravity[1]);
        Ok(self
            .links
            .iter()
            .enumerate()
            .map(|(j, l)| -l.mass * g.dot(&(p[j] + rot(theta[j], l.com_offset))))
            .sum())
    }
}

/// Rotation from the planar base frame into the fingertip force-sensor frame:
/// sensor `x` is base `x`, sensor `y` is the out-of-plane (abduction) axis and
/// sensor `z` is base `−y`.
pub fn base_to_sensor() -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(length: f64, mass: f64, com: f64, izz: f64, gravity: [f64; 2]) -> FingerKinematics {
        FingerKinematics {
            links: vec![LinkParams {
                length,
                mass,
                com_offset: [com, 0.0],
                inertia_zz: izz,
            }],
            joint_limits: vec![[-3.0, 3.0]],
            gravity,
            fingertip_offset: [0.0, 0.0],
        }
    }

    #[test]
    fn single_link_inertia_about_pivot() {
        let kin = single(0.05, 0.02, 0.02, 3e-6, [0.0, -9.81]);
        let m = kin.mass_matrix(&DVector::from_vec(vec![0.0])).unwrap();
        assert_relative_eq!(m[(0, 0)], 3e-6 + 0.02 * 0.02 * 0.02, max_relative = 1e-14);
    }

    #[test]
    fn single_link_has_no_bias_force() {
        let kin = single(0.05, 0.02, 0.02, 3e-6, [0.0, -9.81]);
        let s = JointState::new(DVector::from_vec(vec![0.7]), DVector::from_vec(vec![3.0]));
        assert!(kin.bias_forces(&s).unwrap()[0].abs() < 1e-18);
    }

    #[test]
    fn horizontal_link_gravity_is_weight_times_lever() {
        let kin = single(0.05, 0.02, 0.02, 3e-6, [0.0, -9.81]);
        let g = kin.gravity_torque(&DVector::from_vec(vec![0.0])).unwrap();
        assert_relative_eq!(g[0], 0.02 * 9.81 * 0.02, max_relative = 1e-14);
    }

    #[test]
    fn zero_gravity_gives_zero_torque() {
        let kin = single(0.05, 0.02, 0.02, 3e-6, [0.0, 0.0]);
        assert_eq!(kin.gravity_torque(&DVector::from_vec(vec![1.1])).unwrap()[0], 0.0);
    }

    #[test]
    fn jacobian_geometry() {
        let kin = single(0.04, 0.02, 0.02, 0.0, [0.0, 0.0]);
        let j = kin
            .fingertip_jacobian(&DVector::from_vec(vec![std::f64::consts::FRAC_PI_2]))
            .unwrap();
        assert_relative_eq!(j[(0, 0)], -0.04, epsilon = 1e-15);
        assert!(j[(1, 0)].abs() < 1e-15);
        assert_eq!(j[(2, 0)], 0.0);
    }

    #[test]
    fn size_mismatch_is_reported() {
        let kin = single(0.04, 0.02, 0.02, 0.0, [0.0, 0.0]);
        let err = kin.mass_matrix(&DVector::from_vec(vec![0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Size { .. }));
    }

    #[test]
    fn validation_names_the_field() {
        let mut kin = single(0.04, 0.02, 0.02, 0.0, [0.0, 0.0]);
        kin.links[0].mass = 0.0;
        let msg = kin.validate().unwrap_err().to_string();
        assert!(msg.contains("mass_kg"), "{msg}");
        kin.links[0].mass = 0.1;
        kin.joint_limits[0] = [1.0, 0.5];
        assert!(kin.validate().unwrap_err().to_string().contains("limits_rad"));
    }

    #[test]
    fn sensor_frame_is_a_proper_rotation() {
        let r = base_to_sensor();
        assert_relative_eq!(r * r.transpose(), Matrix3::identity());
        assert_relative_eq!(r.determinant(), 1.0);
    }
}
