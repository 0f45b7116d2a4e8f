#![allow(dead_code)]

use fingerid::coupling::{CouplingModel, ExcursionFn, JointCrossing, TendonKind, TendonRoute};
use fingerid::dynamics::{FingerKinematics, LinkParams};
use fingerid::tendon_friction::TendonFrictionModel;
use fingerid::viscoelastic::ViscoelasticModel;
use fingerid::FingerModel;
use nalgebra::{DMatrix, DVector, Vector2};

/// Serial chain of uniform rods with one slack pulley tendon per joint and no
/// passive torques.
pub fn rod_chain(links: &[(f64, f64)], limits: &[[f64; 2]], gravity: [f64; 2]) -> FingerModel {
    let m = links.len();
    let limits = limits.to_vec();
    FingerModel {
        name: "test chain".into(),
        joint_names: (0..m).map(|j| format!("j{j}")).collect(),
        kinematics: FingerKinematics {
            links: links.iter().map(|&(l, mass)| LinkParams::uniform_rod(l, mass)).collect(),
            joint_limits: limits.clone(),
            gravity,
            fingertip_offset: [0.0, 0.0],
        },
        coupling: CouplingModel {
            routes: (0..m)
                .map(|j| TendonRoute {
                    id: format!("t{j}"),
                    kind: TendonKind::Active,
                    crossings: vec![JointCrossing {
                        joint: j,
                        excursion: ExcursionFn::Pulley(0.005),
                    }],
                })
                .collect(),
            joint_limits: limits.clone(),
        },
        viscoelastic: ViscoelasticModel::zero(limits),
        tendon_friction: TendonFrictionModel::frictionless(m),
        assumptions: Vec::new(),
    }
}

pub fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Deterministic pseudo-random poses inside the limits.
pub fn poses(model: &FingerModel, count: usize, seed: u64) -> Vec<DVector<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            DVector::from_iterator(
                model.dof(),
                model
                    .kinematics
                    .joint_limits
                    .iter()
                    .map(|&[lo, hi]| rng.random_range(lo..=hi)),
            )
        })
        .collect()
}

// Oracle built from explicit planar geometry, independent of the Newton–Euler
// recursion under test.

fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

pub fn geometry(k: &FingerKinematics, q: &DVector<f64>) -> (Vec<Vector2<f64>>, Vec<Vector2<f64>>) {
    let mut theta = 0.0;
    let mut p = Vector2::zeros();
    let mut joints = Vec::new();
    let mut coms = Vec::new();
    for (j, l) in k.links.iter().enumerate() {
        theta += q[j];
        let (s, c) = theta.sin_cos();
        joints.push(p);
        coms.push(p + Vector2::new(c * l.com_offset[0] - s * l.com_offset[1], s * l.com_offset[0] + c * l.com_offset[1]));
        p += Vector2::new(c * l.length, s * l.length);
    }
    (joints, coms)
}

pub fn oracle_mass(k: &FingerKinematics, q: &DVector<f64>) -> DMatrix<f64> {
    let m = k.dof();
    let (joints, coms) = geometry(k, q);
    let mut mm = DMatrix::zeros(m, m);
    for (j, l) in k.links.iter().enumerate() {
        let mut jc = DMatrix::zeros(2, m);
        let mut jw = DMatrix::zeros(1, m);
        for i in 0..=j {
            let col = perp(coms[j] - joints[i]);
            jc[(0, i)] = col.x;
            jc[(1, i)] = col.y;
            jw[(0, i)] = 1.0;
        }
        mm += jc.transpose() * &jc * l.mass + jw.transpose() * &jw * l.inertia_zz;
    }
    mm
}

pub fn oracle_potential(k: &FingerKinematics, q: &DVector<f64>) -> f64 {
    let g = Vector2::new(k.gravity[0], k.gravity[1]);
    let (_, coms) = geometry(k, q);
    k.links.iter().zip(&coms).map(|(l, c)| -l.mass * g.dot(c)).sum()
}

/// Christoffel form of the Lagrangian bias term, `∂M` by central differences.
pub fn oracle_bias(k: &FingerKinematics, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
    let m = k.dof();
    let h = 1e-6;
    let dm: Vec<DMatrix<f64>> = (0..m)
        .map(|i| {
            let mut a = q.clone();
            let mut b = q.clone();
            a[i] += h;
            b[i] -= h;
            (oracle_mass(k, &a) - oracle_mass(k, &b)) / (2.0 * h)
        })
        .collect();
    DVector::from_fn(m, |i, _| {
        let mut s = 0.0;
        for j in 0..m {
            for l in 0..m {
                s += (dm[l][(i, j)] - 0.5 * dm[i][(j, l)]) * qd[j] * qd[l];
            }
        }
        s
    })
}

pub fn oracle_gravity(k: &FingerKinematics, q: &DVector<f64>) -> DVector<f64> {
    let h = 1e-6;
    DVector::from_fn(k.dof(), |i, _| {
        let mut a = q.clone();
        let mut b = q.clone();
        a[i] += h;
        b[i] -= h;
        (oracle_potential(k, &a) - oracle_potential(k, &b)) / (2.0 * h)
    })
}
