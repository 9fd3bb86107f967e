#![allow(dead_code)]

use manikin_core::kinematics::{BodyDef, JointDef, JointKind, JointLimits, JointState, Skeleton};
use manikin_core::math::Transform;
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const STAND_HEIGHT: f64 = 0.96;

pub fn manikin() -> Skeleton {
    manikin_core::assets::default_manikin().unwrap()
}

/// Neutral standing pose with the feet resting on the ground.
pub fn standing(sk: &Skeleton) -> JointState {
    let mut st = JointState::neutral(sk);
    st.q[2] = STAND_HEIGHT;
    st
}

/// Random configuration and velocity, joints within their limits.
pub fn random_state(sk: &Skeleton, rng: &mut ChaCha8Rng) -> JointState {
    let mut st = JointState::neutral(sk);
    for (i, j) in sk.joints.iter().enumerate() {
        match j.kind {
            JointKind::Free => {
                let o = sk.q_offset(i);
                for k in 0..3 {
                    st.q[o + k] = rng.gen_range(-1.0..1.0);
                }
                let r = UnitQuaternion::from_scaled_axis(Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ));
                st.set_rotation(sk, i, &r);
            }
            JointKind::Spherical => {
                let r = UnitQuaternion::from_scaled_axis(Vector3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                ));
                st.set_rotation(sk, i, &r);
            }
            JointKind::Revolute => {
                let (lo, hi) = j
                    .limits
                    .as_ref()
                    .map(|l| (l.lower[0], l.upper[0]))
                    .unwrap_or((-1.0, 1.0));
                st.set_angle(sk, i, rng.gen_range(lo..hi));
            }
        }
    }
    for k in 0..sk.nv() {
        st.dq[k] = rng.gen_range(-1.0..1.0);
    }
    st
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

fn joint(kind: JointKind, parent: Option<usize>, child: usize) -> JointDef {
    JointDef {
        name: format!("joint{child}"),
        kind,
        parent,
        child,
        parent_frame: Transform::identity(),
        child_frame: Transform::identity(),
        axis: Vector3::y(),
        limits: None,
    }
}

/// Point mass on a massless rod hinged about world y at the origin.
pub fn pendulum(length: f64, mass: f64, limits: Option<(f64, f64)>) -> Skeleton {
    let mut j = joint(JointKind::Revolute, None, 0);
    j.limits = limits.map(|(lo, hi)| JointLimits {
        lower: vec![lo],
        upper: vec![hi],
    });
    Skeleton::new(
        "pendulum",
        vec![BodyDef {
            name: "bob".into(),
            mass,
            inertia: Matrix3::identity() * 1e-9,
            com_offset: Vector3::new(0.0, 0.0, -length),
            shapes: vec![],
        }],
        vec![j],
    )
    .unwrap()
}

pub fn free_body(
    mass: f64,
    inertia: Matrix3<f64>,
    shapes: Vec<manikin_core::kinematics::Shape>,
) -> Skeleton {
    Skeleton::new(
        "free",
        vec![BodyDef {
            name: "body".into(),
            mass,
            inertia,
            com_offset: Vector3::zeros(),
            shapes,
        }],
        vec![joint(JointKind::Free, None, 0)],
    )
    .unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

pub fn inertia_box() -> Matrix3<f64> {
    Matrix3::new(0.3, 0.01, 0.0, 0.01, 0.2, 0.02, 0.0, 0.02, 0.25)
}
