use nalgebra::{DVector, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::skeleton::{JointKind, Skeleton};
use crate::error::{Error, Result};
use crate::math::{exp_rotation, log_rotation, Transform};

/// Joint configuration and velocity.
///
/// Layout per joint, in body order:
/// - free: `q = [x, y, z, qx, qy, qz, qw]`, `dq = [wx, wy, wz, vx, vy, vz]`
///   (world-frame angular velocity, world-frame velocity of the body origin)
/// - spherical: `q = [qx, qy, qz, qw]`, `dq` = angular velocity in the parent joint frame
/// - revolute: `q = [angle]`, `dq = [rate]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
}

impl JointState {
    /// All joints at zero angle / identity rotation, root at the origin, at rest.
    pub fn neutral(skeleton: &Skeleton) -> Self {
        let mut q = DVector::zeros(skeleton.nq());
        for (i, j) in skeleton.joints.iter().enumerate() {
            let o = skeleton.q_offset(i);
            match j.kind {
                JointKind::Free => q[o + 6] = 1.0,
                JointKind::Spherical => q[o + 3] = 1.0,
                JointKind::Revolute => {}
            }
        }
        Self {
            q,
            dq: DVector::zeros(skeleton.nv()),
        }
    }

    pub fn check(&self, skeleton: &Skeleton) -> Result<()> {
        if self.q.len() != skeleton.nq() {
            return Err(Error::StateSize {
                what: "configuration",
                expected: skeleton.nq(),
                got: self.q.len(),
            });
        }
        if self.dq.len() != skeleton.nv() {
            return Err(Error::StateSize {
                what: "velocity",
                expected: skeleton.nv(),
                got: self.dq.len(),
            });
        }
        Ok(())
    }

    /// Rotation block of a free or spherical joint.
    pub fn rotation(&self, skeleton: &Skeleton, body: usize) -> UnitQuaternion<f64> {
        let o = skeleton.q_offset(body);
        let o = match skeleton.joints[body].kind {
            JointKind::Free => o + 3,
            JointKind::Spherical => o,
            JointKind::Revolute => return UnitQuaternion::identity(),
        };
        UnitQuaternion::new_unchecked(Quaternion::new(
            self.q[o + 3],
            self.q[o],
            self.q[o + 1],
            self.q[o + 2],
        ))
    }

    pub fn set_rotation(&mut self, skeleton: &Skeleton, body: usize, r: &UnitQuaternion<f64>) {
        let o = skeleton.q_offset(body);
        let o = match skeleton.joints[body].kind {
            JointKind::Free => o + 3,
            JointKind::Spherical => o,
            JointKind::Revolute => return,
        };
        self.q[o] = r.i;
        self.q[o + 1] = r.j;
        self.q[o + 2] = r.k;
        self.q[o + 3] = r.w;
    }

    pub fn angle(&self, skeleton: &Skeleton, body: usize) -> f64 {
        self.q[skeleton.q_offset(body)]
    }

    pub fn set_angle(&mut self, skeleton: &Skeleton, body: usize, angle: f64) {
        self.q[skeleton.q_offset(body)] = angle;
    }

    /// Pose of a free root body.
    pub fn root_pose(&self, skeleton: &Skeleton) -> Transform {
        let r = skeleton.root_body;
        let o = skeleton.q_offset(r);
        Transform::from_parts(
            Vector3::new(self.q[o], self.q[o + 1], self.q[o + 2]).into(),
            self.rotation(skeleton, r),
        )
    }

    pub fn set_root_pose(&mut self, skeleton: &Skeleton, pose: &Transform) {
        let r = skeleton.root_body;
        if skeleton.joints[r].kind != JointKind::Free {
            return;
        }
        let o = skeleton.q_offset(r);
        for k in 0..3 {
            self.q[o + k] = pose.translation.vector[k];
        }
        self.set_rotation(skeleton, r, &pose.rotation);
    }

    /// Re-normalize every quaternion block.
    pub fn normalize(&mut self, skeleton: &Skeleton) {
        for (i, j) in skeleton.joints.iter().enumerate() {
            if matches!(j.kind, JointKind::Free | JointKind::Spherical) {
                let r = self.rotation(skeleton, i);
                let n = UnitQuaternion::new_normalize(r.into_inner());
                self.set_rotation(skeleton, i, &n);
            }
        }
    }

    /// Largest deviation of a quaternion block from unit norm.
    pub fn quaternion_drift(&self, skeleton: &Skeleton) -> f64 {
        skeleton
            .joints
            .iter()
            .enumerate()
            .filter(|(_, j)| matches!(j.kind, JointKind::Free | JointKind::Spherical))
            .map(|(i, _)| (self.rotation(skeleton, i).into_inner().norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Configuration reached by moving along tangent vector `v` for time `dt`.
pub fn integrate(skeleton: &Skeleton, q: &DVector<f64>, v: &DVector<f64>, dt: f64) -> DVector<f64> {
    let mut out = JointState {
        q: q.clone(),
        dq: DVector::zeros(0),
    };
    for (i, j) in skeleton.joints.iter().enumerate() {
        let vo = skeleton.v_offset(i);
        let qo = skeleton.q_offset(i);
        match j.kind {
            JointKind::Free => {
                let w = Vector3::new(v[vo], v[vo + 1], v[vo + 2]);
                for k in 0..3 {
                    out.q[qo + k] += dt * v[vo + 3 + k];
                }
                let r = exp_rotation(&(w * dt)) * out.rotation(skeleton, i);
                out.set_rotation(skeleton, i, &r);
            }
            JointKind::Spherical => {
                let w = Vector3::new(v[vo], v[vo + 1], v[vo + 2]);
                let r = exp_rotation(&(w * dt)) * out.rotation(skeleton, i);
                out.set_rotation(skeleton, i, &r);
            }
            JointKind::Revolute => out.q[qo] += dt * v[vo],
        }
    }
    out.q
}

/// Tangent vector `v` with `integrate(from, v, 1) == to`.
pub fn difference(skeleton: &Skeleton, from: &DVector<f64>, to: &DVector<f64>) -> DVector<f64> {
    let a = JointState {
        q: from.clone(),
        dq: DVector::zeros(0),
    };
    let b = JointState {
        q: to.clone(),
        dq: DVector::zeros(0),
    };
    let mut out = DVector::zeros(skeleton.nv());
    for (i, j) in skeleton.joints.iter().enumerate() {
        let vo = skeleton.v_offset(i);
        let qo = skeleton.q_offset(i);
        match j.kind {
            JointKind::Free => {
                let w =
                    log_rotation(&(b.rotation(skeleton, i) * a.rotation(skeleton, i).inverse()));
                for k in 0..3 {
                    out[vo + k] = w[k];
                    out[vo + 3 + k] = to[qo + k] - from[qo + k];
                }
            }
            JointKind::Spherical => {
                let w =
                    log_rotation(&(b.rotation(skeleton, i) * a.rotation(skeleton, i).inverse()));
                out.fixed_rows_mut::<3>(vo).copy_from(&w);
            }
            JointKind::Revolute => out[vo] = to[qo] - from[qo],
        }
    }
    out
}

/// Coordinates bounded by joint limits: the angle of a revolute joint, the
/// rotation-vector components of a spherical joint.
pub fn limit_coordinates(skeleton: &Skeleton, state: &JointState, body: usize) -> Vec<f64> {
    match skeleton.joints[body].kind {
        JointKind::Free => vec![],
        JointKind::Spherical => log_rotation(&state.rotation(skeleton, body))
            .iter()
            .cloned()
            .collect(),
        JointKind::Revolute => vec![state.angle(skeleton, body)],
    }
}
