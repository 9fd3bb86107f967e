use nalgebra::{DMatrix, DVector, Matrix3, Translation3, UnitQuaternion, Vector3, Vector6};

use super::skeleton::{JointKind, Skeleton};
use super::state::JointState;
use crate::error::{Error, Result};
use crate::math::{point_velocity, Transform};

/// Per-state kinematic quantities shared by the Jacobian, inertia and contact code.
///
/// Motion subspaces are world-frame spatial vectors about the world origin, so a
/// body's spatial velocity is the sum of its chain's columns times `dq`.
#[derive(Debug, Clone)]
pub struct FrameCache {
    pub body_pose: Vec<Transform>,
    /// World position of the point each joint rotates about.
    pub joint_origin: Vec<Vector3<f64>>,
    /// World orientation of each joint's parent-side frame.
    pub joint_frame: Vec<UnitQuaternion<f64>>,
    /// 6 x nv, rows `(angular; linear)`.
    pub motion: DMatrix<f64>,
    pub body_com: Vec<Vector3<f64>>,
}

impl FrameCache {
    pub fn new(skeleton: &Skeleton, state: &JointState) -> Result<Self> {
        check_dimensions(skeleton, state)?;
        let nb = skeleton.num_bodies();
        let mut body_pose = Vec::with_capacity(nb);
        let mut joint_origin = Vec::with_capacity(nb);
        let mut joint_frame = Vec::with_capacity(nb);
        let mut motion = DMatrix::zeros(6, skeleton.nv());

        for (i, joint) in skeleton.joints.iter().enumerate() {
            let parent = joint
                .parent
                .map(|p| body_pose[p])
                .unwrap_or_else(Transform::identity);
            let vo = skeleton.v_offset(i);
            let pose = match joint.kind {
                JointKind::Free => {
                    let pose = state.root_pose_of(skeleton, i);
                    let p = pose.translation.vector;
                    for k in 0..3 {
                        let e = Vector3::ith(k, 1.0);
                        set_col(&mut motion, vo + k, &e, &p.cross(&e));
                        set_col(&mut motion, vo + 3 + k, &Vector3::zeros(), &e);
                    }
                    joint_origin.push(p);
                    joint_frame.push(UnitQuaternion::identity());
                    pose
                }
                JointKind::Spherical => {
                    let frame = parent * joint.parent_frame;
                    let o = frame.translation.vector;
                    for k in 0..3 {
                        let a = frame.rotation * Vector3::ith(k, 1.0);
                        set_col(&mut motion, vo + k, &a, &o.cross(&a));
                    }
                    joint_origin.push(o);
                    joint_frame.push(frame.rotation);
                    let m = Transform::from_parts(
                        Translation3::identity(),
                        state.rotation(skeleton, i),
                    );
                    frame * m * joint.child_frame
                }
                JointKind::Revolute => {
                    let frame = parent * joint.parent_frame;
                    let o = frame.translation.vector;
                    let a = frame.rotation * joint.axis;
                    set_col(&mut motion, vo, &a, &o.cross(&a));
                    joint_origin.push(o);
                    joint_frame.push(frame.rotation);
                    let r = UnitQuaternion::from_scaled_axis(joint.axis * state.angle(skeleton, i));
                    frame * Transform::from_parts(Translation3::identity(), r) * joint.child_frame
                }
            };
            body_pose.push(pose);
        }
        let body_com = body_pose
            .iter()
            .zip(&skeleton.bodies)
            .map(|(p, b)| p.transform_point(&b.com_offset.into()).coords)
            .collect();
        Ok(Self {
            body_pose,
            joint_origin,
            joint_frame,
            motion,
            body_com,
        })
    }

    /// Spatial velocity of every body.
    pub fn body_velocities(&self, skeleton: &Skeleton, dq: &DVector<f64>) -> Vec<Vector6<f64>> {
        let mut out: Vec<Vector6<f64>> = Vec::with_capacity(skeleton.num_bodies());
        for i in 0..skeleton.num_bodies() {
            let mut v = skeleton
                .parent(i)
                .map(|p| out[p])
                .unwrap_or_else(Vector6::zeros);
            for c in skeleton.v_range(i) {
                v += self.motion.column(c) * dq[c];
            }
            out.push(v);
        }
        out
    }

    /// 6 x nv Jacobian `(angular; linear)` of the material point of `body`
    /// currently at world position `point`.
    pub fn point_jacobian_world(
        &self,
        skeleton: &Skeleton,
        body: usize,
        point: &Vector3<f64>,
    ) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(6, skeleton.nv());
        self.add_point_jacobian(skeleton, body, point, 1.0, &mut jac);
        jac
    }

    /// `jac += scale * point_jacobian_world(body, point)`.
    pub fn add_point_jacobian(
        &self,
        skeleton: &Skeleton,
        body: usize,
        point: &Vector3<f64>,
        scale: f64,
        jac: &mut DMatrix<f64>,
    ) {
        for &b in skeleton.chain(body) {
            for c in skeleton.v_range(b) {
                let s = self.motion.fixed_view::<6, 1>(0, c).into_owned();
                let lin = point_velocity(&s, point);
                for k in 0..3 {
                    jac[(k, c)] += scale * s[k];
                    jac[(3 + k, c)] += scale * lin[k];
                }
            }
        }
    }

    /// Linear velocity rows only (3 x nv) for a world point on `body`.
    pub fn linear_jacobian_world(
        &self,
        skeleton: &Skeleton,
        body: usize,
        point: &Vector3<f64>,
    ) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3, skeleton.nv());
        for &b in skeleton.chain(body) {
            for c in skeleton.v_range(b) {
                let s = self.motion.fixed_view::<6, 1>(0, c).into_owned();
                let lin = point_velocity(&s, point);
                for k in 0..3 {
                    jac[(k, c)] = lin[k];
                }
            }
        }
        jac
    }

    pub fn center_of_mass(&self, skeleton: &Skeleton) -> Vector3<f64> {
        let mut acc = Vector3::zeros();
        for (b, c) in skeleton.bodies.iter().zip(&self.body_com) {
            acc += b.mass * c;
        }
        acc / skeleton.total_mass()
    }

    /// 3 x nv center-of-mass Jacobian using subtree mass moments: the column of a
    /// joint is `(m_sub * s_lin + s_ang x sum(m_i c_i)) / m_total` over its subtree.
    pub fn com_jacobian(&self, skeleton: &Skeleton) -> DMatrix<f64> {
        let nb = skeleton.num_bodies();
        let mut sub_mass = vec![0.0; nb];
        let mut sub_moment = vec![Vector3::zeros(); nb];
        for i in (0..nb).rev() {
            sub_mass[i] += skeleton.bodies[i].mass;
            sub_moment[i] += skeleton.bodies[i].mass * self.body_com[i];
            if let Some(p) = skeleton.parent(i) {
                sub_mass[p] += sub_mass[i];
                let m = sub_moment[i];
                sub_moment[p] += m;
            }
        }
        let inv_m = 1.0 / skeleton.total_mass();
        let mut jac = DMatrix::zeros(3, skeleton.nv());
        for i in 0..nb {
            for c in skeleton.v_range(i) {
                let ang = Vector3::new(
                    self.motion[(0, c)],
                    self.motion[(1, c)],
                    self.motion[(2, c)],
                );
                let lin = Vector3::new(
                    self.motion[(3, c)],
                    self.motion[(4, c)],
                    self.motion[(5, c)],
                );
                let col = (lin * sub_mass[i] + ang.cross(&sub_moment[i])) * inv_m;
                jac.fixed_view_mut::<3, 1>(0, c).copy_from(&col);
            }
        }
        jac
    }

    /// World rotation of body `i`'s inertia about its center of mass.
    pub fn world_inertia(&self, skeleton: &Skeleton, i: usize) -> Matrix3<f64> {
        let r = self.body_pose[i].rotation.to_rotation_matrix();
        r.matrix() * skeleton.bodies[i].inertia * r.matrix().transpose()
    }
}

fn set_col(m: &mut DMatrix<f64>, c: usize, ang: &Vector3<f64>, lin: &Vector3<f64>) {
    for k in 0..3 {
        m[(k, c)] = ang[k];
        m[(3 + k, c)] = lin[k];
    }
}

fn check_dimensions(skeleton: &Skeleton, state: &JointState) -> Result<()> {
    let mismatch = |what: &'static str,
                    len: usize,
                    total: usize,
                    offset: fn(&Skeleton, usize) -> usize,
                    size: fn(JointKind) -> usize| {
        let culprit = (0..skeleton.num_bodies())
            .find(|&i| offset(skeleton, i) + size(skeleton.joints[i].kind) > len)
            .unwrap_or(skeleton.num_bodies() - 1);
        let joint = &skeleton.joints[culprit];
        Error::DimensionMismatch {
            joint: joint.name.clone(),
            what,
            expected: total,
            got: len,
        }
    };
    if state.q.len() != skeleton.nq() {
        return Err(mismatch(
            "configuration entries",
            state.q.len(),
            skeleton.nq(),
            Skeleton::q_offset,
            JointKind::nq,
        ));
    }
    if state.dq.len() != skeleton.nv() {
        return Err(mismatch(
            "velocity entries",
            state.dq.len(),
            skeleton.nv(),
            Skeleton::v_offset,
            JointKind::nv,
        ));
    }
    Ok(())
}

impl JointState {
    pub(crate) fn root_pose_of(&self, skeleton: &Skeleton, body: usize) -> Transform {
        let o = skeleton.q_offset(body);
        Transform::from_parts(
            Translation3::new(self.q[o], self.q[o + 1], self.q[o + 2]),
            self.rotation(skeleton, body),
        )
    }
}

/// Rows `(angular; linear)` of the velocity of a point fixed on `body`.
///
/// Expressed in the world frame and observed from the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyJacobian {
    pub matrix: DMatrix<f64>,
    pub body: usize,
    /// Point in body coordinates.
    pub point: Vector3<f64>,
}

/// World pose of every body.
pub fn forward_kinematics(skeleton: &Skeleton, state: &JointState) -> Result<Vec<Transform>> {
    Ok(FrameCache::new(skeleton, state)?.body_pose)
}

pub fn point_jacobian(
    skeleton: &Skeleton,
    state: &JointState,
    body: usize,
    point: &Vector3<f64>,
) -> Result<BodyJacobian> {
    if body >= skeleton.num_bodies() {
        return Err(Error::InvalidBody(body));
    }
    let cache = FrameCache::new(skeleton, state)?;
    let world = cache.body_pose[body]
        .transform_point(&(*point).into())
        .coords;
    Ok(BodyJacobian {
        matrix: cache.point_jacobian_world(skeleton, body, &world),
        body,
        point: *point,
    })
}

/// Linear rows of a body Jacobian, `S * J` with `S = (0 I)`.
pub fn reduce_jacobian(jac: &BodyJacobian) -> DMatrix<f64> {
    let mut selector = DMatrix::zeros(3, 6);
    for k in 0..3 {
        selector[(k, 3 + k)] = 1.0;
    }
    selector * &jac.matrix
}

pub fn center_of_mass(skeleton: &Skeleton, state: &JointState) -> Result<Vector3<f64>> {
    Ok(FrameCache::new(skeleton, state)?.center_of_mass(skeleton))
}

pub fn com_jacobian(skeleton: &Skeleton, state: &JointState) -> Result<DMatrix<f64>> {
    Ok(FrameCache::new(skeleton, state)?.com_jacobian(skeleton))
}
