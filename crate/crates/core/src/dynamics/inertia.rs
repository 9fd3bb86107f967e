//! Joint-space inertia (composite rigid body) and bias forces (recursive
//! Newton-Euler), both in world-frame spatial coordinates.

use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};

use crate::kinematics::{FrameCache, JointKind, JointState, Skeleton};
use crate::math::{cross_force, cross_motion, spatial_inertia};
use crate::Result;

pub(crate) fn body_spatial_inertias(skeleton: &Skeleton, cache: &FrameCache) -> Vec<Matrix6<f64>> {
    (0..skeleton.num_bodies())
        .map(|i| {
            spatial_inertia(
                skeleton.bodies[i].mass,
                &cache.body_com[i],
                &cache.world_inertia(skeleton, i),
            )
        })
        .collect()
}

/// Composite-rigid-body algorithm.
pub fn mass_matrix_cached(skeleton: &Skeleton, cache: &FrameCache) -> DMatrix<f64> {
    let nb = skeleton.num_bodies();
    let mut composite = body_spatial_inertias(skeleton, cache);
    for i in (0..nb).rev() {
        if let Some(p) = skeleton.parent(i) {
            let c = composite[i];
            composite[p] += c;
        }
    }
    let n = skeleton.nv();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..nb {
        let cols = skeleton.v_range(i);
        let s_i = cache.motion.columns(cols.start, cols.len());
        let f = composite[i] * s_i;
        for &a in skeleton.chain(i) {
            let ra = skeleton.v_range(a);
            let s_a = cache.motion.columns(ra.start, ra.len());
            let block = s_a.transpose() * &f;
            m.view_mut((ra.start, cols.start), (ra.len(), cols.len()))
                .copy_from(&block);
            if a != i {
                m.view_mut((cols.start, ra.start), (cols.len(), ra.len()))
                    .copy_from(&block.transpose());
            }
        }
    }
    m
}

pub fn mass_matrix(skeleton: &Skeleton, state: &JointState) -> Result<DMatrix<f64>> {
    let cache = FrameCache::new(skeleton, state)?;
    Ok(mass_matrix_cached(skeleton, &cache))
}

/// Recursive Newton-Euler with zero joint acceleration. Sign convention:
/// `M ddq + bias = tau`.
pub fn bias_forces_cached(
    skeleton: &Skeleton,
    cache: &FrameCache,
    dq: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> DVector<f64> {
    let nb = skeleton.num_bodies();
    let inertias = body_spatial_inertias(skeleton, cache);
    let mut vel = vec![Vector6::zeros(); nb];
    let mut acc = vec![Vector6::zeros(); nb];
    let base_acc = Vector6::new(0.0, 0.0, 0.0, -gravity.x, -gravity.y, -gravity.z);

    for i in 0..nb {
        let (v_parent, a_parent) = match skeleton.parent(i) {
            Some(p) => (vel[p], acc[p]),
            None => (Vector6::zeros(), base_acc),
        };
        let cols = skeleton.v_range(i);
        let mut joint_vel = Vector6::zeros();
        for c in cols.clone() {
            joint_vel += cache.motion.column(c) * dq[c];
        }
        vel[i] = v_parent + joint_vel;
        // Time derivative of the subspace times dq.
        let sdot_dq = match skeleton.joints[i].kind {
            JointKind::Free => {
                let o = cols.start;
                let w = Vector3::new(dq[o], dq[o + 1], dq[o + 2]);
                let v = Vector3::new(dq[o + 3], dq[o + 4], dq[o + 5]);
                let l = v.cross(&w);
                Vector6::new(0.0, 0.0, 0.0, l.x, l.y, l.z)
            }
            _ => cross_motion(&v_parent, &joint_vel),
        };
        acc[i] = a_parent + sdot_dq;
    }

    let mut force: Vec<Vector6<f64>> = (0..nb)
        .map(|i| inertias[i] * acc[i] + cross_force(&vel[i], &(inertias[i] * vel[i])))
        .collect();
    let mut tau = DVector::zeros(skeleton.nv());
    for i in (0..nb).rev() {
        for c in skeleton.v_range(i) {
            tau[c] = cache.motion.column(c).dot(&force[i]);
        }
        if let Some(p) = skeleton.parent(i) {
            let f = force[i];
            force[p] += f;
        }
    }
    tau
}

pub fn bias_forces(
    skeleton: &Skeleton,
    state: &JointState,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>> {
    let cache = FrameCache::new(skeleton, state)?;
    Ok(bias_forces_cached(skeleton, &cache, &state.dq, gravity))
}

/// Total spatial momentum about the world origin, `(angular; linear)`.
pub fn spatial_momentum(
    skeleton: &Skeleton,
    cache: &FrameCache,
    dq: &DVector<f64>,
) -> Vector6<f64> {
    let inertias = body_spatial_inertias(skeleton, cache);
    cache
        .body_velocities(skeleton, dq)
        .iter()
        .zip(&inertias)
        .map(|(v, i)| i * v)
        .sum()
}
