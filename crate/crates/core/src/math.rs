//! Small rotation and spatial-algebra helpers shared by the solver modules.
//!
//! Spatial vectors are stacked `(angular; linear)` and, unless stated
//! otherwise, expressed in the world frame about the world origin.

use nalgebra::{
    Isometry3, Matrix3, Matrix6, Quaternion, Translation3, UnitQuaternion, Vector3, Vector6,
};
use serde::{Deserialize, Serialize};

pub type Transform = Isometry3<f64>;

/// Skew-symmetric matrix such that `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation vector (axis * angle, angle in `[0, pi]`) of a unit quaternion.
pub fn log_rotation(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    // Canonical hemisphere keeps the angle in [0, pi].
    let q = if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        *q
    };
    q.scaled_axis()
}

pub fn exp_rotation(v: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*v)
}

/// Inverse of the left Jacobian of SO(3).
///
/// With `R <- exp(w dt) R` and `phi = log(R)`, `d phi / dt = left_jacobian_inv(phi) * w`.
pub fn left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < 1e-6 {
        return Matrix3::identity() - 0.5 * k + (1.0 / 12.0) * k * k;
    }
    let half = 0.5 * theta;
    let coef = (1.0 - half * half.cos() / half.sin()) / (theta * theta);
    Matrix3::identity() - 0.5 * k + coef * k * k
}

/// Spatial cross product for motion vectors, `v x m`.
pub fn cross_motion(v: &Vector6<f64>, m: &Vector6<f64>) -> Vector6<f64> {
    let w = v.fixed_rows::<3>(0);
    let vo = v.fixed_rows::<3>(3);
    let ma = m.fixed_rows::<3>(0);
    let ml = m.fixed_rows::<3>(3);
    let a = w.cross(&ma);
    let l = w.cross(&ml) + vo.cross(&ma);
    Vector6::new(a.x, a.y, a.z, l.x, l.y, l.z)
}

/// Spatial cross product for force vectors, `v x* f`.
pub fn cross_force(v: &Vector6<f64>, f: &Vector6<f64>) -> Vector6<f64> {
    let w = v.fixed_rows::<3>(0);
    let vo = v.fixed_rows::<3>(3);
    let fa = f.fixed_rows::<3>(0);
    let fl = f.fixed_rows::<3>(3);
    let a = w.cross(&fa) + vo.cross(&fl);
    let l = w.cross(&fl);
    Vector6::new(a.x, a.y, a.z, l.x, l.y, l.z)
}

/// Spatial inertia about the world origin of a body with mass `m`, world-frame
/// center of mass `c` and rotational inertia `ic` about that center (world axes).
pub fn spatial_inertia(m: f64, c: &Vector3<f64>, ic: &Matrix3<f64>) -> Matrix6<f64> {
    let cx = skew(c);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(ic + m * cx * cx.transpose()));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(m * cx));
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(m * cx.transpose()));
    out.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(Matrix3::identity() * m));
    out
}

/// Linear velocity of world point `p` for spatial velocity `v` (about the origin).
pub fn point_velocity(v: &Vector6<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    let w = Vector3::new(v[0], v[1], v[2]);
    Vector3::new(v[3], v[4], v[5]) + w.cross(p)
}

/// JSON form of a rigid transform. Quaternions are stored `[x, y, z, w]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformDef {
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "identity_quat")]
    pub rotation: [f64; 4],
}

fn identity_quat() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

impl Default for TransformDef {
    fn default() -> Self {
        Self {
            translation: [0.0; 3],
            rotation: identity_quat(),
        }
    }
}

pub fn quat_from_xyzw(q: [f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q[3], q[0], q[1], q[2]))
}

pub fn quat_to_xyzw(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.i, q.j, q.k, q.w]
}

/// Norm of the raw `[x, y, z, w]` array, used to validate file input.
pub fn quat_norm(q: [f64; 4]) -> f64 {
    q.iter().map(|c| c * c).sum::<f64>().sqrt()
}

impl From<TransformDef> for Transform {
    fn from(d: TransformDef) -> Self {
        Isometry3::from_parts(
            Translation3::new(d.translation[0], d.translation[1], d.translation[2]),
            quat_from_xyzw(d.rotation),
        )
    }
}

impl From<&Transform> for TransformDef {
    fn from(t: &Transform) -> Self {
        let p = t.translation.vector;
        Self {
            translation: [p.x, p.y, p.z],
            rotation: quat_to_xyzw(&t.rotation),
        }
    }
}
