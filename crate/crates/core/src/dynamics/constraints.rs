//! Constraint rows and their assembly into one mixed LCP per step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector3};
use serde::{Deserialize, Serialize};

use super::collision::{ContactPoint, Obstacle};
use crate::error::{Error, Result};
use crate::kinematics::{FrameCache, JointKind, JointState, Skeleton};
use crate::lcp::{MlcpProblem, RowKind};
use crate::math::{left_jacobian_inv, log_rotation, Transform};

pub const REGULARIZATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowTag {
    ContactNormal,
    Friction,
    JointLimit,
    FootAnchor,
    Balance,
}

/// Identity of a row across frames, used to carry impulses over as a warm start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowKey {
    Contact {
        body: usize,
        shape: usize,
        feature: usize,
        obstacle: Obstacle,
    },
    Friction {
        body: usize,
        shape: usize,
        feature: usize,
        obstacle: Obstacle,
        direction: usize,
    },
    Limit {
        body: usize,
        dof: usize,
        upper: bool,
    },
    Anchor {
        body: usize,
        axis: usize,
    },
    Balance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub jacobian_row: DVector<f64>,
    /// Desired minimum (or, for bilateral rows, exact) constraint velocity.
    pub rhs_target: f64,
    pub bounds: RowKind,
    pub tag: RowTag,
    pub key: RowKey,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationParams {
    pub beta: f64,
    /// Joint limit rows are emitted within this angular distance of a bound.
    pub limit_margin: f64,
    /// Largest separation velocity requested to resolve a violation.
    pub max_correction: f64,
}

impl Default for StabilizationParams {
    fn default() -> Self {
        Self {
            beta: 0.2,
            limit_margin: 0.05,
            max_correction: 1.0,
        }
    }
}

/// Constraint velocity target for a unilateral row at separation `gap`:
/// open gaps may close within the step, penetration is pushed out gradually.
pub fn unilateral_target(gap: f64, params: &StabilizationParams, dt: f64) -> f64 {
    if gap > 0.0 {
        -gap / dt
    } else {
        (-params.beta * gap / dt).min(params.max_correction)
    }
}

/// Orthonormal tangent pair for a contact normal.
pub fn tangent_basis(n: &Vector3<f64>) -> [Vector3<f64>; 2] {
    let a = n.abs();
    let e = if a.x <= a.y && a.x <= a.z {
        Vector3::x()
    } else if a.y <= a.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let t1 = n.cross(&e).normalize();
    [t1, n.cross(&t1)]
}

/// Normal row plus two friction rows per contact.
pub fn contact_rows(
    skeleton: &Skeleton,
    cache: &FrameCache,
    contacts: &[ContactPoint],
    params: &StabilizationParams,
    dt: f64,
    first_row: usize,
) -> Vec<ConstraintRow> {
    let mut rows = Vec::with_capacity(3 * contacts.len());
    for c in contacts {
        let p = c.point();
        let n = c.normal();
        let mut jac = cache.linear_jacobian_world(skeleton, c.body, &p);
        if let Obstacle::Body(other, _) = c.obstacle {
            jac -= cache.linear_jacobian_world(skeleton, other, &p);
        }
        let normal_row = first_row + rows.len();
        let project = |d: &Vector3<f64>| -> DVector<f64> { jac.tr_mul(d) };
        rows.push(ConstraintRow {
            jacobian_row: project(&n),
            rhs_target: unilateral_target(-c.penetration_depth, params, dt),
            bounds: RowKind::Unilateral,
            tag: RowTag::ContactNormal,
            key: RowKey::Contact {
                body: c.body,
                shape: c.shape,
                feature: c.feature,
                obstacle: c.obstacle,
            },
        });
        for (k, t) in tangent_basis(&n).iter().enumerate() {
            rows.push(ConstraintRow {
                jacobian_row: project(t),
                rhs_target: 0.0,
                bounds: RowKind::Boxed {
                    normal_row,
                    mu: c.friction_coefficient,
                },
                tag: RowTag::Friction,
                key: RowKey::Friction {
                    body: c.body,
                    shape: c.shape,
                    feature: c.feature,
                    obstacle: c.obstacle,
                    direction: k,
                },
            });
        }
    }
    rows
}

/// Rows for every limited coordinate within the margin of a bound.
pub fn joint_limit_rows(
    skeleton: &Skeleton,
    state: &JointState,
    params: &StabilizationParams,
    dt: f64,
) -> Vec<ConstraintRow> {
    let nv = skeleton.nv();
    let mut rows = Vec::new();
    for (body, joint) in skeleton.joints.iter().enumerate() {
        let Some(limits) = &joint.limits else {
            continue;
        };
        let vo = skeleton.v_offset(body);
        // Rate of each limited coordinate as a row over the joint's velocity block.
        let (coords, rates): (Vec<f64>, Vec<Vec<f64>>) = match joint.kind {
            JointKind::Free => continue,
            JointKind::Revolute => (vec![state.angle(skeleton, body)], vec![vec![1.0]]),
            JointKind::Spherical => {
                let phi = log_rotation(&state.rotation(skeleton, body));
                let jinv = left_jacobian_inv(&phi);
                (
                    phi.iter().cloned().collect(),
                    (0..3)
                        .map(|k| jinv.row(k).iter().cloned().collect())
                        .collect(),
                )
            }
        };
        for (dof, (&x, rate)) in coords.iter().zip(&rates).enumerate() {
            for upper in [false, true] {
                let (gap, sign) = if upper {
                    (limits.upper[dof] - x, -1.0)
                } else {
                    (x - limits.lower[dof], 1.0)
                };
                if gap >= params.limit_margin {
                    continue;
                }
                let mut row = DVector::zeros(nv);
                for (k, r) in rate.iter().enumerate() {
                    row[vo + k] = sign * r;
                }
                rows.push(ConstraintRow {
                    jacobian_row: row,
                    rhs_target: unilateral_target(gap, params, dt),
                    bounds: RowKind::Unilateral,
                    tag: RowTag::JointLimit,
                    key: RowKey::Limit { body, dof, upper },
                });
            }
        }
    }
    rows
}

/// Six bilateral rows welding `body` to `anchor`: angular velocity, then the
/// velocity of the body origin.
pub fn anchor_rows(
    skeleton: &Skeleton,
    cache: &FrameCache,
    body: usize,
    anchor: &Transform,
    params: &StabilizationParams,
    dt: f64,
) -> Vec<ConstraintRow> {
    let pose = cache.body_pose[body];
    let origin = pose.translation.vector;
    let jac = cache.point_jacobian_world(skeleton, body, &origin);
    let rot_err = log_rotation(&(pose.rotation * anchor.rotation.inverse()));
    let pos_err = origin - anchor.translation.vector;
    (0..6)
        .map(|axis| {
            let err = if axis < 3 {
                rot_err[axis]
            } else {
                pos_err[axis - 3]
            };
            ConstraintRow {
                jacobian_row: jac.row(axis).transpose(),
                rhs_target: (-params.beta * err / dt)
                    .clamp(-params.max_correction, params.max_correction),
                bounds: RowKind::Bilateral,
                tag: RowTag::FootAnchor,
                key: RowKey::Anchor { body, axis },
            }
        })
        .collect()
}

/// Impulse-form problem for one step. `z` holds constraint impulses and the
/// post-step velocity is `v_free + M^-1 J^T z`.
#[derive(Debug, Clone)]
pub struct AssembledProblem {
    pub problem: MlcpProblem,
    pub rows: Vec<ConstraintRow>,
    /// Velocity after the step without constraint impulses.
    pub v_free: DVector<f64>,
    /// `M^-1 J^T`, n x p.
    pub minv_jt: DMatrix<f64>,
}

impl AssembledProblem {
    pub fn velocity(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.v_free + &self.minv_jt * z
    }

    /// Constraint-space row velocities `J v` for a joint velocity.
    pub fn row_velocities(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| r.jacobian_row.dot(v)),
        )
    }
}

pub fn factor_mass_matrix(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::SingularMassMatrix)
}

/// Builds `A = J M^-1 J^T + eps I` and `q = J v_free - rhs`, with
/// `v_free = v + dt M^-1 (tau - bias)`.
pub fn assemble_constraints(
    chol: &Cholesky<f64, Dyn>,
    velocity: &DVector<f64>,
    torque: &DVector<f64>,
    bias: &DVector<f64>,
    rows: Vec<ConstraintRow>,
    dt: f64,
) -> Result<AssembledProblem> {
    let n = velocity.len();
    let p = rows.len();
    let v_free = velocity + chol.solve(&(torque - bias)) * dt;
    let mut jt = DMatrix::zeros(n, p);
    for (k, r) in rows.iter().enumerate() {
        if r.jacobian_row.len() != n {
            return Err(Error::MalformedProblem(format!(
                "row {k} has {} columns, expected {n}",
                r.jacobian_row.len()
            )));
        }
        jt.set_column(k, &r.jacobian_row);
    }
    let minv_jt = chol.solve(&jt);
    let mut a = jt.transpose() * &minv_jt;
    for k in 0..p {
        a[(k, k)] += REGULARIZATION;
    }
    // Symmetrize round-off.
    for i in 0..p {
        for j in 0..i {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    let q = DVector::from_iterator(
        p,
        rows.iter()
            .map(|r| r.jacobian_row.dot(&v_free) - r.rhs_target),
    );
    let kinds = rows.iter().map(|r| r.bounds).collect();
    Ok(AssembledProblem {
        problem: MlcpProblem::new(a, q, kinds)?,
        rows,
        v_free,
        minv_jt,
    })
}
