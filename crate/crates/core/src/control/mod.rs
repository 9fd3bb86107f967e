//! Task-space correctors, virtual guides and null-space posture control.

mod guides;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{bias_forces_cached, mass_matrix_cached};
use crate::error::{Error, Result};
use crate::kinematics::{difference, FrameCache, JointState, Skeleton};
use crate::math::{log_rotation, quat_from_xyzw};

pub use guides::{apply_guides, GuideKind, VirtualGuide};

/// Null-space regularization.
pub const NULL_SPACE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub linear: f64,
    pub angular: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTarget {
    pub id: String,
    pub body: usize,
    /// Controlled point, body coordinates.
    #[serde(default)]
    pub body_point: [f64; 3],
    pub position: [f64; 3],
    /// Desired orientation `[x, y, z, w]`; unconstrained when absent.
    #[serde(default)]
    pub orientation: Option<[f64; 4]>,
    /// N/m and N·m/rad.
    pub stiffness: Gains,
    /// N·s/m and N·m·s/rad.
    pub damping: Gains,
    #[serde(default = "default_max_force")]
    pub max_force: f64,
    #[serde(default = "default_max_torque")]
    pub max_torque: f64,
    #[serde(default = "enabled")]
    pub enabled: bool,
}

fn default_max_force() -> f64 {
    400.0
}

fn default_max_torque() -> f64 {
    60.0
}

fn enabled() -> bool {
    true
}

impl TaskTarget {
    pub fn validate(&self, skeleton: &Skeleton) -> Result<()> {
        if self.body >= skeleton.num_bodies() {
            return Err(Error::InvalidBody(self.body));
        }
        let gains = [
            self.stiffness.linear,
            self.stiffness.angular,
            self.damping.linear,
            self.damping.angular,
        ];
        if gains.iter().any(|g| !(*g >= 0.0))
            || !(self.max_force >= 0.0)
            || !(self.max_torque >= 0.0)
        {
            return Err(Error::InvalidWorld(format!(
                "target `{}`: gains and limits must be >= 0",
                self.id
            )));
        }
        Ok(())
    }

    /// Rows of the Jacobian this target controls: angular rows only when an
    /// orientation is set, then the three linear rows.
    pub fn jacobian(&self, skeleton: &Skeleton, cache: &FrameCache) -> DMatrix<f64> {
        let p = self.world_point(cache);
        let full = cache.point_jacobian_world(skeleton, self.body, &p);
        if self.orientation.is_some() {
            full
        } else {
            full.rows(3, 3).into_owned()
        }
    }

    pub fn world_point(&self, cache: &FrameCache) -> Vector3<f64> {
        cache.body_pose[self.body]
            .transform_point(&Vector3::from(self.body_point).into())
            .coords
    }

    /// Position error and, when an orientation is set, the log-map
    /// orientation error clamped to ±π/2 per axis.
    pub fn errors(&self, cache: &FrameCache) -> (Vector3<f64>, Option<Vector3<f64>>) {
        let e_pos = Vector3::from(self.position) - self.world_point(cache);
        let e_rot = self.orientation.map(|q| {
            let r = quat_from_xyzw(q) * cache.body_pose[self.body].rotation.inverse();
            log_rotation(&r)
                .map(|v| v.clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2))
        });
        (e_pos, e_rot)
    }
}

fn saturate(v: Vector3<f64>, limit: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > limit {
        v * (limit / n)
    } else {
        v
    }
}

/// `Σ Jᵀ (K_p e − K_d v)` over enabled targets, with force and torque
/// saturation per target.
pub fn task_torques(
    skeleton: &Skeleton,
    cache: &FrameCache,
    dq: &DVector<f64>,
    targets: &[TaskTarget],
) -> DVector<f64> {
    let mut tau = DVector::zeros(skeleton.nv());
    for t in targets.iter().filter(|t| t.enabled) {
        let p = t.world_point(cache);
        let jac = cache.point_jacobian_world(skeleton, t.body, &p);
        let v = &jac * dq;
        let (e_pos, e_rot) = t.errors(cache);
        let v_lin = Vector3::new(v[3], v[4], v[5]);
        let force = saturate(
            e_pos * t.stiffness.linear - v_lin * t.damping.linear,
            t.max_force,
        );
        tau += jac.rows(3, 3).tr_mul(&force);
        if let Some(e_rot) = e_rot {
            let w = Vector3::new(v[0], v[1], v[2]);
            let torque = saturate(
                e_rot * t.stiffness.angular - w * t.damping.angular,
                t.max_torque,
            );
            tau += jac.rows(0, 3).tr_mul(&torque);
        }
    }
    tau
}

/// Joint-space reference posture. Gains are in acceleration units: the
/// posture law is `τ₀ = M (K_p ∘ (q_ref ⊖ q) − K_d ∘ dq) + g(q)`, which
/// gives every joint the same closed-loop response whatever its load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostureGoal {
    pub q_ref: DVector<f64>,
    pub stiffness: DVector<f64>,
    pub damping: DVector<f64>,
    /// Adds the gravity torque `g(q)` to `τ₀`.
    #[serde(default = "enabled")]
    pub gravity_compensation: bool,
}

impl PostureGoal {
    /// Same gains on every degree of freedom.
    pub fn uniform(skeleton: &Skeleton, q_ref: DVector<f64>, stiffness: f64, damping: f64) -> Self {
        Self {
            q_ref,
            stiffness: DVector::from_element(skeleton.nv(), stiffness),
            damping: DVector::from_element(skeleton.nv(), damping),
            gravity_compensation: true,
        }
    }

    pub fn validate(&self, skeleton: &Skeleton) -> Result<()> {
        if self.q_ref.len() != skeleton.nq() {
            return Err(Error::StateSize {
                what: "posture reference",
                expected: skeleton.nq(),
                got: self.q_ref.len(),
            });
        }
        for (what, v) in [
            ("posture stiffness", &self.stiffness),
            ("posture damping", &self.damping),
        ] {
            if v.len() != skeleton.nv() {
                return Err(Error::StateSize {
                    what,
                    expected: skeleton.nv(),
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Dynamically consistent null-space projector
/// `N = I − J_tᵀ (J_t M⁻¹ J_tᵀ + εI)⁻¹ J_t M⁻¹`.
pub fn null_space_projector(
    chol: &Cholesky<f64, Dyn>,
    task_jacobian: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = task_jacobian.ncols();
    if task_jacobian.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let minv_jt = chol.solve(&task_jacobian.transpose());
    let mut lambda_inv = task_jacobian * &minv_jt;
    for k in 0..lambda_inv.nrows() {
        lambda_inv[(k, k)] += NULL_SPACE_EPS;
    }
    let lambda = lambda_inv
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| DMatrix::zeros(0, 0));
    if lambda.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    DMatrix::identity(n, n) - task_jacobian.transpose() * lambda * minv_jt.transpose()
}

/// `N τ₀` for the stacked task Jacobian `task_jacobian`, with `N` applied twice.
pub fn posture_torques(
    skeleton: &Skeleton,
    state: &JointState,
    mass: &DMatrix<f64>,
    gravity_torque: &DVector<f64>,
    goal: &PostureGoal,
    task_jacobian: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    goal.validate(skeleton)?;
    let err = difference(skeleton, &state.q, &goal.q_ref);
    let acc = err.component_mul(&goal.stiffness) - state.dq.component_mul(&goal.damping);
    let mut tau0 = mass * acc;
    if goal.gravity_compensation {
        tau0 += gravity_torque;
    }
    if task_jacobian.nrows() == 0 {
        return Ok(tau0);
    }
    let chol = Cholesky::new(mass.clone()).ok_or(Error::SingularMassMatrix)?;
    let n = null_space_projector(&chol, task_jacobian);
    // A second pass removes the task-space leak left by the regularization.
    let once = &n * tau0;
    Ok(&n * once)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub torque_task: DVector<f64>,
    pub torque_posture: DVector<f64>,
    pub torque_total: DVector<f64>,
    /// Targets after guide projection.
    pub targets: Vec<TaskTarget>,
}

/// Guides, then task torques, then posture torques in the task null space.
pub fn control_step(
    skeleton: &Skeleton,
    state: &JointState,
    targets: &[TaskTarget],
    guides: &[VirtualGuide],
    posture: Option<&PostureGoal>,
    gravity: &Vector3<f64>,
) -> Result<ControlOutput> {
    let cache = FrameCache::new(skeleton, state)?;
    for t in targets {
        t.validate(skeleton)?;
    }
    let guided = apply_guides(targets, guides)?;
    let torque_task = task_torques(skeleton, &cache, &state.dq, &guided);
    let torque_posture = match posture {
        Some(goal) => {
            let mass = mass_matrix_cached(skeleton, &cache);
            let gravity_torque =
                bias_forces_cached(skeleton, &cache, &DVector::zeros(skeleton.nv()), gravity);
            let rows: Vec<DMatrix<f64>> = guided
                .iter()
                .filter(|t| t.enabled)
                .map(|t| t.jacobian(skeleton, &cache))
                .collect();
            let total_rows = rows.iter().map(|r| r.nrows()).sum();
            let mut jt = DMatrix::zeros(total_rows, skeleton.nv());
            let mut r0 = 0;
            for r in &rows {
                jt.rows_mut(r0, r.nrows()).copy_from(r);
                r0 += r.nrows();
            }
            posture_torques(skeleton, state, &mass, &gravity_torque, goal, &jt)?
        }
        None => DVector::zeros(skeleton.nv()),
    };
    let torque_total = &torque_task + &torque_posture;
    Ok(ControlOutput {
        torque_task,
        torque_posture,
        torque_total,
        targets: guided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target(id: &str, pos: [f64; 3]) -> TaskTarget {
        TaskTarget {
            id: id.into(),
            body: 0,
            body_point: [0.0; 3],
            position: pos,
            orientation: None,
            stiffness: Gains {
                linear: 100.0,
                angular: 10.0,
            },
            damping: Gains {
                linear: 1.0,
                angular: 1.0,
            },
            max_force: 1e9,
            max_torque: 1e9,
            enabled: true,
        }
    }

    fn axis_guide(enabled: bool) -> VirtualGuide {
        VirtualGuide {
            id: "g".into(),
            target: "t".into(),
            kind: GuideKind::AxisLine {
                point: [0.0; 3],
                direction: [0.0, 0.0, 1.0],
                orientation: [0.0, 0.0, 0.0, 1.0],
            },
            proxy_stiffness: None,
            proxy_damping: None,
            enabled,
        }
    }

    #[test]
    fn line_projection() {
        let out = apply_guides(&[target("t", [1.0, 2.0, 3.0])], &[axis_guide(true)]).unwrap();
        assert_eq!(out[0].position, [0.0, 0.0, 3.0]);
        let again = apply_guides(&out, &[axis_guide(true)]).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn disabled_guide_passes_through() {
        let t = vec![target("t", [1.0, 2.0, 3.0])];
        assert_eq!(apply_guides(&t, &[axis_guide(false)]).unwrap(), t);
    }

    #[test]
    fn dangling_guide_is_an_error() {
        let r = apply_guides(&[target("other", [0.0; 3])], &[axis_guide(true)]);
        assert!(matches!(r, Err(Error::DanglingGuide { .. })));
    }
}
