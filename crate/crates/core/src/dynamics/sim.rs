//! Fixed-step semi-implicit Euler with one impulse-level MLCP per step.

use std::collections::BTreeMap;

use nalgebra::{DVector, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::collision::{detect_contacts_cached, CollisionParams, ContactPoint, Obstacle};
use super::constraints::{
    anchor_rows, assemble_constraints, contact_rows, factor_mass_matrix, joint_limit_rows,
    ConstraintRow, RowKey, RowTag, StabilizationParams,
};
use super::inertia::{
    bias_forces_cached, body_spatial_inertias, mass_matrix_cached, spatial_momentum,
};
use super::world::WorldDef;
use crate::error::{Error, Result};
use crate::kinematics::{integrate, FrameCache, JointKind, JointState, Skeleton};
use crate::lcp::{refine_active_set, solve_pgs_warm, MlcpProblem, MlcpSolution, PgsParams};
use crate::math::{Transform, TransformDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    DoubleSupport,
    SingleLeft,
    SingleRight,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootAnchor {
    pub body: usize,
    pub pose: TransformDef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub joint_state: JointState,
    pub time: f64,
    pub support_mode: SupportMode,
    /// Sorted by body index.
    pub anchored_feet: Vec<FootAnchor>,
}

impl SimState {
    pub fn new(joint_state: JointState) -> Self {
        Self {
            joint_state,
            time: 0.0,
            support_mode: SupportMode::Free,
            anchored_feet: Vec::new(),
        }
    }

    pub fn anchored_bodies(&self) -> Vec<usize> {
        self.anchored_feet.iter().map(|a| a.body).collect()
    }
}

/// Largest foot-to-ground gap accepted when anchoring.
pub const ANCHOR_TOLERANCE: f64 = 0.005;

/// Lowest point of a body's shapes relative to the ground.
pub fn ground_clearance(
    skeleton: &Skeleton,
    state: &JointState,
    world: &WorldDef,
    body: usize,
) -> Result<f64> {
    if body >= skeleton.num_bodies() {
        return Err(Error::InvalidBody(body));
    }
    let cache = FrameCache::new(skeleton, state)?;
    let params = CollisionParams {
        margin: f64::INFINITY,
        self_collision: false,
        ..CollisionParams::default()
    };
    let world = WorldDef {
        boxes: Vec::new(),
        ..world.clone()
    };
    let others: Vec<usize> = (0..skeleton.num_bodies()).filter(|&b| b != body).collect();
    Ok(
        detect_contacts_cached(skeleton, &cache, &world, &params, &others)
            .iter()
            .map(|c| -c.penetration_depth)
            .fold(f64::INFINITY, f64::min),
    )
}

/// Welds the listed feet at their current world poses. Single-foot support is
/// classified by the body name suffix `_l` / `_r`.
pub fn anchor_feet(
    skeleton: &Skeleton,
    state: &SimState,
    world: &WorldDef,
    feet: &[usize],
) -> Result<SimState> {
    if feet.is_empty() {
        return Err(Error::EmptySupport);
    }
    let cache = FrameCache::new(skeleton, &state.joint_state)?;
    let mut anchors = Vec::new();
    for &f in feet {
        let gap = ground_clearance(skeleton, &state.joint_state, world, f)?;
        if gap > ANCHOR_TOLERANCE {
            return Err(Error::NotOnGround {
                body: skeleton.bodies[f].name.clone(),
                gap,
            });
        }
        anchors.push(FootAnchor {
            body: f,
            pose: (&cache.body_pose[f]).into(),
        });
    }
    anchors.sort_by_key(|a| a.body);
    anchors.dedup_by_key(|a| a.body);
    let support_mode = match anchors.as_slice() {
        [a] if skeleton.bodies[a.body].name.ends_with("_l") => SupportMode::SingleLeft,
        [_] => SupportMode::SingleRight,
        _ => SupportMode::DoubleSupport,
    };
    Ok(SimState {
        support_mode,
        anchored_feet: anchors,
        ..state.clone()
    })
}

pub fn release_feet(state: &SimState) -> SimState {
    SimState {
        support_mode: SupportMode::Free,
        anchored_feet: Vec::new(),
        ..state.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub dt: f64,
    pub pgs: PgsParams,
    /// Active-set iterations run after PGS when it has not converged.
    pub refine_iter: usize,
    pub stabilization: StabilizationParams,
    pub collision: CollisionParams,
    pub warm_start: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.002,
            pgs: PgsParams::default(),
            refine_iter: 20,
            stabilization: StabilizationParams::default(),
            collision: CollisionParams::default(),
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub body: usize,
    pub obstacle: Obstacle,
    pub world_point: [f64; 3],
    pub normal: [f64; 3],
    pub penetration_depth: f64,
    pub normal_impulse: f64,
    /// Normal impulse divided by the step length.
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub time: f64,
    pub num_rows: usize,
    pub iterations: usize,
    pub pgs_iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub active_tags: Vec<RowTag>,
    pub contacts: Vec<ContactReport>,
    pub max_penetration: f64,
    /// Multiplier of the balance row, when one was supplied.
    pub balance_multiplier: Option<f64>,
    /// `J^T z` of the balance row.
    pub balance_torque_norm: f64,
}

/// Owns the solver warm-start cache between steps.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub skeleton: Skeleton,
    pub world: WorldDef,
    pub params: SimParams,
    warm: BTreeMap<RowKey, f64>,
    last_problem: Option<MlcpProblem>,
}

impl Simulator {
    pub fn new(skeleton: Skeleton, world: WorldDef, params: SimParams) -> Result<Self> {
        world.validate()?;
        if !(params.dt > 0.0) {
            return Err(Error::InvalidWorld(format!(
                "time step must be positive, got {}",
                params.dt
            )));
        }
        Ok(Self {
            skeleton,
            world,
            params,
            warm: BTreeMap::new(),
            last_problem: None,
        })
    }

    pub fn reset_warm_start(&mut self) {
        self.warm.clear();
    }

    /// Problem solved by the most recent step.
    pub fn last_problem(&self) -> Option<&MlcpProblem> {
        self.last_problem.as_ref()
    }

    /// Advances one step with generalized forces `torque` and an optional
    /// externally built balance row.
    pub fn step(
        &mut self,
        state: &SimState,
        torque: &DVector<f64>,
        balance_row: Option<ConstraintRow>,
    ) -> Result<(SimState, StepReport)> {
        let sk = &self.skeleton;
        let dt = self.params.dt;
        let js = &state.joint_state;
        let cache = FrameCache::new(sk, js)?;
        if torque.len() != sk.nv() {
            return Err(Error::StateSize {
                what: "torque",
                expected: sk.nv(),
                got: torque.len(),
            });
        }
        let gravity = self.world.gravity();
        let m = mass_matrix_cached(sk, &cache);
        let chol = factor_mass_matrix(&m)?;
        let bias = bias_forces_cached(sk, &cache, &js.dq, &gravity);

        let anchored = state.anchored_bodies();
        let contacts =
            detect_contacts_cached(sk, &cache, &self.world, &self.params.collision, &anchored);
        let stab = &self.params.stabilization;
        let mut rows = contact_rows(sk, &cache, &contacts, stab, dt, 0);
        rows.extend(joint_limit_rows(sk, js, stab, dt));
        for a in &state.anchored_feet {
            rows.extend(anchor_rows(
                sk,
                &cache,
                a.body,
                &Transform::from(a.pose),
                stab,
                dt,
            ));
        }
        rows.extend(balance_row);

        let assembled = assemble_constraints(&chol, &js.dq, torque, &bias, rows, dt)?;
        let problem = &assembled.problem;
        let (solution, pgs_iterations) =
            solve_rows(&self.params, &self.warm, problem, &assembled.rows)?;

        let mut v_new = assembled.velocity(&solution.z);
        let q_new = integrate(sk, &js.q, &v_new, dt);
        let mut next = JointState {
            q: q_new,
            dq: v_new.clone(),
        };
        next.normalize(sk);

        let external = assembled
            .rows
            .iter()
            .zip(solution.z.iter())
            .any(|(r, &z)| z != 0.0 && is_external(r));
        if !external && sk.joints[sk.root_body].kind == JointKind::Free {
            v_new = self.conserve_momentum(&cache, js, &next, torque, &v_new)?;
            next.dq = v_new;
        }

        if self.params.warm_start {
            self.warm = assembled
                .rows
                .iter()
                .zip(solution.z.iter())
                .map(|(r, &z)| (r.key, z))
                .collect();
        }

        let mut active_tags: Vec<RowTag> = assembled
            .rows
            .iter()
            .zip(solution.z.iter())
            .filter(|(_, z)| **z != 0.0)
            .map(|(r, _)| r.tag)
            .collect();
        active_tags.sort();
        active_tags.dedup();

        let mut contact_reports = Vec::with_capacity(contacts.len());
        let mut normal_index = 0;
        for (k, r) in assembled.rows.iter().enumerate() {
            if r.tag == RowTag::ContactNormal {
                let c: &ContactPoint = &contacts[normal_index];
                normal_index += 1;
                contact_reports.push(ContactReport {
                    body: c.body,
                    obstacle: c.obstacle,
                    world_point: c.world_point,
                    normal: c.normal,
                    penetration_depth: c.penetration_depth,
                    normal_impulse: solution.z[k],
                    force: solution.z[k] / dt,
                });
            }
        }
        let balance_index = assembled.rows.iter().position(|r| r.tag == RowTag::Balance);
        let balance_multiplier = balance_index.map(|k| solution.z[k]);
        let balance_torque_norm = balance_index
            .map(|k| assembled.rows[k].jacobian_row.norm() * solution.z[k].abs() / dt)
            .unwrap_or(0.0);

        let report = StepReport {
            time: state.time + dt,
            num_rows: assembled.rows.len(),
            iterations: solution.iterations,
            pgs_iterations,
            residual: solution.residual,
            converged: solution.converged,
            active_tags,
            max_penetration: contacts
                .iter()
                .map(|c| c.penetration_depth)
                .fold(0.0, f64::max),
            contacts: contact_reports,
            balance_multiplier,
            balance_torque_norm,
        };
        self.last_problem = Some(assembled.problem);
        Ok((
            SimState {
                joint_state: next,
                time: state.time + dt,
                support_mode: state.support_mode,
                anchored_feet: state.anchored_feet.clone(),
            },
            report,
        ))
    }

    /// Replaces the root velocity so the spatial momentum about the origin
    /// changes exactly by the external impulse of the step.
    fn conserve_momentum(
        &self,
        cache: &FrameCache,
        before: &JointState,
        after: &JointState,
        torque: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let sk = &self.skeleton;
        let dt = self.params.dt;
        let h0 = spatial_momentum(sk, cache, &before.dq);
        let mass = sk.total_mass();
        let com = cache.center_of_mass(sk);
        let g = self.world.gravity() * mass;
        let gravity_wrench = Vector6::new(0.0, 0.0, 0.0, g.x, g.y, g.z);
        let mut wrench = gravity_wrench;
        let gc = com.cross(&g);
        wrench.fixed_rows_mut::<3>(0).copy_from(&gc);

        // Root generalized force as a spatial force: tau_root = S^T f.
        let ro = sk.v_offset(sk.root_body);
        let s0 = cache.motion.fixed_view::<6, 6>(0, ro).into_owned();
        let tau_root = torque.fixed_rows::<6>(ro).into_owned();
        let f_root = s0
            .transpose()
            .lu()
            .solve(&tau_root)
            .ok_or(Error::SingularMassMatrix)?;
        let target = h0 + (wrench + f_root) * dt;

        let cache1 = FrameCache::new(sk, after)?;
        let h1 = spatial_momentum(sk, &cache1, v);
        let composite: Matrix6<f64> = body_spatial_inertias(sk, &cache1).iter().sum();
        let s1 = cache1.motion.fixed_view::<6, 6>(0, ro).into_owned();
        let a = composite * s1;
        let delta = a
            .lu()
            .solve(&(target - h1))
            .ok_or(Error::SingularMassMatrix)?;
        let mut out = v.clone();
        for k in 0..6 {
            out[ro + k] += delta[k];
        }
        Ok(out)
    }
}

/// PGS, then active-set refinement if PGS stopped short. Also returns the
/// PGS sweep count.
fn solve_rows(
    params: &SimParams,
    warm: &BTreeMap<RowKey, f64>,
    problem: &MlcpProblem,
    rows: &[ConstraintRow],
) -> Result<(MlcpSolution, usize)> {
    let initial = params.warm_start.then(|| {
        DVector::from_iterator(
            rows.len(),
            rows.iter()
                .map(|r| warm.get(&r.key).copied().unwrap_or(0.0)),
        )
    });
    let pgs = solve_pgs_warm(
        problem,
        params.pgs.max_iter,
        params.pgs.tol,
        initial.as_ref(),
    )?;
    if pgs.converged || params.refine_iter == 0 {
        let n = pgs.iterations;
        return Ok((pgs, n));
    }
    let pgs_iterations = pgs.iterations;
    let refined = refine_active_set(problem, &pgs.z, params.refine_iter, params.pgs.tol);
    let mut best = if refined.residual < pgs.residual {
        refined
    } else {
        pgs
    };
    best.iterations += pgs_iterations;
    Ok((best, pgs_iterations))
}

fn is_external(row: &ConstraintRow) -> bool {
    match row.tag {
        RowTag::ContactNormal | RowTag::Friction => !matches!(
            row.key,
            RowKey::Contact {
                obstacle: Obstacle::Body(..),
                ..
            } | RowKey::Friction {
                obstacle: Obstacle::Body(..),
                ..
            }
        ),
        RowTag::JointLimit => false,
        RowTag::FootAnchor | RowTag::Balance => true,
    }
}

/// Center of mass velocity, a convenience for reports.
pub fn com_velocity(skeleton: &Skeleton, state: &JointState) -> Result<Vector3<f64>> {
    let cache = FrameCache::new(skeleton, state)?;
    let v = cache.com_jacobian(skeleton) * &state.dq;
    Ok(Vector3::new(v[0], v[1], v[2]))
}
