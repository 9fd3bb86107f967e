//! Scenario configuration files and their resolution into runnable scenarios.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use manikin_core::balance::BalanceParams;
use manikin_core::control::{Gains, PostureGoal, TaskTarget, VirtualGuide};
use manikin_core::dynamics::{anchor_feet, ground_clearance, mass_matrix, SimState, WorldDef};
use manikin_core::kinematics::{FrameCache, JointKind, JointState, Skeleton};
use manikin_core::math::{exp_rotation, quat_norm, quat_to_xyzw};
use nalgebra::{Cholesky, DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assets;
use crate::error::{Error, Result};
use crate::trajectory::{load_jsonl, retarget, RetargetMap, Sample, TargetTrajectory};

/// Task target as written in a config file; bodies are referenced by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: String,
    pub body: String,
    #[serde(default)]
    pub body_point: [f64; 3],
    /// Initial desired position; the point's starting world position if absent.
    #[serde(default)]
    pub position: Option<[f64; 3]>,
    #[serde(default)]
    pub orientation: Option<[f64; 4]>,
    /// Controls orientation, starting from the body's initial orientation.
    #[serde(default)]
    pub hold_orientation: bool,
    #[serde(default = "default_stiffness")]
    pub stiffness: Gains,
    /// Critically damped for the initial effective mass when absent.
    #[serde(default)]
    pub damping: Option<Gains>,
    #[serde(default = "default_max_force")]
    pub max_force: f64,
    #[serde(default = "default_max_torque")]
    pub max_torque: f64,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn default_stiffness() -> Gains {
    Gains {
        linear: 2000.0,
        angular: 100.0,
    }
}

fn default_max_force() -> f64 {
    400.0
}

fn default_max_torque() -> f64 {
    60.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TrajectorySource {
    /// JSON-lines file; retargeted when the scenario declares a retarget map.
    File {
        path: String,
        #[serde(default)]
        retarget: bool,
    },
    Inline {
        target_id: String,
        samples: Vec<Sample>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetSpec {
    pub source_skeleton: String,
    /// Destination over source standing height when absent.
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default = "default_root")]
    pub root_reference: String,
}

fn default_root() -> String {
    "pelvis".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostureConfig {
    pub enabled: bool,
    /// 1/s², applied through the mass matrix.
    pub stiffness: f64,
    /// 1/s.
    pub damping: f64,
    pub gravity_compensation: bool,
}

impl Default for PostureConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            stiffness: 400.0,
            damping: 40.0,
            gravity_compensation: true,
        }
    }
}

/// Tool whose axis is compared against an ideal direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub target: String,
    /// Tool axis in the target body's frame.
    pub axis: [f64; 3],
    /// Ideal world direction.
    pub ideal_axis: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSpec {
    pub tool: Option<ToolSpec>,
    /// Bodies whose lowest point height is recorded.
    pub tagged_bodies: Vec<String>,
    /// World boxes whose top height is recorded.
    pub obstacles: Vec<String>,
}

/// Violations that make a run fail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardLimits {
    pub max_penetration: f64,
    pub max_limit_violation: f64,
}

impl Default for HardLimits {
    fn default() -> Self {
        Self {
            max_penetration: 0.01,
            max_limit_violation: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Outputs {
    pub metrics: Option<String>,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub skeleton: String,
    pub world: String,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub guides: Vec<VirtualGuide>,
    #[serde(default)]
    pub trajectories: Vec<TrajectorySource>,
    #[serde(default)]
    pub retarget: Option<RetargetSpec>,
    #[serde(default)]
    pub balance: BalanceParams,
    #[serde(default)]
    pub posture: PostureConfig,
    /// Feet welded to the ground at the start.
    #[serde(default = "default_support")]
    pub support: Vec<String>,
    /// Joint coordinates by body name: a rotation vector for spherical
    /// joints, one angle for revolute joints.
    #[serde(default)]
    pub initial_pose: BTreeMap<String, Vec<f64>>,
    pub duration: f64,
    pub dt: f64,
    /// Seeds the initial joint noise.
    #[serde(default)]
    pub seed: u64,
    /// Amplitude of uniform noise added to the initial joint coordinates.
    #[serde(default)]
    pub initial_noise: f64,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default)]
    pub limits: HardLimits,
    #[serde(default)]
    pub outputs: Outputs,
}

fn default_support() -> Vec<String> {
    vec!["foot_l".into(), "foot_r".into()]
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&assets::read(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn frames(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Pre-flight checks that need no simulation.
    pub fn validate(&self, base: Option<&Path>) -> Result<()> {
        self.resolve(base).map(|_| ())
    }

    pub fn resolve(&self, base: Option<&Path>) -> Result<Scenario> {
        let cfg = |m: String| Error::Config(format!("{}: {m}", self.name));
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(cfg(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(self.dt > 0.0) || !(self.dt <= self.duration) {
            return Err(cfg(format!("dt must be in (0, duration], got {}", self.dt)));
        }
        if self.initial_noise < 0.0 {
            return Err(cfg("initial_noise must be >= 0".into()));
        }
        if !(self.balance.beta > 0.0 && self.balance.beta <= 1.0) {
            return Err(cfg(format!(
                "balance beta must be in (0, 1], got {}",
                self.balance.beta
            )));
        }
        let skeleton = assets::load_skeleton(&self.skeleton, base)?;
        let world = assets::load_world(&self.world, base)?;
        let body = |name: &str| {
            skeleton
                .body_index(name)
                .ok_or_else(|| Error::UnknownBody(name.to_string()))
        };

        let support: Vec<usize> = self
            .support
            .iter()
            .map(|n| body(n))
            .collect::<Result<_>>()?;
        let joint_state = self.initial_state(&skeleton, &world, &support)?;
        let mut state = SimState::new(joint_state.clone());
        if !support.is_empty() {
            state = anchor_feet(&skeleton, &state, &world, &support)?;
        }

        let cache = FrameCache::new(&skeleton, &joint_state)?;
        let chol = Cholesky::new(mass_matrix(&skeleton, &joint_state)?)
            .ok_or(manikin_core::Error::SingularMassMatrix)?;
        let mut ids = BTreeSet::new();
        let mut targets = Vec::new();
        for spec in &self.targets {
            if !ids.insert(spec.id.clone()) {
                return Err(cfg(format!("duplicate target id `{}`", spec.id)));
            }
            let t = resolve_target(spec, body(&spec.body)?, &skeleton, &cache, &chol, self.dt)?;
            t.validate(&skeleton)?;
            targets.push(t);
        }
        for g in &self.guides {
            g.validate()?;
            if !ids.contains(&g.target) {
                return Err(manikin_core::Error::DanglingGuide {
                    guide: g.id.clone(),
                    target: g.target.clone(),
                }
                .into());
            }
        }

        let retarget_map = match &self.retarget {
            Some(spec) => Some(self.resolve_retarget(spec, &skeleton, base)?),
            None => None,
        };
        let mut trajectories = Vec::new();
        for src in &self.trajectories {
            match src {
                TrajectorySource::File { path, retarget: rt } => {
                    let p = assets::resolve(path, base)
                        .ok_or_else(|| cfg(format!("trajectory file `{path}` not found")))?;
                    for tr in load_jsonl(&p)? {
                        let tr = match (rt, &retarget_map) {
                            (true, Some(map)) => retarget(&tr, map),
                            (true, None) => {
                                return Err(cfg(format!(
                                    "`{path}` asks for retargeting without a retarget map"
                                )))
                            }
                            _ => tr,
                        };
                        trajectories.push(tr);
                    }
                }
                TrajectorySource::Inline { target_id, samples } => {
                    trajectories.push(TargetTrajectory::new(target_id.clone(), samples.clone())?);
                }
            }
        }
        for tr in &trajectories {
            if !ids.contains(&tr.target_id) {
                return Err(cfg(format!(
                    "trajectory drives unknown target `{}`",
                    tr.target_id
                )));
            }
        }

        let posture = self.posture.enabled.then(|| PostureGoal {
            gravity_compensation: self.posture.gravity_compensation,
            ..PostureGoal::uniform(
                &skeleton,
                joint_state.q.clone(),
                self.posture.stiffness,
                self.posture.damping,
            )
        });

        let tool = match &self.metrics.tool {
            Some(t) => {
                let target = targets
                    .iter()
                    .position(|x| x.id == t.target)
                    .ok_or_else(|| cfg(format!("tool references unknown target `{}`", t.target)))?;
                let axis = Vector3::from(t.axis);
                let ideal = Vector3::from(t.ideal_axis);
                if axis.norm() < 1e-12 || ideal.norm() < 1e-12 {
                    return Err(cfg("tool axes must be nonzero".into()));
                }
                Some(ResolvedTool {
                    target,
                    axis: axis.normalize(),
                    ideal_axis: ideal.normalize(),
                })
            }
            None => None,
        };
        let tagged_bodies = self
            .metrics
            .tagged_bodies
            .iter()
            .map(|n| Ok((n.clone(), body(n)?)))
            .collect::<Result<Vec<_>>>()?;
        let obstacles = self
            .metrics
            .obstacles
            .iter()
            .map(|n| {
                world
                    .boxes
                    .iter()
                    .find(|b| b.name.as_deref() == Some(n.as_str()))
                    .map(|b| (n.clone(), b.top()))
                    .ok_or_else(|| cfg(format!("unknown obstacle `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Scenario {
            name: self.name.clone(),
            skeleton,
            world,
            targets,
            guides: self.guides.clone(),
            trajectories,
            posture,
            balance: self.balance,
            initial: state,
            dt: self.dt,
            frames: self.frames(),
            tool,
            tagged_bodies,
            obstacles,
            limits: self.limits,
            retarget: retarget_map,
        })
    }

    /// Joint coordinates from `initial_pose` and noise, with the root lowered
    /// until the lowest support foot touches the ground.
    fn initial_state(
        &self,
        skeleton: &Skeleton,
        world: &WorldDef,
        support: &[usize],
    ) -> Result<JointState> {
        let mut st = JointState::neutral(skeleton);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut noise = |a: f64| if a > 0.0 { rng.gen_range(-a..a) } else { 0.0 };
        for (i, j) in skeleton.joints.iter().enumerate() {
            let set = self.initial_pose.get(&skeleton.bodies[i].name);
            match j.kind {
                JointKind::Free => {
                    if set.is_some() {
                        return Err(Error::Config(format!(
                            "initial_pose cannot set the root `{}`",
                            skeleton.bodies[i].name
                        )));
                    }
                }
                JointKind::Spherical => {
                    let mut v = match set {
                        Some(v) if v.len() == 3 => Vector3::new(v[0], v[1], v[2]),
                        Some(v) => {
                            return Err(Error::Config(format!(
                                "spherical joint `{}` needs 3 values, got {}",
                                skeleton.bodies[i].name,
                                v.len()
                            )))
                        }
                        None => Vector3::zeros(),
                    };
                    v += Vector3::from_fn(|_, _| noise(self.initial_noise));
                    st.set_rotation(skeleton, i, &exp_rotation(&v));
                }
                JointKind::Revolute => {
                    let a = match set {
                        Some(v) if v.len() == 1 => v[0],
                        Some(v) => {
                            return Err(Error::Config(format!(
                                "revolute joint `{}` needs 1 value, got {}",
                                skeleton.bodies[i].name,
                                v.len()
                            )))
                        }
                        None => 0.0,
                    };
                    st.set_angle(skeleton, i, a + noise(self.initial_noise));
                }
            }
        }
        for name in self.initial_pose.keys() {
            if skeleton.body_index(name).is_none() {
                return Err(Error::UnknownBody(name.clone()));
            }
        }
        if !support.is_empty() {
            let mut gap = f64::INFINITY;
            for &f in support {
                gap = gap.min(ground_clearance(skeleton, &st, world, f)?);
            }
            st.q[2] -= gap;
        }
        Ok(st)
    }

    fn resolve_retarget(
        &self,
        spec: &RetargetSpec,
        dest: &Skeleton,
        base: Option<&Path>,
    ) -> Result<RetargetMap> {
        let source = assets::load_skeleton(&spec.source_skeleton, base)?;
        let root_reference = dest
            .body_index(&spec.root_reference)
            .ok_or_else(|| Error::UnknownBody(spec.root_reference.clone()))?;
        let scale = match spec.scale {
            Some(s) => s,
            None => standing_height(dest)? / standing_height(&source)?,
        };
        let map = RetargetMap {
            source_skeleton: source.name.clone(),
            dest_skeleton: dest.name.clone(),
            scale,
            root_reference,
            root_point: [0.0; 3],
        };
        map.validate()?;
        Ok(map)
    }
}

/// Top of the highest shape minus bottom of the lowest in the neutral pose.
pub fn standing_height(skeleton: &Skeleton) -> Result<f64> {
    let st = JointState::neutral(skeleton);
    let cache = FrameCache::new(skeleton, &st)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for b in 0..skeleton.num_bodies() {
        let (l, h) = crate::metrics::vertical_extent(skeleton, &cache, b);
        lo = lo.min(l);
        hi = hi.max(h);
    }
    if !(hi > lo) {
        return Err(Error::Config(format!(
            "skeleton `{}` has no geometry",
            skeleton.name
        )));
    }
    Ok(hi - lo)
}

/// Largest stiffness for which an explicit spring on mass `m` stays well
/// inside the stable range of the integrator: `ω dt ≤ 1/2`.
pub fn stiffness_bound(m: f64, dt: f64) -> f64 {
    m * (0.5 / dt).powi(2)
}

/// Smallest effective mass (or inertia) seen through the Jacobian rows `rows`.
fn min_effective_mass(jac: &DMatrix<f64>, chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let lambda_inv = jac * chol.solve(&jac.transpose());
    let top = lambda_inv.symmetric_eigen().eigenvalues.max();
    1.0 / top.max(1e-12)
}

fn resolve_target(
    spec: &TargetSpec,
    body: usize,
    skeleton: &Skeleton,
    cache: &FrameCache,
    chol: &Cholesky<f64, nalgebra::Dyn>,
    dt: f64,
) -> Result<TaskTarget> {
    let point = cache.body_pose[body]
        .transform_point(&Vector3::from(spec.body_point).into())
        .coords;
    let position = spec.position.unwrap_or(point.into());
    if let Some(q) = spec.orientation {
        if (quat_norm(q) - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "target `{}` orientation is not unit length",
                spec.id
            )));
        }
    }
    let orientation = spec.orientation.or_else(|| {
        spec.hold_orientation
            .then(|| quat_to_xyzw(&cache.body_pose[body].rotation))
    });
    let jac = cache.point_jacobian_world(skeleton, body, &point);
    let m_lin = min_effective_mass(&jac.rows(3, 3).into_owned(), chol);
    let m_ang = min_effective_mass(&jac.rows(0, 3).into_owned(), chol);
    let stiffness = Gains {
        linear: spec.stiffness.linear.min(stiffness_bound(m_lin, dt)),
        angular: spec.stiffness.angular.min(stiffness_bound(m_ang, dt)),
    };
    let damping = spec.damping.unwrap_or(Gains {
        linear: 2.0 * (stiffness.linear * m_lin).sqrt(),
        angular: 2.0 * (stiffness.angular * m_ang).sqrt(),
    });
    Ok(TaskTarget {
        id: spec.id.clone(),
        body,
        body_point: spec.body_point,
        position,
        orientation,
        stiffness,
        damping,
        max_force: spec.max_force,
        max_torque: spec.max_torque,
        enabled: spec.enabled,
    })
}

#[derive(Debug, Clone)]
pub struct ResolvedTool {
    pub target: usize,
    pub axis: Vector3<f64>,
    pub ideal_axis: Vector3<f64>,
}

/// A validated configuration with files loaded and names resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub skeleton: Skeleton,
    pub world: WorldDef,
    pub targets: Vec<TaskTarget>,
    pub guides: Vec<VirtualGuide>,
    pub trajectories: Vec<TargetTrajectory>,
    pub posture: Option<PostureGoal>,
    pub balance: BalanceParams,
    pub initial: SimState,
    pub dt: f64,
    pub frames: usize,
    pub tool: Option<ResolvedTool>,
    pub tagged_bodies: Vec<(String, usize)>,
    pub obstacles: Vec<(String, f64)>,
    pub limits: HardLimits,
    pub retarget: Option<RetargetMap>,
}

/// Directory a config file's relative paths are resolved against.
pub fn config_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
