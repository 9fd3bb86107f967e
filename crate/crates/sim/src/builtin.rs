//! Scenarios shipped with the crate. Positions that depend on the manikin's
//! geometry are computed from its initial pose.

use std::collections::BTreeMap;

use manikin_core::balance::BalanceParams;
use manikin_core::control::{Gains, GuideKind, VirtualGuide};
use manikin_core::kinematics::FrameCache;
use manikin_core::math::quat_to_xyzw;
use nalgebra::{UnitQuaternion, Vector3};

use crate::config::{
    HardLimits, MetricsSpec, Outputs, PostureConfig, RetargetSpec, ScenarioConfig, TargetSpec,
    ToolSpec, TrajectorySource,
};
use crate::error::{Error, Result};
use crate::trajectory::Sample;

pub const NAMES: [&str; 6] = [
    "stand_settle",
    "table_lean",
    "drill_guide_on",
    "drill_guide_off",
    "balance_dwarf_on",
    "balance_dwarf_off",
];

pub const DT: f64 = 0.002;

/// Amplitude and frequency of the scripted operator wobble in the drill scenarios.
pub const WOBBLE_AMPLITUDE: f64 = 0.05;
pub const WOBBLE_HZ: f64 = 0.5;
/// Distance from the hand to the point the operator aims the drill at.
const DRILL_PIVOT: f64 = 0.2;

pub fn names() -> &'static [&'static str] {
    &NAMES
}

pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    match name {
        "stand_settle" => stand_settle(),
        "table_lean" => table_lean(),
        "drill_guide_on" => drill(true),
        "drill_guide_off" => drill(false),
        "balance_dwarf_on" => balance_dwarf(true),
        "balance_dwarf_off" => balance_dwarf(false),
        _ => Err(Error::UnknownScenario {
            name: name.to_string(),
            valid: NAMES.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

pub fn all() -> Result<Vec<ScenarioConfig>> {
    NAMES.iter().map(|n| builtin(n)).collect()
}

fn base(name: &str, skeleton: &str, world: &str, duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        skeleton: skeleton.into(),
        world: world.into(),
        targets: Vec::new(),
        guides: Vec::new(),
        trajectories: Vec::new(),
        retarget: None,
        balance: BalanceParams::default(),
        posture: PostureConfig::default(),
        support: vec!["foot_l".into(), "foot_r".into()],
        initial_pose: BTreeMap::new(),
        duration,
        dt: DT,
        seed: 0,
        initial_noise: 0.0,
        metrics: MetricsSpec::default(),
        limits: HardLimits::default(),
        outputs: Outputs::default(),
    }
}

fn target(id: &str, body: &str, body_point: [f64; 3]) -> TargetSpec {
    TargetSpec {
        id: id.into(),
        body: body.into(),
        body_point,
        position: None,
        orientation: None,
        hold_orientation: false,
        stiffness: Gains {
            linear: 2000.0,
            angular: 100.0,
        },
        damping: None,
        max_force: 400.0,
        max_torque: 60.0,
        enabled: true,
    }
}

/// World position of `point` on `body` and the body's orientation in the
/// initial pose of `config`.
fn initial_frame(
    config: &ScenarioConfig,
    body: &str,
    point: [f64; 3],
) -> Result<(Vector3<f64>, UnitQuaternion<f64>)> {
    let sc = config.resolve(None)?;
    let b = sc
        .skeleton
        .body_index(body)
        .ok_or_else(|| Error::UnknownBody(body.into()))?;
    let cache = FrameCache::new(&sc.skeleton, &sc.initial.joint_state)?;
    let pose = cache.body_pose[b];
    Ok((
        pose.transform_point(&Vector3::from(point).into()).coords,
        pose.rotation,
    ))
}

fn sample(t: f64, p: Vector3<f64>, q: &UnitQuaternion<f64>) -> Sample {
    Sample {
        t,
        pos: p.into(),
        quat: quat_to_xyzw(q),
    }
}

/// Quiet double-support stance with slightly perturbed joints.
fn stand_settle() -> Result<ScenarioConfig> {
    let mut c = base(
        "stand_settle",
        "manikin_default.json",
        "worlds/flat.json",
        5.0,
    );
    c.seed = 7;
    c.initial_noise = 0.02;
    Ok(c)
}

const HAND_CENTER: [f64; 3] = [0.0, 0.0, -0.07];

/// The right hand starts above a table and is driven below its surface.
fn table_lean() -> Result<ScenarioConfig> {
    let mut c = base(
        "table_lean",
        "manikin_default.json",
        "worlds/table.json",
        4.0,
    );
    c.initial_pose
        .insert("upper_arm_r".into(), vec![0.0, -0.3, 0.0]);
    c.initial_pose.insert("forearm_r".into(), vec![1.5]);
    let (p0, q0) = initial_frame(&c, "hand_r", HAND_CENTER)?;
    let y = p0.y;
    let waypoints = [
        (0.0, p0),
        (0.8, Vector3::new(0.35, y, 1.0)),
        (1.8, Vector3::new(0.35, y, 0.78)),
        (4.0, Vector3::new(0.35, y, 0.78)),
    ];
    c.targets.push(target("hand_r", "hand_r", HAND_CENTER));
    c.trajectories.push(TrajectorySource::Inline {
        target_id: "hand_r".into(),
        samples: waypoints.iter().map(|(t, p)| sample(*t, *p, &q0)).collect(),
    });
    c.metrics.tagged_bodies = vec!["hand_r".into()];
    c.metrics.obstacles = vec!["table".into()];
    Ok(c)
}

/// Right forearm held level in front of the body, drilling along +x while
/// the operator's hand wobbles sideways and yaws with the offset.
fn drill(guided: bool) -> Result<ScenarioConfig> {
    let name = if guided {
        "drill_guide_on"
    } else {
        "drill_guide_off"
    };
    let mut c = base(name, "manikin_default.json", "worlds/flat.json", 6.0);
    c.initial_pose
        .insert("upper_arm_r".into(), vec![0.0, -1.2, 0.0]);
    c.initial_pose.insert("forearm_r".into(), vec![0.37]);
    let (p0, r0) = initial_frame(&c, "hand_r", HAND_CENTER)?;
    let axis = Vector3::x();
    let side = Vector3::y();

    let mut t = target("drill", "hand_r", HAND_CENTER);
    t.hold_orientation = true;
    c.targets.push(t);
    let rate = 50.0;
    let samples = (0..=(c.duration * rate) as usize)
        .map(|k| {
            let t = k as f64 / rate;
            let offset = WOBBLE_AMPLITUDE * (2.0 * std::f64::consts::PI * WOBBLE_HZ * t).sin();
            let feed = 0.05 * t / c.duration;
            let yaw =
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -(offset / DRILL_PIVOT).atan());
            sample(t, p0 + axis * feed + side * offset, &(yaw * r0))
        })
        .collect();
    c.trajectories.push(TrajectorySource::Inline {
        target_id: "drill".into(),
        samples,
    });
    c.guides.push(VirtualGuide {
        id: "drill_axis".into(),
        target: "drill".into(),
        kind: GuideKind::AxisLine {
            point: p0.into(),
            direction: axis.into(),
            orientation: quat_to_xyzw(&r0),
        },
        proxy_stiffness: None,
        proxy_damping: None,
        enabled: guided,
    });
    c.metrics.tool = Some(ToolSpec {
        target: "drill".into(),
        axis: (r0.inverse() * axis).into(),
        ideal_axis: axis.into(),
    });
    Ok(c)
}

/// A reach recorded on the giant, naively scaled onto the dwarf.
fn balance_dwarf(balanced: bool) -> Result<ScenarioConfig> {
    let name = if balanced {
        "balance_dwarf_on"
    } else {
        "balance_dwarf_off"
    };
    let mut c = base(name, "manikin_dwarf.json", "worlds/flat.json", 5.0);
    c.balance.enabled = balanced;
    c.posture = PostureConfig {
        stiffness: 25.0,
        damping: 10.0,
        ..PostureConfig::default()
    };
    let mut t = target("hand_r", "hand_r", [0.0, 0.0, -0.035]);
    t.stiffness.linear = 300.0;
    t.max_force = 60.0;
    c.targets.push(t);
    c.retarget = Some(RetargetSpec {
        source_skeleton: "manikin_giant.json".into(),
        scale: None,
        root_reference: "pelvis".into(),
    });
    c.trajectories.push(TrajectorySource::File {
        path: "trajectories/giant_reach.jsonl".into(),
        retarget: true,
    });
    c.metrics.tagged_bodies = vec!["hand_r".into()];
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_builtins() {
        let err = builtin("nope").unwrap_err().to_string();
        for n in NAMES {
            assert!(err.contains(n), "{err}");
        }
    }
}
