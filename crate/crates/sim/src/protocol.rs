//! JSON messages exchanged with the viewer. Every message carries `"v": 1`.

use manikin_core::control::VirtualGuide;
use manikin_core::dynamics::WorldDef;
use manikin_core::kinematics::{FrameCache, Shape};
use manikin_core::math::quat_to_xyzw;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{Command, Session};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Envelope<T> {
    v: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Scene(Scene),
    Frame(Frame),
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBody {
    pub id: String,
    pub parent: Option<String>,
    pub mass: f64,
    pub shapes: Vec<Shape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportShape {
    pub center: [f64; 3],
    /// Horizontal block of the ellipse metric, row-major.
    pub q: [[f64; 2]; 2],
    pub d: f64,
}

/// Sent once per connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scenario: String,
    pub skeleton: String,
    pub bodies: Vec<SceneBody>,
    pub world: WorldDef,
    pub targets: Vec<String>,
    pub guides: Vec<VirtualGuide>,
    pub support: Option<SupportShape>,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyPose {
    pub id: String,
    pub pos: [f64; 3],
    pub quat: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub id: String,
    pub pos: [f64; 3],
    pub quat: Option<[f64; 4]>,
    /// Position after guide projection.
    pub guided_pos: [f64; 3],
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceState {
    pub delta_norm: Option<f64>,
    pub active: bool,
    pub enabled: bool,
    pub com: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactState {
    pub body: String,
    pub obstacle: String,
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub step: u64,
    pub paused: bool,
    pub bodies: Vec<BodyPose>,
    pub targets: Vec<TargetPose>,
    pub balance: BalanceState,
    pub contacts: Vec<ContactState>,
}

pub fn encode(message: &Outbound) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        v: VERSION,
        body: message,
    })?)
}

pub fn decode_outbound(text: &str) -> Result<Outbound> {
    let env: Envelope<Outbound> =
        serde_json::from_str(text).map_err(|e| Error::Protocol(e.to_string()))?;
    check_version(env.v)?;
    Ok(env.body)
}

pub fn encode_command(command: &Command) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        v: VERSION,
        body: command,
    })?)
}

pub fn decode_command(text: &str) -> Result<Command> {
    let env: Envelope<Command> =
        serde_json::from_str(text).map_err(|e| Error::Protocol(e.to_string()))?;
    check_version(env.v)?;
    Ok(env.body)
}

fn check_version(v: u32) -> Result<()> {
    if v != VERSION {
        return Err(Error::Protocol(format!(
            "unsupported protocol version {v}, expected {VERSION}"
        )));
    }
    Ok(())
}

pub fn scene(session: &Session) -> Scene {
    let sk = session.skeleton();
    let sc = session.scenario();
    Scene {
        scenario: sc.name.clone(),
        skeleton: sk.name.clone(),
        bodies: sk
            .bodies
            .iter()
            .enumerate()
            .map(|(i, b)| SceneBody {
                id: b.name.clone(),
                parent: sk.parent(i).map(|p| sk.bodies[p].name.clone()),
                mass: b.mass,
                shapes: b.shapes.clone(),
            })
            .collect(),
        world: sc.world.clone(),
        targets: session.targets().iter().map(|t| t.id.clone()).collect(),
        guides: session.guides().to_vec(),
        support: session.ellipse().map(|e| SupportShape {
            center: e.x_c.into(),
            q: [[e.q[(0, 0)], e.q[(0, 1)]], [e.q[(1, 0)], e.q[(1, 1)]]],
            d: e.d,
        }),
        dt: sc.dt,
    }
}

pub fn frame(session: &Session) -> Result<Frame> {
    let sk = session.skeleton();
    let state = session.state();
    let cache = FrameCache::new(sk, &state.joint_state)?;
    let report = session.last_report();
    Ok(Frame {
        t: state.time,
        step: session.steps(),
        paused: session.is_paused(),
        bodies: sk
            .bodies
            .iter()
            .zip(&cache.body_pose)
            .map(|(b, pose)| BodyPose {
                id: b.name.clone(),
                pos: pose.translation.vector.into(),
                quat: quat_to_xyzw(&pose.rotation),
            })
            .collect(),
        targets: session
            .targets()
            .iter()
            .zip(session.guided_targets())
            .map(|(t, g)| TargetPose {
                id: t.id.clone(),
                pos: t.position,
                quat: t.orientation,
                guided_pos: g.position,
                enabled: t.enabled,
            })
            .collect(),
        balance: BalanceState {
            delta_norm: session.delta_normalized(),
            active: report
                .and_then(|r| r.balance_multiplier)
                .is_some_and(|z| z > 0.0),
            enabled: session.balance().enabled,
            com: cache.center_of_mass(sk).into(),
        },
        contacts: report
            .map(|r| {
                r.contacts
                    .iter()
                    .filter(|c| c.force > 0.0)
                    .map(|c| ContactState {
                        body: sk.bodies[c.body].name.clone(),
                        obstacle: session.obstacle_name(c.obstacle),
                        point: c.world_point,
                        normal: c.normal,
                        force: c.force,
                    })
                    .collect()
            })
            .unwrap_or_default(),
    })
}
