//! Target trajectories: JSON-lines files of timestamped poses, sampled with
//! linear interpolation and slerp.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use manikin_core::math::{quat_from_xyzw, quat_norm, quat_to_xyzw};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub pos: [f64; 3],
    #[serde(default = "identity")]
    pub quat: [f64; 4],
}

fn identity() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Line {
    t: f64,
    target_id: String,
    pos: [f64; 3],
    #[serde(default = "identity")]
    quat: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTrajectory {
    pub target_id: String,
    pub samples: Vec<Sample>,
}

impl TargetTrajectory {
    pub fn new(target_id: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let t = Self {
            target_id: target_id.into(),
            samples,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Trajectory(self.target_id.clone(), m));
        if self.samples.is_empty() {
            return err("no samples".into());
        }
        for (k, s) in self.samples.iter().enumerate() {
            if !s.t.is_finite() || s.pos.iter().chain(&s.quat).any(|v| !v.is_finite()) {
                return err(format!("sample {k} is not finite"));
            }
            if (quat_norm(s.quat) - 1.0).abs() > 1e-6 {
                return err(format!("sample {k} quaternion is not unit length"));
            }
            if k > 0 && !(s.t > self.samples[k - 1].t) {
                return err(format!("timestamps must increase strictly at sample {k}"));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Pose at time `t`, held constant outside the sampled range.
    pub fn sample(&self, t: f64) -> ([f64; 3], [f64; 4]) {
        let s = &self.samples;
        let k = s.partition_point(|x| x.t <= t);
        if k == 0 {
            return (s[0].pos, s[0].quat);
        }
        if k == s.len() {
            return (s[k - 1].pos, s[k - 1].quat);
        }
        let (a, b) = (&s[k - 1], &s[k]);
        let u = (t - a.t) / (b.t - a.t);
        let pos = Vector3::from(a.pos).lerp(&Vector3::from(b.pos), u);
        let qa = quat_from_xyzw(a.quat);
        let qb = quat_from_xyzw(b.quat);
        let q = qa.try_slerp(&qb, u, 1e-12).unwrap_or(qa);
        (pos.into(), quat_to_xyzw(&q))
    }
}

/// Parses JSON lines, grouping samples by target in order of first appearance.
pub fn parse_jsonl(text: &str, origin: &str) -> Result<Vec<TargetTrajectory>> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !groups.contains_key(&line.target_id) {
            order.push(line.target_id.clone());
        }
        groups.entry(line.target_id).or_default().push(Sample {
            t: line.t,
            pos: line.pos,
            quat: line.quat,
        });
    }
    order
        .into_iter()
        .map(|id| {
            let samples = groups.remove(&id).unwrap_or_default();
            TargetTrajectory::new(id, samples)
        })
        .collect()
}

pub fn load_jsonl(path: &Path) -> Result<Vec<TargetTrajectory>> {
    parse_jsonl(&crate::assets::read(path)?, &path.display().to_string())
}

pub fn write_jsonl(trajectories: &[TargetTrajectory], out: &mut impl Write) -> Result<()> {
    for tr in trajectories {
        for s in &tr.samples {
            let line = Line {
                t: s.t,
                target_id: tr.target_id.clone(),
                pos: s.pos,
                quat: s.quat,
            };
            writeln!(out, "{}", serde_json::to_string(&line)?)?;
        }
    }
    Ok(())
}

/// Naive retargeting by uniform scaling about a ground reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetMap {
    pub source_skeleton: String,
    pub dest_skeleton: String,
    /// Destination over source height.
    pub scale: f64,
    /// Body whose standing ground projection is the fixed point of the scaling.
    pub root_reference: usize,
    #[serde(default)]
    pub root_point: [f64; 3],
}

impl RetargetMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Config(format!(
                "retarget scale must be > 0, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Self {
        Self {
            source_skeleton: self.dest_skeleton.clone(),
            dest_skeleton: self.source_skeleton.clone(),
            scale: 1.0 / self.scale,
            ..self.clone()
        }
    }
}

/// `p' = root + s (p − root)`; orientations and timestamps unchanged.
pub fn retarget(trajectory: &TargetTrajectory, map: &RetargetMap) -> TargetTrajectory {
    let root = Vector3::from(map.root_point);
    TargetTrajectory {
        target_id: trajectory.target_id.clone(),
        samples: trajectory
            .samples
            .iter()
            .map(|s| Sample {
                pos: (root + (Vector3::from(s.pos) - root) * map.scale).into(),
                ..*s
            })
            .collect(),
    }
}
