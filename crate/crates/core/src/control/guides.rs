use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Gains, TaskTarget};
use crate::error::{Error, Result};
use crate::math::{quat_from_xyzw, quat_to_xyzw};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GuideKind {
    /// Position restricted to a line, orientation fixed.
    AxisLine {
        point: [f64; 3],
        direction: [f64; 3],
        orientation: [f64; 4],
    },
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
    },
    FixedOrientation {
        orientation: [f64; 4],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualGuide {
    pub id: String,
    pub target: String,
    #[serde(flatten)]
    pub kind: GuideKind,
    /// Gains of the coupling between the guided proxy and the body; the
    /// target's own gains are kept when absent.
    #[serde(default)]
    pub proxy_stiffness: Option<Gains>,
    #[serde(default)]
    pub proxy_damping: Option<Gains>,
    #[serde(default = "enabled")]
    pub enabled: bool,
}

fn enabled() -> bool {
    true
}

impl VirtualGuide {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: &[f64; 3], what: &str| {
            let n = Vector3::from(*v).norm();
            if (n - 1.0).abs() > 1e-9 {
                Err(Error::InvalidWorld(format!(
                    "guide `{}`: {what} must be unit length, got {n}",
                    self.id
                )))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            GuideKind::AxisLine { direction, .. } => unit(direction, "direction"),
            GuideKind::Plane { normal, .. } => unit(normal, "normal"),
            GuideKind::FixedOrientation { .. } => Ok(()),
        }
    }

    /// Closest admissible pose to `target`'s desired pose.
    pub fn project(&self, target: &TaskTarget) -> TaskTarget {
        let mut out = target.clone();
        let p = Vector3::from(target.position);
        match &self.kind {
            GuideKind::AxisLine {
                point,
                direction,
                orientation,
            } => {
                let o = Vector3::from(*point);
                let d = Vector3::from(*direction);
                out.position = snap(p, o + d * d.dot(&(p - o)));
                out.orientation = Some(normalized(orientation));
            }
            GuideKind::Plane { point, normal } => {
                let o = Vector3::from(*point);
                let n = Vector3::from(*normal);
                out.position = snap(p, p - n * n.dot(&(p - o)));
            }
            GuideKind::FixedOrientation { orientation } => {
                out.orientation = Some(normalized(orientation));
            }
        }
        if let Some(k) = self.proxy_stiffness {
            out.stiffness = k;
        }
        if let Some(d) = self.proxy_damping {
            out.damping = d;
        }
        out
    }
}

/// Keeps points already on the guide untouched so projection is idempotent.
fn snap(p: Vector3<f64>, projected: Vector3<f64>) -> [f64; 3] {
    if (projected - p).norm() <= 1e-12 * (1.0 + p.norm()) {
        p.into()
    } else {
        projected.into()
    }
}

fn normalized(q: &[f64; 4]) -> [f64; 4] {
    quat_to_xyzw(&quat_from_xyzw(*q))
}

/// Replaces each guided target's desired pose by its projection on the guide.
pub fn apply_guides(targets: &[TaskTarget], guides: &[VirtualGuide]) -> Result<Vec<TaskTarget>> {
    let mut out = targets.to_vec();
    for g in guides {
        let Some(t) = out.iter_mut().find(|t| t.id == g.target) else {
            return Err(Error::DanglingGuide {
                guide: g.id.clone(),
                target: g.target.clone(),
            });
        };
        if g.enabled {
            *t = g.project(t);
        }
    }
    Ok(out)
}
