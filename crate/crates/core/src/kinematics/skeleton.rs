use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{quat_norm, Transform, TransformDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointKind {
    #[serde(rename = "free6")]
    Free,
    #[serde(rename = "spherical3")]
    Spherical,
    #[serde(rename = "revolute1")]
    Revolute,
}

impl JointKind {
    /// Number of configuration entries.
    pub fn nq(self) -> usize {
        match self {
            JointKind::Free => 7,
            JointKind::Spherical => 4,
            JointKind::Revolute => 1,
        }
    }

    /// Number of velocity degrees of freedom.
    pub fn nv(self) -> usize {
        match self {
            JointKind::Free => 6,
            JointKind::Spherical => 3,
            JointKind::Revolute => 1,
        }
    }
}

/// Collision primitive, in body coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Capsule {
        a: [f64; 3],
        b: [f64; 3],
        radius: f64,
    },
    /// Box aligned with the body axes.
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
    },
}

impl Shape {
    pub fn scaled(&self, s: f64) -> Shape {
        let sc = |v: [f64; 3]| [v[0] * s, v[1] * s, v[2] * s];
        match self {
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: sc(*center),
                radius: radius * s,
            },
            Shape::Capsule { a, b, radius } => Shape::Capsule {
                a: sc(*a),
                b: sc(*b),
                radius: radius * s,
            },
            Shape::Box {
                center,
                half_extents,
            } => Shape::Box {
                center: sc(*center),
                half_extents: sc(*half_extents),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct BodyDef {
    pub name: String,
    pub mass: f64,
    /// Rotational inertia about the center of mass, body axes.
    pub inertia: Matrix3<f64>,
    pub com_offset: Vector3<f64>,
    pub shapes: Vec<Shape>,
}

/// Per-DoF position bounds in radians. Spherical joints bound the components
/// of the joint rotation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Joint connecting `parent` (or the world) to `child`.
///
/// The child pose is `X_parent * parent_frame * motion(q) * child_frame`.
#[derive(Debug, Clone)]
pub struct JointDef {
    pub name: String,
    pub kind: JointKind,
    pub parent: Option<usize>,
    pub child: usize,
    pub parent_frame: Transform,
    pub child_frame: Transform,
    /// Rotation axis of a revolute joint, in the joint frame.
    pub axis: Vector3<f64>,
    pub limits: Option<JointLimits>,
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    pub name: String,
    pub bodies: Vec<BodyDef>,
    /// `joints[i]` moves body `i`.
    pub joints: Vec<JointDef>,
    pub root_body: usize,
    q_offset: Vec<usize>,
    v_offset: Vec<usize>,
    nq: usize,
    nv: usize,
    /// Bodies from the root down to and including `i`.
    chains: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    total_mass: f64,
}

impl Skeleton {
    pub fn new(
        name: impl Into<String>,
        bodies: Vec<BodyDef>,
        mut joints: Vec<JointDef>,
    ) -> Result<Self> {
        let nb = bodies.len();
        if nb == 0 {
            return Err(Error::InvalidSkeleton("no bodies".into()));
        }
        if joints.len() != nb {
            return Err(Error::InvalidSkeleton(format!(
                "{} bodies but {} joints; every body needs exactly one parent joint",
                nb,
                joints.len()
            )));
        }
        let mut seen = vec![false; nb];
        for j in &joints {
            if j.child >= nb {
                return Err(Error::InvalidSkeleton(format!(
                    "joint `{}` child {} out of range",
                    j.name, j.child
                )));
            }
            if seen[j.child] {
                return Err(Error::InvalidSkeleton(format!(
                    "body {} has more than one parent joint",
                    j.child
                )));
            }
            seen[j.child] = true;
            if let Some(p) = j.parent {
                if p >= j.child {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint `{}`: parent {} must precede child {}",
                        j.name, p, j.child
                    )));
                }
            }
        }
        joints.sort_by_key(|j| j.child);

        let roots: Vec<usize> = joints
            .iter()
            .filter(|j| j.parent.is_none())
            .map(|j| j.child)
            .collect();
        if roots.len() != 1 {
            return Err(Error::InvalidSkeleton(format!(
                "expected one root joint, found {}",
                roots.len()
            )));
        }
        let root_body = roots[0];

        for (i, b) in bodies.iter().enumerate() {
            validate_body(i, b)?;
        }
        for j in &joints {
            validate_joint(j)?;
        }

        let mut q_offset = Vec::with_capacity(nb);
        let mut v_offset = Vec::with_capacity(nb);
        let (mut nq, mut nv) = (0, 0);
        for j in &joints {
            q_offset.push(nq);
            v_offset.push(nv);
            nq += j.kind.nq();
            nv += j.kind.nv();
        }

        let mut chains: Vec<Vec<usize>> = Vec::with_capacity(nb);
        let mut children = vec![Vec::new(); nb];
        for (i, j) in joints.iter().enumerate() {
            let mut chain = match j.parent {
                Some(p) => {
                    children[p].push(i);
                    chains[p].clone()
                }
                None => Vec::new(),
            };
            chain.push(i);
            chains.push(chain);
        }
        let total_mass = bodies.iter().map(|b| b.mass).sum();

        Ok(Self {
            name: name.into(),
            bodies,
            joints,
            root_body,
            q_offset,
            v_offset,
            nq,
            nv,
            chains,
            children,
            total_mass,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SkeletonFile = serde_json::from_str(text)?;
        file.into_skeleton()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SkeletonFile::from(self))?)
    }

    /// Configuration size (quaternion blocks count four entries).
    pub fn nq(&self) -> usize {
        self.nq
    }

    /// Degrees of freedom.
    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn num_bodies(&self) -> usize {
        self.bodies.len()
    }

    pub fn q_offset(&self, body: usize) -> usize {
        self.q_offset[body]
    }

    pub fn v_offset(&self, body: usize) -> usize {
        self.v_offset[body]
    }

    /// Velocity columns driven by the joint of `body`.
    pub fn v_range(&self, body: usize) -> std::ops::Range<usize> {
        let o = self.v_offset[body];
        o..o + self.joints[body].kind.nv()
    }

    /// Bodies from the root to `body`, inclusive.
    pub fn chain(&self, body: usize) -> &[usize] {
        &self.chains[body]
    }

    pub fn children(&self, body: usize) -> &[usize] {
        &self.children[body]
    }

    pub fn parent(&self, body: usize) -> Option<usize> {
        self.joints[body].parent
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn has_floating_base(&self) -> bool {
        self.joints[self.root_body].kind == JointKind::Free
    }

    pub fn body_index(&self, name: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.name == name)
    }

    /// Number of joints on the tree path between two bodies.
    pub fn joint_distance(&self, a: usize, b: usize) -> usize {
        let ca = &self.chains[a];
        let cb = &self.chains[b];
        let common = ca.iter().zip(cb).take_while(|(x, y)| x == y).count();
        (ca.len() - common) + (cb.len() - common)
    }

    /// Whether `ancestor` lies on the path from the root to `body` (inclusive).
    pub fn is_ancestor(&self, ancestor: usize, body: usize) -> bool {
        self.chains[body].contains(&ancestor)
    }

    /// Uniformly scaled copy: lengths by `s`, masses by `s^3`, inertias by `s^5`.
    pub fn scaled(&self, s: f64, name: impl Into<String>) -> Result<Self> {
        let bodies = self
            .bodies
            .iter()
            .map(|b| BodyDef {
                name: b.name.clone(),
                mass: b.mass * s.powi(3),
                inertia: b.inertia * s.powi(5),
                com_offset: b.com_offset * s,
                shapes: b.shapes.iter().map(|sh| sh.scaled(s)).collect(),
            })
            .collect();
        let scale_tf = |t: &Transform| {
            let mut t = *t;
            t.translation.vector *= s;
            t
        };
        let joints = self
            .joints
            .iter()
            .map(|j| JointDef {
                parent_frame: scale_tf(&j.parent_frame),
                child_frame: scale_tf(&j.child_frame),
                ..j.clone()
            })
            .collect();
        Skeleton::new(name, bodies, joints)
    }
}

fn validate_body(i: usize, b: &BodyDef) -> Result<()> {
    let bad = |msg: String| {
        Err(Error::InvalidSkeleton(format!(
            "body `{}` ({i}): {msg}",
            b.name
        )))
    };
    if !(b.mass > 0.0) || !b.mass.is_finite() {
        return bad(format!("mass must be > 0, got {}", b.mass));
    }
    let asym = (b.inertia - b.inertia.transpose()).abs().max();
    if asym > 1e-9 * b.inertia.abs().max().max(1e-12) {
        return bad("inertia tensor is not symmetric".into());
    }
    let eig = SymmetricEigen::new(b.inertia).eigenvalues;
    if eig.iter().any(|&e| e <= 0.0) {
        return bad("inertia tensor is not positive definite".into());
    }
    let tol = 1e-9 * eig.sum();
    for k in 0..3 {
        if eig[k] > eig[(k + 1) % 3] + eig[(k + 2) % 3] + tol {
            return bad("principal moments violate the triangle inequality".into());
        }
    }
    for s in &b.shapes {
        let r = match s {
            Shape::Sphere { radius, .. } | Shape::Capsule { radius, .. } => *radius,
            Shape::Box { half_extents, .. } => {
                half_extents.iter().cloned().fold(f64::MAX, f64::min)
            }
        };
        if !(r > 0.0) {
            return bad("shape dimensions must be positive".into());
        }
    }
    Ok(())
}

fn validate_joint(j: &JointDef) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidSkeleton(format!("joint `{}`: {msg}", j.name)));
    if j.kind == JointKind::Free {
        if j.parent.is_some() {
            return bad("free joints may only attach a body to the world".into());
        }
        if j.limits.is_some() {
            return bad("free joints take no limits".into());
        }
        let ident = |t: &Transform| t.translation.vector.norm() == 0.0 && t.rotation.angle() == 0.0;
        if !ident(&j.parent_frame) || !ident(&j.child_frame) {
            return bad("free joint frames must be identity".into());
        }
    }
    if j.kind == JointKind::Revolute && (j.axis.norm() - 1.0).abs() > 1e-9 {
        return bad("revolute axis must be unit length".into());
    }
    if let Some(l) = &j.limits {
        if l.lower.len() != j.kind.nv() || l.upper.len() != j.kind.nv() {
            return Err(Error::DimensionMismatch {
                joint: j.name.clone(),
                what: "limit pairs",
                expected: j.kind.nv(),
                got: l.lower.len(),
            });
        }
        for (lo, hi) in l.lower.iter().zip(&l.upper) {
            if lo > hi {
                return bad(format!("limit lower {lo} exceeds upper {hi}"));
            }
        }
    }
    Ok(())
}

// File schema.

#[derive(Debug, Serialize, Deserialize)]
struct SkeletonFile {
    name: String,
    bodies: Vec<BodyFile>,
    joints: Vec<JointFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BodyFile {
    name: String,
    mass: f64,
    inertia: [f64; 9],
    #[serde(default)]
    com_offset: [f64; 3],
    #[serde(default)]
    shapes: Vec<Shape>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JointFile {
    #[serde(default)]
    name: Option<String>,
    kind: JointKind,
    parent: Option<usize>,
    child: usize,
    #[serde(default)]
    parent_frame: TransformDef,
    #[serde(default)]
    child_frame: TransformDef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    limits: Option<Vec<[f64; 2]>>,
}

impl SkeletonFile {
    fn into_skeleton(self) -> Result<Skeleton> {
        let bodies: Vec<BodyDef> = self
            .bodies
            .into_iter()
            .map(|b| BodyDef {
                name: b.name,
                mass: b.mass,
                inertia: Matrix3::from_row_slice(&b.inertia),
                com_offset: Vector3::from(b.com_offset),
                shapes: b.shapes,
            })
            .collect();
        let mut joints = Vec::with_capacity(self.joints.len());
        for j in self.joints {
            let name = j.name.unwrap_or_else(|| {
                bodies
                    .get(j.child)
                    .map(|b| b.name.clone())
                    .unwrap_or_else(|| format!("joint{}", j.child))
            });
            for t in [&j.parent_frame, &j.child_frame] {
                if (quat_norm(t.rotation) - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint `{name}`: frame quaternion is not unit length"
                    )));
                }
            }
            let limits = j.limits.map(|pairs| JointLimits {
                lower: pairs.iter().map(|p| p[0]).collect(),
                upper: pairs.iter().map(|p| p[1]).collect(),
            });
            joints.push(JointDef {
                name,
                kind: j.kind,
                parent: j.parent,
                child: j.child,
                parent_frame: j.parent_frame.into(),
                child_frame: j.child_frame.into(),
                axis: Vector3::from(j.axis.unwrap_or([0.0, 0.0, 1.0])),
                limits,
            });
        }
        Skeleton::new(self.name, bodies, joints)
    }
}

impl From<&Skeleton> for SkeletonFile {
    fn from(s: &Skeleton) -> Self {
        let bodies = s
            .bodies
            .iter()
            .map(|b| {
                let mut inertia = [0.0; 9];
                for r in 0..3 {
                    for c in 0..3 {
                        inertia[r * 3 + c] = b.inertia[(r, c)];
                    }
                }
                BodyFile {
                    name: b.name.clone(),
                    mass: b.mass,
                    inertia,
                    com_offset: b.com_offset.into(),
                    shapes: b.shapes.clone(),
                }
            })
            .collect();
        let joints = s
            .joints
            .iter()
            .map(|j| JointFile {
                name: Some(j.name.clone()),
                kind: j.kind,
                parent: j.parent,
                child: j.child,
                parent_frame: (&j.parent_frame).into(),
                child_frame: (&j.child_frame).into(),
                axis: (j.kind == JointKind::Revolute).then(|| j.axis.into()),
                limits: j.limits.as_ref().map(|l| {
                    l.lower
                        .iter()
                        .zip(&l.upper)
                        .map(|(a, b)| [*a, *b])
                        .collect()
                }),
            })
            .collect();
        SkeletonFile {
            name: s.name.clone(),
            bodies,
            joints,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(name: &str, mass: f64) -> BodyDef {
        BodyDef {
            name: name.into(),
            mass,
            inertia: Matrix3::identity() * 0.01,
            com_offset: Vector3::zeros(),
            shapes: vec![],
        }
    }

    fn joint(kind: JointKind, parent: Option<usize>, child: usize) -> JointDef {
        JointDef {
            name: format!("j{child}"),
            kind,
            parent,
            child,
            parent_frame: Transform::identity(),
            child_frame: Transform::identity(),
            axis: Vector3::z(),
            limits: None,
        }
    }

    #[test]
    fn dof_bookkeeping() {
        let s = Skeleton::new(
            "t",
            vec![body("a", 1.0), body("b", 1.0), body("c", 1.0)],
            vec![
                joint(JointKind::Free, None, 0),
                joint(JointKind::Spherical, Some(0), 1),
                joint(JointKind::Revolute, Some(1), 2),
            ],
        )
        .unwrap();
        assert_eq!(s.nv(), 10);
        assert_eq!(s.nq(), 12);
        assert_eq!(s.v_range(2), 9..10);
        assert_eq!(s.chain(2), &[0, 1, 2]);
        assert_eq!(s.joint_distance(0, 2), 2);
        assert_eq!(s.joint_distance(2, 2), 0);
        assert!(s.has_floating_base());
    }

    #[test]
    fn rejects_bad_models() {
        let two_parents = Skeleton::new(
            "t",
            vec![body("a", 1.0), body("b", 1.0)],
            vec![
                joint(JointKind::Free, None, 0),
                joint(JointKind::Free, None, 1),
            ],
        );
        assert!(two_parents.is_err());

        let zero_mass = Skeleton::new(
            "t",
            vec![body("a", 0.0)],
            vec![joint(JointKind::Free, None, 0)],
        );
        assert!(zero_mass.is_err());

        let mut flat = body("a", 1.0);
        flat.inertia = Matrix3::from_diagonal(&Vector3::new(1.0, 0.1, 0.1));
        let tri = Skeleton::new("t", vec![flat], vec![joint(JointKind::Free, None, 0)]);
        assert!(tri.is_err());

        let mut j = joint(JointKind::Revolute, None, 0);
        j.limits = Some(JointLimits {
            lower: vec![1.0],
            upper: vec![-1.0],
        });
        assert!(Skeleton::new("t", vec![body("a", 1.0)], vec![j]).is_err());

        let backwards = Skeleton::new(
            "t",
            vec![body("a", 1.0), body("b", 1.0)],
            vec![
                joint(JointKind::Revolute, Some(1), 0),
                joint(JointKind::Revolute, None, 1),
            ],
        );
        assert!(backwards.is_err());
    }

    #[test]
    fn json_round_trip_preserves_model() {
        let text = r#"{
            "name": "pendulum",
            "bodies": [{"name": "bob", "mass": 2.0, "inertia": [0.1,0,0, 0,0.1,0, 0,0,0.1],
                        "com_offset": [0, 0, -1], "shapes": [{"type": "sphere", "center": [0,0,-1], "radius": 0.1}]}],
            "joints": [{"kind": "revolute1", "parent": null, "child": 0, "axis": [0,1,0], "limits": [[-1, 1]]}]
        }"#;
        let s = Skeleton::from_json(text).unwrap();
        assert_eq!(s.nv(), 1);
        let again = Skeleton::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(again.bodies[0].com_offset, s.bodies[0].com_offset);
        assert_eq!(again.joints[0].limits, s.joints[0].limits);
        assert_eq!(again.joints[0].axis, Vector3::y());
    }
}
