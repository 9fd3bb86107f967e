//! Primitive-level collision against the ground plane, static boxes and other
//! bodies of the same skeleton.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::world::{StaticBox, WorldDef};
use crate::kinematics::{FrameCache, JointState, Shape, Skeleton};
use crate::Result;

/// What the body is touching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Obstacle {
    Ground,
    Box(usize),
    /// Another body of the skeleton, with its shape index.
    Body(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub body: usize,
    pub shape: usize,
    /// Sub-feature of the shape (capsule end, box corner).
    pub feature: usize,
    pub obstacle: Obstacle,
    pub world_point: [f64; 3],
    /// Unit normal pushing `body` out of the obstacle.
    pub normal: [f64; 3],
    /// Positive when overlapping; negative values are the remaining gap.
    pub penetration_depth: f64,
    pub friction_coefficient: f64,
}

impl ContactPoint {
    pub fn point(&self) -> Vector3<f64> {
        Vector3::from(self.world_point)
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::from(self.normal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionParams {
    /// Pairs closer than this are reported before they touch.
    pub margin: f64,
    pub self_collision: bool,
    /// Minimum number of joints between two bodies for a self-collision check.
    pub min_joint_separation: usize,
    pub self_friction: f64,
}

impl Default for CollisionParams {
    fn default() -> Self {
        Self {
            margin: 0.01,
            self_collision: true,
            min_joint_separation: 2,
            self_friction: 0.3,
        }
    }
}

/// Shapes moved to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorldShape {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    Capsule {
        a: Vector3<f64>,
        b: Vector3<f64>,
        radius: f64,
    },
    Box {
        corners: [Vector3<f64>; 8],
    },
}

impl WorldShape {
    /// Sphere-swept segment view of round shapes.
    fn segment(&self) -> Option<(Vector3<f64>, Vector3<f64>, f64)> {
        match *self {
            WorldShape::Sphere { center, radius } => Some((center, center, radius)),
            WorldShape::Capsule { a, b, radius } => Some((a, b, radius)),
            WorldShape::Box { .. } => None,
        }
    }
}

pub fn world_shape(shape: &Shape, pose: &crate::math::Transform) -> WorldShape {
    let tp = |p: &[f64; 3]| pose.transform_point(&Vector3::from(*p).into()).coords;
    match shape {
        Shape::Sphere { center, radius } => WorldShape::Sphere {
            center: tp(center),
            radius: *radius,
        },
        Shape::Capsule { a, b, radius } => WorldShape::Capsule {
            a: tp(a),
            b: tp(b),
            radius: *radius,
        },
        Shape::Box {
            center,
            half_extents,
        } => {
            let mut corners = [Vector3::zeros(); 8];
            for (k, c) in corners.iter_mut().enumerate() {
                let sx = if k & 1 == 0 { -1.0 } else { 1.0 };
                let sy = if k & 2 == 0 { -1.0 } else { 1.0 };
                let sz = if k & 4 == 0 { -1.0 } else { 1.0 };
                let local = [
                    center[0] + sx * half_extents[0],
                    center[1] + sy * half_extents[1],
                    center[2] + sz * half_extents[2],
                ];
                *c = tp(&local);
            }
            WorldShape::Box { corners }
        }
    }
}

/// Closest point on segment `[a, b]` to `p`, as the segment parameter.
pub fn closest_on_segment(a: &Vector3<f64>, b: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 <= 0.0 {
        return 0.0;
    }
    ((p - a).dot(&d) / len2).clamp(0.0, 1.0)
}

/// Closest points between segments `[p1, q1]` and `[p2, q2]`, returned as
/// parameters `(s, t)`.
pub fn closest_segment_segment(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> (f64, f64) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let eps = 1e-15;
    if a <= eps && e <= eps {
        return (0.0, 0.0);
    }
    if a <= eps {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(&r);
    if e <= eps {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > eps * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

/// Signed distance from `p` to a box and the outward normal at the closest
/// feature. Negative inside.
pub fn box_signed_distance(p: &Vector3<f64>, bx: &StaticBox) -> (f64, Vector3<f64>) {
    let min = Vector3::from(bx.min);
    let max = Vector3::from(bx.max);
    let clamped = p.zip_zip_map(&min, &max, |v, lo, hi| v.clamp(lo, hi));
    let outside = p - clamped;
    let d = outside.norm();
    if d > 0.0 {
        return (d, outside / d);
    }
    // Inside: nearest face, lowest axis index on ties.
    let mut best = (f64::MAX, Vector3::z());
    for k in 0..3 {
        let to_min = p[k] - min[k];
        let to_max = max[k] - p[k];
        if to_max < best.0 {
            best = (to_max, Vector3::ith(k, 1.0));
        }
        if to_min < best.0 {
            best = (to_min, -Vector3::ith(k, 1.0));
        }
    }
    (-best.0, best.1)
}

/// Segment parameter minimizing the signed distance to the box. Signed
/// distance to a convex set is convex along a line, so a golden-section search
/// finds the global minimum.
pub fn deepest_on_segment(a: &Vector3<f64>, b: &Vector3<f64>, bx: &StaticBox) -> f64 {
    let f = |t: f64| box_signed_distance(&(a + (b - a) * t), bx).0;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    // Endpoints can win when the minimum sits on the boundary of [0, 1].
    [0.0, mid, 1.0]
        .into_iter()
        .map(|t| (f(t), t))
        .fold(
            (f64::MAX, 0.0),
            |best, c| if c.0 < best.0 { c } else { best },
        )
        .1
}

pub fn detect_contacts(
    skeleton: &Skeleton,
    state: &JointState,
    world: &WorldDef,
    params: &CollisionParams,
) -> Result<Vec<ContactPoint>> {
    let cache = FrameCache::new(skeleton, state)?;
    Ok(detect_contacts_cached(skeleton, &cache, world, params, &[]))
}

/// Contacts for every shape of every body not in `skip_bodies`, ordered by body
/// then shape.
pub fn detect_contacts_cached(
    skeleton: &Skeleton,
    cache: &FrameCache,
    world: &WorldDef,
    params: &CollisionParams,
    skip_bodies: &[usize],
) -> Vec<ContactPoint> {
    let shapes: Vec<Vec<WorldShape>> = skeleton
        .bodies
        .iter()
        .zip(&cache.body_pose)
        .map(|(b, pose)| b.shapes.iter().map(|s| world_shape(s, pose)).collect())
        .collect();

    let mut out = Vec::new();
    let margin = params.margin;
    for (body, body_shapes) in shapes.iter().enumerate() {
        if skip_bodies.contains(&body) {
            continue;
        }
        for (si, ws) in body_shapes.iter().enumerate() {
            let mut push = |feature: usize,
                            obstacle: Obstacle,
                            point: Vector3<f64>,
                            normal: Vector3<f64>,
                            dist: f64,
                            mu: f64| {
                if dist < margin {
                    out.push(ContactPoint {
                        body,
                        shape: si,
                        feature,
                        obstacle,
                        world_point: point.into(),
                        normal: normal.into(),
                        penetration_depth: -dist,
                        friction_coefficient: mu,
                    });
                }
            };

            // Ground plane.
            let up = Vector3::z();
            let h = world.ground.height;
            let mu = world.ground.friction;
            match ws {
                WorldShape::Box { corners } => {
                    for (k, c) in corners.iter().enumerate() {
                        push(k, Obstacle::Ground, *c, up, c.z - h, mu);
                    }
                }
                _ => {
                    let (a, b, r) = ws.segment().unwrap();
                    let ends: &[Vector3<f64>] = if a == b { &[a] } else { &[a, b] };
                    for (k, c) in ends.iter().enumerate() {
                        push(k, Obstacle::Ground, c - up * r, up, c.z - r - h, mu);
                    }
                }
            }

            // Static boxes.
            for (bi, bx) in world.boxes.iter().enumerate() {
                match ws {
                    WorldShape::Box { corners } => {
                        for (k, c) in corners.iter().enumerate() {
                            let (d, n) = box_signed_distance(c, bx);
                            push(k, Obstacle::Box(bi), *c, n, d, bx.friction);
                        }
                    }
                    _ => {
                        let (a, b, r) = ws.segment().unwrap();
                        let t = deepest_on_segment(&a, &b, bx);
                        let c = a + (b - a) * t;
                        let (d, n) = box_signed_distance(&c, bx);
                        push(0, Obstacle::Box(bi), c - n * r, n, d - r, bx.friction);
                    }
                }
            }

            // Other bodies. Each pair is reported once, on the lower body index.
            if params.self_collision {
                let Some((a1, b1, r1)) = ws.segment() else {
                    continue;
                };
                for other in body + 1..shapes.len() {
                    if skip_bodies.contains(&other)
                        || skeleton.joint_distance(body, other) < params.min_joint_separation
                    {
                        continue;
                    }
                    for (oi, os) in shapes[other].iter().enumerate() {
                        let Some((a2, b2, r2)) = os.segment() else {
                            continue;
                        };
                        let (s, t) = closest_segment_segment(&a1, &b1, &a2, &b2);
                        let p1 = a1 + (b1 - a1) * s;
                        let p2 = a2 + (b2 - a2) * t;
                        let delta = p1 - p2;
                        let d = delta.norm();
                        let n = if d > 1e-12 { delta / d } else { Vector3::z() };
                        push(
                            0,
                            Obstacle::Body(other, oi),
                            p1 - n * r1,
                            n,
                            d - r1 - r2,
                            params.self_friction,
                        );
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{BodyDef, JointDef, JointKind};
    use crate::math::Transform;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn single(shape: Shape, z: f64) -> (Skeleton, JointState) {
        let s = Skeleton::new(
            "ball",
            vec![BodyDef {
                name: "ball".into(),
                mass: 1.0,
                inertia: Matrix3::identity() * 0.004,
                com_offset: Vector3::zeros(),
                shapes: vec![shape],
            }],
            vec![JointDef {
                name: "root".into(),
                kind: JointKind::Free,
                parent: None,
                child: 0,
                parent_frame: Transform::identity(),
                child_frame: Transform::identity(),
                axis: Vector3::z(),
                limits: None,
            }],
        )
        .unwrap();
        let mut st = JointState::neutral(&s);
        st.q[2] = z;
        (s, st)
    }

    #[test]
    fn sphere_penetrating_ground() {
        let (s, st) = single(
            Shape::Sphere {
                center: [0.0; 3],
                radius: 0.1,
            },
            0.05,
        );
        let c =
            detect_contacts(&s, &st, &WorldDef::default(), &CollisionParams::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_relative_eq!(c[0].penetration_depth, 0.05, epsilon = 1e-15);
        assert_eq!(c[0].normal, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn body_above_ground_has_no_contacts() {
        let (s, st) = single(
            Shape::Sphere {
                center: [0.0; 3],
                radius: 0.1,
            },
            1.0,
        );
        let c =
            detect_contacts(&s, &st, &WorldDef::default(), &CollisionParams::default()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn box_corners_touch_ground() {
        let (s, st) = single(
            Shape::Box {
                center: [0.0; 3],
                half_extents: [0.1, 0.05, 0.02],
            },
            0.019,
        );
        let c =
            detect_contacts(&s, &st, &WorldDef::default(), &CollisionParams::default()).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c
            .iter()
            .all(|p| (p.penetration_depth - 0.001).abs() < 1e-12));
    }

    #[test]
    fn segment_segment_crossing() {
        let (s, t) = closest_segment_segment(
            &Vector3::new(-1.0, 0.0, 0.0),
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(0.0, -1.0, 1.0),
            &Vector3::new(0.0, 1.0, 1.0),
        );
        assert_relative_eq!(s, 0.5);
        assert_relative_eq!(t, 0.5);
    }

    #[test]
    fn point_inside_box_uses_nearest_face() {
        let bx = StaticBox {
            name: None,
            min: [0.0, 0.0, 0.0],
            max: [1.0, 1.0, 0.5],
            friction: 0.5,
        };
        let (d, n) = box_signed_distance(&Vector3::new(0.5, 0.5, 0.49), &bx);
        assert_relative_eq!(d, -0.01, epsilon = 1e-12);
        assert_eq!(n, Vector3::z());
    }
}
