//! Static balance: support ellipse, quadratic distance to its boundary, the
//! distance Jacobian and the unilateral constraint row built from it.

mod hull;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ConstraintRow, RowKey, RowTag, SimState};
use crate::error::{Error, Result};
use crate::kinematics::{FrameCache, Shape, Skeleton};
use crate::lcp::RowKind;

pub use hull::{convex_hull, polygon_area_moments};

/// `P = diag(1, 1, 0)`.
pub fn vertical_projection() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEllipse {
    pub x_c: Vector3<f64>,
    /// Horizontal metric; the vertical row and column are zero.
    pub q: Matrix3<f64>,
    pub d: f64,
    pub p: Matrix3<f64>,
    /// Anchored feet the ellipse was fitted for.
    pub anchors: Vec<usize>,
}

impl SupportEllipse {
    /// Semi-axis lengths, largest first.
    pub fn semi_axes(&self) -> (f64, f64) {
        let q2 = self.q.fixed_view::<2, 2>(0, 0).into_owned();
        let eig = q2.symmetric_eigen();
        let a = self.d / eig.eigenvalues[0].sqrt();
        let b = self.d / eig.eigenvalues[1].sqrt();
        (a.max(b), a.min(b))
    }

    /// Point on the boundary in horizontal direction `angle` from the center.
    pub fn boundary_point(&self, angle: f64) -> Vector3<f64> {
        let dir = Vector3::new(angle.cos(), angle.sin(), 0.0);
        let s = self.d / (dir.transpose() * self.q * dir)[0].sqrt();
        self.x_c + dir * s
    }
}

/// Largest ellipse with the hull's centroid and second-moment shape that fits
/// inside the convex hull of all outline vertices. `d` is 1.
pub fn fit_support_ellipse(foot_polygons: &[Vec<Vector3<f64>>]) -> Result<SupportEllipse> {
    let points: Vec<Vector2<f64>> = foot_polygons
        .iter()
        .flatten()
        .map(|p| Vector2::new(p.x, p.y))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptySupport);
    }
    let hull = convex_hull(&points);
    if hull.len() < 3 {
        return Err(Error::EmptySupport);
    }
    let (area, centroid, sigma) = polygon_area_moments(&hull);
    if !(area > 0.0) {
        return Err(Error::EmptySupport);
    }
    let mut r = f64::INFINITY;
    for k in 0..hull.len() {
        let a = hull[k];
        let b = hull[(k + 1) % hull.len()];
        let e = b - a;
        // Counter-clockwise hull: the outward normal is the edge turned clockwise.
        let n = Vector2::new(e.y, -e.x).normalize();
        let room = n.dot(&(a - centroid));
        let reach = (n.transpose() * sigma * n)[0].sqrt();
        r = r.min(room / reach);
    }
    let q2: Matrix2<f64> = (sigma * (r * r)).try_inverse().ok_or(Error::EmptySupport)?;
    let mut q = Matrix3::zeros();
    q.fixed_view_mut::<2, 2>(0, 0).copy_from(&q2);
    let height = foot_polygons.iter().flatten().map(|p| p.z).sum::<f64>() / points.len() as f64;
    Ok(SupportEllipse {
        x_c: Vector3::new(centroid.x, centroid.y, height),
        q,
        d: 1.0,
        p: vertical_projection(),
        anchors: Vec::new(),
    })
}

/// Ground outline of each anchored foot: the four lowest corners of its boxes,
/// projected on the plane of the lowest one.
pub fn foot_outlines(
    skeleton: &Skeleton,
    cache: &FrameCache,
    feet: &[usize],
) -> Vec<Vec<Vector3<f64>>> {
    let mut out = Vec::new();
    for &f in feet {
        let pose = &cache.body_pose[f];
        for shape in &skeleton.bodies[f].shapes {
            if let Shape::Box {
                center,
                half_extents,
            } = shape
            {
                let mut corners: Vec<Vector3<f64>> = (0..8)
                    .map(|k| {
                        let s = |bit: usize, i: usize| {
                            if k & bit == 0 {
                                -half_extents[i]
                            } else {
                                half_extents[i]
                            }
                        };
                        let local = Vector3::new(
                            center[0] + s(1, 0),
                            center[1] + s(2, 1),
                            center[2] + s(4, 2),
                        );
                        pose.transform_point(&local.into()).coords
                    })
                    .collect();
                corners.sort_by(|a, b| a.z.total_cmp(&b.z));
                let z = corners[0].z;
                out.push(
                    corners[..4]
                        .iter()
                        .map(|c| Vector3::new(c.x, c.y, z))
                        .collect(),
                );
            }
        }
    }
    out
}

/// Ellipse for the feet currently anchored in `state`.
pub fn fit_for_support(skeleton: &Skeleton, state: &SimState) -> Result<SupportEllipse> {
    let feet = state.anchored_bodies();
    if feet.is_empty() {
        return Err(Error::EmptySupport);
    }
    let cache = FrameCache::new(skeleton, &state.joint_state)?;
    let mut e = fit_support_ellipse(&foot_outlines(skeleton, &cache, &feet))?;
    e.anchors = feet;
    Ok(e)
}

/// `δ = d² − (P(x − x_c))ᵀ Q (P(x − x_c))`.
pub fn distance_to_limit(ellipse: &SupportEllipse, x_com: &Vector3<f64>) -> f64 {
    let r = ellipse.p * (x_com - ellipse.x_c);
    ellipse.d * ellipse.d - (r.transpose() * ellipse.q * r)[0]
}

/// `J = −(x − x_c)ᵀ Pᵀ (Q + Qᵀ) P J_com`, as a column vector.
pub fn balance_jacobian(
    ellipse: &SupportEllipse,
    x_com: &Vector3<f64>,
    j_com: &DMatrix<f64>,
) -> DVector<f64> {
    let g = -(ellipse.p.transpose()
        * (ellipse.q + ellipse.q.transpose())
        * ellipse.p
        * (x_com - ellipse.x_c));
    j_com.tr_mul(&g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceParams {
    pub enabled: bool,
    pub beta: f64,
    /// The row is emitted once `δ` drops to this value.
    pub activation: f64,
}

impl Default for BalanceParams {
    fn default() -> Self {
        Self {
            enabled: true,
            beta: 0.2,
            activation: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub delta: f64,
    pub delta_normalized: f64,
    pub active: bool,
    pub multiplier: f64,
    pub torque_norm: f64,
}

/// Row demanding `δ̇ ≥ −β δ / dt`, or `None` when balance is disabled or the
/// center of mass is well inside the ellipse.
pub fn make_balance_row(
    ellipse: &SupportEllipse,
    skeleton: &Skeleton,
    state: &SimState,
    cache: &FrameCache,
    dt: f64,
    params: &BalanceParams,
) -> Result<Option<ConstraintRow>> {
    let current = state.anchored_bodies();
    if ellipse.anchors != current {
        return Err(Error::StaleEllipse {
            fitted: ellipse.anchors.clone(),
            current,
        });
    }
    if !params.enabled {
        return Ok(None);
    }
    let x = cache.center_of_mass(skeleton);
    let delta = distance_to_limit(ellipse, &x);
    if delta > params.activation * ellipse.d * ellipse.d {
        return Ok(None);
    }
    Ok(Some(ConstraintRow {
        jacobian_row: balance_jacobian(ellipse, &x, &cache.com_jacobian(skeleton)),
        rhs_target: -params.beta * delta / dt,
        bounds: RowKind::Unilateral,
        tag: RowTag::Balance,
        key: RowKey::Balance,
    }))
}
