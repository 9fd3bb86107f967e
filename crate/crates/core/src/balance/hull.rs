use nalgebra::{Matrix2, Vector2};

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise convex hull (monotone chain), without collinear points.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for p in &pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

/// Area, centroid and second moment about the centroid (per unit area) of a
/// simple counter-clockwise polygon.
pub fn polygon_area_moments(poly: &[Vector2<f64>]) -> (f64, Vector2<f64>, Matrix2<f64>) {
    let n = poly.len();
    let o = poly[0];
    let mut area = 0.0;
    let mut first = Vector2::zeros();
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let a = poly[k] - o;
        let b = poly[(k + 1) % n] - o;
        let c = a.x * b.y - b.x * a.y;
        area += c / 2.0;
        first += (a + b) * c / 6.0;
        sxx += c * (a.x * a.x + a.x * b.x + b.x * b.x) / 12.0;
        syy += c * (a.y * a.y + a.y * b.y + b.y * b.y) / 12.0;
        sxy += c * (2.0 * a.x * a.y + a.x * b.y + b.x * a.y + 2.0 * b.x * b.y) / 24.0;
    }
    let centroid = first / area;
    let sigma = Matrix2::new(
        sxx / area - centroid.x * centroid.x,
        sxy / area - centroid.x * centroid.y,
        sxy / area - centroid.x * centroid.y,
        syy / area - centroid.y * centroid.y,
    );
    (area, centroid + o, sigma)
}
