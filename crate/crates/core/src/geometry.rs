//! Planar rigid-body geometry: SE(2) poses, axis-aligned rectangles, and
//! body-frame polygons.
//!
//! Everything here is a pure function on `f64` values. Headings are stored
//! unwrapped; every heading comparison goes through [`wrap_angle`], which maps
//! into the half-open interval `(-π, π]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for exact-boundary comparisons.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("bounding box of an empty point set")]
    EmptyPointSet,
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon vertices {0} and {1} coincide")]
    DuplicateVertex(usize, usize),
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("inverted rectangle: [{x_lo}, {x_hi}] x [{y_lo}, {y_hi}]")]
    InvertedRect { x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64 },
}

/// A point in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// An SE(2) element: world-frame translation plus heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, phi: f64) -> Self {
        Self { x, y, phi }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.phi.is_finite()
    }

    /// Euclidean distance between the translations.
    pub fn translation_to(&self, other: &Pose) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Absolute wrapped heading change to `other`.
    pub fn rotation_to(&self, other: &Pose) -> f64 {
        wrap_angle(other.phi - self.phi).abs()
    }

    /// Maps a body-frame point into the world frame.
    pub fn apply(&self, v: Point2) -> Point2 {
        let (s, c) = self.phi.sin_cos();
        Point2::new(c * v.x - s * v.y + self.x, s * v.x + c * v.y + self.y)
    }
}

/// Closed axis-aligned rectangle `[x_lo, x_hi] x [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub const fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        Self { x_lo, x_hi, y_lo, y_hi }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if ![self.x_lo, self.x_hi, self.y_lo, self.y_hi].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("rectangle"));
        }
        if self.x_lo > self.x_hi || self.y_lo > self.y_hi {
            return Err(GeometryError::InvertedRect {
                x_lo: self.x_lo,
                x_hi: self.x_hi,
                y_lo: self.y_lo,
                y_hi: self.y_hi,
            });
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn height(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x_lo <= other.x_hi
            && other.x_lo <= self.x_hi
            && self.y_lo <= other.y_hi
            && other.y_lo <= self.y_hi
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.x_lo <= other.x_lo
            && other.x_hi <= self.x_hi
            && self.y_lo <= other.y_lo
            && other.y_hi <= self.y_hi
    }

    pub fn corners(&self) -> [Point2; 4] {
        [
            Point2::new(self.x_lo, self.y_lo),
            Point2::new(self.x_hi, self.y_lo),
            Point2::new(self.x_hi, self.y_hi),
            Point2::new(self.x_lo, self.y_hi),
        ]
    }
}

/// Simple polygon in the object's body frame. Edges close implicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        let poly = Self { vertices };
        poly.validate()?;
        Ok(poly)
    }

    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self, GeometryError> {
        Self::new(coords.iter().map(|&(x, y)| Point2::new(x, y)).collect())
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = self.vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if self.vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(GeometryError::NonFinite("polygon"));
        }
        for i in 0..n {
            let j = (i + 1) % n;
            if self.vertices[i] == self.vertices[j] {
                return Err(GeometryError::DuplicateVertex(i, j));
            }
        }
        Ok(())
    }

    /// Edges as `(start, end)` pairs including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Largest vertex distance from the body origin.
    pub fn circumradius(&self) -> f64 {
        self.vertices.iter().map(|v| v.x.hypot(v.y)).fold(0.0, f64::max)
    }
}

/// Principal-value wrap into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a % two_pi;
    if r <= -PI {
        r += two_pi;
    } else if r > PI {
        r -= two_pi;
    }
    r
}

/// World-frame vertices of `poly` placed at `q`, same order as the input.
pub fn transform_vertices(poly: &Polygon, q: &Pose) -> Vec<Point2> {
    poly.vertices.iter().map(|&v| q.apply(v)).collect()
}

/// Tight axis-aligned bounding box of a point set.
pub fn bounding_box(points: &[Point2]) -> Result<Rect, GeometryError> {
    let first = points.first().ok_or(GeometryError::EmptyPointSet)?;
    let init = Rect::new(first.x, first.x, first.y, first.y);
    Ok(points.iter().skip(1).fold(init, |r, p| {
        Rect::new(r.x_lo.min(p.x), r.x_hi.max(p.x), r.y_lo.min(p.y), r.y_hi.max(p.y))
    }))
}

/// Closed-rectangle membership.
pub fn point_in_rect(p: Point2, r: &Rect) -> bool {
    r.x_lo <= p.x && p.x <= r.x_hi && r.y_lo <= p.y && p.y <= r.y_hi
}

/// Sum of the four hinge distances by which `p` lies outside `w`.
pub fn workspace_deficit(p: Point2, w: &Rect) -> f64 {
    (w.x_lo - p.x).max(0.0) + (p.x - w.x_hi).max(0.0) + (w.y_lo - p.y).max(0.0) + (p.y - w.y_hi).max(0.0)
}

/// Signed vertex-to-rectangle distance: positive clearance outside,
/// negative penetration depth inside, zero on the boundary.
pub fn signed_rect_distance(p: Point2, r: &Rect) -> f64 {
    if point_in_rect(p, r) {
        let depth = (p.x - r.x_lo).min(r.x_hi - p.x).min(p.y - r.y_lo).min(r.y_hi - p.y);
        -depth
    } else {
        let cx = p.x.max(r.x_lo).min(r.x_hi);
        let cy = p.y.max(r.y_lo).min(r.y_hi);
        (p.x - cx).hypot(p.y - cy)
    }
}

/// Linear translation, shortest-arc heading interpolation at `eta` in `[0, 1]`.
pub fn interp_pose(qa: &Pose, qb: &Pose, eta: f64) -> Pose {
    let dphi = wrap_angle(qb.phi - qa.phi);
    Pose::new(
        qa.x + eta * (qb.x - qa.x),
        qa.y + eta * (qb.y - qa.y),
        wrap_angle(qa.phi + eta * dphi),
    )
}

/// Whether the closed segment `a`-`b` touches the closed rectangle `r`
/// (Liang-Barsky clipping).
pub fn segment_intersects_rect(a: Point2, b: Point2, r: &Rect) -> bool {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for (p, q) in [
        (-dx, a.x - r.x_lo),
        (dx, r.x_hi - a.x),
        (-dy, a.y - r.y_lo),
        (dy, r.y_hi - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Even-odd point-in-polygon test on world-frame vertices.
pub fn point_in_polygon(p: Point2, verts: &[Point2]) -> bool {
    let n = verts.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (vi, vj) = (verts[i], verts[j]);
        if (vi.y > p.y) != (vj.y > p.y) {
            let x_cross = vj.x + (p.y - vj.y) / (vi.y - vj.y) * (vi.x - vj.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, no collinear points.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point2, a: Point2, b: Point2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Minimum caliper width of the polygon and the heading that makes that
/// width the polygon's y-extent.
///
/// Rotating the body by the returned heading lays the minimizing hull edge
/// parallel to the x axis, so a pure x-translation sweeps a strip exactly
/// `width` tall. Among ties the heading closest to zero wins.
pub fn min_width_heading(poly: &Polygon) -> (f64, f64) {
    let hull = convex_hull(&poly.vertices);
    let n = hull.len();
    let mut best = (f64::INFINITY, 0.0_f64);
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let len = a.distance(&b);
        if len <= GEOM_EPS {
            continue;
        }
        let (ux, uy) = ((b.x - a.x) / len, (b.y - a.y) / len);
        let width = hull
            .iter()
            .map(|p| ((p.x - a.x) * -uy + (p.y - a.y) * ux).abs())
            .fold(0.0, f64::max);
        // Two candidate headings (edge laid along +x or -x); keep the one nearer 0.
        let base = wrap_angle(-uy.atan2(ux));
        let alt = wrap_angle(base + PI);
        let heading = if alt.abs() < base.abs() - GEOM_EPS { alt } else { base };
        let better = width < best.0 - GEOM_EPS
            || ((width - best.0).abs() <= GEOM_EPS && heading.abs() < best.1.abs() - GEOM_EPS);
        if better {
            best = (width, heading);
        }
    }
    best
}
