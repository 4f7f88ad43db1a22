//! Scene data model and procedural generation of sequential-opening scenes.
//!
//! An opening is two wall rectangles sharing one x-interval with a free
//! corridor in y between them. Scenes are generated from [`GenParams`] with a
//! counter-based seed split, so every scene of a batch can be regenerated on
//! its own from the `gen` record stored inside it.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    bounding_box, min_width_heading, transform_vertices, wrap_angle, GeometryError, Polygon, Pose, Rect,
};
use crate::verifier::check_pose;

/// Rejection-sampling budget per scene.
pub const MAX_ATTEMPTS: usize = 1000;

/// Free x-room added on each side of the start and goal regions.
const REGION_MARGIN: f64 = 0.25;
/// Clearance kept between a start/goal footprint and the region bounds.
const POSE_MARGIN: f64 = 0.1;
/// Slack subtracted from the allowed gap-center offset of straddled openings.
const OFFSET_SLACK: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("no valid scene after {attempts} attempts (seed {seed}, {params})")]
    Exhausted { attempts: usize, seed: u64, params: String },
    #[error("scene {index} of batch: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<SceneError>,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistributionTag {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "OOD")]
    Ood,
}

impl std::fmt::Display for DistributionTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistributionTag::Id => "ID",
            DistributionTag::Ood => "OOD",
        })
    }
}

/// A door-like opening: walls span `[wall_x_lo, wall_x_hi]` in x and leave
/// `[gap_y_lo, gap_y_hi]` free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Opening {
    pub wall_x_lo: f64,
    pub wall_x_hi: f64,
    pub gap_y_lo: f64,
    pub gap_y_hi: f64,
    pub index: usize,
}

impl Opening {
    pub fn gap_width(&self) -> f64 {
        self.gap_y_hi - self.gap_y_lo
    }

    pub fn gap_center(&self) -> f64 {
        0.5 * (self.gap_y_lo + self.gap_y_hi)
    }

    pub fn wall_center(&self) -> f64 {
        0.5 * (self.wall_x_lo + self.wall_x_hi)
    }

    /// Lower and upper wall rectangles inside `workspace`.
    pub fn walls(&self, workspace: &Rect) -> [Rect; 2] {
        [
            Rect::new(self.wall_x_lo, self.wall_x_hi, workspace.y_lo, self.gap_y_lo),
            Rect::new(self.wall_x_lo, self.wall_x_hi, self.gap_y_hi, workspace.y_hi),
        ]
    }
}

/// Built-in object silhouettes, or a caller-supplied polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObjectShape {
    I,
    T,
    L,
    #[serde(rename = "custom")]
    Custom(Polygon),
}

impl ObjectShape {
    pub fn polygon(&self) -> Polygon {
        let coords: &[(f64, f64)] = match self {
            // 2.4 x 0.6 bar.
            ObjectShape::I => &[(-1.2, -0.3), (1.2, -0.3), (1.2, 0.3), (-1.2, 0.3)],
            // 0.6 x 1.8 stem under a 1.8 x 0.6 bar, bounding box centered.
            ObjectShape::T => &[
                (-0.3, -1.2),
                (0.3, -1.2),
                (0.3, 0.6),
                (0.9, 0.6),
                (0.9, 1.2),
                (-0.9, 1.2),
                (-0.9, 0.6),
                (-0.3, 0.6),
            ],
            // 0.6-thick legs, 1.5 x 1.8 bounding box centered.
            ObjectShape::L => &[
                (-0.75, -0.9),
                (0.75, -0.9),
                (0.75, -0.3),
                (-0.15, -0.3),
                (-0.15, 0.9),
                (-0.75, 0.9),
            ],
            ObjectShape::Custom(p) => return p.clone(),
        };
        Polygon::from_xy(coords).expect("built-in shapes are valid")
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "I" => Some(ObjectShape::I),
            "T" => Some(ObjectShape::T),
            "L" => Some(ObjectShape::L),
            _ => None,
        }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn overlaps(&self, other: &Interval) -> bool {
        self.lo < other.hi && other.lo < self.hi || self.lo == other.lo || self.hi == other.hi
    }
}

/// Union of disjoint intervals, sampled uniformly by total length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Band(pub Vec<Interval>);

impl Band {
    pub fn single(lo: f64, hi: f64) -> Self {
        Band(vec![Interval::new(lo, hi)])
    }

    pub fn lower_bound(&self) -> f64 {
        self.0.iter().map(|i| i.lo).fold(f64::INFINITY, f64::min)
    }

    pub fn upper_bound(&self) -> f64 {
        self.0.iter().map(|i| i.hi).fold(f64::NEG_INFINITY, f64::max)
    }

    fn validate(&self, name: &str, allow_zero: bool) -> Result<(), SceneError> {
        if self.0.is_empty() {
            return Err(SceneError::InvalidParams(format!("{name}: empty range")));
        }
        for iv in &self.0 {
            if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.lo > iv.hi {
                return Err(SceneError::InvalidParams(format!("{name}: bad interval [{}, {}]", iv.lo, iv.hi)));
            }
            if iv.lo < 0.0 || (!allow_zero && iv.lo <= 0.0) {
                return Err(SceneError::InvalidParams(format!("{name}: lower bound must be positive")));
            }
        }
        Ok(())
    }

    fn disjoint_from(&self, other: &Band) -> bool {
        self.0.iter().all(|a| other.0.iter().all(|b| !a.overlaps(b)))
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let total: f64 = self.0.iter().map(|i| i.hi - i.lo).sum();
        if total <= 0.0 {
            return self.0[rng.gen_range(0..self.0.len())].lo;
        }
        let mut u = rng.gen::<f64>() * total;
        for iv in &self.0 {
            let len = iv.hi - iv.lo;
            if u <= len {
                return iv.lo + u;
            }
            u -= len;
        }
        self.0.last().map(|i| i.hi).unwrap_or(0.0)
    }
}

fn default_workspace() -> Rect {
    Rect::new(0.0, 10.0, 0.0, 10.0)
}

/// Parameters of the scene generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub num_openings: usize,
    pub opening_width_range: Band,
    pub inter_opening_gap_range: Band,
    pub wall_thickness_range: Band,
    /// Magnitude of the start/goal heading offset from the object's
    /// minimum-width heading.
    pub start_goal_heading_offset: Band,
    pub object_shape: ObjectShape,
    pub seed: u64,
    pub distribution: DistributionTag,
    #[serde(default = "default_workspace")]
    pub workspace: Rect,
}

/// Minimum caliper width of a shape.
pub fn object_min_width(shape: &ObjectShape) -> f64 {
    min_width_heading(&shape.polygon()).0
}

impl GenParams {
    /// In-distribution defaults for `shape`.
    pub fn id(shape: ObjectShape, num_openings: usize, seed: u64) -> Self {
        let w = object_min_width(&shape);
        Self {
            num_openings,
            opening_width_range: Band::single(1.2 * w, 1.8 * w),
            inter_opening_gap_range: Band::single(1.5, 3.5),
            wall_thickness_range: Band::single(0.3, 0.6),
            start_goal_heading_offset: Band::single(0.0, PI / 6.0),
            object_shape: shape,
            seed,
            distribution: DistributionTag::Id,
            workspace: default_workspace(),
        }
    }

    /// Out-of-distribution defaults: every sampled dimension is drawn from
    /// bands on both sides of the in-distribution range.
    pub fn ood(shape: ObjectShape, num_openings: usize, seed: u64) -> Self {
        let w = object_min_width(&shape);
        let eps = 1e-3;
        Self {
            num_openings,
            opening_width_range: Band(vec![
                Interval::new(1.05 * w, 1.2 * w - eps),
                Interval::new(1.8 * w + eps, 2.1 * w),
            ]),
            inter_opening_gap_range: Band(vec![Interval::new(1.0, 1.5 - eps), Interval::new(3.5 + eps, 4.0)]),
            wall_thickness_range: Band(vec![Interval::new(0.15, 0.3 - eps), Interval::new(0.6 + eps, 0.8)]),
            start_goal_heading_offset: Band::single(PI / 6.0 + eps, PI / 3.0),
            object_shape: shape,
            seed,
            distribution: DistributionTag::Ood,
            workspace: default_workspace(),
        }
    }

    pub fn for_split(split: DistributionTag, shape: ObjectShape, num_openings: usize, seed: u64) -> Self {
        match split {
            DistributionTag::Id => Self::id(shape, num_openings, seed),
            DistributionTag::Ood => Self::ood(shape, num_openings, seed),
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.workspace.validate()?;
        self.object_shape.polygon().validate()?;
        self.opening_width_range.validate("opening_width_range", false)?;
        self.inter_opening_gap_range.validate("inter_opening_gap_range", false)?;
        self.wall_thickness_range.validate("wall_thickness_range", false)?;
        self.start_goal_heading_offset.validate("start_goal_heading_offset", true)?;
        let w_obj = object_min_width(&self.object_shape);
        if self.opening_width_range.lower_bound() <= w_obj {
            return Err(SceneError::InvalidParams(format!(
                "opening widths must exceed the object's minimum width {w_obj}"
            )));
        }
        if self.opening_width_range.upper_bound() > self.workspace.height() {
            return Err(SceneError::InvalidParams("opening wider than the workspace".into()));
        }
        if self.distribution == DistributionTag::Ood {
            let id = GenParams::id(self.object_shape.clone(), self.num_openings, self.seed);
            let pairs = [
                ("opening_width_range", &self.opening_width_range, &id.opening_width_range),
                ("inter_opening_gap_range", &self.inter_opening_gap_range, &id.inter_opening_gap_range),
                ("wall_thickness_range", &self.wall_thickness_range, &id.wall_thickness_range),
                ("start_goal_heading_offset", &self.start_goal_heading_offset, &id.start_goal_heading_offset),
            ];
            for (name, ood, idr) in pairs {
                if !ood.disjoint_from(idr) {
                    return Err(SceneError::InvalidParams(format!("{name}: OOD band overlaps the ID range")));
                }
            }
        }
        Ok(())
    }
}

/// Provenance of a generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRecord {
    pub params: GenParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub workspace: Rect,
    pub obstacles: Vec<Rect>,
    pub openings: Vec<Opening>,
    pub object: Polygon,
    pub start: Pose,
    pub goal: Pose,
    pub id: String,
    pub distribution_tag: DistributionTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenRecord>,
}

impl Scene {
    /// Checks the structural invariants, including start/goal feasibility.
    pub fn validate(&self) -> Result<(), SceneError> {
        self.workspace.validate()?;
        self.object.validate()?;
        for (i, o) in self.obstacles.iter().enumerate() {
            o.validate()?;
            if !self.workspace.contains_rect(o) {
                return Err(SceneError::Invalid(format!("obstacle {i} leaves the workspace")));
            }
        }
        for (i, op) in self.openings.iter().enumerate() {
            if op.index != i {
                return Err(SceneError::Invalid(format!("opening {i} carries index {}", op.index)));
            }
            if op.gap_y_lo >= op.gap_y_hi || op.gap_y_lo.is_nan() || op.gap_y_hi.is_nan() || op.wall_x_lo > op.wall_x_hi {
                return Err(SceneError::Invalid(format!("opening {i} has an empty gap or inverted walls")));
            }
            if op.gap_y_lo < self.workspace.y_lo || op.gap_y_hi > self.workspace.y_hi {
                return Err(SceneError::Invalid(format!("opening {i} gap leaves the workspace")));
            }
            if i > 0 && self.openings[i - 1].wall_x_hi >= op.wall_x_lo {
                return Err(SceneError::Invalid(format!("openings {} and {i} overlap or are unsorted", i - 1)));
            }
        }
        for (name, q) in [("start", &self.start), ("goal", &self.goal)] {
            if !q.is_finite() {
                return Err(SceneError::Invalid(format!("{name} pose is not finite")));
            }
            let v = check_pose(self, q);
            if !v.boundary_ok {
                return Err(SceneError::Invalid(format!("{name} pose leaves the workspace")));
            }
            if !v.collision_ok {
                return Err(SceneError::Invalid(format!("{name} pose collides with an obstacle")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Counter-based sub-seed for item `index` of a batch seeded with `seed`.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(index))
}

fn round3(v: f64) -> f64 {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Footprint bounding box of `poly` at heading `phi`, relative to the pose origin.
fn footprint(poly: &Polygon, phi: f64) -> Rect {
    bounding_box(&transform_vertices(poly, &Pose::new(0.0, 0.0, phi))).expect("polygon has vertices")
}

/// Generates one scene from `params`; deterministic in `params`.
pub fn generate_scene(params: &GenParams) -> Result<Scene, SceneError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(scene) = try_generate(params, &mut rng) {
            return Ok(scene);
        }
    }
    Err(SceneError::Exhausted {
        attempts: MAX_ATTEMPTS,
        seed: params.seed,
        params: serde_json::to_string(params).unwrap_or_default(),
    })
}

fn try_generate(params: &GenParams, rng: &mut ChaCha8Rng) -> Option<Scene> {
    let ws = params.workspace;
    let poly = params.object_shape.polygon();
    let (w_obj, travel_phi) = min_width_heading(&poly);
    let n = params.num_openings;

    let widths: Vec<f64> = (0..n).map(|_| round3(params.opening_width_range.sample(rng))).collect();
    let thick: Vec<f64> = (0..n).map(|_| round3(params.wall_thickness_range.sample(rng))).collect();
    let gaps: Vec<f64> = (0..n.saturating_sub(1))
        .map(|_| round3(params.inter_opening_gap_range.sample(rng)))
        .collect();
    let heading = |rng: &mut ChaCha8Rng| {
        let off = params.start_goal_heading_offset.sample(rng);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        round3(wrap_angle(travel_phi + sign * off))
    };
    let start_phi = heading(rng);
    let goal_phi = heading(rng);

    let travel_fp = footprint(&poly, travel_phi);
    let start_fp = footprint(&poly, start_phi);
    let goal_fp = footprint(&poly, goal_phi);
    let region_s = start_fp.width().max(travel_fp.width()) + 2.0 * REGION_MARGIN;
    let region_g = goal_fp.width().max(travel_fp.width()) + 2.0 * REGION_MARGIN;
    let span: f64 = thick.iter().sum::<f64>() + gaps.iter().sum::<f64>();
    let slack = ws.width() - span - region_s - region_g;
    if slack < 0.0 {
        return None;
    }
    let first_x = ws.x_lo + region_s + rng.gen::<f64>() * slack;

    // Consecutive openings that the object cannot fully clear between must
    // share a y-band wide enough for the object at its travel heading.
    let mut openings = Vec::with_capacity(n);
    let mut x = first_x;
    for i in 0..n {
        let w = widths[i];
        let (c_lo, c_hi) = (ws.y_lo + 0.5 * w, ws.y_hi - 0.5 * w);
        if c_lo > c_hi {
            return None;
        }
        let (mut lo, mut hi) = (c_lo, c_hi);
        if i > 0 {
            let prev: &Opening = &openings[i - 1];
            if gaps[i - 1] < travel_fp.width() + 2.0 * REGION_MARGIN {
                let bound = 0.5 * (prev.gap_width().min(w) - w_obj) - OFFSET_SLACK;
                if bound < 0.0 {
                    return None;
                }
                lo = lo.max(prev.gap_center() - bound);
                hi = hi.min(prev.gap_center() + bound);
                if lo > hi {
                    return None;
                }
            }
            x += gaps[i - 1];
        }
        let center = lo + rng.gen::<f64>() * (hi - lo);
        let mut gap_y_lo = round3(center - 0.5 * w);
        let mut gap_y_hi = round3(gap_y_lo + w);
        if gap_y_hi > ws.y_hi {
            gap_y_hi = ws.y_hi;
            gap_y_lo = round3(ws.y_hi - w);
        }
        gap_y_lo = gap_y_lo.max(ws.y_lo);
        let wall_x_lo = round3(x);
        let wall_x_hi = round3(x + thick[i]);
        x = wall_x_hi;
        openings.push(Opening { wall_x_lo, wall_x_hi, gap_y_lo, gap_y_hi, index: i });
    }
    // Re-check straddle bands after rounding.
    for pair in openings.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.wall_x_lo - a.wall_x_hi < travel_fp.width() + 2.0 * REGION_MARGIN {
            let bound = 0.5 * (a.gap_width().min(b.gap_width()) - w_obj);
            if (a.gap_center() - b.gap_center()).abs() > bound {
                return None;
            }
        }
    }

    let left_bound = openings.first().map_or(first_x, |o| o.wall_x_lo);
    let right_bound = openings.last().map_or(first_x, |o| o.wall_x_hi);
    let start = sample_pose(rng, &ws, &start_fp, ws.x_lo, left_bound, start_phi)?;
    let goal = sample_pose(rng, &ws, &goal_fp, right_bound, ws.x_hi, goal_phi)?;

    let obstacles = openings.iter().flat_map(|o| o.walls(&ws)).collect();
    let scene = Scene {
        workspace: ws,
        obstacles,
        openings,
        object: poly,
        start,
        goal,
        id: format!("{}-{:016x}", params.distribution.to_string().to_lowercase(), params.seed),
        distribution_tag: params.distribution,
        gen: Some(GenRecord { params: params.clone(), seed: params.seed }),
    };
    let ok = [&scene.start, &scene.goal].iter().all(|q| {
        let v = check_pose(&scene, q);
        v.boundary_ok && v.collision_ok
    });
    ok.then_some(scene)
}

fn sample_pose(
    rng: &mut ChaCha8Rng,
    ws: &Rect,
    fp: &Rect,
    x_from: f64,
    x_to: f64,
    phi: f64,
) -> Option<Pose> {
    let (x_lo, x_hi) = (x_from + POSE_MARGIN - fp.x_lo, x_to - POSE_MARGIN - fp.x_hi);
    let (y_lo, y_hi) = (ws.y_lo + POSE_MARGIN - fp.y_lo, ws.y_hi - POSE_MARGIN - fp.y_hi);
    if x_lo > x_hi || y_lo > y_hi {
        return None;
    }
    let x = round3(x_lo + rng.gen::<f64>() * (x_hi - x_lo)).clamp(x_lo, x_hi);
    let y = round3(y_lo + rng.gen::<f64>() * (y_hi - y_lo)).clamp(y_lo, y_hi);
    Some(Pose::new(x, y, phi))
}

/// Generates `count` scenes from per-index sub-seeds of `params.seed`.
pub fn generate_batch(params: &GenParams, count: usize) -> Result<Vec<Scene>, SceneError> {
    if count == 0 {
        return Err(SceneError::InvalidParams("count must be at least 1".into()));
    }
    params.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let p = GenParams { seed: sub_seed(params.seed, i as u64), ..params.clone() };
            generate_scene(&p).map_err(|e| SceneError::Batch { index: i, source: Box::new(e) })
        })
        .collect()
}

/// Human-readable facts about one opening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeningRecord {
    pub index: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub gap_y_lo: f64,
    pub gap_y_hi: f64,
    pub gap_width: f64,
    /// Free x-distance to the next opening's walls.
    pub distance_to_next: Option<f64>,
}

impl OpeningRecord {
    pub fn describe(&self) -> String {
        let mut s = format!(
            "opening {}: walls x in [{}, {}], free gap y in [{}, {}], gap width {}",
            self.index, self.x_lo, self.x_hi, self.gap_y_lo, self.gap_y_hi, self.gap_width
        );
        if let Some(d) = self.distance_to_next {
            s.push_str(&format!("; free distance to opening {}: {}", self.index + 1, d));
        }
        s
    }
}

fn round9(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

pub fn opening_summary(scene: &Scene) -> Vec<OpeningRecord> {
    scene
        .openings
        .iter()
        .enumerate()
        .map(|(i, o)| OpeningRecord {
            index: o.index,
            x_lo: o.wall_x_lo,
            x_hi: o.wall_x_hi,
            gap_y_lo: o.gap_y_lo,
            gap_y_hi: o.gap_y_hi,
            gap_width: round9(o.gap_width()),
            distance_to_next: scene.openings.get(i + 1).map(|nx| round9(nx.wall_x_lo - o.wall_x_hi)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_in_rect;

    fn opening(lo: f64, hi: f64, g0: f64, g1: f64, index: usize) -> Opening {
        Opening { wall_x_lo: lo, wall_x_hi: hi, gap_y_lo: g0, gap_y_hi: g1, index }
    }

    #[test]
    fn deterministic_for_seed() {
        let p = GenParams::id(ObjectShape::I, 2, 7);
        let a = generate_scene(&p).unwrap();
        let b = generate_scene(&p).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.obstacles.len(), 4);
    }

    #[test]
    fn degenerate_full_height_opening() {
        let mut p = GenParams::id(ObjectShape::I, 1, 3);
        p.opening_width_range = Band::single(10.0, 10.0);
        let s = generate_scene(&p).unwrap();
        assert_eq!(s.obstacles.len(), 2);
        assert!(s.obstacles.iter().all(|o| o.height() == 0.0));
        s.validate().unwrap();
    }

    #[test]
    fn tee_scene_openings_are_valid() {
        let s = generate_scene(&GenParams::id(ObjectShape::T, 2, 11)).unwrap();
        s.validate().unwrap();
        assert_eq!(s.openings.len(), 2);
        for o in &s.openings {
            assert!(o.gap_y_lo < o.gap_y_hi);
            let [lower, upper] = o.walls(&s.workspace);
            assert_eq!(lower.y_lo, s.workspace.y_lo);
            assert_eq!(lower.y_hi, o.gap_y_lo);
            assert_eq!(upper.y_lo, o.gap_y_hi);
            assert_eq!(upper.y_hi, s.workspace.y_hi);
        }
        assert!(s.start.x < s.openings[0].wall_x_lo);
        assert!(s.goal.x > s.openings[1].wall_x_hi);
    }

    #[test]
    fn batch_matches_single_with_sub_seed() {
        let p = GenParams::id(ObjectShape::I, 2, 99);
        let batch = generate_batch(&p, 1).unwrap();
        let single = generate_scene(&GenParams { seed: sub_seed(99, 0), ..p.clone() }).unwrap();
        assert_eq!(batch, vec![single]);
        assert!(generate_batch(&p, 0).is_err());
    }

    #[test]
    fn batch_ids_distinct_and_tagged() {
        let scenes = generate_batch(&GenParams::ood(ObjectShape::I, 2, 5), 40).unwrap();
        let mut ids: Vec<_> = scenes.iter().map(|s| s.id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 40);
        assert!(scenes.iter().all(|s| s.distribution_tag == DistributionTag::Ood));
    }

    #[test]
    fn regenerate_from_record() {
        for s in generate_batch(&GenParams::id(ObjectShape::L, 2, 21), 10).unwrap() {
            let rec = s.gen.clone().unwrap();
            assert_eq!(generate_scene(&rec.params).unwrap(), s);
        }
    }

    #[test]
    fn walls_tile_workspace_column() {
        for s in generate_batch(&GenParams::id(ObjectShape::I, 2, 4), 20).unwrap() {
            for (k, o) in s.openings.iter().enumerate() {
                let [a, b] = [s.obstacles[2 * k], s.obstacles[2 * k + 1]];
                assert_eq!(a.height() + o.gap_width() + b.height(), s.workspace.height());
                assert!((a.height() + o.gap_width() + b.height() - s.workspace.height()).abs() < 1e-9);
                assert_eq!((a.x_lo, a.x_hi), (o.wall_x_lo, o.wall_x_hi));
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = GenParams::id(ObjectShape::I, 2, 1);
        p.opening_width_range = Band::single(0.3, 0.5);
        assert!(matches!(generate_scene(&p), Err(SceneError::InvalidParams(_))));
        let mut p = GenParams::ood(ObjectShape::I, 2, 1);
        p.inter_opening_gap_range = Band::single(2.0, 4.0);
        assert!(matches!(generate_scene(&p), Err(SceneError::InvalidParams(_))));
    }

    #[test]
    fn impossible_layout_exhausts_budget() {
        let mut p = GenParams::id(ObjectShape::I, 6, 1);
        p.inter_opening_gap_range = Band::single(3.0, 3.5);
        assert!(matches!(generate_scene(&p), Err(SceneError::Exhausted { .. })));
    }

    #[test]
    fn summary_examples() {
        let ws = Rect::new(0.0, 10.0, 0.0, 10.0);
        let mut s = generate_scene(&GenParams::id(ObjectShape::I, 1, 2)).unwrap();
        s.openings = vec![opening(2.0, 2.5, 4.0, 5.2, 0)];
        let sum = opening_summary(&s);
        assert_eq!(sum.len(), 1);
        assert!((sum[0].gap_width - 1.2).abs() < 1e-12);
        assert_eq!(sum[0].distance_to_next, None);

        s.openings = vec![opening(2.0, 2.5, 4.0, 5.0, 0), opening(6.0, 6.5, 4.0, 5.0, 1)];
        s.obstacles = s.openings.iter().flat_map(|o| o.walls(&ws)).collect();
        let sum = opening_summary(&s);
        assert_eq!(sum[0].distance_to_next, Some(3.5));
        assert!(sum[0].describe().contains("free distance to opening 1: 3.5"));

        s.openings.clear();
        assert!(opening_summary(&s).is_empty());
    }

    #[test]
    fn inline_scene_validation() {
        let mut s = generate_scene(&GenParams::id(ObjectShape::I, 2, 8)).unwrap();
        s.validate().unwrap();
        let wall = s.obstacles[0];
        s.start = Pose::new(0.5 * (wall.x_lo + wall.x_hi), 0.5 * (wall.y_lo + wall.y_hi), 0.0);
        // Put a vertex inside the wall.
        let v0 = s.object.vertices[0];
        s.start.x -= v0.x;
        s.start.y -= v0.y;
        assert!(point_in_rect(s.start.apply(v0), &wall));
        assert!(matches!(s.validate(), Err(SceneError::Invalid(_))));
    }
}
