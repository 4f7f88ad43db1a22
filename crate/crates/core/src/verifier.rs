//! Feasibility checks for poses, steps, swept motions and dense trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densifier::{densify_with_fallback, LatticeConfig, MarkSource, WaypointMark};
use crate::geometry::{
    bounding_box, interp_pose, point_in_polygon, point_in_rect, segment_intersects_rect, signed_rect_distance,
    transform_vertices, workspace_deficit, Pose,
};
use crate::scene::Scene;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be finite and positive")]
    NonPositive(&'static str),
    #[error("{0} must be strictly below {1}")]
    NotBelow(&'static str, &'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub lin_limit: f64,
    pub ang_limit: f64,
    pub substep_lin_res: f64,
    pub substep_ang_res: f64,
    pub min_substeps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { lin_limit: 0.5, ang_limit: 0.3, substep_lin_res: 0.05, substep_ang_res: 0.05, min_substeps: 4 }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("lin_limit", self.lin_limit),
            ("ang_limit", self.ang_limit),
            ("substep_lin_res", self.substep_lin_res),
            ("substep_ang_res", self.substep_ang_res),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::NonPositive(name));
            }
        }
        if self.min_substeps == 0 {
            return Err(ConfigError::NonPositive("min_substeps"));
        }
        if self.substep_lin_res >= self.lin_limit {
            return Err(ConfigError::NotBelow("substep_lin_res", "lin_limit"));
        }
        if self.substep_ang_res >= self.ang_limit {
            return Err(ConfigError::NotBelow("substep_ang_res", "ang_limit"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationType {
    OutOfWorkspace,
    Collision,
    SweptCollision,
    StepSize,
}

impl ViolationType {
    pub const ALL: [ViolationType; 4] =
        [ViolationType::OutOfWorkspace, ViolationType::Collision, ViolationType::SweptCollision, ViolationType::StepSize];

    pub fn token(&self) -> &'static str {
        match self {
            ViolationType::OutOfWorkspace => "out_of_workspace",
            ViolationType::Collision => "collision",
            ViolationType::SweptCollision => "swept_collision",
            ViolationType::StepSize => "step_size",
        }
    }
}

impl std::fmt::Display for ViolationType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Toggles for the obstacle test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOptions {
    /// Bounding-box rejection before the per-vertex test.
    pub broad_phase: bool,
    /// Also report edge-through-rectangle overlaps with no vertex inside.
    pub strict_overlap: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { broad_phase: true, strict_overlap: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryHit {
    pub vertex: usize,
    pub deficit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionHit {
    /// `None` when only an edge crosses the rectangle (strict mode).
    pub vertex: Option<usize>,
    pub obstacle: usize,
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseVerdict {
    pub boundary_ok: bool,
    pub collision_ok: bool,
    pub boundary: Option<BoundaryHit>,
    pub collision: Option<CollisionHit>,
}

impl PoseVerdict {
    pub fn ok(&self) -> bool {
        self.boundary_ok && self.collision_ok
    }
}

pub fn check_pose(scene: &Scene, q: &Pose) -> PoseVerdict {
    check_pose_with(scene, q, CheckOptions::default())
}

pub fn check_pose_with(scene: &Scene, q: &Pose, opts: CheckOptions) -> PoseVerdict {
    let verts = transform_vertices(&scene.object, q);
    let boundary = verts.iter().enumerate().find_map(|(n, p)| {
        let d = workspace_deficit(*p, &scene.workspace);
        (d > 0.0 || !d.is_finite()).then_some(BoundaryHit { vertex: n, deficit: d })
    });
    let bbox = bounding_box(&verts).ok();
    let mut collision = None;
    for (i, obs) in scene.obstacles.iter().enumerate() {
        if opts.broad_phase {
            if let Some(b) = &bbox {
                if !b.intersects(obs) {
                    continue;
                }
            }
        }
        if let Some(n) = verts.iter().position(|p| point_in_rect(*p, obs)) {
            collision = Some(CollisionHit { vertex: Some(n), obstacle: i, depth: -signed_rect_distance(verts[n], obs) });
            break;
        }
        if opts.strict_overlap {
            let edge_hit = (0..verts.len()).any(|k| segment_intersects_rect(verts[k], verts[(k + 1) % verts.len()], obs));
            let corner_in = obs.corners().iter().any(|c| point_in_polygon(*c, &verts));
            if edge_hit || corner_in {
                collision = Some(CollisionHit { vertex: None, obstacle: i, depth: 0.0 });
                break;
            }
        }
    }
    PoseVerdict { boundary_ok: boundary.is_none(), collision_ok: collision.is_none(), boundary, collision }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub ok: bool,
    pub lin: f64,
    pub ang: f64,
    pub lin_excess: f64,
    pub ang_excess: f64,
}

pub fn check_step(qa: &Pose, qb: &Pose, cfg: &VerifyConfig) -> StepVerdict {
    let lin = qa.translation_to(qb);
    let ang = qa.rotation_to(qb);
    let lin_excess = (lin - cfg.lin_limit).max(0.0);
    let ang_excess = (ang - cfg.ang_limit).max(0.0);
    StepVerdict { ok: lin <= cfg.lin_limit && ang <= cfg.ang_limit, lin, ang, lin_excess, ang_excess }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweptHit {
    /// 1-based substep index.
    pub substep: usize,
    pub eta: f64,
    pub pose: Pose,
    pub verdict: PoseVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweptVerdict {
    pub ok: bool,
    pub substeps: usize,
    pub failure: Option<SweptHit>,
}

/// Number of interior substeps used between `qa` and `qb`.
pub fn substep_count(qa: &Pose, qb: &Pose, cfg: &VerifyConfig) -> usize {
    let by_lin = (qa.translation_to(qb) / cfg.substep_lin_res).ceil();
    let by_ang = (qa.rotation_to(qb) / cfg.substep_ang_res).ceil();
    let s = by_lin.max(by_ang);
    let s = if s.is_finite() { s.min(1e7) as usize } else { 0 };
    s.max(cfg.min_substeps)
}

pub fn check_swept(scene: &Scene, qa: &Pose, qb: &Pose, cfg: &VerifyConfig) -> SweptVerdict {
    check_swept_with(scene, qa, qb, substep_count(qa, qb, cfg), CheckOptions::default())
}

/// Swept check with an explicit substep count.
pub fn check_swept_with(scene: &Scene, qa: &Pose, qb: &Pose, substeps: usize, opts: CheckOptions) -> SweptVerdict {
    for s in 1..=substeps {
        let eta = s as f64 / (substeps + 1) as f64;
        let pose = interp_pose(qa, qb, eta);
        let verdict = check_pose_with(scene, &pose, opts);
        if !verdict.ok() {
            return SweptVerdict { ok: false, substeps, failure: Some(SweptHit { substep: s, eta, pose, verdict }) };
        }
    }
    SweptVerdict { ok: true, substeps, failure: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FailureDetail {
    /// Dense index of the failing state, or of the end state of the failing segment.
    pub state_index: usize,
    pub substep: Option<usize>,
    pub vertex_index: Option<usize>,
    pub obstacle_index: Option<usize>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub success: bool,
    pub first_fail_waypoint: Option<usize>,
    pub violation: Option<ViolationType>,
    pub detail: Option<FailureDetail>,
}

impl VerificationReport {
    pub fn success() -> Self {
        Self { success: true, first_fail_waypoint: None, violation: None, detail: None }
    }
}

/// Options for [`verify_trajectory_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub check: CheckOptions,
    /// Run the interpolated swept check between consecutive states.
    pub swept: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { check: CheckOptions::default(), swept: true }
    }
}

pub fn verify_trajectory(
    scene: &Scene,
    traj: &[Pose],
    cfg: &VerifyConfig,
    marks: Option<&[WaypointMark]>,
) -> VerificationReport {
    verify_trajectory_with(scene, traj, cfg, marks, VerifyOptions::default())
}

fn pose_failure(v: &PoseVerdict, state_index: usize, substep: Option<usize>) -> Option<(ViolationType, FailureDetail)> {
    if let Some(b) = v.boundary {
        let d = FailureDetail { state_index, substep, vertex_index: Some(b.vertex), obstacle_index: None, magnitude: b.deficit };
        return Some((ViolationType::OutOfWorkspace, d));
    }
    v.collision.map(|c| {
        let d = FailureDetail { state_index, substep, vertex_index: c.vertex, obstacle_index: Some(c.obstacle), magnitude: c.depth };
        (ViolationType::Collision, d)
    })
}

/// First violation of `traj` under the fixed check order, as (type, detail).
fn first_violation(
    scene: &Scene,
    traj: &[Pose],
    cfg: &VerifyConfig,
    opts: VerifyOptions,
) -> Option<(ViolationType, FailureDetail)> {
    for (h, q) in traj.iter().enumerate() {
        if let Some(f) = pose_failure(&check_pose_with(scene, q, opts.check), h, None) {
            return Some(f);
        }
        if h == 0 {
            continue;
        }
        let prev = &traj[h - 1];
        let step = check_step(prev, q, cfg);
        if !step.ok {
            let d = FailureDetail { state_index: h, magnitude: step.lin_excess.max(step.ang_excess), ..Default::default() };
            return Some((ViolationType::StepSize, d));
        }
        if opts.swept {
            let sv = check_swept_with(scene, prev, q, substep_count(prev, q, cfg), opts.check);
            if let Some(hit) = sv.failure {
                let (_, d) = pose_failure(&hit.verdict, h, Some(hit.substep)).expect("failed substep has a hit");
                return Some((ViolationType::SweptCollision, d));
            }
        }
    }
    None
}

/// Maps a dense index to a waypoint index: the first mark at or after it.
pub fn attribute(dense_index: usize, marks: &[WaypointMark]) -> usize {
    let n_waypoints = marks.iter().filter(|m| matches!(m.source, MarkSource::Waypoint(_))).count();
    let mark = marks.iter().find(|m| m.dense_index >= dense_index).or(marks.last());
    match mark.map(|m| m.source) {
        Some(MarkSource::Start) => 0,
        Some(MarkSource::Waypoint(k)) => k,
        Some(MarkSource::Goal) => n_waypoints,
        None => dense_index,
    }
}

pub fn verify_trajectory_with(
    scene: &Scene,
    traj: &[Pose],
    cfg: &VerifyConfig,
    marks: Option<&[WaypointMark]>,
    opts: VerifyOptions,
) -> VerificationReport {
    match first_violation(scene, traj, cfg, opts) {
        None => VerificationReport::success(),
        Some((violation, detail)) => VerificationReport {
            success: false,
            first_fail_waypoint: Some(match marks {
                Some(m) if !m.is_empty() => attribute(detail.state_index, m),
                _ => detail.state_index,
            }),
            violation: Some(violation),
            detail: Some(detail),
        },
    }
}

/// Densifies start, `waypoints`, goal and verifies the result. Segments the
/// planner cannot connect are replaced by a single straight hop.
pub fn verify_waypoints(
    scene: &Scene,
    waypoints: &[Pose],
    cfg: &VerifyConfig,
    lat: &LatticeConfig,
) -> VerificationReport {
    let dense = densify_with_fallback(scene, waypoints, lat, cfg);
    verify_trajectory(scene, &dense.trajectory.states, cfg, Some(&dense.trajectory.waypoint_marks))
}

pub fn failure_note(report: &VerificationReport) -> String {
    match (report.success, report.first_fail_waypoint, report.violation) {
        (false, Some(k), Some(v)) => format!("FAILURE: waypoint={k} type={v}"),
        _ => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Polygon, Rect};
    use crate::scene::{DistributionTag, Opening};
    use proptest::prelude::*;

    pub(crate) fn square_scene(obstacles: Vec<Rect>) -> Scene {
        Scene {
            workspace: Rect::new(0.0, 10.0, 0.0, 10.0),
            obstacles,
            openings: vec![],
            object: Polygon::from_xy(&[(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]).unwrap(),
            start: Pose::new(1.0, 5.0, 0.0),
            goal: Pose::new(9.0, 5.0, 0.0),
            id: "fixture".into(),
            distribution_tag: DistributionTag::Id,
            gen: None,
        }
    }

    fn marks(idx: &[(usize, MarkSource)]) -> Vec<WaypointMark> {
        idx.iter().map(|&(dense_index, source)| WaypointMark { dense_index, source }).collect()
    }

    #[test]
    fn config_validation() {
        VerifyConfig::default().validate().unwrap();
        let c = VerifyConfig { substep_lin_res: 0.5, ..Default::default() };
        assert_eq!(c.validate(), Err(ConfigError::NotBelow("substep_lin_res", "lin_limit")));
        let c = VerifyConfig { ang_limit: 0.0, ..Default::default() };
        assert_eq!(c.validate(), Err(ConfigError::NonPositive("ang_limit")));
    }

    #[test]
    fn pose_examples() {
        let s = square_scene(vec![Rect::new(4.0, 5.0, 0.0, 4.0)]);
        assert!(check_pose(&s, &s.start).ok());
        let v = check_pose(&s, &Pose::new(10.0, 5.0, 0.0));
        assert!(!v.boundary_ok);
        assert!((v.boundary.unwrap().deficit - 0.5).abs() < 1e-12);
        // vertex 0 = (-0.5,-0.5) placed at the obstacle center (4.5, 2).
        let q = Pose::new(5.0, 2.5, 0.0);
        let v = check_pose(&s, &q);
        assert!(!v.collision_ok);
        let hit = v.collision.unwrap();
        assert_eq!(hit.obstacle, 0);
        assert!(signed_rect_distance(q.apply(s.object.vertices[hit.vertex.unwrap()]), &s.obstacles[0]) < 0.0);
    }

    #[test]
    fn strict_mode_catches_edge_overlap() {
        // A thin sliver crossing the square's edge between two vertices.
        let s = square_scene(vec![Rect::new(4.9, 5.1, 4.0, 4.55)]);
        let q = Pose::new(5.0, 5.0, 0.0);
        assert!(check_pose(&s, &q).ok());
        let strict = check_pose_with(&s, &q, CheckOptions { broad_phase: true, strict_overlap: true });
        assert!(!strict.collision_ok);
        assert_eq!(strict.collision.unwrap().vertex, None);
    }

    #[test]
    fn step_examples() {
        let cfg = VerifyConfig::default();
        let a = Pose::new(1.0, 1.0, 0.2);
        assert!(check_step(&a, &a, &cfg).ok);
        let v = check_step(&a, &Pose::new(1.7, 1.0, 0.2), &cfg);
        assert!(!v.ok);
        assert!((v.lin_excess - 0.2).abs() < 1e-12);
        let v = check_step(&a, &Pose::new(1.0, 1.0, 0.2 + 2.0 * std::f64::consts::PI), &cfg);
        assert!(v.ok);
    }

    #[test]
    fn substep_count_formula() {
        let cfg = VerifyConfig::default();
        let a = Pose::new(0.0, 0.0, 0.0);
        assert_eq!(substep_count(&a, &a, &cfg), 4);
        assert_eq!(substep_count(&a, &Pose::new(0.5, 0.0, 0.0), &cfg), 10);
        assert_eq!(substep_count(&a, &Pose::new(0.0, 0.0, 0.3), &cfg), 6);
    }

    #[test]
    fn swept_through_wall() {
        // Midpoint penetration 1.5 exceeds the square's diagonal.
        let s = square_scene(vec![Rect::new(3.0, 7.0, 0.0, 10.0)]);
        let (a, b) = (Pose::new(2.0, 5.0, 0.0), Pose::new(8.0, 5.0, 0.0));
        assert!(check_pose(&s, &a).ok() && check_pose(&s, &b).ok());
        for n in [1, 4, 8, 16, 64] {
            assert!(!check_swept_with(&s, &a, &b, n, CheckOptions::default()).ok, "S={n}");
        }
        let free = square_scene(vec![Rect::new(4.9, 5.1, 0.0, 2.0)]);
        let (a, b) = (Pose::new(3.0, 6.0, 0.0), Pose::new(7.0, 6.0, 0.0));
        for n in [4, 8, 16, 64] {
            assert!(check_swept_with(&free, &a, &b, n, CheckOptions::default()).ok);
        }
    }

    #[test]
    fn trajectory_order_and_attribution() {
        let cfg = VerifyConfig::default();
        let s = square_scene(vec![]);
        let mut traj: Vec<Pose> = (0..20).map(|i| Pose::new(1.0 + 0.4 * i as f64, 5.0, 0.0)).collect();
        assert!(verify_trajectory(&s, &traj, &cfg, None).success);
        traj[12].y = 9.8;
        let r = verify_trajectory(&s, &traj, &cfg, None);
        // State 12 is checked before the (11, 12) step.
        assert_eq!(r.violation, Some(ViolationType::OutOfWorkspace));
        assert_eq!(r.first_fail_waypoint, Some(12));
        let m = marks(&[(0, MarkSource::Start), (5, MarkSource::Waypoint(0)), (14, MarkSource::Waypoint(1)), (19, MarkSource::Goal)]);
        let r = verify_trajectory(&s, &traj, &cfg, Some(&m));
        assert_eq!(r.first_fail_waypoint, Some(1));
        assert_eq!(failure_note(&r), "FAILURE: waypoint=1 type=out_of_workspace");

        let mut jump = traj.clone();
        jump[12].y = 5.0;
        jump[12].x += 0.3;
        let r = verify_trajectory(&s, &jump, &cfg, Some(&m));
        assert_eq!(r.violation, Some(ViolationType::StepSize));
        assert_eq!(r.first_fail_waypoint, Some(1));
    }

    #[test]
    fn attribution_rule() {
        let m = marks(&[(0, MarkSource::Start), (3, MarkSource::Waypoint(0)), (3, MarkSource::Waypoint(1)), (9, MarkSource::Goal)]);
        assert_eq!(attribute(0, &m), 0);
        assert_eq!(attribute(2, &m), 0);
        assert_eq!(attribute(3, &m), 0);
        assert_eq!(attribute(4, &m), 2);
        assert_eq!(attribute(9, &m), 2);
    }

    #[test]
    fn notes() {
        assert_eq!(failure_note(&VerificationReport::success()), "");
        let r = VerificationReport {
            success: false,
            first_fail_waypoint: Some(3),
            violation: Some(ViolationType::Collision),
            detail: None,
        };
        assert_eq!(failure_note(&r), "FAILURE: waypoint=3 type=collision");
        let r = VerificationReport { first_fail_waypoint: Some(0), violation: Some(ViolationType::OutOfWorkspace), ..r };
        assert_eq!(failure_note(&r), "FAILURE: waypoint=0 type=out_of_workspace");
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["violation"], "out_of_workspace");
        for key in ["success", "first_fail_waypoint", "violation", "detail"] {
            assert!(json.get(key).is_some());
        }
    }

    #[test]
    fn verify_waypoints_wall_waypoint() {
        let ws = Rect::new(0.0, 10.0, 0.0, 10.0);
        let op = Opening { wall_x_lo: 4.8, wall_x_hi: 5.2, gap_y_lo: 4.0, gap_y_hi: 6.0, index: 0 };
        let mut s = square_scene(op.walls(&ws).to_vec());
        s.openings = vec![op];
        let cfg = VerifyConfig::default();
        let lat = LatticeConfig::default();
        let ok = verify_waypoints(&s, &[Pose::new(3.5, 5.0, 0.0), Pose::new(6.5, 5.0, 0.0)], &cfg, &lat);
        assert!(ok.success, "{ok:?}");
        let bad = verify_waypoints(&s, &[Pose::new(3.5, 5.0, 0.0), Pose::new(5.5, 2.5, 0.0)], &cfg, &lat);
        assert_eq!(bad.violation, Some(ViolationType::Collision));
        assert_eq!(bad.first_fail_waypoint, Some(1));
    }

    proptest! {
        #[test]
        fn broad_phase_never_changes_verdict(x in -1.0f64..11.0, y in -1.0f64..11.0, phi in -4.0f64..4.0,
                                             ox in 0.0f64..8.0, oy in 0.0f64..8.0, w in 0.05f64..2.0, h in 0.05f64..2.0) {
            let s = square_scene(vec![Rect::new(ox, ox + w, oy, oy + h), Rect::new(5.0, 5.2, 0.0, 10.0)]);
            let q = Pose::new(x, y, phi);
            let with = check_pose_with(&s, &q, CheckOptions { broad_phase: true, strict_overlap: false });
            let without = check_pose_with(&s, &q, CheckOptions { broad_phase: false, strict_overlap: false });
            prop_assert_eq!(with, without);
        }

        #[test]
        fn strict_mode_is_a_refinement(x in 0.0f64..10.0, y in 0.0f64..10.0, phi in -4.0f64..4.0,
                                       ox in 0.0f64..9.0, oy in 0.0f64..9.0, w in 0.01f64..1.0, h in 0.01f64..1.0) {
            let s = square_scene(vec![Rect::new(ox, ox + w, oy, oy + h)]);
            let q = Pose::new(x, y, phi);
            let canon = check_pose(&s, &q);
            let strict = check_pose_with(&s, &q, CheckOptions { broad_phase: true, strict_overlap: true });
            prop_assert!(canon.collision_ok || !strict.collision_ok);
        }

        #[test]
        fn verify_deterministic_and_sound(xs in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0, -3.0f64..3.0), 1..12)) {
            let s = square_scene(vec![Rect::new(4.0, 4.5, 0.0, 6.0)]);
            let cfg = VerifyConfig::default();
            let traj: Vec<Pose> = xs.iter().map(|&(x, y, p)| Pose::new(x, y, p)).collect();
            let a = verify_trajectory(&s, &traj, &cfg, None);
            let b = verify_trajectory(&s, &traj, &cfg, None);
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.success, a.first_fail_waypoint.is_none() && a.violation.is_none());
            if a.success {
                prop_assert!(traj.iter().all(|q| check_pose(&s, q).ok()));
                prop_assert!(traj.windows(2).all(|w| check_step(&w[0], &w[1], &cfg).ok));
            }
        }
    }
}
