//! Lattice A* densification of sparse SE(2) waypoints.
//!
//! The lattice is anchored at the segment start `qa`: cell `(i, k, j)` is the
//! pose `(qa.x + i·xy_step, qa.y + k·xy_step, qa.phi + j·phi_step)`. Every
//! cell has 24 neighbours (8 translations, each with heading change -1, 0 or
//! +1). An edge is usable when it passes the step, pose and swept checks, so
//! any returned path is feasible by construction.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Pose};
use crate::scene::Scene;
use crate::verifier::{check_pose, check_step, check_swept, ConfigError, VerifyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub xy_step: f64,
    pub phi_step: f64,
    pub max_expansions: usize,
    pub heuristic_ang_weight: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { xy_step: 0.1, phi_step: PI / 16.0, max_expansions: 200_000, heuristic_ang_weight: 0.5 }
    }
}

impl LatticeConfig {
    /// Number of heading cells per revolution.
    pub fn headings(&self) -> i32 {
        (2.0 * PI / self.phi_step).round() as i32
    }

    pub fn validate(&self, cfg: &VerifyConfig) -> Result<(), ConfigError> {
        if !(self.xy_step.is_finite() && self.xy_step > 0.0) {
            return Err(ConfigError::NonPositive("xy_step"));
        }
        if !(self.phi_step.is_finite() && self.phi_step > 0.0) {
            return Err(ConfigError::NonPositive("phi_step"));
        }
        if !(self.heuristic_ang_weight.is_finite() && self.heuristic_ang_weight >= 0.0) {
            return Err(ConfigError::Invalid("heuristic_ang_weight must be finite and non-negative".into()));
        }
        if self.max_expansions == 0 {
            return Err(ConfigError::NonPositive("max_expansions"));
        }
        if self.xy_step > cfg.lin_limit / 2f64.sqrt() {
            return Err(ConfigError::Invalid("xy_step must not exceed lin_limit/sqrt(2)".into()));
        }
        if self.phi_step > cfg.ang_limit {
            return Err(ConfigError::Invalid("phi_step must not exceed ang_limit".into()));
        }
        let n = 2.0 * PI / self.phi_step;
        if (n - n.round()).abs() > 1e-9 || n.round() < 2.0 {
            return Err(ConfigError::Invalid("phi_step must divide 2*pi into at least two cells".into()));
        }
        Ok(())
    }
}

/// Which input pose a dense state came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkSource {
    Start,
    Waypoint(usize),
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaypointMark {
    pub dense_index: usize,
    pub source: MarkSource,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Pose>,
    pub waypoint_marks: Vec<WaypointMark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub states: Vec<Pose>,
    /// Lattice path cost up to the snapped target cell.
    pub cost: f64,
    pub expansions: usize,
    /// Whether the last state is exactly the requested target.
    pub reached_exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PlanFailure {
    #[error("segment start is infeasible")]
    StartInfeasible,
    #[error("segment target is infeasible")]
    TargetInfeasible,
    #[error("search budget exhausted after {expansions} expansions")]
    Exhausted { expansions: usize },
    #[error("target unreachable on the lattice ({expansions} expansions)")]
    Unreachable { expansions: usize },
}

type Cell = (i32, i32, i32);

struct Lattice<'a> {
    qa: Pose,
    lat: &'a LatticeConfig,
    n: i32,
}

impl Lattice<'_> {
    fn pose(&self, (i, k, j): Cell) -> Pose {
        let phi = if j == 0 { self.qa.phi } else { wrap_angle(self.qa.phi + j as f64 * self.lat.phi_step) };
        Pose::new(self.qa.x + i as f64 * self.lat.xy_step, self.qa.y + k as f64 * self.lat.xy_step, phi)
    }

    fn snap(&self, q: &Pose) -> Cell {
        let i = ((q.x - self.qa.x) / self.lat.xy_step).round() as i32;
        let k = ((q.y - self.qa.y) / self.lat.xy_step).round() as i32;
        let j = (wrap_angle(q.phi - self.qa.phi) / self.lat.phi_step).round() as i32;
        (i, k, j.rem_euclid(self.n))
    }

    fn heading_gap(&self, a: i32, b: i32) -> i32 {
        let d = (a - b).rem_euclid(self.n);
        d.min(self.n - d)
    }

    fn heuristic(&self, c: Cell, goal: Cell) -> f64 {
        let (di, dk) = ((goal.0 - c.0) as f64, (goal.1 - c.1) as f64);
        self.lat.xy_step * di.hypot(dk)
            + self.lat.heuristic_ang_weight * self.lat.phi_step * self.heading_gap(c.2, goal.2) as f64
    }

    fn edge_cost(&self, di: i32, dk: i32, dj: i32) -> f64 {
        self.lat.xy_step * (di as f64).hypot(dk as f64) + self.lat.heuristic_ang_weight * self.lat.phi_step * dj.abs() as f64
    }
}

/// The 24 lattice moves in fixed order.
pub fn lattice_moves() -> Vec<(i32, i32, i32)> {
    let mut out = Vec::with_capacity(24);
    for di in -1..=1 {
        for dk in -1..=1 {
            if di == 0 && dk == 0 {
                continue;
            }
            for dj in -1..=1 {
                out.push((di, dk, dj));
            }
        }
    }
    out
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    cell: Cell,
}

impl Eq for Open {}

impl Ord for Open {
    // Max-heap order: lower f, then larger g, then lower heading, then lower (i, k).
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(self.g.total_cmp(&o.g))
            .then(o.cell.2.cmp(&self.cell.2))
            .then((o.cell.0, o.cell.1).cmp(&(self.cell.0, self.cell.1)))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Plans a feasible lattice path from `qa` towards `qb`.
pub fn plan_segment(
    scene: &Scene,
    qa: &Pose,
    qb: &Pose,
    lat: &LatticeConfig,
    cfg: &VerifyConfig,
) -> Result<SegmentPlan, PlanFailure> {
    if !check_pose(scene, qa).ok() {
        return Err(PlanFailure::StartInfeasible);
    }
    if !check_pose(scene, qb).ok() {
        return Err(PlanFailure::TargetInfeasible);
    }
    if qa.translation_to(qb) == 0.0 && qa.rotation_to(qb) == 0.0 {
        return Ok(SegmentPlan { states: vec![*qa], cost: 0.0, expansions: 0, reached_exact: true });
    }
    let l = Lattice { qa: *qa, lat, n: lat.headings() };
    let goal = l.snap(qb);
    let goal_pose = l.pose(goal);
    if !check_pose(scene, &goal_pose).ok() {
        return Err(PlanFailure::TargetInfeasible);
    }
    let moves = lattice_moves();
    let start: Cell = (0, 0, 0);
    let mut g_score: HashMap<Cell, f64> = HashMap::from([(start, 0.0)]);
    let mut parent: HashMap<Cell, Cell> = HashMap::new();
    let mut feasible: HashMap<Cell, bool> = HashMap::from([(start, true)]);
    let mut closed: HashMap<Cell, ()> = HashMap::new();
    let mut open = BinaryHeap::from([Open { f: l.heuristic(start, goal), g: 0.0, cell: start }]);
    let mut expansions = 0usize;

    let found = loop {
        let Some(Open { g, cell, .. }) = open.pop() else {
            return Err(PlanFailure::Unreachable { expansions });
        };
        if closed.contains_key(&cell) || g > g_score[&cell] {
            continue;
        }
        if cell == goal {
            break g;
        }
        if expansions >= lat.max_expansions {
            return Err(PlanFailure::Exhausted { expansions });
        }
        expansions += 1;
        closed.insert(cell, ());
        let from = l.pose(cell);
        for &(di, dk, dj) in &moves {
            let nb = (cell.0 + di, cell.1 + dk, (cell.2 + dj).rem_euclid(l.n));
            if closed.contains_key(&nb) {
                continue;
            }
            let ng = g + l.edge_cost(di, dk, dj);
            if g_score.get(&nb).is_some_and(|&old| old <= ng) {
                continue;
            }
            let to = l.pose(nb);
            let ok = *feasible.entry(nb).or_insert_with(|| check_pose(scene, &to).ok());
            if !ok || !check_step(&from, &to, cfg).ok || !check_swept(scene, &from, &to, cfg).ok {
                continue;
            }
            g_score.insert(nb, ng);
            parent.insert(nb, cell);
            open.push(Open { f: ng + l.heuristic(nb, goal), g: ng, cell: nb });
        }
    };

    let mut cells = vec![goal];
    while let Some(p) = parent.get(cells.last().unwrap()) {
        cells.push(*p);
    }
    cells.reverse();
    let mut states: Vec<Pose> = cells.iter().map(|&c| l.pose(c)).collect();
    let last = *states.last().unwrap();
    let exact = last.translation_to(qb) == 0.0 && last.rotation_to(qb) == 0.0;
    let reached_exact = exact || {
        let hop_ok = check_step(&last, qb, cfg).ok && check_swept(scene, &last, qb, cfg).ok;
        if hop_ok {
            states.push(*qb);
        }
        hop_ok
    };
    Ok(SegmentPlan { states, cost: found, expansions, reached_exact })
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("segment {segment} failed: {reason}")]
pub struct DensifyFailure {
    pub segment: usize,
    pub partial: Trajectory,
    pub reason: PlanFailure,
}

fn targets(scene: &Scene, waypoints: &[Pose]) -> Vec<(Pose, MarkSource)> {
    let mut t: Vec<(Pose, MarkSource)> = waypoints.iter().enumerate().map(|(k, q)| (*q, MarkSource::Waypoint(k))).collect();
    t.push((scene.goal, MarkSource::Goal));
    t
}

fn start_trajectory(scene: &Scene) -> Trajectory {
    Trajectory {
        states: vec![scene.start],
        waypoint_marks: vec![WaypointMark { dense_index: 0, source: MarkSource::Start }],
    }
}

/// Connects start, `waypoints` and goal; stops at the first failing segment.
pub fn densify(
    scene: &Scene,
    waypoints: &[Pose],
    lat: &LatticeConfig,
    cfg: &VerifyConfig,
) -> Result<Trajectory, DensifyFailure> {
    let mut traj = start_trajectory(scene);
    for (segment, (target, source)) in targets(scene, waypoints).into_iter().enumerate() {
        let cur = *traj.states.last().unwrap();
        match plan_segment(scene, &cur, &target, lat, cfg) {
            Ok(plan) => traj.states.extend_from_slice(&plan.states[1..]),
            Err(reason) => return Err(DensifyFailure { segment, partial: traj, reason }),
        }
        traj.waypoint_marks.push(WaypointMark { dense_index: traj.states.len() - 1, source });
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseResult {
    pub trajectory: Trajectory,
    /// Segments replaced by a direct hop to their target.
    pub fallback_segments: Vec<usize>,
}

/// Like [`densify`], but a segment the planner cannot connect becomes a single
/// straight hop so that verification can still classify it.
pub fn densify_with_fallback(
    scene: &Scene,
    waypoints: &[Pose],
    lat: &LatticeConfig,
    cfg: &VerifyConfig,
) -> DenseResult {
    let mut traj = start_trajectory(scene);
    let mut fallback_segments = Vec::new();
    for (segment, (target, source)) in targets(scene, waypoints).into_iter().enumerate() {
        let cur = *traj.states.last().unwrap();
        match plan_segment(scene, &cur, &target, lat, cfg) {
            Ok(plan) => traj.states.extend_from_slice(&plan.states[1..]),
            Err(_) => {
                traj.states.push(target);
                fallback_segments.push(segment);
            }
        }
        traj.waypoint_marks.push(WaypointMark { dense_index: traj.states.len() - 1, source });
    }
    DenseResult { trajectory: traj, fallback_segments }
}

#[derive(Debug, Error)]
pub enum TrajectoryIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: expected h={expected}, found {found}")]
    Index { line: usize, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum MarkField {
    One(MarkSource),
    Many(Vec<MarkSource>),
}

#[derive(Debug, Serialize, Deserialize)]
struct StateLine {
    h: usize,
    x: f64,
    y: f64,
    phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    waypoint_mark: Option<MarkField>,
}

impl Trajectory {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (h, q) in self.states.iter().enumerate() {
            let here: Vec<MarkSource> =
                self.waypoint_marks.iter().filter(|m| m.dense_index == h).map(|m| m.source).collect();
            let waypoint_mark = match here.len() {
                0 => None,
                1 => Some(MarkField::One(here[0])),
                _ => Some(MarkField::Many(here)),
            };
            let line = StateLine { h, x: q.x, y: q.y, phi: q.phi, waypoint_mark };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TrajectoryIoError> {
        let mut traj = Trajectory::default();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: StateLine =
                serde_json::from_str(&line).map_err(|source| TrajectoryIoError::Json { line: n + 1, source })?;
            if s.h != traj.states.len() {
                return Err(TrajectoryIoError::Index { line: n + 1, expected: traj.states.len(), found: s.h });
            }
            let sources = match s.waypoint_mark {
                None => vec![],
                Some(MarkField::One(m)) => vec![m],
                Some(MarkField::Many(v)) => v,
            };
            traj.waypoint_marks.extend(sources.into_iter().map(|source| WaypointMark { dense_index: s.h, source }));
            traj.states.push(Pose::new(s.x, s.y, s.phi));
        }
        Ok(traj)
    }
}
