//! Prompt rendering, strict waypoint parsing and demonstration files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::scene::{opening_summary, Scene};
use crate::verifier::VerifyConfig;

pub const HEADER: &str = "x,y,phi";
pub const DEFAULT_ROWS_PER_OPENING: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    TaskAndFormat,
    Constraints,
    SceneMachineReadable,
    OpeningSummary,
    FormatReminder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSection {
    pub kind: SectionKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDocument {
    pub sections: Vec<PromptSection>,
    pub rows_per_opening: usize,
    pub full_text: String,
}

fn format_rule(total: usize, k: usize) -> String {
    format!(
        "Output format: the first line must be exactly `{HEADER}`, followed by exactly {total} rows ({k} per opening, \
         openings in index order), each row three decimal numbers `x,y,phi` separated by commas. \
         No other text before or after."
    )
}

fn pose_json(q: &Pose) -> String {
    format!("{{\"x\": {}, \"y\": {}, \"phi\": {}}}", q.x, q.y, q.phi)
}

pub fn build_prompt(scene: &Scene, cfg: &VerifyConfig, k: usize) -> PromptDocument {
    let total = k * scene.openings.len();
    let mut sections = Vec::with_capacity(5);

    sections.push(PromptSection {
        kind: SectionKind::TaskAndFormat,
        text: format!(
            "Task: move the rigid planar object from its start pose to its goal pose through the sequential openings \
             of the scene, without leaving the workspace or touching any obstacle. Propose {k} waypoints (x, y, phi) \
             per opening; phi is the heading in radians.\n{}",
            format_rule(total, k)
        ),
    });

    sections.push(PromptSection {
        kind: SectionKind::Constraints,
        text: format!(
            "Constraints:\n\
             C1: every object vertex stays inside the workspace.\n\
             C2: no object vertex lies inside an obstacle rectangle.\n\
             C3: motion between consecutive poses is collision-free (checked by interpolation).\n\
             C4: per step, translation <= {} and rotation <= {} rad.",
            cfg.lin_limit, cfg.ang_limit
        ),
    });

    let mut m = String::from("Scene:\n");
    let ws = &scene.workspace;
    let _ = writeln!(m, "workspace: x_lo={} x_hi={} y_lo={} y_hi={}", ws.x_lo, ws.x_hi, ws.y_lo, ws.y_hi);
    let _ = writeln!(m, "obstacles (x_lo, x_hi, y_lo, y_hi):");
    for (i, o) in scene.obstacles.iter().enumerate() {
        let _ = writeln!(m, "  {i}: {}, {}, {}, {}", o.x_lo, o.x_hi, o.y_lo, o.y_hi);
    }
    let verts: Vec<String> = scene.object.vertices.iter().map(|v| format!("({}, {})", v.x, v.y)).collect();
    let _ = writeln!(m, "object vertices (local frame): {}", verts.join(", "));
    let _ = writeln!(m, "start: {}", pose_json(&scene.start));
    let _ = write!(m, "goal: {}", pose_json(&scene.goal));
    sections.push(PromptSection { kind: SectionKind::SceneMachineReadable, text: m });

    let summary = opening_summary(scene);
    let text = if summary.is_empty() {
        "Openings: none.".to_string()
    } else {
        let lines: Vec<String> = summary.iter().map(|r| format!("- {}", r.describe())).collect();
        format!("Openings ({}):\n{}", summary.len(), lines.join("\n"))
    };
    sections.push(PromptSection { kind: SectionKind::OpeningSummary, text });

    sections.push(PromptSection {
        kind: SectionKind::FormatReminder,
        text: format!("Reminder: output exactly {total} rows ({k} per opening) after the header.\n{}", format_rule(total, k)),
    });

    let full_text = sections.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n\n");
    PromptDocument { sections, rows_per_opening: k, full_text }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointCompletion {
    pub poses: Vec<Pose>,
    pub rows_per_opening: usize,
    pub num_openings: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ParseError {
    #[error("missing_header")]
    MissingHeader,
    #[error("bad_row(line {line})")]
    BadRow { line: usize },
    #[error("wrong_row_count(got {got}, want {want})")]
    WrongRowCount { got: usize, want: usize },
    #[error("trailing_content")]
    TrailingContent,
    #[error("non_finite_value(line {line})")]
    NonFiniteValue { line: usize },
}

impl ParseError {
    pub fn token(&self) -> &'static str {
        match self {
            ParseError::MissingHeader => "missing_header",
            ParseError::BadRow { .. } => "bad_row",
            ParseError::WrongRowCount { .. } => "wrong_row_count",
            ParseError::TrailingContent => "trailing_content",
            ParseError::NonFiniteValue { .. } => "non_finite_value",
        }
    }
}

enum Field {
    Num(f64),
    NonFinite,
    Bad,
}

fn parse_field(s: &str) -> Field {
    let t = s.trim();
    let digits = t.strip_prefix('-').unwrap_or(t);
    let (int, frac) = match digits.split_once('.') {
        Some((a, b)) => (a, Some(b)),
        None => (digits, None),
    };
    let all_digits = |x: &str| !x.is_empty() && x.bytes().all(|b| b.is_ascii_digit());
    if all_digits(int) && frac.is_none_or(all_digits) {
        return match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Field::Num(v),
            _ => Field::NonFinite,
        };
    }
    let lower = digits.trim_start_matches('+').to_ascii_lowercase();
    if matches!(lower.as_str(), "nan" | "inf" | "infinity") {
        Field::NonFinite
    } else {
        Field::Bad
    }
}

enum Row {
    Pose(Pose),
    NonFinite,
    Bad,
}

fn parse_row(line: &str) -> Row {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != 3 {
        return Row::Bad;
    }
    let mut vals = [0.0; 3];
    let mut non_finite = false;
    for (slot, p) in vals.iter_mut().zip(&parts) {
        match parse_field(p) {
            Field::Num(v) => *slot = v,
            Field::NonFinite => non_finite = true,
            Field::Bad => return Row::Bad,
        }
    }
    if non_finite {
        Row::NonFinite
    } else {
        Row::Pose(Pose::new(vals[0], vals[1], vals[2]))
    }
}

/// Strict parse of a completion carrying `rows_per_opening * num_openings` rows.
pub fn parse_completion(text: &str, rows_per_opening: usize, num_openings: usize) -> Result<WaypointCompletion, ParseError> {
    let want = rows_per_opening * num_openings;
    let normalized = text.replace("\r\n", "\n");
    let lines: Vec<(usize, &str)> = normalized.split('\n').enumerate().map(|(i, l)| (i + 1, l)).collect();
    let mut it = lines.iter().skip_while(|(_, l)| l.trim().is_empty());
    match it.next() {
        Some((_, l)) if l.trim() == HEADER => {}
        _ => return Err(ParseError::MissingHeader),
    }
    let rest: Vec<&(usize, &str)> = it.collect();
    let block_len = rest.iter().take_while(|(_, l)| !l.trim().is_empty()).count();
    let (block, after) = rest.split_at(block_len);

    let mut poses = Vec::with_capacity(want);
    for (idx, (line_no, l)) in block.iter().enumerate() {
        match parse_row(l.trim()) {
            Row::Pose(p) => poses.push(p),
            Row::NonFinite => return Err(ParseError::NonFiniteValue { line: *line_no }),
            Row::Bad if idx >= want => return Err(ParseError::TrailingContent),
            Row::Bad => return Err(ParseError::BadRow { line: *line_no }),
        }
    }
    if poses.len() != want {
        return Err(ParseError::WrongRowCount { got: poses.len(), want });
    }
    if after.iter().any(|(_, l)| !l.trim().is_empty()) {
        return Err(ParseError::TrailingContent);
    }
    Ok(WaypointCompletion { poses, rows_per_opening, num_openings })
}

pub fn serialize_waypoints(poses: &[Pose]) -> String {
    let mut out = String::from(HEADER);
    for p in poses {
        let _ = write!(out, "\n{:.6},{:.6},{:.6}", p.x, p.y, p.phi);
    }
    out.replace("-0.000000", "0.000000")
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
}

/// Sibling scene path of a demonstration CSV: `demo.csv` -> `demo.scene.json`.
pub fn demo_scene_path(csv: &Path) -> PathBuf {
    csv.with_extension("scene.json")
}

pub fn write_demo(csv: &Path, scene: &Scene, poses: &[Pose]) -> Result<(), DemoError> {
    std::fs::write(csv, serialize_waypoints(poses))
        .map_err(|source| DemoError::Io { path: csv.to_path_buf(), source })?;
    let sp = demo_scene_path(csv);
    std::fs::write(&sp, scene.to_json()).map_err(|source| DemoError::Io { path: sp.clone(), source })?;
    Ok(())
}

/// Reads a demonstration CSV and its sibling scene. Any number of rows is
/// accepted.
pub fn read_demo(csv: &Path) -> Result<(Scene, Vec<Pose>), DemoError> {
    let text = std::fs::read_to_string(csv).map_err(|source| DemoError::Io { path: csv.to_path_buf(), source })?;
    let sp = demo_scene_path(csv);
    let scene_text = std::fs::read_to_string(&sp).map_err(|source| DemoError::Io { path: sp.clone(), source })?;
    let scene = Scene::from_json(&scene_text).map_err(|source| DemoError::Json { path: sp, source })?;
    let poses = parse_waypoint_rows(&text).map_err(|source| DemoError::Parse { path: csv.to_path_buf(), source })?;
    Ok((scene, poses))
}

/// Parses a header plus any number of waypoint rows.
pub fn parse_waypoint_rows(text: &str) -> Result<Vec<Pose>, ParseError> {
    let rows = text.replace("\r\n", "\n").lines().skip_while(|l| l.trim().is_empty()).skip(1).filter(|l| !l.trim().is_empty()).count();
    parse_completion(text, rows, 1).map(|c| c.poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, GenParams, ObjectShape};
    use proptest::prelude::*;

    #[test]
    fn parse_examples() {
        let t = "x,y,phi\n1.0,2.0,0.0\n3.0,2.0,1.57";
        let c = parse_completion(t, 2, 1).unwrap();
        assert_eq!(c.poses, vec![Pose::new(1.0, 2.0, 0.0), Pose::new(3.0, 2.0, 1.57)]);
        assert_eq!(parse_completion(t, 3, 1), Err(ParseError::WrongRowCount { got: 2, want: 3 }));
        let prose = "Sure! Here are the waypoints:\nx,y,phi\n1.0,2.0,0.0\n3.0,2.0,1.57";
        assert_eq!(parse_completion(prose, 2, 1), Err(ParseError::MissingHeader));
    }

    #[test]
    fn parse_edge_cases() {
        assert_eq!(parse_completion("\n\nx,y,phi\r\n1,2,3\r\n\n\n", 1, 1).unwrap().poses, vec![Pose::new(1.0, 2.0, 3.0)]);
        assert_eq!(parse_completion("x,y,phi\n1,2,nan", 1, 1), Err(ParseError::NonFiniteValue { line: 2 }));
        assert_eq!(parse_completion("x,y,phi\n1e2,2,3", 1, 1), Err(ParseError::BadRow { line: 2 }));
        assert_eq!(parse_completion("x,y,phi\n1,2,3\n4,5,6", 1, 1), Err(ParseError::WrongRowCount { got: 2, want: 1 }));
        assert_eq!(parse_completion("x,y,phi\n1,2,3\nDone.", 1, 1), Err(ParseError::TrailingContent));
        assert_eq!(parse_completion("x,y,phi\n1,2,3\n\nDone.", 1, 1), Err(ParseError::TrailingContent));
        assert_eq!(parse_completion("y,x,phi\n1,2,3", 1, 1), Err(ParseError::MissingHeader));
        assert_eq!(parse_completion("", 1, 1), Err(ParseError::MissingHeader));
        assert_eq!(parse_completion("x,y,phi", 0, 1).unwrap().poses, vec![]);
    }

    #[test]
    fn serialize_examples() {
        assert_eq!(serialize_waypoints(&[]), "x,y,phi");
        assert_eq!(serialize_waypoints(&[Pose::new(1.0, 2.0, 0.5)]), "x,y,phi\n1.000000,2.000000,0.500000");
        assert_eq!(serialize_waypoints(&[Pose::new(-1e-9, 0.0, 0.0)]), "x,y,phi\n0.000000,0.000000,0.000000");
    }

    #[test]
    fn prompt_structure() {
        let s = generate_scene(&GenParams::id(ObjectShape::I, 2, 3)).unwrap();
        let cfg = VerifyConfig::default();
        let a = build_prompt(&s, &cfg, 3);
        assert_eq!(a, build_prompt(&s, &cfg, 3));
        let kinds: Vec<SectionKind> = a.sections.iter().map(|x| x.kind).collect();
        assert_eq!(
            kinds,
            [
                SectionKind::TaskAndFormat,
                SectionKind::Constraints,
                SectionKind::SceneMachineReadable,
                SectionKind::OpeningSummary,
                SectionKind::FormatReminder
            ]
        );
        assert!(a.sections[4].text.contains("6 rows (3 per opening)"));
        assert!(a.sections[0].text.contains(HEADER) && a.sections[4].text.contains(HEADER));
        assert!(a.sections[1].text.contains("translation <= 0.5 and rotation <= 0.3"));
        for o in &s.obstacles {
            assert!(a.full_text.contains(&format!("{}, {}, {}, {}", o.x_lo, o.x_hi, o.y_lo, o.y_hi)));
        }
        assert!(!a.full_text.contains("e-"));

        let mut none = s.clone();
        none.openings.clear();
        none.obstacles.clear();
        let p = build_prompt(&none, &cfg, 3);
        assert!(p.sections[3].text.contains("none"));
        assert!(p.sections[4].text.contains("0 rows"));
    }

    #[test]
    fn demo_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate_scene(&GenParams::id(ObjectShape::I, 1, 3)).unwrap();
        let csv = dir.path().join("demo.csv");
        let poses = vec![s.start, s.goal];
        write_demo(&csv, &s, &poses).unwrap();
        assert!(dir.path().join("demo.scene.json").exists());
        let (scene, back) = read_demo(&csv).unwrap();
        assert_eq!(scene, s);
        assert_eq!(back.len(), 2);
        let err = read_demo(&dir.path().join("missing.csv")).unwrap_err();
        assert!(err.to_string().contains("missing.csv"));
    }

    proptest! {
        #[test]
        fn round_trip(xs in proptest::collection::vec((-1e4f64..1e4, -1e4f64..1e4, -3.2f64..3.2), 0..20)) {
            let poses: Vec<Pose> = xs.iter().map(|&(x, y, p)| Pose::new(x, y, p)).collect();
            let text = serialize_waypoints(&poses);
            let back = parse_completion(&text, poses.len(), 1).unwrap().poses;
            for (a, b) in poses.iter().zip(&back) {
                prop_assert!((a.x - b.x).abs() <= 1e-6 && (a.y - b.y).abs() <= 1e-6 && (a.phi - b.phi).abs() <= 1e-6);
            }
        }

        #[test]
        fn never_panics(s in "\\PC*") {
            let _ = parse_completion(&s, 2, 1);
        }
    }
}
