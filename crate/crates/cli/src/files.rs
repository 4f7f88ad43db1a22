use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use narrowpass_core::densifier::Trajectory;
use narrowpass_core::eval::EvalParams;
use narrowpass_core::geometry::Pose;
use narrowpass_core::scene::Scene;
use narrowpass_core::textio::{parse_completion, parse_waypoint_rows};

pub const MANIFEST_NAME: &str = "run_manifest.json";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(&r)?);
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let scene = Scene::from_json(&read_text(path)?).with_context(|| format!("parsing scene {}", path.display()))?;
    scene.validate().with_context(|| format!("validating scene {}", path.display()))?;
    Ok(scene)
}

fn is_manifest(path: &Path) -> bool {
    path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n == MANIFEST_NAME || n.ends_with(".manifest.json"))
}

/// Loads a scene file, a JSON-lines scene file, or every `*.json` scene in a directory.
pub fn load_scenes(path: &Path) -> Result<Vec<Scene>> {
    let scenes = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json") && !is_manifest(p))
            .collect();
        files.sort();
        files.iter().map(|p| load_scene(p)).collect::<Result<Vec<_>>>()?
    } else if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        let text = read_text(path)?;
        let mut out = vec![];
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let scene = Scene::from_json(line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
            scene.validate().with_context(|| format!("{}:{}", path.display(), n + 1))?;
            out.push(scene);
        }
        out
    } else {
        vec![load_scene(path)?]
    };
    if scenes.is_empty() {
        bail!("no scenes found at {}", path.display());
    }
    Ok(scenes)
}

/// Reads a waypoint CSV; with `completion` set the row count must match the scene.
pub fn load_waypoints(path: &Path, scene: &Scene, completion: bool, rows_per_opening: usize) -> Result<Vec<Pose>> {
    let text = read_text(path)?;
    let poses = if completion {
        parse_completion(&text, rows_per_opening, scene.openings.len()).map(|c| c.poses)
    } else {
        parse_waypoint_rows(&text)
    };
    poses.with_context(|| format!("parsing waypoints {}", path.display()))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let traj = Trajectory::read_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
    if traj.states.is_empty() {
        bail!("{} holds no states", path.display());
    }
    Ok(traj)
}

/// Provenance record written next to command outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub started_unix: u64,
    pub elapsed_secs: f64,
    pub params: Option<EvalParams>,
    pub details: Value,
    pub outputs: Vec<PathBuf>,
}

pub struct ManifestBuilder {
    command: String,
    started_unix: u64,
    start: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { command: command.to_string(), started_unix, start: Instant::now() }
    }

    pub fn finish(self, path: &Path, params: Option<EvalParams>, details: Value, outputs: Vec<PathBuf>) -> Result<()> {
        let m = RunManifest {
            tool: "narrowpass",
            version: narrowpass_core::VERSION,
            command: self.command,
            argv: std::env::args().collect(),
            started_unix: self.started_unix,
            elapsed_secs: self.start.elapsed().as_secs_f64(),
            params,
            details,
            outputs,
        };
        write_json(path, &m)
    }
}

/// Manifest path for a single-file output: `out.ext` -> `out.ext.manifest.json`.
pub fn manifest_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
