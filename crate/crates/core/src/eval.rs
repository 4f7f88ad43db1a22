//! Batch evaluation of policies, the scripted baseline and group reward reports.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::densifier::{densify_with_fallback, LatticeConfig, Trajectory};
use crate::geometry::{bounding_box, min_width_heading, transform_vertices, Pose};
use crate::reward::{geometric_reward, group_advantages, trajectory_cost, CostBreakdown, CostWeights, RewardError};
use crate::scene::Scene;
use crate::textio::{build_prompt, parse_completion, serialize_waypoints, ParseError, PromptDocument, DEFAULT_ROWS_PER_OPENING};
use crate::verifier::{failure_note, verify_trajectory, VerificationReport, VerifyConfig, ViolationType};

pub const DEFAULT_TIMEOUT_SECS: f64 = 120.0;

/// Clearance between the object's footprint and a wall at the baseline's
/// entry and exit poses.
const BASELINE_MARGIN: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy timed out after {0} s")]
    Timeout(f64),
    #[error("failed to start policy `{program}`: {message}")]
    Spawn { program: String, message: String },
    #[error("policy exited with {status}: {stderr}")]
    Exit { status: String, stderr: String },
    #[error("policy i/o: {0}")]
    Io(String),
    #[error("no replay completion for scene {scene_id} sample {sample}")]
    MissingReplay { scene_id: String, sample: usize },
}

/// Maps a prompt for `scene` to completion text.
pub trait Policy: Send + Sync {
    fn complete(&self, scene: &Scene, prompt: &PromptDocument, sample: usize) -> Result<String, PolicyError>;
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

/// Serializable policy descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyAdapter {
    Baseline,
    /// External process: prompt on stdin, completion on stdout.
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
    /// JSON-lines file of `{"scene_id": ..., "completion": ...}` records;
    /// repeated scene ids supply successive samples.
    Replay { path: PathBuf },
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl PolicyAdapter {
    pub fn build(&self) -> Result<Box<dyn Policy>, AdapterError> {
        Ok(match self {
            PolicyAdapter::Baseline => Box::new(BaselinePolicy { rows_per_opening: None }),
            PolicyAdapter::Command { program, args, timeout_secs } => Box::new(CommandPolicy {
                program: program.clone(),
                args: args.clone(),
                timeout: *timeout_secs,
            }),
            PolicyAdapter::Replay { path } => Box::new(ReplayPolicy::load(path)?),
        })
    }
}

/// Scripted policy: entry, gap-center and exit poses per opening.
pub struct BaselinePolicy {
    /// Overrides the prompt's rows per opening.
    pub rows_per_opening: Option<usize>,
}

impl Policy for BaselinePolicy {
    fn complete(&self, scene: &Scene, prompt: &PromptDocument, _sample: usize) -> Result<String, PolicyError> {
        Ok(baseline_policy(scene, self.rows_per_opening.unwrap_or(prompt.rows_per_opening)))
    }
}

/// Waypoints of the scripted baseline, `k` per opening (`k >= 3`).
pub fn baseline_waypoints(scene: &Scene, k: usize) -> Vec<Pose> {
    let k = k.max(3);
    let (_, phi) = min_width_heading(&scene.object);
    let fp = bounding_box(&transform_vertices(&scene.object, &Pose::new(0.0, 0.0, phi))).expect("object has vertices");
    let y_off = 0.5 * (fp.y_lo + fp.y_hi);
    let mut spans: Vec<(f64, f64)> = scene
        .openings
        .iter()
        .map(|o| (o.wall_x_lo - fp.x_hi - BASELINE_MARGIN, o.wall_x_hi - fp.x_lo + BASELINE_MARGIN))
        .collect();
    for i in 1..spans.len() {
        if spans[i - 1].1 > spans[i].0 {
            let mid = 0.5 * (spans[i - 1].1 + spans[i].0);
            spans[i - 1].1 = mid;
            spans[i].0 = mid;
        }
    }
    let mut out = Vec::with_capacity(k * spans.len());
    for (o, (pre, post)) in scene.openings.iter().zip(spans) {
        let y = o.gap_center() - y_off;
        for s in 0..k {
            let x = pre + (post - pre) * s as f64 / (k - 1) as f64;
            out.push(Pose::new(x, y, phi));
        }
    }
    out
}

pub fn baseline_policy(scene: &Scene, k: usize) -> String {
    serialize_waypoints(&baseline_waypoints(scene, k))
}

pub struct CommandPolicy {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: f64,
}

impl Policy for CommandPolicy {
    fn complete(&self, scene: &Scene, prompt: &PromptDocument, sample: usize) -> Result<String, PolicyError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .env("NARROWPASS_SCENE_ID", &scene.id)
            .env("NARROWPASS_SAMPLE_INDEX", sample.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| PolicyError::Spawn { program: self.program.clone(), message: e.to_string() })?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let text = prompt.full_text.clone();
        let writer = std::thread::spawn(move || {
            // A policy may exit without reading its input.
            let _ = stdin.write_all(text.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            stdout.read_to_end(&mut buf).map(|_| buf)
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });
        let status = match child.wait_timeout(Duration::from_secs_f64(self.timeout)) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(PolicyError::Timeout(self.timeout));
            }
            Err(e) => return Err(PolicyError::Io(e.to_string())),
        };
        let _ = writer.join();
        let out = reader
            .join()
            .map_err(|_| PolicyError::Io("stdout reader panicked".into()))?
            .map_err(|e| PolicyError::Io(e.to_string()))?;
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(PolicyError::Exit {
                status: status.to_string(),
                stderr: String::from_utf8_lossy(&err).trim().to_string(),
            });
        }
        String::from_utf8(out).map_err(|e| PolicyError::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub scene_id: String,
    pub completion: String,
}

pub struct ReplayPolicy {
    completions: HashMap<String, Vec<String>>,
}

impl ReplayPolicy {
    pub fn new(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        let mut completions: HashMap<String, Vec<String>> = HashMap::new();
        for r in records {
            completions.entry(r.scene_id).or_default().push(r.completion);
        }
        Self { completions }
    }

    pub fn load(path: &Path) -> Result<Self, AdapterError> {
        let text = std::fs::read_to_string(path).map_err(|source| AdapterError::Io { path: path.to_path_buf(), source })?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(line)
                .map_err(|source| AdapterError::Json { path: path.to_path_buf(), line: i + 1, source })?;
            records.push(r);
        }
        Ok(Self::new(records))
    }
}

impl Policy for ReplayPolicy {
    fn complete(&self, scene: &Scene, _prompt: &PromptDocument, sample: usize) -> Result<String, PolicyError> {
        self.completions
            .get(&scene.id)
            .and_then(|v| v.get(sample % v.len().max(1)))
            .cloned()
            .ok_or_else(|| PolicyError::MissingReplay { scene_id: scene.id.clone(), sample })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub verify: VerifyConfig,
    pub lattice: LatticeConfig,
    pub weights: CostWeights,
    pub rows_per_opening: usize,
    pub epsilon: f64,
    /// Leave parse failures out of the reward mean and std.
    pub exclude_parse_failures: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            verify: VerifyConfig::default(),
            lattice: LatticeConfig::default(),
            weights: CostWeights::default(),
            rows_per_opening: DEFAULT_ROWS_PER_OPENING,
            epsilon: 1e-6,
            exclude_parse_failures: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub policy_ms: f64,
    pub densify_ms: f64,
    pub verify_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub split: String,
    pub sample: usize,
    pub parse_ok: bool,
    pub parse_error: Option<ParseError>,
    /// Set when the policy itself failed (timeout, crash, missing replay).
    pub policy_error: Option<String>,
    pub report: Option<VerificationReport>,
    pub note: String,
    pub cost: Option<CostBreakdown>,
    pub reward: f64,
    pub fallback_segments: Vec<usize>,
    pub timings: Timings,
}

impl SceneRecord {
    pub fn success(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.success)
    }

    pub fn violation(&self) -> Option<ViolationType> {
        self.report.as_ref().and_then(|r| r.violation)
    }
}

pub struct SceneOutcome {
    pub record: SceneRecord,
    pub trajectory: Option<Trajectory>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Scores one completion text on `scene`.
pub fn score_completion(scene: &Scene, completion: Result<String, PolicyError>, sample: usize, params: &EvalParams) -> SceneOutcome {
    let mut record = SceneRecord {
        scene_id: scene.id.clone(),
        split: scene.distribution_tag.to_string(),
        sample,
        parse_ok: false,
        parse_error: None,
        policy_error: None,
        report: None,
        note: String::new(),
        cost: None,
        reward: 0.0,
        fallback_segments: vec![],
        timings: Timings::default(),
    };
    let text = match completion {
        Ok(t) => t,
        Err(e) => {
            record.policy_error = Some(e.to_string());
            return SceneOutcome { record, trajectory: None };
        }
    };
    let waypoints = match parse_completion(&text, params.rows_per_opening, scene.openings.len()) {
        Ok(c) => c.poses,
        Err(e) => {
            record.parse_error = Some(e);
            return SceneOutcome { record, trajectory: None };
        }
    };
    record.parse_ok = true;
    let t = Instant::now();
    let dense = densify_with_fallback(scene, &waypoints, &params.lattice, &params.verify);
    record.timings.densify_ms = ms(t);
    let t = Instant::now();
    let traj = dense.trajectory;
    let report = verify_trajectory(scene, &traj.states, &params.verify, Some(&traj.waypoint_marks));
    let cost = trajectory_cost(scene, &traj.states, &params.weights, &params.verify);
    record.timings.verify_ms = ms(t);
    record.note = failure_note(&report);
    record.reward = geometric_reward(cost.total, params.weights.alpha);
    record.cost = Some(cost);
    record.report = Some(report);
    record.fallback_segments = dense.fallback_segments;
    SceneOutcome { record, trajectory: Some(traj) }
}

pub fn evaluate_scene(policy: &dyn Policy, scene: &Scene, params: &EvalParams) -> SceneOutcome {
    evaluate_sample(policy, scene, params, 0)
}

fn evaluate_sample(policy: &dyn Policy, scene: &Scene, params: &EvalParams, sample: usize) -> SceneOutcome {
    let prompt = build_prompt(scene, &params.verify, params.rows_per_opening);
    let t = Instant::now();
    let completion = policy.complete(scene, &prompt, sample);
    let policy_ms = ms(t);
    let mut out = score_completion(scene, completion, sample, params);
    out.record.timings.policy_ms = policy_ms;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub split: String,
    pub n_scenes: usize,
    pub parse_rate: f64,
    pub success_rate: f64,
    pub c1_fail: f64,
    pub c2_fail: f64,
    pub c3_fail: f64,
    pub c4_fail: f64,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub reward_excludes_parse_failures: bool,
}

impl MetricsTable {
    pub fn from_records(records: &[SceneRecord], exclude_parse_failures: bool) -> Self {
        let n = records.len();
        let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
        let count_v = |v: ViolationType| records.iter().filter(|r| r.parse_ok && r.violation() == Some(v)).count();
        let mut splits: Vec<&str> = records.iter().map(|r| r.split.as_str()).collect();
        splits.sort_unstable();
        splits.dedup();
        let rewards: Vec<f64> =
            records.iter().filter(|r| r.parse_ok || !exclude_parse_failures).map(|r| r.reward).collect();
        let (mean, std) = if rewards.is_empty() {
            (0.0, 0.0)
        } else {
            let m = rewards.iter().sum::<f64>() / rewards.len() as f64;
            let v = rewards.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / rewards.len() as f64;
            (m, v.sqrt())
        };
        Self {
            split: splits.join("+"),
            n_scenes: n,
            parse_rate: pct(records.iter().filter(|r| r.parse_ok).count()),
            success_rate: pct(records.iter().filter(|r| r.parse_ok && r.success()).count()),
            c1_fail: pct(count_v(ViolationType::OutOfWorkspace)),
            c2_fail: pct(count_v(ViolationType::Collision)),
            c3_fail: pct(count_v(ViolationType::SweptCollision)),
            c4_fail: pct(count_v(ViolationType::StepSize)),
            reward_mean: mean,
            reward_std: std,
            reward_excludes_parse_failures: exclude_parse_failures,
        }
    }

    pub const COLUMNS: [&'static str; 7] =
        ["Parse", "Success", "C1 fail", "C2 fail", "C3 fail", "C4 fail", "Avg. Geom. Reward"];

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let head: Vec<&str> = ["Split", "N"].into_iter().chain(Self::COLUMNS).collect();
        let row = [
            self.split.clone(),
            self.n_scenes.to_string(),
            format!("{:.1}", self.parse_rate),
            format!("{:.1}", self.success_rate),
            format!("{:.1}", self.c1_fail),
            format!("{:.1}", self.c2_fail),
            format!("{:.1}", self.c3_fail),
            format!("{:.1}", self.c4_fail),
            format!("{:.2}±{:.2}", self.reward_mean, self.reward_std),
        ];
        let widths: Vec<usize> = head.iter().zip(&row).map(|(h, r)| h.chars().count().max(r.chars().count())).collect();
        let fmt = |cells: Vec<String>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        format!("{}\n{}\n", fmt(head.iter().map(|s| s.to_string()).collect()), fmt(row.to_vec()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub table: MetricsTable,
    pub records: Vec<SceneRecord>,
    #[serde(skip)]
    pub trajectories: Vec<Option<Trajectory>>,
}

/// Evaluates every scene; records come back in scene-id order.
pub fn evaluate_batch(policy: &dyn Policy, scenes: &[Scene], params: &EvalParams) -> BatchResult {
    let mut outcomes: Vec<SceneOutcome> = scenes.par_iter().map(|s| evaluate_scene(policy, s, params)).collect();
    outcomes.sort_by(|a, b| a.record.scene_id.cmp(&b.record.scene_id));
    let (records, trajectories): (Vec<_>, Vec<_>) = outcomes.into_iter().map(|o| (o.record, o.trajectory)).unzip();
    BatchResult { table: MetricsTable::from_records(&records, params.exclude_parse_failures), records, trajectories }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub scene_id: String,
    pub rewards: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub advantages: Vec<f64>,
    pub parse_ok: Vec<bool>,
}

/// Samples `g` completions per scene and reports group statistics.
pub fn grpo_reward_loop(
    policy: &dyn Policy,
    scenes: &[Scene],
    g: usize,
    params: &EvalParams,
) -> Result<Vec<GroupReport>, RewardError> {
    if g == 0 {
        return Err(RewardError::EmptyGroup);
    }
    scenes
        .par_iter()
        .map(|scene| {
            let records: Vec<SceneRecord> =
                (0..g).into_par_iter().map(|i| evaluate_sample(policy, scene, params, i).record).collect();
            let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
            let scores = group_advantages(&rewards, params.epsilon)?;
            Ok(GroupReport {
                scene_id: scene.id.clone(),
                rewards,
                mean: scores.mean,
                std: scores.std,
                advantages: scores.advantages,
                parse_ok: records.iter().map(|r| r.parse_ok).collect(),
            })
        })
        .collect()
}

/// Runs `f` on a rayon pool with `workers` threads (0 uses the global pool).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
