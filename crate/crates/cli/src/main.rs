//! `narrowpass` command-line tool.
//!
//! Exit status: 0 on success, 1 when a `--strict` check fails, 2 for invalid
//! invocations or unreadable input.

mod args;
mod files;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde_json::{json, Value};

use narrowpass_core::densifier::{densify_with_fallback, DenseResult, Trajectory};
use narrowpass_core::eval::{evaluate_batch, grpo_reward_loop, with_workers, EvalParams};
use narrowpass_core::plot::render_svg;
use narrowpass_core::reward::score_trajectory;
use narrowpass_core::scene::{generate_batch, GenParams, Scene};
use narrowpass_core::textio::{build_prompt, read_demo};
use narrowpass_core::verifier::{failure_note, verify_trajectory, verify_waypoints};
use narrowpass_service::{AppState, ServiceConfig};

use args::*;
use files::*;

enum Outcome {
    Ok,
    StrictFailure,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::StrictFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let data_dir = cli.data_dir;
    match cli.command {
        Command::Gen(a) => gen(a, &data_dir),
        Command::Prompt(a) => prompt(a),
        Command::Verify(a) => verify(a),
        Command::Densify(a) => densify(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a, &data_dir),
        Command::GrpoRewards(a) => grpo(a),
        Command::Plot(a) => plot(a),
        Command::Serve(a) => serve(a, &data_dir),
        Command::DemoReplay(a) => demo_replay(a),
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn gen(a: GenArgs, data_dir: &Path) -> Result<Outcome> {
    let manifest = ManifestBuilder::start("gen");
    let out = a.out.clone().unwrap_or_else(|| data_dir.join("scenes"));
    let params = match &a.params {
        Some(p) => serde_json::from_str::<GenParams>(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => GenParams::for_split(a.split.into(), a.shape.into(), a.num_openings, a.seed),
    };
    let scenes = with_workers(a.workers, || generate_batch(&params, a.count))?;
    let mut outputs = Vec::with_capacity(scenes.len());
    for s in &scenes {
        let path = out.join(format!("{}.json", s.id));
        write_text(&path, &s.to_json())?;
        outputs.push(path);
    }
    manifest.finish(&out.join(MANIFEST_NAME), None, json!({ "gen_params": params, "count": a.count }), outputs)?;
    println!("wrote {} scenes to {}", scenes.len(), out.display());
    Ok(Outcome::Ok)
}

fn prompt(a: PromptArgs) -> Result<Outcome> {
    let params = a.config.params()?;
    let scene = load_scene(&a.scene)?;
    let doc = build_prompt(&scene, &params.verify, params.rows_per_opening);
    if a.json {
        print_json(&doc)?;
    } else {
        println!("{}", doc.full_text);
    }
    Ok(Outcome::Ok)
}

fn densify_input(scene: &Scene, input: &PathInput, params: &EvalParams) -> Result<DenseResult> {
    match (&input.waypoints, &input.trajectory) {
        (Some(w), None) => {
            let wps = load_waypoints(w, scene, input.completion, params.rows_per_opening)?;
            Ok(densify_with_fallback(scene, &wps, &params.lattice, &params.verify))
        }
        (None, Some(t)) => Ok(DenseResult { trajectory: load_trajectory(t)?, fallback_segments: vec![] }),
        _ => bail!("exactly one of --waypoints or --trajectory is required"),
    }
}

fn verify(a: VerifyArgs) -> Result<Outcome> {
    let manifest = ManifestBuilder::start("verify");
    let params = a.config.params()?;
    let scene = load_scene(&a.input.scene)?;
    let dense = densify_input(&scene, &a.input, &params)?;
    let traj = &dense.trajectory;
    let marks = (!traj.waypoint_marks.is_empty()).then_some(traj.waypoint_marks.as_slice());
    let report = verify_trajectory(&scene, &traj.states, &params.verify, marks);
    let out = json!({
        "report": report,
        "note": failure_note(&report),
        "fallback_segments": dense.fallback_segments,
        "states": traj.states.len(),
    });
    print_json(&out)?;
    if let Some(path) = &a.out {
        write_json(path, &out)?;
        manifest.finish(&manifest_for(path), Some(params), json!({ "scene_id": scene.id }), vec![path.clone()])?;
    }
    Ok(if a.strict && !report.success { Outcome::StrictFailure } else { Outcome::Ok })
}

fn densify(a: DensifyArgs) -> Result<Outcome> {
    let manifest = ManifestBuilder::start("densify");
    let params = a.config.params()?;
    let scene = load_scene(&a.scene)?;
    let wps = load_waypoints(&a.waypoints, &scene, a.completion, params.rows_per_opening)?;
    let dense = densify_with_fallback(&scene, &wps, &params.lattice, &params.verify);
    write_text(&a.out, &dense.trajectory.to_jsonl())?;
    let summary = json!({ "states": dense.trajectory.states.len(), "fallback_segments": dense.fallback_segments });
    manifest.finish(&manifest_for(&a.out), Some(params), summary.clone(), vec![a.out.clone()])?;
    print_json(&summary)?;
    Ok(if a.strict && !dense.fallback_segments.is_empty() { Outcome::StrictFailure } else { Outcome::Ok })
}

fn score(a: ScoreArgs) -> Result<Outcome> {
    let params = a.config.params()?;
    let scene = load_scene(&a.input.scene)?;
    let dense = densify_input(&scene, &a.input, &params)?;
    print_json(&score_trajectory(&scene, &dense.trajectory.states, &params.weights, &params.verify))?;
    Ok(Outcome::Ok)
}

fn strip_timings(record: &impl serde::Serialize) -> Result<(Value, Value)> {
    let mut v = serde_json::to_value(record)?;
    let t = v.as_object_mut().and_then(|o| o.remove("timings")).unwrap_or(Value::Null);
    Ok((v, t))
}

fn eval(a: EvalArgs, data_dir: &Path) -> Result<Outcome> {
    let manifest = ManifestBuilder::start("eval");
    let out = a.out.clone().unwrap_or_else(|| data_dir.join("eval"));
    let params = a.config.params()?;
    let adapter = a.policy.adapter()?;
    let policy = adapter.build()?;
    let scenes = load_scenes(&a.scenes)?;
    let batch = with_workers(a.workers, || evaluate_batch(policy.as_ref(), &scenes, &params));

    let records_path = out.join("records.jsonl");
    let timings_path = out.join("timings.jsonl");
    let metrics_json = out.join("metrics.json");
    let metrics_txt = out.join("metrics.txt");
    let mut records = Vec::with_capacity(batch.records.len());
    let mut timings = Vec::with_capacity(batch.records.len());
    for r in &batch.records {
        let (rec, t) = strip_timings(r)?;
        records.push(rec);
        timings.push(json!({ "scene_id": r.scene_id, "timings": t }));
    }
    write_jsonl(&records_path, records)?;
    write_jsonl(&timings_path, timings)?;
    write_json(&metrics_json, &batch.table)?;
    write_text(&metrics_txt, &batch.table.to_text())?;
    let mut outputs = vec![records_path, timings_path, metrics_json, metrics_txt];
    if a.save_trajectories {
        for (r, t) in batch.records.iter().zip(&batch.trajectories) {
            if let Some(t) = t {
                let p = out.join("trajectories").join(format!("{}.jsonl", r.scene_id));
                write_text(&p, &t.to_jsonl())?;
                outputs.push(p);
            }
        }
    }
    manifest.finish(
        &out.join(MANIFEST_NAME),
        Some(params),
        json!({ "policy": adapter, "scenes": a.scenes, "n_scenes": scenes.len() }),
        outputs,
    )?;
    print!("{}", batch.table.to_text());
    Ok(if a.strict && batch.table.success_rate < a.min_success { Outcome::StrictFailure } else { Outcome::Ok })
}

fn grpo(a: GrpoArgs) -> Result<Outcome> {
    let manifest = ManifestBuilder::start("grpo-rewards");
    let params = a.config.params()?;
    let adapter = a.policy.adapter()?;
    let policy = adapter.build()?;
    let scenes = load_scenes(&a.scenes)?;
    let groups = with_workers(a.workers, || grpo_reward_loop(policy.as_ref(), &scenes, a.group_size, &params))?;
    write_jsonl(&a.out, &groups)?;
    let mean = groups.iter().map(|g| g.mean).sum::<f64>() / groups.len() as f64;
    let summary = json!({ "groups": groups.len(), "group_size": a.group_size, "mean_reward": mean });
    manifest.finish(
        &manifest_for(&a.out),
        Some(params),
        json!({ "policy": adapter, "scenes": a.scenes, "summary": summary }),
        vec![a.out.clone()],
    )?;
    print_json(&summary)?;
    Ok(Outcome::Ok)
}

fn plot(a: PlotArgs) -> Result<Outcome> {
    let manifest = ManifestBuilder::start("plot");
    let params = a.config.params()?;
    let scene = load_scene(&a.input.scene)?;
    let traj: Option<Trajectory> = match (&a.input.waypoints, &a.input.trajectory) {
        (Some(w), _) => {
            let wps = load_waypoints(w, &scene, false, params.rows_per_opening)?;
            Some(densify_with_fallback(&scene, &wps, &params.lattice, &params.verify).trajectory)
        }
        (None, Some(t)) => Some(load_trajectory(t)?),
        (None, None) => None,
    };
    write_text(&a.out, &render_svg(&scene, traj.as_ref()))?;
    let details = json!({ "scene": a.input.scene, "waypoints": a.input.waypoints, "trajectory": a.input.trajectory });
    manifest.finish(&manifest_for(&a.out), Some(params), details, vec![a.out.clone()])?;
    println!("wrote {}", a.out.display());
    Ok(Outcome::Ok)
}

fn serve(a: ServeArgs, data_dir: &Path) -> Result<Outcome> {
    let params = a.config.params()?;
    let mut cfg = ServiceConfig::new(data_dir);
    cfg.verify = params.verify;
    cfg.lattice = params.lattice;
    cfg.weights = params.weights;
    if a.history_limit == 0 {
        bail!("history-limit must be at least 1");
    }
    cfg.history_limit = a.history_limit;
    let state = Arc::new(AppState::new(cfg).map_err(anyhow::Error::msg)?);
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("listening on http://{} (data dir {})", a.addr, data_dir.display());
    rt.block_on(narrowpass_service::serve(a.addr, state)).context("serving")?;
    Ok(Outcome::Ok)
}

fn demo_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no demonstration CSV files in {}", path.display());
    }
    Ok(files)
}

fn demo_replay(a: DemoReplayArgs) -> Result<Outcome> {
    let manifest = ManifestBuilder::start("demo-replay");
    let params = a.config.params()?;
    let mut results = vec![];
    let mut all_ok = true;
    for f in demo_files(&a.demo)? {
        let (scene, poses) = read_demo(&f)?;
        let report = verify_waypoints(&scene, &poses, &params.verify, &params.lattice);
        all_ok &= report.success;
        results.push(json!({
            "demo": f,
            "scene_id": scene.id,
            "waypoints": poses.len(),
            "report": report,
            "note": failure_note(&report),
        }));
    }
    print_json(&results)?;
    if let Some(out) = &a.out {
        write_json(out, &results)?;
        manifest.finish(&manifest_for(out), Some(params), json!({ "demo": a.demo }), vec![out.clone()])?;
    }
    Ok(if a.strict && !all_ok { Outcome::StrictFailure } else { Outcome::Ok })
}
