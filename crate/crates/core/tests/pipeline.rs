use std::f64::consts::PI;

use narrowpass_core::densifier::{densify, densify_with_fallback, LatticeConfig, Trajectory};
use narrowpass_core::eval::{baseline_waypoints, evaluate_batch, BaselinePolicy, EvalParams, ReplayPolicy, ReplayRecord};
use narrowpass_core::geometry::{Polygon, Pose, Rect};
use narrowpass_core::reward::{geometric_reward, trajectory_cost};
use narrowpass_core::scene::{generate_batch, generate_scene, DistributionTag, GenParams, ObjectShape, Scene};
use narrowpass_core::textio::{parse_completion, read_demo, serialize_waypoints, write_demo};
use narrowpass_core::verifier::{
    failure_note, verify_trajectory, verify_waypoints, VerifyConfig, ViolationType,
};

fn corridor() -> Scene {
    Scene {
        workspace: Rect::new(0.0, 6.0, 0.0, 3.0),
        obstacles: vec![Rect::new(0.0, 6.0, 0.0, 1.1), Rect::new(0.0, 6.0, 1.9, 3.0)],
        openings: vec![],
        object: Polygon::from_xy(&[(-0.5, -0.05), (0.5, -0.05), (0.5, 0.05), (-0.5, 0.05)]).unwrap(),
        start: Pose::new(1.0, 1.5, 0.0),
        goal: Pose::new(5.0, 1.5, 0.0),
        id: "corridor".into(),
        distribution_tag: DistributionTag::Id,
        gen: None,
    }
}

#[test]
fn baseline_densifies_and_verifies_on_generated_scenes() {
    let cfg = VerifyConfig::default();
    let lat = LatticeConfig::default();
    for s in generate_batch(&GenParams::id(ObjectShape::T, 2, 31), 8).unwrap() {
        let t = densify(&s, &baseline_waypoints(&s, 3), &lat, &cfg).expect("baseline connects");
        let r = verify_trajectory(&s, &t.states, &cfg, Some(&t.waypoint_marks));
        assert!(r.success, "{}: {r:?}", s.id);
        assert_eq!(t.waypoint_marks.len(), 8);
    }
}

#[test]
fn rotation_in_narrow_corridor_is_swept_collision() {
    let s = Scene { goal: Pose::new(5.0, 1.5, PI), ..corridor() };
    s.validate().unwrap();
    let cfg = VerifyConfig { ang_limit: PI, ..Default::default() };
    let lat = LatticeConfig::default();
    let wps = [Pose::new(1.3, 1.5, PI)];
    let dense = densify_with_fallback(&s, &wps, &lat, &cfg);
    assert_eq!(dense.fallback_segments, vec![0]);
    let r = verify_waypoints(&s, &wps, &cfg, &lat);
    assert_eq!(r.violation, Some(ViolationType::SweptCollision));
    assert_eq!(failure_note(&r), "FAILURE: waypoint=0 type=swept_collision");
}

#[test]
fn far_unreachable_waypoint_is_step_size() {
    let mut s = corridor();
    s.obstacles.push(Rect::new(3.0, 3.2, 1.1, 1.9));
    s.goal = Pose::new(2.0, 1.5, 0.0);
    let cfg = VerifyConfig::default();
    let lat = LatticeConfig { max_expansions: 20_000, ..Default::default() };
    let r = verify_waypoints(&s, &[Pose::new(4.5, 1.5, 0.0)], &cfg, &lat);
    assert_eq!(r.violation, Some(ViolationType::StepSize));
    assert_eq!(r.first_fail_waypoint, Some(0));
}

#[test]
fn reward_audit_replay_from_trajectory_files() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = generate_batch(&GenParams::ood(ObjectShape::I, 2, 3), 6).unwrap();
    let mut records: Vec<ReplayRecord> = scenes
        .iter()
        .map(|s| ReplayRecord { scene_id: s.id.clone(), completion: narrowpass_core::eval::baseline_policy(s, 3) })
        .collect();
    // Shift one scene's waypoints into a wall to get a non-trivial reward.
    let wall = scenes[0].obstacles[1];
    let v0 = scenes[0].object.vertices[0];
    let bad = Pose::new(0.5 * (wall.x_lo + wall.x_hi) - v0.x, 0.5 * (wall.y_lo + wall.y_hi) - v0.y, 0.0);
    records[0].completion = serialize_waypoints(&[bad; 6]);
    let policy = ReplayPolicy::new(records);
    let params = EvalParams::default();
    let res = evaluate_batch(&policy, &scenes, &params);
    assert!(res.records.iter().any(|r| r.reward < 1.0));
    for (rec, traj) in res.records.iter().zip(&res.trajectories) {
        let path = dir.path().join(format!("{}.jsonl", rec.scene_id));
        std::fs::write(&path, traj.as_ref().unwrap().to_jsonl()).unwrap();
        let back = Trajectory::read_jsonl(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
        let scene = scenes.iter().find(|s| s.id == rec.scene_id).unwrap();
        let cost = trajectory_cost(scene, &back.states, &params.weights, &params.verify);
        assert_eq!(geometric_reward(cost.total, params.weights.alpha), rec.reward);
    }
    let again = evaluate_batch(&policy, &scenes, &params);
    let strip = |v: &[narrowpass_core::eval::SceneRecord]| {
        v.iter().map(|r| (r.scene_id.clone(), r.reward, r.report.clone(), r.note.clone())).collect::<Vec<_>>()
    };
    assert_eq!(strip(&again.records), strip(&res.records));
    assert_eq!(again.table, res.table);
}

#[test]
fn demonstration_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_scene(&GenParams::id(ObjectShape::L, 2, 9)).unwrap();
    let wps = baseline_waypoints(&s, 3);
    let csv = dir.path().join("demo.csv");
    write_demo(&csv, &s, &wps).unwrap();
    let (scene, back) = read_demo(&csv).unwrap();
    let cfg = VerifyConfig::default();
    let lat = LatticeConfig::default();
    let a = verify_waypoints(&s, &wps, &cfg, &lat);
    let b = verify_waypoints(&scene, &back, &cfg, &lat);
    assert!(a.success);
    assert_eq!(a, b);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(parse_completion(&text, 3, 2).unwrap().poses.len(), 6);
}

#[test]
fn baseline_table_on_id_batch() {
    let scenes = generate_batch(&GenParams::id(ObjectShape::I, 2, 7), 40).unwrap();
    let res = evaluate_batch(&BaselinePolicy { rows_per_opening: None }, &scenes, &EvalParams::default());
    assert_eq!(res.table.parse_rate, 100.0);
    assert!(res.table.success_rate >= 80.0);
    assert_eq!(res.table.split, "ID");
}
