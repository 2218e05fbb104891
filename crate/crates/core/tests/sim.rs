use std::collections::HashSet;

use wholebody::controller::ControllerConfig;
use wholebody::frame::Frame;
use wholebody::kinematics::{ee_pose, PlanarPose, RobotModel, RobotState};
use wholebody::sdf::{Scene, SdfNode};
use wholebody::shape::{sample_points, SurfaceRep};
use wholebody::sim::{
    config_hash, generate_bookshelf, generate_table, run_benchmark, run_trial, sweep_lambda, write_trials_csv,
    AuditSettings, BenchConfig, BenchmarkSummary, Outcome, Representation, Scenario, ScenarioGenerator,
    ScenarioKind,
};

fn quick_config() -> BenchConfig {
    BenchConfig {
        representation: Representation::Spheres,
        audit: AuditSettings {
            points: 4000,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn generation_is_deterministic_and_varied() {
    for kind in [ScenarioKind::Bookshelf, ScenarioKind::Table] {
        let gen = ScenarioGenerator::standard();
        assert_eq!(gen.generate(kind, 0).unwrap(), gen.generate(kind, 0).unwrap());
        let mut seen = HashSet::new();
        for seed in 0..500 {
            let s = gen.generate(kind, seed).unwrap();
            seen.insert(serde_json::to_string(&s.scene).unwrap());
        }
        assert_eq!(seen.len(), 500, "{kind:?}");
    }
    assert_eq!(generate_bookshelf(3).unwrap(), ScenarioGenerator::standard().generate(ScenarioKind::Bookshelf, 3).unwrap());
}

#[test]
fn targets_clear_obstacles() {
    let model = RobotModel::frankie();
    let hand = model.hand_link();
    let SurfaceRep::Points(points) = sample_points(&model, 9476, 99).unwrap() else {
        unreachable!()
    };
    let hand_points: Vec<_> = points.iter().filter(|p| p.link == hand).map(|p| p.local).collect();
    let gen = ScenarioGenerator::standard();
    for seed in 0..100 {
        for kind in [ScenarioKind::Bookshelf, ScenarioKind::Table] {
            let s = gen.generate(kind, seed).unwrap();
            let pose = s.target.iso() * model.ee_transform.iso().inverse() * model.links[hand].origin.iso();
            let clearance = hand_points
                .iter()
                .map(|p| s.scene.eval(&(pose * p)))
                .fold(f64::INFINITY, f64::min);
            assert!(clearance >= 0.01, "{kind:?} seed {seed}: {clearance}");
        }
    }
}

#[test]
fn table_has_four_cylinders() {
    for seed in 0..200 {
        let s = generate_table(seed).unwrap();
        let n = s
            .scene
            .obstacles
            .iter()
            .filter(|o| matches!(o, SdfNode::Cylinder { .. }))
            .count();
        assert_eq!(n, 4, "seed {seed}");
    }
}

#[test]
fn impossible_ranges_report_generation_error() {
    let mut ranges = ScenarioGenerator::standard().ranges().clone();
    ranges.target_clearance = 5.0;
    ranges.max_rejections = 20;
    let gen = ScenarioGenerator::new(RobotModel::frankie(), ranges).unwrap();
    assert!(gen.generate(ScenarioKind::Table, 1).is_err());
}

fn scripted(scene: Scene, offset: [f64; 3]) -> Scenario {
    let model = RobotModel::frankie();
    let start = RobotState::home(&model, PlanarPose::default());
    let ee = ee_pose(&model, &start);
    let p = ee.translation.vector;
    let (r, pi, y) = ee.rotation.euler_angles();
    Scenario {
        kind: ScenarioKind::Table,
        seed: 0,
        scene,
        target: Frame::new([p.x + offset[0], p.y + offset[1], p.z + offset[2]], [r, pi, y]),
        start,
    }
}

#[test]
fn empty_scene_reaches_target() {
    let config = quick_config();
    let ctrl = config.controller().unwrap();
    let audit = config.audit_body().unwrap();
    let s = scripted(Scene::empty(), [0.4, 0.2, -0.1]);
    let rec = run_trial(&ctrl, &audit, &s, &config.trial).unwrap();
    assert_eq!(rec.outcome, Outcome::Success);
    assert!(rec.final_position_error <= 0.02);
    assert!(rec.ee_accel_mean.is_finite());
}

#[test]
fn target_inside_a_box_never_collides() {
    let model = RobotModel::frankie();
    let start = RobotState::home(&model, PlanarPose::default());
    let p = ee_pose(&model, &start).translation.vector;
    let center = [p.x + 0.7, p.y, p.z];
    let scene = Scene::new(vec![SdfNode::Box {
        frame: Frame::from_xyz(center),
        half_extents: [0.15, 0.15, 0.15],
    }]);
    let s = scripted(scene, [0.7, 0.0, 0.0]);
    for representation in [Representation::Spheres, Representation::PointsCoarse] {
        let config = BenchConfig {
            representation,
            ..quick_config()
        };
        let rec = run_trial(&config.controller().unwrap(), &config.audit_body().unwrap(), &s, &config.trial).unwrap();
        assert!(rec.counts_as_local_minimum(), "{:?}", rec.outcome);
        assert!(rec.min_distance > 0.0 && rec.audit_min_distance > 0.0);
    }
}

#[test]
fn parallelism_does_not_change_results() {
    let config = quick_config();
    let seeds: Vec<u64> = (0..8).collect();
    let mut csvs = Vec::new();
    for threads in [1, 8] {
        let summary = run_benchmark(ScenarioKind::Bookshelf, &seeds, &config, threads).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(&summary.records, &summary.config_hash, false, &mut buf).unwrap();
        csvs.push(String::from_utf8(buf).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0].lines().count(), 9);
    assert!(csvs[0].starts_with("seed,kind,outcome,"));
}

#[test]
fn single_trial_summary_and_rate_sum() {
    let config = quick_config();
    let summary = run_benchmark(ScenarioKind::Table, &[7], &config, 1).unwrap();
    assert_eq!(summary.trials, 1);
    let rec = &summary.records[0];
    assert_eq!(summary.seeds, vec![7]);
    assert_eq!(summary.audit_min_distance, rec.audit_min_distance);
    let expect = |o: bool| if o { 100.0 } else { 0.0 };
    assert_eq!(summary.success_rate, expect(rec.outcome == Outcome::Success));
    assert_eq!(summary.collision_rate, expect(rec.outcome == Outcome::Collision));
    assert_eq!(summary.ee_accel_mean, (rec.outcome == Outcome::Success).then_some(rec.ee_accel_mean));
    assert_eq!(summary.config_hash, config_hash(&(ScenarioKind::Table, &config)));

    let many = run_benchmark(ScenarioKind::Table, &(0..6).collect::<Vec<_>>(), &config, 4).unwrap();
    let total = many.success_rate + many.collision_rate + many.local_minimum_rate;
    assert!((total - 100.0).abs() < 1e-9, "{total}");
    for rate in [many.success_rate, many.collision_rate, many.local_minimum_rate] {
        assert!((0.0..=100.0).contains(&rate));
    }
}

#[test]
fn zero_lambda_equals_no_active_cost() {
    let config = quick_config();
    let seeds = [1, 2, 3, 4];
    let swept = sweep_lambda(ScenarioKind::Bookshelf, &[0.0], &seeds, &config, 4).unwrap();
    let off = BenchConfig {
        controller: ControllerConfig {
            active_cost_enabled: false,
            ..config.controller.clone()
        },
        ..config.clone()
    };
    let plain = run_benchmark(ScenarioKind::Bookshelf, &seeds, &off, 4).unwrap();
    let strip = |s: &BenchmarkSummary| {
        let mut buf = Vec::new();
        write_trials_csv(&s.records, "", false, &mut buf).unwrap();
        buf
    };
    assert_eq!(strip(&swept[0].1), strip(&plain));
    assert!(sweep_lambda(ScenarioKind::Bookshelf, &[-1.0], &seeds, &config, 1).is_err());
}

#[test]
fn scenario_round_trips_through_json() {
    let s = generate_table(11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    s.save(&path).unwrap();
    assert_eq!(Scenario::load(&path).unwrap(), s);
}
