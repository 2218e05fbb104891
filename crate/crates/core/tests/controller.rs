mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector, Point3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wholebody::controller::{assemble_qp, Controller, ControllerConfig, StepStatus, SLACK};
use wholebody::frame::Frame;
use wholebody::kinematics::{
    base_orientation_jacobian, ee_jacobian, ee_pose, manipulability_jacobian, Frames, PlanarPose, RobotModel,
    RobotState,
};
use wholebody::qp::{solve, SolverSettings};
use wholebody::sdf::{Scene, SdfNode};
use wholebody::shape::{CollisionBody, LinkPoint, LinkSphere, SurfaceRep};
use wholebody::sim::integrate;

fn hand_point(model: &RobotModel) -> SurfaceRep {
    SurfaceRep::Points(vec![LinkPoint {
        link: model.hand_link(),
        local: Point3::origin(),
    }])
}

/// Flat wall facing the hand point, `gap` away from it along `normal`.
fn wall(model: &RobotModel, state: &RobotState, normal: Vector3<f64>, gap: f64) -> Scene {
    let frames = Frames::compute(model, state);
    let p = frames.links[model.hand_link()].translation.vector + normal * gap;
    Scene::new(vec![SdfNode::HalfSpace {
        point: p.into(),
        normal: (-normal).into(),
    }])
}

fn nearest_jd(model: &RobotModel, state: &RobotState, scene: &Scene, body: &CollisionBody) -> DVector<f64> {
    let frames = Frames::compute(model, state);
    let near = body.proximities(scene, &frames, 1.0);
    let p = near.iter().min_by(|a, b| a.distance.total_cmp(&b.distance)).unwrap();
    let mut jd = DVector::zeros(model.dof());
    frames.directional_row(frames.link_parent(p.link), &p.world, &p.gradient, jd.as_mut_slice());
    jd
}

#[test]
fn settles_at_target_without_obstacles() {
    let model = RobotModel::frankie();
    let ctrl = Controller::new(model.clone(), ControllerConfig::holistic(), CollisionBody::new(&hand_point(&model)))
        .unwrap();
    let mut state = RobotState::home(&model, PlanarPose::default());
    let target = ee_pose(&model, &state);
    let scene = Scene::empty();
    let mut last = f64::INFINITY;
    for _ in 0..4000 {
        let step = ctrl.step(&state, &target, &scene).unwrap();
        last = step.qdot.norm();
        if last <= 1e-3 {
            break;
        }
        state = integrate(&model, &state, step.qdot.as_slice(), 0.02).0;
    }
    assert!(last <= 1e-3, "still moving at {last}");
    let err = (ee_pose(&model, &state).translation.vector - target.translation.vector).norm();
    assert!(err < 0.02, "drifted {err} from the target");
}

#[test]
fn active_cost_pushes_away_from_a_wall() {
    let model = RobotModel::frankie();
    let body = CollisionBody::new(&hand_point(&model));
    let state = RobotState::home(&model, PlanarPose::new(0.3, -0.2, 0.4));
    let target = ee_pose(&model, &state);
    for normal in [Vector3::x(), -Vector3::y(), Vector3::z(), Vector3::new(1.0, 1.0, -1.0).normalize()] {
        let scene = wall(&model, &state, normal, 0.1);
        let jd = nearest_jd(&model, &state, &scene, &body);
        let pure = ControllerConfig {
            k_m: 0.0,
            k_epsilon: 0.0,
            ..Default::default()
        };
        let on = Controller::new(model.clone(), pure.clone(), body.clone()).unwrap();
        let rate = jd.dot(&on.step(&state, &target, &scene).unwrap().qdot);
        assert!(rate > 1e-4, "normal {normal:?}: separation rate {rate}");

        let full = Controller::new(model.clone(), ControllerConfig::default(), body.clone()).unwrap();
        let off = Controller::new(
            model.clone(),
            ControllerConfig {
                active_cost_enabled: false,
                ..Default::default()
            },
            body.clone(),
        )
        .unwrap();
        let with = jd.dot(&full.step(&state, &target, &scene).unwrap().qdot);
        let without = jd.dot(&off.step(&state, &target, &scene).unwrap().qdot);
        assert!(with >= without - 1e-9, "normal {normal:?}: {with} < {without}");
    }
}

#[test]
fn distance_grows_from_just_outside_stopping_distance() {
    let model = RobotModel::frankie();
    let body = CollisionBody::new(&hand_point(&model));
    let mut state = RobotState::home(&model, PlanarPose::default());
    let target = ee_pose(&model, &state);
    let cfg = ControllerConfig::default();
    let scene = wall(&model, &state, Vector3::x(), cfg.d_s + 0.005);
    let ctrl = Controller::new(model.clone(), cfg, body.clone()).unwrap();
    let mut prev = body.min_distance(&scene, &Frames::compute(&model, &state)).0;
    for k in 0..10 {
        let step = ctrl.step(&state, &target, &scene).unwrap();
        state = integrate(&model, &state, step.qdot.as_slice(), 0.02).0;
        let d = body.min_distance(&scene, &Frames::compute(&model, &state)).0;
        assert!(d > prev, "step {k}: r_d fell from {prev} to {d}");
        prev = d;
    }
}

#[test]
fn sphere_matches_point_with_shifted_distances() {
    let model = RobotModel::frankie();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = 0.07;
    let center = Point3::new(0.02, -0.01, 0.05);
    let link = model.hand_link();
    let sphere = CollisionBody::new(&SurfaceRep::Spheres(vec![LinkSphere { link, center, radius: r }]));
    let point = CollisionBody::new(&SurfaceRep::Points(vec![LinkPoint { link, local: center }]));
    let cfg = ControllerConfig::default();
    // The influence distance moves with the stopping distance, so the damper
    // ramp has the same length for both.
    let shifted = ControllerConfig {
        d_s: cfg.d_s + r,
        d_i: cfg.d_i + r,
        ..cfg.clone()
    };
    for _ in 0..50 {
        let state = common::random_state(&model, &mut rng);
        let frames = Frames::compute(&model, &state);
        let c = frames.links[link] * center;
        let scene = Scene::new(vec![SdfNode::Sphere {
            center: (c.coords + Vector3::new(0.0, 0.0, r + 0.15)).into(),
            radius: 0.05,
        }]);
        let target = frames.ee;
        let near_s = sphere.proximities(&scene, &frames, cfg.d_i);
        let near_p = point.proximities(&scene, &frames, shifted.d_i);
        assert_eq!(near_s.len(), 1);
        let a = assemble_qp(&model, &frames, &state, &target, &near_s, &cfg);
        let b = assemble_qp(&model, &frames, &state, &target, &near_p, &shifted);
        assert_eq!(a.collision_rows, 1);
        assert_eq!(b.collision_rows, 1);
        let row = a.joint_rows;
        assert_relative_eq!(a.problem.b_in[row], b.problem.b_in[row], epsilon = 1e-12);
        assert_relative_eq!(
            a.problem.a_in.row(row).into_owned(),
            b.problem.a_in.row(row).into_owned(),
            epsilon = 1e-12
        );
    }
}

/// Holistic step built from the public kinematics only and solved through
/// its KKT system. Valid while no bound or damper is active.
fn holistic_oracle(model: &RobotModel, state: &RobotState, target: &nalgebra::Isometry3<f64>) -> DVector<f64> {
    let cfg = ControllerConfig::holistic();
    let dof = model.dof();
    let n = dof + SLACK;
    let ee = ee_pose(model, state);
    let pos = target.translation.vector - ee.translation.vector;
    let rot = (target.rotation * ee.rotation.inverse()).scaled_axis();
    let e = pos.abs().sum() + rot.abs().sum();
    let w_delta = cfg.w_delta.min(cfg.slack_error_gain / e);
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        q[(i, i)] = match i {
            0 | 1 => cfg.w_q * cfg.base_weight_scale,
            i if i < dof => cfg.w_q,
            _ => w_delta,
        };
    }
    let gain = manipulability_jacobian(model, &state.arm_q).gradient * cfg.k_m
        + base_orientation_jacobian(model, state, cfg.k_epsilon);
    let mut kkt = DMatrix::zeros(n + 6, n + 6);
    kkt.view_mut((0, 0), (n, n)).copy_from(&q);
    let mut a = DMatrix::zeros(6, n);
    a.view_mut((0, 0), (6, dof)).copy_from(&ee_jacobian(model, state));
    a.view_mut((0, dof), (6, 6)).fill_with_identity();
    kkt.view_mut((n, 0), (6, n)).copy_from(&a);
    kkt.view_mut((0, n), (n, 6)).copy_from(&a.transpose());
    let mut rhs = DVector::zeros(n + 6);
    rhs.rows_mut(0, dof).copy_from(&gain);
    let lin = pos * cfg.k_t;
    let ang = rot * cfg.k_r;
    assert!(lin.norm() <= cfg.max_linear_speed && ang.norm() <= cfg.max_angular_speed);
    rhs.rows_mut(n, 3).copy_from(&lin);
    rhs.rows_mut(n + 3, 3).copy_from(&ang);
    kkt.lu().solve(&rhs).unwrap().rows(0, dof).into_owned()
}

#[test]
fn holistic_config_matches_oracle() {
    let model = RobotModel::frankie();
    let ctrl = Controller::new(model.clone(), ControllerConfig::holistic(), CollisionBody::new(&hand_point(&model)))
        .unwrap();
    let limits = model.velocity_limits();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for _ in 0..2000 {
        let state = common::random_state(&model, &mut rng);
        if model.joints.iter().zip(&state.arm_q).any(|(j, q)| (j.upper - q).min(q - j.lower) < 0.36) {
            continue;
        }
        let shift = Frame::new([0.04, -0.03, 0.05], [0.05, 0.0, -0.04]);
        let target = ee_pose(&model, &state) * shift.iso();
        let expect = holistic_oracle(&model, &state, &target);
        if expect.iter().zip(&limits).any(|(v, l)| v.abs() >= *l) {
            continue;
        }
        let got = ctrl.step(&state, &target, &Scene::empty()).unwrap();
        assert!(matches!(got.status, StepStatus::Ok));
        assert_relative_eq!(got.qdot, expect, epsilon = 1e-6, max_relative = 1e-6);
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} states exercised");
}

fn obstacle() -> impl Strategy<Value = SdfNode> {
    prop_oneof![
        (-0.3..1.2f64, -0.8..0.8f64, 0.2..1.4f64, 0.05..0.3f64)
            .prop_map(|(x, y, z, r)| SdfNode::Sphere { center: [x, y, z], radius: r }),
        (-0.3..1.2f64, -0.8..0.8f64, 0.2..1.4f64, 0.05..0.3f64, 0.05..0.3f64).prop_map(|(x, y, z, a, b)| {
            SdfNode::Box {
                frame: Frame::from_xyz([x, y, z]),
                half_extents: [a, b, 0.1],
            }
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_satisfy_inequalities(seed in any::<u64>(), obstacles in prop::collection::vec(obstacle(), 1..4)) {
        let model = RobotModel::frankie();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = common::random_state(&model, &mut rng);
        state.base = PlanarPose::default();
        let scene = Scene::new(obstacles);
        let body = CollisionBody::new(&SurfaceRep::model_spheres(&model));
        let frames = Frames::compute(&model, &state);
        let cfg = ControllerConfig::default();
        let near = body.proximities(&scene, &frames, cfg.d_i);
        let target = frames.ee * Frame::from_xyz([0.1, 0.05, -0.05]).iso();
        let asm = assemble_qp(&model, &frames, &state, &target, &near, &cfg);
        let sol = solve(&asm.problem, &SolverSettings::default()).unwrap();
        if sol.status == wholebody::qp::QpStatus::Optimal {
            let viol = &asm.problem.a_in * &sol.x - &asm.problem.b_in;
            prop_assert!(viol.iter().all(|v| *v <= 1e-6), "violation {}", viol.max());
            let lb = &asm.problem.lb;
            let ub = &asm.problem.ub;
            for i in 0..sol.x.len() {
                prop_assert!(sol.x[i] >= lb[i] - 1e-6 && sol.x[i] <= ub[i] + 1e-6);
            }
        }
        let ctrl = Controller::new(model.clone(), cfg, body).unwrap();
        let step = ctrl.step(&state, &target, &scene).unwrap();
        if step.status != StepStatus::Infeasible && !step.diagnostics.retried {
            let mut x = step.qdot.clone().resize_vertically(model.dof() + SLACK, 0.0);
            x.rows_mut(model.dof(), SLACK).copy_from(&step.slack);
            let viol = &asm.problem.a_in * &x - &asm.problem.b_in;
            prop_assert!(viol.iter().all(|v| *v <= 1e-6), "step violation {}", viol.max());
        }
    }
}
