mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wholebody::kinematics::{
    arm_jacobian, base_orientation_jacobian, ee_jacobian, ee_pose, forward_kinematics, manipulability,
    manipulability_jacobian, point_jacobian, PlanarPose, RobotModel, RobotState,
};

const H: f64 = 1e-6;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

#[test]
fn ee_jacobian_matches_finite_differences() {
    let model = RobotModel::frankie();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let s = common::random_state(&model, &mut rng);
        let fd = common::fd_pose_jacobian(&s, model.dof(), H, |s| ee_pose(&model, s));
        let err = max_abs(&(ee_jacobian(&model, &s) - fd));
        assert!(err < 1e-5, "ee jacobian off by {err} at {s:?}");
    }
}

#[test]
fn point_jacobian_matches_finite_differences_and_is_padded() {
    let model = RobotModel::frankie();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let s = common::random_state(&model, &mut rng);
        let link = rng.gen_range(0..model.links.len());
        let local = Point3::new(
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
        );
        let jac = point_jacobian(&model, &s, link, &local);
        let fd = common::fd_pose_jacobian(&s, model.dof(), H, |s| {
            let p = forward_kinematics(&model, s)[link] * local;
            nalgebra::Isometry3::translation(p.x, p.y, p.z)
        });
        let err = max_abs(&(&jac - fd.rows(0, 3)));
        assert!(err < 1e-5, "point jacobian off by {err} on link {link}");
        let first_free = 2 + model.links[link].parent_joint;
        for c in first_free..model.dof() {
            for r in 0..3 {
                assert_eq!(jac[(r, c)], 0.0, "link {link} column {c} not zero");
            }
        }
    }
}

#[test]
fn jacobian_of_zero_velocity_is_zero() {
    let model = RobotModel::frankie();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let s = common::random_state(&model, &mut rng);
    let v = ee_jacobian(&model, &s) * nalgebra::DVector::zeros(model.dof());
    assert!(v.iter().all(|x| *x == 0.0));
}

#[test]
fn manipulability_gradient_matches_finite_differences() {
    let model = RobotModel::frankie();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut checked = 0;
    while checked < 1000 {
        let s = common::random_state(&model, &mut rng);
        let g = manipulability_jacobian(&model, &s.arm_q);
        if g.near_singular {
            continue;
        }
        let fd = common::central_difference(&s.arm_q, H, |q| vec![manipulability(&model, q)]);
        let scale = fd.norm().max(1e-3);
        assert_eq!(g.gradient[0], 0.0);
        assert_eq!(g.gradient[1], 0.0);
        for i in 0..model.n_arm() {
            let diff = (g.gradient[2 + i] - fd[(0, i)]).abs();
            assert!(diff <= 1e-4 * scale, "dm/dq{i}: {} vs {}", g.gradient[2 + i], fd[(0, i)]);
        }
        checked += 1;
    }
}

#[test]
fn manipulability_matches_singular_value_product() {
    let model = RobotModel::frankie();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..200 {
        let s = common::random_state(&model, &mut rng);
        let arm = arm_jacobian(&model, &s.arm_q);
        let product: f64 = arm.svd(false, false).singular_values.iter().product();
        let m = manipulability(&model, &s.arm_q);
        assert!((m - product).abs() < 1e-9, "{m} vs {product}");
    }
}

/// Finds a local maximum of m by damped Newton steps on finite-difference
/// derivatives, touching only the joints that change it. The maximum sits
/// past the joint-2 limit, which the kinematics do not care about.
#[test]
fn gradient_vanishes_at_local_maximum() {
    let model = RobotModel::frankie();
    let free = [1usize, 2, 3, 4, 5];
    let mut q = model.home.clone();
    let m_of = |q: &[f64]| manipulability(&model, q);
    let h = 1e-4;
    for _ in 0..200 {
        let mut g = nalgebra::DVector::zeros(free.len());
        let mut hess = DMatrix::zeros(free.len(), free.len());
        let m0 = m_of(&q);
        for (a, &i) in free.iter().enumerate() {
            let mut qp = q.clone();
            qp[i] += h;
            let mut qm = q.clone();
            qm[i] -= h;
            g[a] = (m_of(&qp) - m_of(&qm)) / (2.0 * h);
            hess[(a, a)] = (m_of(&qp) - 2.0 * m0 + m_of(&qm)) / (h * h);
            for (b, &j) in free.iter().enumerate().skip(a + 1) {
                let mut pp = q.clone();
                pp[i] += h;
                pp[j] += h;
                let mut pm = q.clone();
                pm[i] += h;
                pm[j] -= h;
                let mut mp = q.clone();
                mp[i] -= h;
                mp[j] += h;
                let mut mm = q.clone();
                mm[i] -= h;
                mm[j] -= h;
                let v = (m_of(&pp) - m_of(&pm) - m_of(&mp) + m_of(&mm)) / (4.0 * h * h);
                hess[(a, b)] = v;
                hess[(b, a)] = v;
            }
        }
        if g.norm() < 1e-9 {
            break;
        }
        let eig = hess.clone().symmetric_eigen();
        let shift = (eig.eigenvalues.max() + 1e-3).max(0.0);
        let damped = hess - DMatrix::identity(free.len(), free.len()) * shift;
        let step = -damped.lu().solve(&g).unwrap();
        let scale = (0.2 / step.norm()).min(1.0);
        for (a, &i) in free.iter().enumerate() {
            q[i] += scale * step[a];
        }
    }
    let g = manipulability_jacobian(&model, &q);
    assert!(!g.near_singular);
    assert!(g.gradient.norm() <= 1e-4, "|J_m| = {}", g.gradient.norm());
}

#[test]
fn poses_stay_orthonormal() {
    let model = RobotModel::frankie();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..1000 {
        let s = common::random_state(&model, &mut rng);
        for pose in forward_kinematics(&model, &s) {
            let r = pose.rotation.to_rotation_matrix().into_inner();
            assert!((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn base_forward_velocity_moves_tool_along_heading() {
    let model = RobotModel::frankie();
    let s = RobotState::new(PlanarPose::new(0.4, -1.0, 0.7), model.home.clone());
    let j = ee_jacobian(&model, &s);
    let heading = Vector3::new(0.7_f64.cos(), 0.7_f64.sin(), 0.0);
    assert_relative_eq!(j.fixed_view::<3, 1>(0, 0).into_owned(), heading, epsilon = 1e-12);
}

#[test]
fn orientation_term_is_continuous() {
    let model = RobotModel::frankie();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 1000 {
        let s = common::random_state(&model, &mut rng);
        let ee = ee_pose(&model, &s);
        let planar = (ee.translation.x - s.base.x).hypot(ee.translation.y - s.base.y);
        let value = base_orientation_jacobian(&model, &s, 0.5)[1];
        if planar < 0.05 || value.abs() > 0.5 * (std::f64::consts::PI - 0.01) {
            continue;
        }
        let dir: Vec<f64> = (0..model.dof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let moved = common::advance(&s, &dir, 1e-6);
        let change = (base_orientation_jacobian(&model, &moved, 0.5)[1] - value).abs();
        assert!(change <= 1e-4, "alpha jumped by {change}");
        checked += 1;
    }
}
