//! Tool pose and Jacobians of the built-in mobile manipulator at its home
//! configuration.

use wholebody::kinematics::{
    base_orientation_jacobian, ee_jacobian, ee_pose, manipulability, manipulability_jacobian, PlanarPose, RobotModel,
    RobotState,
};

fn main() {
    let model = RobotModel::frankie();
    let state = RobotState::home(&model, PlanarPose::new(0.2, -0.1, 0.3));

    let ee = ee_pose(&model, &state);
    let (r, p, y) = ee.rotation.euler_angles();
    println!("tool position {:.4?}", ee.translation.vector.as_slice());
    println!("tool rpy      [{r:.4}, {p:.4}, {y:.4}]");

    let jac = ee_jacobian(&model, &state);
    println!("tool Jacobian (6 x {}), columns v, w, q1..q7:", jac.ncols());
    for row in jac.row_iter() {
        println!("  {}", row.iter().map(|v| format!("{v:8.4}")).collect::<Vec<_>>().join(" "));
    }

    let grad = manipulability_jacobian(&model, &state.arm_q);
    println!("manipulability {:.5} (recomputed {:.5})", grad.value, manipulability(&model, &state.arm_q));
    println!("dm/dq          {:.4?}", grad.gradient.as_slice());
    println!("base heading   {:.4?}", base_orientation_jacobian(&model, &state, 1.0).as_slice());
}
