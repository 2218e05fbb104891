//! One control step in front of a table, with the commanded velocities
//! and step diagnostics.

use wholebody::controller::{Controller, ControllerConfig};
use wholebody::kinematics::{Frames, RobotModel};
use wholebody::shape::{sample_preset, CollisionBody, PointPreset};
use wholebody::sim::generate_table;

fn main() -> wholebody::Result<()> {
    let model = RobotModel::frankie();
    let scenario = generate_table(4)?;
    let rep = sample_preset(&model, PointPreset::Fine, 0)?;
    let ctrl = Controller::new(model.clone(), ControllerConfig::default(), CollisionBody::new(&rep))?;

    let frames = Frames::compute(&model, &scenario.start);
    let near = ctrl.proximities(&scenario.scene, &frames);
    println!("{} of {} points inside the influence distance", near.len(), rep.len());

    let step = ctrl.step(&scenario.start, &scenario.target_pose(), &scenario.scene)?;
    println!("status  {:?}", step.status);
    println!("qdot    {:.4?}", step.qdot.as_slice());
    println!("slack   {:.4?}", step.slack.as_slice());
    println!("{:#?}", step.diagnostics);
    Ok(())
}
