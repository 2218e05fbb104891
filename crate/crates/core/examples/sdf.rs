//! Builds a small scene from primitives, queries it at a few points and
//! round-trips it through JSON.

use nalgebra::Point3;
use wholebody::frame::Frame;
use wholebody::sdf::{Scene, SdfNode};

fn main() -> wholebody::Result<()> {
    let scene = Scene::new(vec![
        SdfNode::Box {
            frame: Frame::new([1.5, 0.0, 0.35], [0.0, 0.0, 0.3]),
            half_extents: [0.3, 0.6, 0.35],
        },
        SdfNode::Cylinder {
            frame: Frame::from_xyz([1.3, 0.2, 0.8]),
            radius: 0.04,
            half_height: 0.1,
        },
        SdfNode::Sphere {
            center: [0.8, -0.5, 1.0],
            radius: 0.1,
        },
    ]);
    scene.validate()?;

    for p in [Point3::new(1.0, 0.0, 0.5), Point3::new(1.3, 0.3, 0.8), Point3::new(1.5, 0.0, 0.3)] {
        let q = scene.query(&p);
        println!(
            "p = {:?}  d = {:+.4}  grad = {:.3?}  nearest = {:.4?}",
            p.coords.as_slice(),
            q.distance,
            q.gradient.as_slice(),
            q.nearest_point(&p).coords.as_slice()
        );
    }

    let path = std::env::temp_dir().join("wholebody_scene.json");
    scene.save(&path)?;
    assert_eq!(Scene::load(&path)?, scene);
    println!("scene written to {}", path.display());
    Ok(())
}
