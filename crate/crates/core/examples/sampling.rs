//! Samples the canonical surface point sets and writes the coarse one as
//! `link_index,x,y,z` CSV.
//!
//! ```bash
//! cargo run --release -p wholebody --example sampling -- /tmp/coarse.csv
//! ```

use wholebody::kinematics::RobotModel;
use wholebody::shape::{load_points, sample_preset, save_points, PointPreset, SurfaceRep};

fn main() -> wholebody::Result<()> {
    let model = RobotModel::frankie();
    for preset in [PointPreset::Coarse, PointPreset::Fine] {
        let rep = sample_preset(&model, preset, 0)?;
        let SurfaceRep::Points(points) = &rep else { unreachable!() };
        let mut per_link = vec![0usize; model.links.len()];
        for p in points {
            per_link[p.link] += 1;
        }
        println!(
            "{preset:?}: {} points, mean spacing {:.4} m, per link {per_link:?}",
            rep.len(),
            rep.gap_radius(&model)
        );
    }
    let spheres = SurfaceRep::model_spheres(&model);
    println!("covering spheres: {}", spheres.len());

    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("wholebody_coarse.csv"));
    let SurfaceRep::Points(coarse) = sample_preset(&model, PointPreset::Coarse, 0)? else { unreachable!() };
    save_points(&coarse, &out)?;
    let back = load_points(&out, &model)?;
    println!("wrote {} points to {}", back.len(), out.display());
    Ok(())
}
