//! Success rate against the peak active-cost gain on shared seeds.

use wholebody::sim::{sweep_lambda, BenchConfig, Representation, ScenarioKind};

fn main() -> wholebody::Result<()> {
    let seeds: Vec<u64> = (0..30).collect();
    let config = BenchConfig {
        representation: Representation::Spheres,
        ..BenchConfig::default()
    };
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    for kind in [ScenarioKind::Bookshelf, ScenarioKind::Table] {
        for (lambda, s) in sweep_lambda(kind, &[0.0, 0.5, 1.0, 2.0, 5.0], &seeds, &config, threads)? {
            println!("{:<9} lambda {lambda:4.1}  success {:5.1}%", kind.name(), s.success_rate);
        }
    }
    Ok(())
}
