//! Full method against the no-awareness baseline on the same table seeds.

use wholebody::controller::ControllerConfig;
use wholebody::sim::{run_benchmark, write_trials_csv, BenchConfig, ScenarioKind};

fn main() -> wholebody::Result<()> {
    let seeds: Vec<u64> = (0..20).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let full = BenchConfig::default();
    let baseline = BenchConfig {
        controller: ControllerConfig::holistic(),
        ..BenchConfig::default()
    };
    for (name, cfg) in [("full", &full), ("holistic", &baseline)] {
        let s = run_benchmark(ScenarioKind::Table, &seeds, cfg, threads)?;
        println!(
            "{name:<9} success {:5.1}%  collision {:5.1}%  local minimum {:5.1}%  <|a|> {:?}  hash {}",
            s.success_rate, s.collision_rate, s.local_minimum_rate, s.ee_accel_mean, s.config_hash
        );
        if name == "full" {
            write_trials_csv(&s.records[..3], &s.config_hash, true, std::io::stdout())?;
        }
    }
    Ok(())
}
