//! Runs one bookshelf scenario to completion and prints the closing part
//! of the trajectory.
//!
//! ```bash
//! cargo run --release -p wholebody --example single_trial -- 12
//! ```

use wholebody::sim::{BenchConfig, ScenarioGenerator, ScenarioKind};

fn main() -> wholebody::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let config = BenchConfig::default();
    let scenario = ScenarioGenerator::standard().generate(ScenarioKind::Bookshelf, seed)?;
    let record = config.replay(&scenario)?;

    for (k, s) in record.trajectory.iter().enumerate().rev().take(5).rev() {
        println!(
            "step {k:4}  ee {:.3?}  r_d {:.4}  lambda_c {:.3}",
            s.ee_position, s.r_d, s.lambda_c
        );
    }
    println!(
        "seed {seed}: {} in {} steps, final error {:.4} m / {:.4} rad, audit min distance {:.4} m, {:.3} ms per step",
        record.outcome.name(),
        record.steps,
        record.final_position_error,
        record.final_angle_error,
        record.audit_min_distance,
        record.step_time_mean * 1e3
    );
    Ok(())
}
