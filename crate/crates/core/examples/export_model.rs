//! Prints the built-in robot description as JSON.
//!
//! ```bash
//! cargo run -p wholebody --example export_model > crates/core/configs/frankie.json
//! ```

use wholebody::kinematics::RobotModel;

fn main() {
    println!("{}", RobotModel::frankie().to_json_pretty());
}
