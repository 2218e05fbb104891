//! Reactive whole-body control of a mobile manipulator, with obstacle
//! avoidance driven by analytic signed distance fields.
//!
//! Each control step solves one QP over base and arm velocities. A point
//! set sampled from the link surfaces, or a set of covering spheres, is
//! checked against the scene. Points inside the influence distance add
//! velocity dampers and an active cost that pushes the whole body away
//! from obstacles.
//!
//! | module | contents |
//! |---|---|
//! | [`qp`] | dense dual active-set QP solver |
//! | [`kinematics`] | robot model and its kinematics |
//! | [`sdf`] | primitive distance fields and scenes |
//! | [`shape`] | surface point sets and covering spheres |
//! | [`controller`] | QP assembly and the per-step controller |
//! | [`sim`] | scenario generators and the benchmark harness |
//!
//! Runnable examples live in `crates/core/examples`:
//!
//! ```bash
//! cargo run --release -p wholebody --example qp
//! cargo run --release -p wholebody --example kinematics
//! cargo run --release -p wholebody --example sdf
//! cargo run --release -p wholebody --example sampling
//! cargo run --release -p wholebody --example controller_step
//! cargo run --release -p wholebody --example single_trial -- 12
//! cargo run --release -p wholebody --example benchmark
//! cargo run --release -p wholebody --example lambda_sweep
//! cargo run --release -p wholebody --example export_model
//! ```
//!
//! A single trial in code:
//!
//! ```no_run
//! use wholebody::sim::{generate_table, BenchConfig};
//!
//! let record = BenchConfig::default().replay(&generate_table(3)?)?;
//! println!("{} after {} steps", record.outcome.name(), record.steps);
//! # Ok::<(), wholebody::Error>(())
//! ```

pub mod controller;
pub mod error;
pub mod frame;
pub mod kinematics;
pub mod qp;
pub mod sdf;
pub mod shape;
pub mod sim;

pub use error::{Error, Result};
