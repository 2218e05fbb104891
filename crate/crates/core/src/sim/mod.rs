//! Kinematic simulation and the benchmark harness built on it.

mod bench;
mod scenario;

pub use bench::{
    config_hash, run_benchmark, sweep_lambda, write_trials_csv, AuditSettings, BenchConfig,
    BenchmarkSummary, Representation,
};
pub use scenario::{
    generate_bookshelf, generate_table, BookshelfRanges, Range, Scenario, ScenarioGenerator,
    ScenarioKind, ScenarioRanges, StartRanges, TableRanges,
};

use std::time::Instant;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, StepStatus};
use crate::frame::{angular_distance, Pose};
use crate::kinematics::{Frames, RobotModel, RobotState};
use crate::shape::CollisionBody;
use crate::Result;

/// Advances the state by `qdot = (v, w, qd_1..)` over `dt` with explicit
/// Euler steps; arm joints are clamped to their limits. Returns the new
/// state and whether any joint was clamped.
pub fn integrate(model: &RobotModel, state: &RobotState, qdot: &[f64], dt: f64) -> (RobotState, bool) {
    let mut next = state.clone();
    let (sin, cos) = state.base.theta.sin_cos();
    next.base.x += qdot[0] * cos * dt;
    next.base.y += qdot[0] * sin * dt;
    next.base.theta += qdot[1] * dt;
    let mut clamped = false;
    for ((q, v), j) in next.arm_q.iter_mut().zip(&qdot[2..]).zip(&model.joints) {
        let moved = *q + v * dt;
        *q = moved.clamp(j.lower, j.upper);
        clamped |= *q != moved;
    }
    (next, clamped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    LocalMinimum,
    Timeout,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::LocalMinimum => "local_minimum",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSettings {
    /// Control period (s).
    pub dt: f64,
    pub max_steps: usize,
    /// Tool position tolerance for success (m).
    pub position_tolerance: f64,
    /// Tool orientation tolerance for success (rad).
    pub angular_tolerance: f64,
    /// Consecutive infeasible steps that end a trial as a local minimum.
    pub infeasible_limit: usize,
    /// A trial whose tracking error has not dropped by `stall_progress`
    /// within this many steps is declared stuck.
    pub stall_window: usize,
    /// Progress (m, with radians weighted by `stall_angle_weight`) that
    /// resets the stall window.
    pub stall_progress: f64,
    pub stall_angle_weight: f64,
    pub record_trajectory: bool,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self {
            dt: 0.02,
            max_steps: 3000,
            position_tolerance: 0.02,
            angular_tolerance: 0.1,
            infeasible_limit: 10,
            stall_window: 150,
            stall_progress: 0.002,
            stall_angle_weight: 0.1,
            record_trajectory: false,
        }
    }
}

impl TrialSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.max_steps == 0 || !(self.position_tolerance > 0.0) || !(self.angular_tolerance > 0.0) {
            return Err(crate::Error::InvalidConfig(
                "dt, max_steps and both tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub state: RobotState,
    pub ee_position: [f64; 3],
    /// Unit quaternion `[x, y, z, w]`.
    pub ee_rotation: [f64; 4],
    /// Closest controller-proxy distance at this state.
    pub r_d: f64,
    pub lambda_c: f64,
    pub qdot: Vec<f64>,
    pub status: Option<StepStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub kind: ScenarioKind,
    pub outcome: Outcome,
    pub steps: usize,
    /// Mean norm of the tool acceleration (m/s^2).
    pub ee_accel_mean: f64,
    /// Smallest controller-proxy obstacle distance over the trial (m).
    pub min_distance: f64,
    /// Smallest audit-set obstacle distance over the trial (m).
    pub audit_min_distance: f64,
    pub final_position_error: f64,
    pub final_angle_error: f64,
    pub infeasible_steps: usize,
    /// Mean controller time per step (s).
    pub step_time_mean: f64,
    /// Whole trial, including collision checks (s).
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<TrajectorySample>,
}

impl TrialRecord {
    pub fn counts_as_local_minimum(&self) -> bool {
        matches!(self.outcome, Outcome::LocalMinimum | Outcome::Timeout)
    }
}

fn tracking_error(ee: &Pose, target: &Pose) -> (f64, f64) {
    (
        (target.translation.vector - ee.translation.vector).norm(),
        angular_distance(&ee.rotation, &target.rotation),
    )
}

/// Runs one scenario until it ends in one of the [`Outcome`]s. Collisions are checked at every state against both the
/// controller proxy and the independent audit set.
pub fn run_trial(
    controller: &Controller,
    audit: &CollisionBody,
    scenario: &Scenario,
    settings: &TrialSettings,
) -> Result<TrialRecord> {
    let started = Instant::now();
    let model = &controller.model;
    let target = scenario.target_pose();
    let scene = &scenario.scene;
    let mut state = scenario.start.clone();

    let mut min_distance = f64::INFINITY;
    let mut audit_min = f64::INFINITY;
    let mut accel_sum = 0.0;
    let mut accel_n = 0usize;
    let mut history: Vec<Vector3<f64>> = Vec::with_capacity(3);
    let mut infeasible_run = 0;
    let mut infeasible_steps = 0;
    let mut step_time = 0.0;
    let mut best_error = f64::INFINITY;
    let mut last_progress = 0;
    let mut trajectory = Vec::new();

    let mut steps = 0;
    let (outcome, pos_err, ang_err) = loop {
        let frames = Frames::compute(model, &state);
        let proxy = controller.body.min_distance(scene, &frames).0;
        let check = audit.min_distance(scene, &frames).0;
        min_distance = min_distance.min(proxy);
        audit_min = audit_min.min(check);

        history.push(frames.ee.translation.vector);
        if history.len() == 3 {
            let a = (history[2] - history[1] * 2.0 + history[0]) / (settings.dt * settings.dt);
            accel_sum += a.norm();
            accel_n += 1;
            history.remove(0);
        }

        let (pos_err, ang_err) = tracking_error(&frames.ee, &target);
        let mut sample = settings.record_trajectory.then(|| TrajectorySample {
            state: state.clone(),
            ee_position: frames.ee.translation.vector.into(),
            ee_rotation: frames.ee.rotation.coords.into(),
            r_d: proxy,
            lambda_c: 0.0,
            qdot: Vec::new(),
            status: None,
        });

        let ending = if proxy <= 0.0 || check <= 0.0 {
            Some(Outcome::Collision)
        } else if pos_err <= settings.position_tolerance && ang_err <= settings.angular_tolerance {
            Some(Outcome::Success)
        } else if steps >= settings.max_steps {
            Some(Outcome::Timeout)
        } else if steps - last_progress >= settings.stall_window {
            Some(Outcome::LocalMinimum)
        } else {
            None
        };
        if let Some(outcome) = ending {
            trajectory.extend(sample);
            break (outcome, pos_err, ang_err);
        }

        let combined = pos_err + settings.stall_angle_weight * ang_err;
        if combined < best_error - settings.stall_progress {
            best_error = combined;
            last_progress = steps;
        }

        let t0 = Instant::now();
        let result = controller.step_with_frames(&frames, &state, &target, scene)?;
        step_time += t0.elapsed().as_secs_f64();
        let qdot: DVector<f64> = result.qdot;
        if let Some(s) = sample.as_mut() {
            s.lambda_c = result.diagnostics.lambda_c;
            s.qdot = qdot.as_slice().to_vec();
            s.status = Some(result.status);
        }
        trajectory.extend(sample);

        if result.status == StepStatus::Infeasible {
            infeasible_run += 1;
            infeasible_steps += 1;
            if infeasible_run >= settings.infeasible_limit {
                break (Outcome::LocalMinimum, pos_err, ang_err);
            }
        } else {
            infeasible_run = 0;
        }
        state = integrate(model, &state, qdot.as_slice(), settings.dt).0;
        steps += 1;
    };

    Ok(TrialRecord {
        seed: scenario.seed,
        kind: scenario.kind,
        outcome,
        steps,
        ee_accel_mean: if accel_n > 0 { accel_sum / accel_n as f64 } else { 0.0 },
        min_distance,
        audit_min_distance: audit_min,
        final_position_error: pos_err,
        final_angle_error: ang_err,
        infeasible_steps,
        step_time_mean: if steps > 0 { step_time / steps as f64 } else { 0.0 },
        wall_time: started.elapsed().as_secs_f64(),
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::PlanarPose;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn integration_examples() {
        let model = RobotModel::frankie();
        let s = RobotState::home(&model, PlanarPose::default());
        let mut qd = vec![0.0; 9];
        qd[0] = 1.0;
        let (n, _) = integrate(&model, &s, &qd, 0.1);
        assert_relative_eq!(n.base.x, 0.1);
        let mut qd = vec![0.0; 9];
        qd[1] = PI;
        let (n, _) = integrate(&model, &s, &qd, 0.5);
        assert_relative_eq!(n.base.theta, PI / 2.0);
        assert_eq!((n.base.x, n.base.y), (0.0, 0.0));
        let (n, clamped) = integrate(&model, &s, &[0.0; 9], 0.3);
        assert_eq!(n, s);
        assert!(!clamped);
        let mut qd = vec![0.0; 9];
        qd[2] = 100.0;
        let (n, clamped) = integrate(&model, &s, &qd, 0.1);
        assert!(clamped);
        assert_eq!(n.arm_q[0], model.joints[0].upper);
    }
}
