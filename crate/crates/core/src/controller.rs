//! Reactive whole-body controller: one quadratic program per control step.
//!
//! The decision vector is `x = (qd, delta)`, the 9 joint velocities followed
//! by a 6-vector of slack on the tool velocity. The program is
//!
//! ```text
//!     minimize    1/2 x' Q x + c' x
//!     subject to  [J_ee | I] x = v*                 (pose servo)
//!                 joint-limit and collision dampers
//!                 -qd_max <= qd <= qd_max,  |delta| <= slack bound
//! ```
//!
//! with `c = -(k_m J_m + J_o + lambda_c J_c, 0)`. Minimizing `c' x` thus
//! rewards motion that raises manipulability and turns the base toward the
//! tool. Near obstacles the last term also pushes the body away from them.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::frame::{rotation_error, Pose};
use crate::kinematics::{
    manipulability_gradient_from_frames, orientation_term, Frames, RobotModel, RobotState,
};
use crate::qp::{self, QpProblem, QpStatus, SolverSettings};
use crate::sdf::Scene;
use crate::shape::{CollisionBody, Proximity};
use crate::{Error, Result};

/// Number of slack variables.
pub const SLACK: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Influence distance (m): elements closer than this enter the QP.
    pub d_i: f64,
    /// Stopping distance (m).
    pub d_s: f64,
    /// Collision damper gain (m/s).
    pub eta_c: f64,
    /// Peak gain of the active collision cost.
    pub lambda_c_max: f64,
    /// Translational servo gain (1/s).
    pub k_t: f64,
    /// Rotational servo gain (1/s).
    pub k_r: f64,
    /// Cap on the commanded tool linear speed (m/s).
    pub max_linear_speed: f64,
    /// Cap on the commanded tool angular speed (rad/s).
    pub max_angular_speed: f64,
    /// Joint-velocity weight.
    pub w_q: f64,
    /// Multiplier on `w_q` for the two base entries.
    pub base_weight_scale: f64,
    /// Slack weight, or its ceiling when `slack_error_scaled` is set.
    pub w_delta: f64,
    /// Use `min(w_delta, slack_error_gain / e)` as the slack weight, where
    /// `e` is the sum of the absolute tool pose errors. The task stiffens
    /// as the tool closes in, so linear costs bend the path early on
    /// without leaving a steady-state offset at the goal.
    pub slack_error_scaled: bool,
    pub slack_error_gain: f64,
    /// Slack bounds are this multiple of the servo caps.
    pub slack_bound_scale: f64,
    /// Gain on the manipulability gradient.
    pub k_m: f64,
    /// Gain on the base orientation term.
    pub k_epsilon: f64,
    /// Joint-limit damper influence distance (rad).
    pub rho_i: f64,
    /// Joint-limit damper stopping distance (rad).
    pub rho_s: f64,
    /// Joint-limit damper gain (rad/s).
    pub eta: f64,
    pub constraints_enabled: bool,
    pub active_cost_enabled: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            d_i: 0.3,
            d_s: 0.02,
            eta_c: 1.0,
            lambda_c_max: 1.0,
            k_t: 2.0,
            k_r: 2.0,
            max_linear_speed: 0.5,
            max_angular_speed: 1.0,
            w_q: 0.01,
            base_weight_scale: 10.0,
            w_delta: 100.0,
            slack_error_scaled: true,
            slack_error_gain: 2.0,
            slack_bound_scale: 10.0,
            k_m: 1.0,
            k_epsilon: 0.5,
            rho_i: 0.35,
            rho_s: 0.05,
            eta: 1.0,
            constraints_enabled: true,
            active_cost_enabled: true,
        }
    }
}

impl ControllerConfig {
    /// Neither dampers nor active cost: the plain holistic controller.
    pub fn holistic() -> Self {
        Self {
            constraints_enabled: false,
            active_cost_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let all = [
            ("d_i", self.d_i),
            ("d_s", self.d_s),
            ("eta_c", self.eta_c),
            ("lambda_c_max", self.lambda_c_max),
            ("k_t", self.k_t),
            ("k_r", self.k_r),
            ("max_linear_speed", self.max_linear_speed),
            ("max_angular_speed", self.max_angular_speed),
            ("w_q", self.w_q),
            ("base_weight_scale", self.base_weight_scale),
            ("w_delta", self.w_delta),
            ("slack_error_gain", self.slack_error_gain),
            ("slack_bound_scale", self.slack_bound_scale),
            ("k_m", self.k_m),
            ("k_epsilon", self.k_epsilon),
            ("rho_i", self.rho_i),
            ("rho_s", self.rho_s),
            ("eta", self.eta),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{name} must be finite, got {v}"));
        }
        if !(self.d_s > 0.0 && self.d_s < self.d_i) {
            return bad(format!("need 0 < d_s < d_i, got d_s = {}, d_i = {}", self.d_s, self.d_i));
        }
        if !(self.rho_s >= 0.0 && self.rho_s < self.rho_i) {
            return bad(format!("need 0 <= rho_s < rho_i, got {} and {}", self.rho_s, self.rho_i));
        }
        if self.lambda_c_max < 0.0 || self.k_m < 0.0 || self.k_epsilon < 0.0 {
            return bad("lambda_c_max, k_m and k_epsilon must be non-negative".into());
        }
        for (name, v) in [
            ("eta_c", self.eta_c),
            ("k_t", self.k_t),
            ("k_r", self.k_r),
            ("max_linear_speed", self.max_linear_speed),
            ("max_angular_speed", self.max_angular_speed),
            ("w_q", self.w_q),
            ("base_weight_scale", self.base_weight_scale),
            ("w_delta", self.w_delta),
            ("slack_error_gain", self.slack_error_gain),
            ("slack_bound_scale", self.slack_bound_scale),
            ("eta", self.eta),
        ] {
            if v <= 0.0 {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::json("<controller config>", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Damper weight of an element at distance `d`: 1 at `d_s`, 0 at `d_i`.
    pub fn proximity_weight(&self, d: f64) -> f64 {
        (self.d_i - d) / (self.d_i - self.d_s)
    }

    /// Gain of the active cost for robot distance `r_d`; zero beyond `d_i`.
    pub fn lambda_c(&self, r_d: f64) -> f64 {
        if r_d >= self.d_i {
            return 0.0;
        }
        let span = self.d_i - self.d_s;
        self.lambda_c_max / (span * span) * (r_d - self.d_i).powi(2)
    }
}

/// Desired tool twist `(linear, angular)` in the world frame.
pub fn pose_servo(current: &Pose, target: &Pose, cfg: &ControllerConfig) -> DVector<f64> {
    let cap = |v: Vector3<f64>, limit: f64| {
        let n = v.norm();
        if n > limit {
            v * (limit / n)
        } else {
            v
        }
    };
    let lin = cap(
        (target.translation.vector - current.translation.vector) * cfg.k_t,
        cfg.max_linear_speed,
    );
    let ang = cap(
        rotation_error(&current.rotation, &target.rotation) * cfg.k_r,
        cfg.max_angular_speed,
    );
    DVector::from_iterator(6, lin.iter().chain(ang.iter()).copied())
}

/// An element near an obstacle with its distance Jacobian `J_d`: the rate
/// at which its obstacle distance grows per unit joint velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub distance: f64,
    pub link: usize,
    pub jd: DVector<f64>,
}

/// `J_d = g' J_p` for every proximity, in input order. Columns of joints
/// beyond the element's link are exactly zero.
pub fn distance_rows(model: &RobotModel, frames: &Frames, near: &[Proximity]) -> Vec<DistanceRow> {
    let dof = model.dof();
    near.iter()
        .map(|p| {
            let mut jd = DVector::zeros(dof);
            frames.directional_row(
                frames.link_parent(p.link),
                &p.world,
                &p.gradient,
                jd.as_mut_slice(),
            );
            DistanceRow {
                distance: p.distance,
                link: p.link,
                jd,
            }
        })
        .collect()
}

/// Collision dampers, one row per element inside `d_i`:
/// `-J_d qd <= eta_c (d - d_s) / (d_i - d_s)`. The left side is the
/// approach rate, so an element at `d_s` may not get any closer and one
/// already inside `d_s` is pushed back out.
pub fn collision_constraints(
    rows: &[DistanceRow],
    dof: usize,
    cfg: &ControllerConfig,
) -> (DMatrix<f64>, DVector<f64>) {
    let kept: Vec<&DistanceRow> = rows.iter().filter(|r| r.distance < cfg.d_i).collect();
    let mut a = DMatrix::zeros(kept.len(), dof + SLACK);
    let mut b = DVector::zeros(kept.len());
    for (i, r) in kept.iter().enumerate() {
        for j in 0..dof {
            a[(i, j)] = -r.jd[j];
        }
        b[i] = cfg.eta_c * (r.distance - cfg.d_s) / (cfg.d_i - cfg.d_s);
    }
    (a, b)
}

/// Weighted mean distance Jacobian `J_c` and the dynamic gain `lambda_c`
/// over the elements inside `d_i`; zeros when there are none.
pub fn collision_jacobian(rows: &[DistanceRow], dof: usize, cfg: &ControllerConfig) -> (DVector<f64>, f64) {
    let mut jc = DVector::zeros(dof);
    let mut total = 0.0;
    let mut r_d = f64::INFINITY;
    for r in rows.iter().filter(|r| r.distance < cfg.d_i) {
        let w = cfg.proximity_weight(r.distance);
        jc.axpy(w, &r.jd, 1.0);
        total += w;
        r_d = r_d.min(r.distance);
    }
    if total <= 1e-12 {
        return (DVector::zeros(dof), 0.0);
    }
    (jc / total, cfg.lambda_c(r_d))
}

/// Velocity dampers keeping each arm joint at least `rho_s` inside its
/// limits. A joint gets a row only for a limit closer than `rho_i`.
pub fn joint_limit_constraints(
    model: &RobotModel,
    state: &RobotState,
    cfg: &ControllerConfig,
) -> (DMatrix<f64>, DVector<f64>) {
    let dof = model.dof();
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    for (i, (j, q)) in model.joints.iter().zip(&state.arm_q).enumerate() {
        let to_upper = j.upper - q;
        if to_upper < cfg.rho_i {
            rows.push((2 + i, 1.0, cfg.eta * (to_upper - cfg.rho_s) / (cfg.rho_i - cfg.rho_s)));
        }
        let to_lower = q - j.lower;
        if to_lower < cfg.rho_i {
            rows.push((2 + i, -1.0, cfg.eta * (to_lower - cfg.rho_s) / (cfg.rho_i - cfg.rho_s)));
        }
    }
    let mut a = DMatrix::zeros(rows.len(), dof + SLACK);
    let mut b = DVector::zeros(rows.len());
    for (r, (col, sign, rhs)) in rows.into_iter().enumerate() {
        a[(r, col)] = sign;
        b[r] = rhs;
    }
    (a, b)
}

/// Quantities computed while assembling the QP.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub problem: QpProblem,
    pub joint_rows: usize,
    pub collision_rows: usize,
    /// Smallest element distance among those inside `d_i`, else infinity.
    pub min_distance: f64,
    pub lambda_c: f64,
    pub manipulability: f64,
    pub near_singular: bool,
}

/// Builds the QP for one control step. `near` are the proxy elements
/// closer than `d_i`; they are ignored unless a collision component is on.
pub fn assemble_qp(
    model: &RobotModel,
    frames: &Frames,
    state: &RobotState,
    target: &Pose,
    near: &[Proximity],
    cfg: &ControllerConfig,
) -> Assembly {
    let dof = model.dof();
    let n = dof + SLACK;

    let mut q = DMatrix::zeros(n, n);
    for i in 0..dof {
        q[(i, i)] = if i < 2 { cfg.w_q * cfg.base_weight_scale } else { cfg.w_q };
    }
    let w_delta = if cfg.slack_error_scaled {
        let e = (target.translation.vector - frames.ee.translation.vector).abs().sum()
            + rotation_error(&frames.ee.rotation, &target.rotation).abs().sum();
        cfg.w_delta.min(cfg.slack_error_gain / e)
    } else {
        cfg.w_delta
    };
    for i in dof..n {
        q[(i, i)] = w_delta;
    }

    let manip = manipulability_gradient_from_frames(frames);
    let mut gain = manip.gradient.clone() * cfg.k_m;
    gain += orientation_term(dof, &state.base, &frames.ee, cfg.k_epsilon);

    let rows = if cfg.constraints_enabled || cfg.active_cost_enabled {
        distance_rows(model, frames, near)
    } else {
        Vec::new()
    };
    let min_distance = rows
        .iter()
        .filter(|r| r.distance < cfg.d_i)
        .map(|r| r.distance)
        .fold(f64::INFINITY, f64::min);

    let mut lambda_c = 0.0;
    if cfg.active_cost_enabled {
        let (jc, lc) = collision_jacobian(&rows, dof, cfg);
        gain.axpy(lc, &jc, 1.0);
        lambda_c = lc;
    }
    let mut c = DVector::zeros(n);
    c.rows_mut(0, dof).copy_from(&(-gain));

    let mut a_eq = DMatrix::zeros(6, n);
    a_eq.view_mut((0, 0), (6, dof)).copy_from(&frames.ee_jacobian());
    a_eq.view_mut((0, dof), (6, SLACK)).fill_with_identity();
    let b_eq = pose_servo(&frames.ee, target, cfg);

    let (a_joint, b_joint) = joint_limit_constraints(model, state, cfg);
    let (a_coll, b_coll) = if cfg.constraints_enabled {
        collision_constraints(&rows, dof, cfg)
    } else {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    };
    let (joint_rows, collision_rows) = (a_joint.nrows(), a_coll.nrows());
    let mut a_in = DMatrix::zeros(joint_rows + collision_rows, n);
    a_in.view_mut((0, 0), (joint_rows, n)).copy_from(&a_joint);
    a_in.view_mut((joint_rows, 0), (collision_rows, n)).copy_from(&a_coll);
    let mut b_in = DVector::zeros(joint_rows + collision_rows);
    b_in.rows_mut(0, joint_rows).copy_from(&b_joint);
    b_in.rows_mut(joint_rows, collision_rows).copy_from(&b_coll);

    let limits = model.velocity_limits();
    let slack_lin = cfg.slack_bound_scale * cfg.max_linear_speed;
    let slack_ang = cfg.slack_bound_scale * cfg.max_angular_speed;
    let ub = DVector::from_fn(n, |i, _| match i {
        i if i < dof => limits[i],
        i if i < dof + 3 => slack_lin,
        _ => slack_ang,
    });
    let lb = -&ub;

    Assembly {
        problem: QpProblem::new(q, c)
            .with_equality(a_eq, b_eq)
            .with_inequality(a_in, b_in)
            .with_bounds(lb, ub),
        joint_rows,
        collision_rows,
        min_distance,
        lambda_c,
        manipulability: manip.value,
        near_singular: manip.near_singular,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    /// Solved, but the arm is at a singularity so the manipulability term
    /// was dropped.
    NearSingular,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Closest proxy element inside `d_i` (infinite when none is).
    pub min_distance: f64,
    /// Inequality rows active at the solution.
    pub active_constraints: usize,
    pub collision_rows: usize,
    pub lambda_c: f64,
    pub manipulability: f64,
    /// Some element was already inside `d_s`.
    pub penetration_imminent: bool,
    /// The first solve failed and the relaxed retry was used.
    pub retried: bool,
    pub qp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub qdot: DVector<f64>,
    pub slack: DVector<f64>,
    pub status: StepStatus,
    pub diagnostics: StepDiagnostics,
}

/// A controller bound to one robot and its collision proxy.
#[derive(Debug, Clone)]
pub struct Controller {
    pub model: RobotModel,
    pub config: ControllerConfig,
    pub body: CollisionBody,
    pub solver: SolverSettings,
}

impl Controller {
    pub fn new(model: RobotModel, config: ControllerConfig, body: CollisionBody) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        if (config.constraints_enabled || config.active_cost_enabled) && body.is_empty() {
            return Err(Error::InvalidConfig(
                "collision handling is enabled but the robot representation is empty".into(),
            ));
        }
        Ok(Self {
            model,
            config,
            body,
            solver: SolverSettings::default(),
        })
    }

    /// Proxy elements within the influence distance, in rep order.
    pub fn proximities(&self, scene: &Scene, frames: &Frames) -> Vec<Proximity> {
        if self.config.constraints_enabled || self.config.active_cost_enabled {
            self.body.proximities(scene, frames, self.config.d_i)
        } else {
            Vec::new()
        }
    }

    pub fn step(&self, state: &RobotState, target: &Pose, scene: &Scene) -> Result<StepResult> {
        let frames = Frames::compute(&self.model, state);
        self.step_with_frames(&frames, state, target, scene)
    }

    pub fn step_with_frames(
        &self,
        frames: &Frames,
        state: &RobotState,
        target: &Pose,
        scene: &Scene,
    ) -> Result<StepResult> {
        let near = self.proximities(scene, frames);
        let assembly = assemble_qp(&self.model, frames, state, target, &near, &self.config);
        let penetration_imminent = assembly.min_distance < self.config.d_s;

        let mut retried = false;
        let mut outcome = self.solve_checked(&assembly.problem)?;
        let mut used = &assembly;
        let relaxed;
        if outcome.is_none() {
            retried = true;
            let cfg = ControllerConfig {
                active_cost_enabled: false,
                slack_bound_scale: self.config.slack_bound_scale * 10.0,
                ..self.config.clone()
            };
            relaxed = assemble_qp(&self.model, frames, state, target, &near, &cfg);
            outcome = self.solve_checked(&relaxed.problem)?;
            used = &relaxed;
        }

        let dof = self.model.dof();
        let mut diagnostics = StepDiagnostics {
            min_distance: assembly.min_distance,
            active_constraints: 0,
            collision_rows: used.collision_rows,
            lambda_c: used.lambda_c,
            manipulability: assembly.manipulability,
            penetration_imminent,
            retried,
            qp_iterations: 0,
        };
        let Some(sol) = outcome else {
            return Ok(StepResult {
                qdot: DVector::zeros(dof),
                slack: DVector::zeros(SLACK),
                status: StepStatus::Infeasible,
                diagnostics,
            });
        };
        diagnostics.qp_iterations = sol.iterations;
        diagnostics.active_constraints = sol.ineq_multipliers.iter().filter(|m| **m > 0.0).count();
        let limits = self.model.velocity_limits();
        let qdot = DVector::from_fn(dof, |i, _| sol.x[i].clamp(-limits[i], limits[i]));
        Ok(StepResult {
            qdot,
            slack: sol.x.rows(dof, SLACK).into_owned(),
            status: if assembly.near_singular {
                StepStatus::NearSingular
            } else {
                StepStatus::Ok
            },
            diagnostics,
        })
    }

    /// Solves and re-checks the inequalities outside the solver; `None`
    /// when the problem is infeasible or the answer violates a row.
    fn solve_checked(&self, problem: &QpProblem) -> Result<Option<qp::QpSolution>> {
        let sol = qp::solve(problem, &self.solver)?;
        if sol.status != QpStatus::Optimal {
            return Ok(None);
        }
        let slack = &problem.a_in * &sol.x - &problem.b_in;
        if slack.iter().any(|s| *s > 1e-6) {
            return Ok(None);
        }
        Ok(Some(sol))
    }
}
