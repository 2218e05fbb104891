//! Forward and differential kinematics of the mobile manipulator.
//!
//! Velocity vectors are ordered `(v, w, qd_1 .. qd_n)`: base forward speed,
//! base yaw rate, then arm joint rates. Every Jacobian maps that vector to
//! world-frame quantities. Spatial velocities are `(linear, angular)`.

mod model;

pub use model::{
    covering_spheres, BaseSpec, JointSpec, LinkSpec, RobotModel, Solid, SphereSpec, ARM_JOINTS,
};

use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix3xX, Point3, Translation3, Unit, UnitQuaternion, Vector3,
};
use serde::{Deserialize, Serialize};

use crate::frame::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// The planar pose lifted to 3D: z = 0, rotation about world z.
    pub fn to_pose(&self) -> Pose {
        Isometry3::from_parts(
            Translation3::new(self.x, self.y, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.theta),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub base: PlanarPose,
    pub arm_q: Vec<f64>,
}

impl RobotState {
    pub fn new(base: PlanarPose, arm_q: Vec<f64>) -> Self {
        Self { base, arm_q }
    }

    pub fn home(model: &RobotModel, base: PlanarPose) -> Self {
        Self::new(base, model.home.clone())
    }
}

/// World frames of every joint and link for one state, plus the quantities
/// the Jacobians need. Computing this once per control step lets all point
/// Jacobians share it.
#[derive(Debug, Clone)]
pub struct Frames {
    pub base: Pose,
    /// Frame of each arm joint after its rotation.
    pub joints: Vec<Pose>,
    pub links: Vec<Pose>,
    pub ee: Pose,
    link_parents: Vec<usize>,
    axes: Vec<Vector3<f64>>,
    heading: Vector3<f64>,
}

impl Frames {
    pub fn compute(model: &RobotModel, state: &RobotState) -> Self {
        let base = state.base.to_pose();
        let mut t = base * model.base.arm_mount.iso();
        let mut joints = Vec::with_capacity(model.n_arm());
        let mut axes = Vec::with_capacity(model.n_arm());
        for (spec, q) in model.joints.iter().zip(&state.arm_q) {
            let axis = Unit::new_unchecked(Vector3::from(spec.axis));
            t = t * spec.origin.iso() * UnitQuaternion::from_axis_angle(&axis, *q);
            axes.push(t.rotation * axis.into_inner());
            joints.push(t);
        }
        let ee = t * model.ee_transform.iso();
        let links = model
            .links
            .iter()
            .map(|l| {
                let parent = if l.parent_joint == 0 {
                    &base
                } else {
                    &joints[l.parent_joint - 1]
                };
                parent * l.origin.iso()
            })
            .collect();
        let theta = state.base.theta;
        Frames {
            base,
            joints,
            links,
            ee,
            link_parents: model.links.iter().map(|l| l.parent_joint).collect(),
            axes,
            heading: Vector3::new(theta.cos(), theta.sin(), 0.0),
        }
    }

    pub fn dof(&self) -> usize {
        2 + self.joints.len()
    }

    pub fn link_parent(&self, link: usize) -> usize {
        self.link_parents[link]
    }

    pub fn joint_axis(&self, j: usize) -> Vector3<f64> {
        self.axes[j]
    }

    pub fn joint_origin(&self, j: usize) -> Vector3<f64> {
        self.joints[j].translation.vector
    }

    /// Linear velocity Jacobian column `col` for a world point driven by
    /// arm joints `1..=parent`.
    #[inline]
    fn linear_column(&self, col: usize, parent: usize, p: &Vector3<f64>) -> Vector3<f64> {
        match col {
            0 => self.heading,
            1 => {
                let r = p - self.base.translation.vector;
                Vector3::new(-r.y, r.x, 0.0)
            }
            c if c - 1 <= parent => {
                let j = c - 2;
                self.axes[j].cross(&(p - self.joint_origin(j)))
            }
            _ => Vector3::zeros(),
        }
    }

    /// Translational Jacobian (3 x dof) of a world point rigidly attached to
    /// arm joint `parent` (0 for the base). Columns of later joints are zero.
    pub fn point_jacobian(&self, parent: usize, p: &Point3<f64>) -> Matrix3xX<f64> {
        let dof = self.dof();
        let mut jac = Matrix3xX::zeros(dof);
        for col in 0..(2 + parent).min(dof) {
            jac.set_column(col, &self.linear_column(col, parent, &p.coords));
        }
        jac
    }

    /// Writes `dir' J(p)` into `out` (length dof): the rate of change of the
    /// projection of `p` on `dir`.
    #[inline]
    pub fn directional_row(&self, parent: usize, p: &Point3<f64>, dir: &Vector3<f64>, out: &mut [f64]) {
        let n = (2 + parent).min(out.len());
        for (col, o) in out.iter_mut().enumerate() {
            *o = if col < n {
                dir.dot(&self.linear_column(col, parent, &p.coords))
            } else {
                0.0
            };
        }
    }

    /// Spatial Jacobian (6 x dof) of the tool frame origin.
    pub fn ee_jacobian(&self) -> DMatrix<f64> {
        let dof = self.dof();
        let n_arm = self.joints.len();
        let p = self.ee.translation.vector;
        let mut jac = DMatrix::zeros(6, dof);
        for col in 0..dof {
            let lin = self.linear_column(col, n_arm, &p);
            let ang = match col {
                0 => Vector3::zeros(),
                1 => Vector3::z(),
                c => self.axes[c - 2],
            };
            jac.fixed_view_mut::<3, 1>(0, col).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, col).copy_from(&ang);
        }
        jac
    }
}

/// World pose of every link followed by the tool pose.
pub fn forward_kinematics(model: &RobotModel, state: &RobotState) -> Vec<Pose> {
    let f = Frames::compute(model, state);
    let mut out = f.links;
    out.push(f.ee);
    out
}

pub fn ee_pose(model: &RobotModel, state: &RobotState) -> Pose {
    Frames::compute(model, state).ee
}

pub fn ee_jacobian(model: &RobotModel, state: &RobotState) -> DMatrix<f64> {
    Frames::compute(model, state).ee_jacobian()
}

/// Translational Jacobian (3 x dof) of `local` (expressed in link `link`).
pub fn point_jacobian(
    model: &RobotModel,
    state: &RobotState,
    link: usize,
    local: &Point3<f64>,
) -> DMatrix<f64> {
    let f = Frames::compute(model, state);
    let world = f.links[link] * local;
    let jac = f.point_jacobian(model.links[link].parent_joint, &world);
    DMatrix::from_column_slice(3, jac.ncols(), jac.as_slice())
}

/// `sqrt(det(J J'))` for a wide Jacobian; zero when rank deficient.
pub fn manipulability_index(jac: &DMatrix<f64>) -> f64 {
    let jjt = jac * jac.transpose();
    jjt.determinant().max(0.0).sqrt()
}

/// Arm-only spatial Jacobian (6 x n_arm) with the base at the origin.
pub fn arm_jacobian(model: &RobotModel, arm_q: &[f64]) -> DMatrix<f64> {
    let state = RobotState::new(PlanarPose::default(), arm_q.to_vec());
    let j = ee_jacobian(model, &state);
    j.columns(2, model.n_arm()).into_owned()
}

/// Manipulability of the arm. Invariant to the base pose.
pub fn manipulability(model: &RobotModel, arm_q: &[f64]) -> f64 {
    manipulability_index(&arm_jacobian(model, arm_q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulabilityGradient {
    pub value: f64,
    /// `dm/dq` padded to the full velocity vector; base entries are zero.
    pub gradient: DVector<f64>,
    /// Set when `value <= 1e-8`; the gradient is zero then.
    pub near_singular: bool,
}

pub const SINGULAR_MANIPULABILITY: f64 = 1e-8;

/// Gradient of the arm manipulability from the kinematic Hessian:
/// `dm/dq_i = m * tr((J J')^-1 (dJ/dq_i) J')`.
pub fn manipulability_jacobian(model: &RobotModel, arm_q: &[f64]) -> ManipulabilityGradient {
    let state = RobotState::new(PlanarPose::default(), arm_q.to_vec());
    let frames = Frames::compute(model, &state);
    manipulability_gradient_from_frames(&frames)
}

pub(crate) fn manipulability_gradient_from_frames(frames: &Frames) -> ManipulabilityGradient {
    let n = frames.joints.len();
    let dof = frames.dof();
    let jac = frames.ee_jacobian().columns(2, n).into_owned();
    let jjt = &jac * jac.transpose();
    let m = jjt.determinant().max(0.0).sqrt();
    let mut gradient = DVector::zeros(dof);
    if m <= SINGULAR_MANIPULABILITY {
        return ManipulabilityGradient {
            value: m,
            gradient,
            near_singular: true,
        };
    }
    let Some(inv) = jjt.try_inverse() else {
        return ManipulabilityGradient {
            value: m,
            gradient,
            near_singular: true,
        };
    };
    let pe = frames.ee.translation.vector;
    let z: Vec<Vector3<f64>> = (0..n).map(|i| frames.joint_axis(i)).collect();
    let o: Vec<Vector3<f64>> = (0..n).map(|i| frames.joint_origin(i)).collect();
    let mut h = DMatrix::zeros(6, n);
    for i in 0..n {
        for j in 0..n {
            let (lin, ang) = if i <= j {
                let zij = z[i].cross(&z[j]);
                let r = pe - o[j];
                (zij.cross(&r) + z[j].cross(&z[i].cross(&r)), zij)
            } else {
                (z[j].cross(&z[i].cross(&(pe - o[i]))), Vector3::zeros())
            };
            h.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
            h.fixed_view_mut::<3, 1>(3, j).copy_from(&ang);
        }
        let hjt = &h * jac.transpose();
        gradient[2 + i] = m * inv.component_mul(&hjt.transpose()).sum();
    }
    ManipulabilityGradient {
        value: m,
        gradient,
        near_singular: false,
    }
}

/// Signed planar angle from the base heading to the ground projection of
/// the base-to-tool direction; `None` when the tool is above the base axis.
pub fn base_to_ee_angle(base: &PlanarPose, ee: &Pose) -> Option<f64> {
    let dx = ee.translation.x - base.x;
    let dy = ee.translation.y - base.y;
    if dx.hypot(dy) < 1e-6 {
        return None;
    }
    let (s, c) = base.theta.sin_cos();
    let local_x = c * dx + s * dy;
    let local_y = -s * dx + c * dy;
    Some(local_y.atan2(local_x))
}

/// Orientation term: `gain * alpha` in the yaw-rate entry, where alpha is
/// [`base_to_ee_angle`]. Positive alpha (tool to the left) gives a positive
/// entry; rewarding `w` along it turns the base toward the tool.
pub fn base_orientation_jacobian(model: &RobotModel, state: &RobotState, gain: f64) -> DVector<f64> {
    let ee = ee_pose(model, state);
    orientation_term(model.dof(), &state.base, &ee, gain)
}

pub(crate) fn orientation_term(dof: usize, base: &PlanarPose, ee: &Pose, gain: f64) -> DVector<f64> {
    let mut out = DVector::zeros(dof);
    if let Some(alpha) = base_to_ee_angle(base, ee) {
        out[1] = gain * alpha;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn model() -> RobotModel {
        RobotModel::frankie()
    }

    #[test]
    fn zero_configuration_composes_fixed_transforms() {
        let m = model();
        let s = RobotState::new(PlanarPose::default(), vec![0.0; 7]);
        let mut expected = *m.base.arm_mount.iso();
        for j in &m.joints {
            expected *= j.origin.iso();
        }
        expected *= m.ee_transform.iso();
        let ee = ee_pose(&m, &s);
        assert_relative_eq!(ee.to_homogeneous(), expected.to_homogeneous(), epsilon = 1e-12);
    }

    #[test]
    fn link_zero_is_the_lifted_base_pose() {
        let m = model();
        let base = PlanarPose::new(0.4, -1.0, 0.7);
        let poses = forward_kinematics(&m, &RobotState::home(&m, base));
        assert_relative_eq!(
            poses[0].to_homogeneous(),
            base.to_pose().to_homogeneous(),
            epsilon = 1e-15
        );
        assert_eq!(poses.len(), m.links.len() + 1);
    }

    #[test]
    fn base_translation_shifts_every_link() {
        let m = model();
        let a = forward_kinematics(&m, &RobotState::home(&m, PlanarPose::default()));
        let b = forward_kinematics(&m, &RobotState::home(&m, PlanarPose::new(1.0, 0.0, 0.0)));
        for (pa, pb) in a.iter().zip(&b) {
            let d = pb.translation.vector - pa.translation.vector;
            assert_relative_eq!(d, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn base_rotation_rotates_every_link_about_z() {
        let m = model();
        let a = forward_kinematics(&m, &RobotState::home(&m, PlanarPose::default()));
        let b = forward_kinematics(&m, &RobotState::home(&m, PlanarPose::new(0.0, 0.0, FRAC_PI_2)));
        for (pa, pb) in a.iter().zip(&b) {
            let t = pa.translation.vector;
            let rotated = Vector3::new(-t.y, t.x, t.z);
            assert_relative_eq!(pb.translation.vector, rotated, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_base_velocity_moves_tool_along_heading() {
        let m = model();
        let s = RobotState::home(&m, PlanarPose::new(0.0, 0.0, 0.3));
        let j = ee_jacobian(&m, &s);
        let mut qd = DVector::zeros(9);
        qd[0] = 1.0;
        let v = &j * qd;
        assert_relative_eq!(v[0], 0.3f64.cos(), epsilon = 1e-12);
        assert_relative_eq!(v[1], 0.3f64.sin(), epsilon = 1e-12);
        assert_relative_eq!(v.rows(2, 4).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn base_points_have_zero_arm_columns() {
        let m = model();
        let s = RobotState::home(&m, PlanarPose::new(0.2, 0.1, 0.5));
        let j = point_jacobian(&m, &s, 0, &Point3::new(0.3, 0.2, 0.1));
        assert!(j.columns(2, 7).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tool_point_jacobian_equals_linear_rows_of_ee_jacobian() {
        let m = model();
        let s = RobotState::new(PlanarPose::new(0.1, 0.2, -0.4), vec![0.3, -0.5, 0.2, -2.0, 0.4, 1.7, 0.1]);
        let f = Frames::compute(&m, &s);
        let hand = m.hand_link();
        // tool origin expressed in the hand link frame
        let local = f.links[hand].inverse() * Point3::from(f.ee.translation.vector);
        let jp = point_jacobian(&m, &s, hand, &local);
        let je = ee_jacobian(&m, &s);
        assert_relative_eq!(jp, je.rows(0, 3).into_owned(), epsilon = 1e-12);
    }

    #[test]
    fn stretched_arm_is_singular() {
        // All zeros puts joints 1, 3 and 5 on one vertical line.
        let m = model();
        let q = [0.0; 7];
        assert!(manipulability(&m, &q) <= 1e-8);
        let g = manipulability_jacobian(&m, &q);
        assert!(g.near_singular);
        assert!(g.gradient.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn planar_two_link_manipulability() {
        // x/y rows of a planar 2R arm with unit links
        let q2 = FRAC_PI_2;
        let q1 = 0.3f64;
        let j = DMatrix::from_row_slice(
            2,
            2,
            &[
                -q1.sin() - (q1 + q2).sin(),
                -(q1 + q2).sin(),
                q1.cos() + (q1 + q2).cos(),
                (q1 + q2).cos(),
            ],
        );
        assert_relative_eq!(manipulability_index(&j), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn manipulability_gradient_base_entries_are_zero() {
        let m = model();
        let g = manipulability_jacobian(&m, &m.home);
        assert!(!g.near_singular);
        assert_eq!(g.gradient[0], 0.0);
        assert_eq!(g.gradient[1], 0.0);
    }

    #[test]
    fn orientation_term_dead_ahead_and_left() {
        let base = PlanarPose::new(1.0, 1.0, 0.5);
        let ahead = Isometry3::translation(1.0 + 0.5f64.cos(), 1.0 + 0.5f64.sin(), 0.8);
        assert_eq!(orientation_term(9, &base, &ahead, 0.5).norm(), 0.0);
        let left = Isometry3::translation(1.0 - 0.5f64.sin(), 1.0 + 0.5f64.cos(), 0.8);
        let t = orientation_term(9, &base, &left, 0.5);
        assert_relative_eq!(t[1], 0.5 * FRAC_PI_2, epsilon = 1e-12);
        let above = Isometry3::translation(1.0, 1.0, 1.2);
        assert_eq!(orientation_term(9, &base, &above, 0.5).norm(), 0.0);
    }
}
