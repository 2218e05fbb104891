//! Robot description: a differential-drive base carrying a serial arm of
//! revolute joints, with primitive solids standing in for link meshes.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;

use nalgebra::{Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSpec {
    /// Forward speed limit (m/s).
    pub max_linear_velocity: f64,
    /// Yaw rate limit (rad/s).
    pub max_angular_velocity: f64,
    /// Pose of the arm's first joint parent frame in the base frame.
    pub arm_mount: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    /// Fixed transform from the previous joint frame (or the arm mount).
    pub origin: Frame,
    /// Rotation axis in the joint frame.
    #[serde(default = "z_axis")]
    pub axis: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    /// rad/s
    pub max_velocity: f64,
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

/// Primitive solid in a link frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Solid {
    /// Segment `a`-`b` swept by a ball.
    Capsule { a: [f64; 3], b: [f64; 3], radius: f64 },
    /// Axis along the local z of `frame`.
    Cylinder {
        frame: Frame,
        radius: f64,
        half_height: f64,
    },
    Box { frame: Frame, half_extents: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
}

impl Solid {
    /// Exact signed distance to the solid, in the link frame.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        match self {
            Solid::Capsule { a, b, radius } => {
                let a = Vector3::from(*a);
                let ab = Vector3::from(*b) - a;
                let ap = p.coords - a;
                let len2 = ab.norm_squared();
                let t = if len2 > 0.0 {
                    (ap.dot(&ab) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (ap - ab * t).norm() - radius
            }
            Solid::Cylinder {
                frame,
                radius,
                half_height,
            } => {
                let l = frame.to_local(p);
                let d = Vector2::new(l.x.hypot(l.y) - radius, l.z.abs() - half_height);
                d.x.max(d.y).min(0.0) + Vector2::new(d.x.max(0.0), d.y.max(0.0)).norm()
            }
            Solid::Box {
                frame,
                half_extents,
            } => {
                let l = frame.to_local(p);
                let q = l.coords.abs() - Vector3::from(*half_extents);
                q.max().min(0.0) + q.map(|v| v.max(0.0)).norm()
            }
            Solid::Sphere { center, radius } => (p.coords - Vector3::from(*center)).norm() - radius,
        }
    }

    pub fn surface_area(&self) -> f64 {
        match self {
            Solid::Capsule { a, b, radius } => {
                let len = (Vector3::from(*b) - Vector3::from(*a)).norm();
                2.0 * PI * radius * len + 4.0 * PI * radius * radius
            }
            Solid::Cylinder {
                radius,
                half_height,
                ..
            } => 2.0 * PI * radius * (2.0 * half_height) + 2.0 * PI * radius * radius,
            Solid::Box { half_extents: h, .. } => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
            Solid::Sphere { radius, .. } => 4.0 * PI * radius * radius,
        }
    }

    /// Sphere enclosing the solid, in the link frame.
    pub fn bounding_sphere(&self) -> (Point3<f64>, f64) {
        match self {
            Solid::Capsule { a, b, radius } => {
                let a = Point3::from(*a);
                let b = Point3::from(*b);
                (nalgebra::center(&a, &b), (b - a).norm() / 2.0 + radius)
            }
            Solid::Cylinder {
                frame,
                radius,
                half_height,
            } => (
                Point3::from(frame.xyz()),
                radius.hypot(*half_height),
            ),
            Solid::Box {
                frame,
                half_extents,
            } => (Point3::from(frame.xyz()), Vector3::from(*half_extents).norm()),
            Solid::Sphere { center, radius } => (Point3::from(*center), *radius),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{what} must be positive, got {v}"))
            }
        };
        match self {
            Solid::Capsule { radius, .. } => positive(*radius, "capsule radius"),
            Solid::Cylinder {
                radius,
                half_height,
                ..
            } => {
                positive(*radius, "cylinder radius")?;
                positive(*half_height, "cylinder half height")
            }
            Solid::Box { half_extents, .. } => half_extents
                .iter()
                .try_for_each(|h| positive(*h, "box half extent")),
            Solid::Sphere { radius, .. } => positive(*radius, "sphere radius"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub center: [f64; 3],
    pub radius: f64,
}

/// A rigid group of solids moving with one joint frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    /// 0 attaches the link to the base frame; `j >= 1` to the frame of arm
    /// joint `j`.
    pub parent_joint: usize,
    /// Link frame relative to the parent frame.
    #[serde(default)]
    pub origin: Frame,
    #[serde(default)]
    pub solids: Vec<Solid>,
    #[serde(default)]
    pub spheres: Vec<SphereSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub name: String,
    pub base: BaseSpec,
    pub joints: Vec<JointSpec>,
    /// Tool frame relative to the last joint frame.
    pub ee_transform: Frame,
    pub home: Vec<f64>,
    pub links: Vec<LinkSpec>,
}

pub const ARM_JOINTS: usize = 7;

impl RobotModel {
    pub fn n_arm(&self) -> usize {
        self.joints.len()
    }

    /// Velocity degrees of freedom: two base rates plus one per arm joint.
    pub fn dof(&self) -> usize {
        2 + self.joints.len()
    }

    /// Per-entry bound on the velocity vector.
    pub fn velocity_limits(&self) -> Vec<f64> {
        let mut v = vec![self.base.max_linear_velocity, self.base.max_angular_velocity];
        v.extend(self.joints.iter().map(|j| j.max_velocity));
        v
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let model: RobotModel =
            serde_json::from_str(s).map_err(|e| Error::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: RobotModel = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.joints.len() != ARM_JOINTS {
            return bad(format!(
                "expected {ARM_JOINTS} arm joints, found {}",
                self.joints.len()
            ));
        }
        if !(self.base.max_linear_velocity > 0.0 && self.base.max_angular_velocity > 0.0) {
            return bad("base velocity limits must be positive".into());
        }
        for j in &self.joints {
            if !(j.lower < j.upper) {
                return bad(format!("joint {}: lower limit must be below upper", j.name));
            }
            if !(j.max_velocity > 0.0) {
                return bad(format!("joint {}: velocity limit must be positive", j.name));
            }
            let n = Vector3::from(j.axis).norm();
            if (n - 1.0).abs() > 1e-9 {
                return bad(format!("joint {}: axis must be unit length", j.name));
            }
        }
        if self.home.len() != self.n_arm() {
            return bad("home configuration has the wrong length".into());
        }
        for (q, j) in self.home.iter().zip(&self.joints) {
            if *q < j.lower || *q > j.upper {
                return bad(format!("home position of {} is outside its limits", j.name));
            }
        }
        if self.links.is_empty() {
            return bad("model has no links".into());
        }
        for link in &self.links {
            if link.parent_joint > self.n_arm() {
                return bad(format!(
                    "link {} attached to unknown joint {}",
                    link.name, link.parent_joint
                ));
            }
            for s in &link.solids {
                s.validate()
                    .or_else(|m| bad(format!("link {}: {m}", link.name)))?;
            }
            for s in &link.spheres {
                if !(s.radius > 0.0) {
                    return bad(format!("link {}: sphere radius must be positive", link.name));
                }
            }
        }
        Ok(())
    }

    /// The default platform: a differential-drive base (0.7 x 0.5 x 0.38 m)
    /// carrying a Franka Panda arm with a parallel gripper.
    pub fn frankie() -> Self {
        let joint = |name: &str, xyz: [f64; 3], roll: f64, lower: f64, upper: f64, vel: f64| {
            JointSpec {
                name: name.into(),
                origin: Frame::new(xyz, [roll, 0.0, 0.0]),
                axis: z_axis(),
                lower,
                upper,
                max_velocity: vel,
            }
        };
        let joints = vec![
            joint("panda_joint1", [0.0, 0.0, 0.333], 0.0, -2.8973, 2.8973, 2.175),
            joint("panda_joint2", [0.0, 0.0, 0.0], -FRAC_PI_2, -1.7628, 1.7628, 2.175),
            joint("panda_joint3", [0.0, -0.316, 0.0], FRAC_PI_2, -2.8973, 2.8973, 2.175),
            joint("panda_joint4", [0.0825, 0.0, 0.0], FRAC_PI_2, -3.0718, -0.0698, 2.175),
            joint("panda_joint5", [-0.0825, 0.384, 0.0], -FRAC_PI_2, -2.8973, 2.8973, 2.61),
            joint("panda_joint6", [0.0, 0.0, 0.0], FRAC_PI_2, -0.0175, 3.7525, 2.61),
            joint("panda_joint7", [0.088, 0.0, 0.0], FRAC_PI_2, -2.8973, 2.8973, 2.61),
        ];
        let mount = [0.12, 0.0, 0.38];

        let capsule = |a: [f64; 3], b: [f64; 3], radius: f64| Solid::Capsule { a, b, radius };
        let boxed = |xyz: [f64; 3], half: [f64; 3]| Solid::Box {
            frame: Frame::from_xyz(xyz),
            half_extents: half,
        };
        let link = |name: &str, parent: usize, solids: Vec<Solid>, cover: &[usize]| {
            let spheres = solids
                .iter()
                .zip(cover)
                .flat_map(|(s, n)| covering_spheres(s, *n))
                .collect();
            LinkSpec {
                name: name.into(),
                parent_joint: parent,
                origin: Frame::identity(),
                solids,
                spheres,
            }
        };

        let mut links = vec![
            link(
                "base",
                0,
                vec![
                    boxed([0.0, 0.0, 0.19], [0.35, 0.25, 0.19]),
                    Solid::Cylinder {
                        frame: Frame::from_xyz([mount[0], mount[1], mount[2] + 0.07]),
                        radius: 0.08,
                        half_height: 0.07,
                    },
                ],
                // 5 x 3 x 2 grid over the chassis
                &[30, 2],
            ),
            link("panda_link1", 1, vec![capsule([0.0, 0.0, -0.19], [0.0; 3], 0.06)], &[5]),
            link("panda_link2", 2, vec![capsule([0.0; 3], [0.0, -0.19, 0.0], 0.06)], &[5]),
            link(
                "panda_link3",
                3,
                vec![
                    capsule([0.0, 0.0, -0.12], [0.0; 3], 0.06),
                    capsule([0.0; 3], [0.0825, 0.0, 0.0], 0.055),
                ],
                &[5, 3],
            ),
            link(
                "panda_link4",
                4,
                vec![capsule([0.0; 3], [-0.0825, 0.12, 0.0], 0.055)],
                &[5],
            ),
            link(
                "panda_link5",
                5,
                vec![capsule([0.0, 0.0, -0.26], [0.0; 3], 0.055)],
                &[7],
            ),
            link("panda_link6", 6, vec![capsule([0.0; 3], [0.088, 0.0, 0.0], 0.05)], &[4]),
            link("panda_link7", 7, vec![capsule([0.0; 3], [0.0, 0.0, 0.08], 0.05)], &[4]),
        ];
        let mut hand = link(
            "panda_hand",
            7,
            vec![
                boxed([0.0, 0.0, 0.03], [0.03, 0.1, 0.03]),
                boxed([0.0, 0.0, 0.0805], [0.012, 0.04, 0.0225]),
            ],
            // 2 x 4 x 1 palm, 1 x 2 x 2 fingers
            &[8, 4],
        );
        hand.origin = Frame::new([0.0, 0.0, 0.107], [0.0, 0.0, -FRAC_PI_4]);
        links.push(hand);

        RobotModel {
            name: "frankie".into(),
            base: BaseSpec {
                max_linear_velocity: 0.5,
                max_angular_velocity: 1.0,
                arm_mount: Frame::from_xyz(mount),
            },
            joints,
            ee_transform: Frame::new([0.0, 0.0, 0.107 + 0.1034], [0.0, 0.0, -FRAC_PI_4]),
            home: vec![0.0, -FRAC_PI_4, 0.0, -3.0 * FRAC_PI_4, 0.0, FRAC_PI_2, FRAC_PI_4],
            links,
        }
    }

    /// Link index of the gripper (the last link attached to the last joint).
    pub fn hand_link(&self) -> usize {
        self.links
            .iter()
            .rposition(|l| l.parent_joint == self.n_arm())
            .unwrap_or(self.links.len() - 1)
    }
}

/// Spheres that jointly contain `solid`. `count` is split across the solid's
/// natural axes: along the segment for capsules, along the axis for
/// cylinders and on a grid for boxes.
pub fn covering_spheres(solid: &Solid, count: usize) -> Vec<SphereSpec> {
    let count = count.max(1);
    match solid {
        Solid::Sphere { center, radius } => vec![SphereSpec {
            center: *center,
            radius: *radius,
        }],
        Solid::Capsule { a, b, radius } => {
            let a = Vector3::from(*a);
            let b = Vector3::from(*b);
            if count == 1 {
                let c = (a + b) / 2.0;
                return vec![SphereSpec {
                    center: c.into(),
                    radius: (b - a).norm() / 2.0 + radius,
                }];
            }
            let gap = (b - a).norm() / (count - 1) as f64;
            let r = radius.hypot(gap / 2.0);
            (0..count)
                .map(|i| {
                    let t = i as f64 / (count - 1) as f64;
                    SphereSpec {
                        center: (a + (b - a) * t).into(),
                        radius: r,
                    }
                })
                .collect()
        }
        Solid::Cylinder {
            frame,
            radius,
            half_height,
        } => {
            let slab = 2.0 * half_height / count as f64;
            let r = radius.hypot(slab / 2.0);
            (0..count)
                .map(|i| {
                    let z = -half_height + slab * (i as f64 + 0.5);
                    let c = frame.iso().transform_point(&Point3::new(0.0, 0.0, z));
                    SphereSpec {
                        center: c.coords.into(),
                        radius: r,
                    }
                })
                .collect()
        }
        Solid::Box {
            frame,
            half_extents,
        } => {
            let h = Vector3::from(*half_extents);
            let grid = box_grid(&h, count);
            let cell = Vector3::new(
                2.0 * h.x / grid[0] as f64,
                2.0 * h.y / grid[1] as f64,
                2.0 * h.z / grid[2] as f64,
            );
            let r = cell.norm() / 2.0;
            let mut out = Vec::with_capacity(count);
            for i in 0..grid[0] {
                for j in 0..grid[1] {
                    for k in 0..grid[2] {
                        let local = Point3::new(
                            -h.x + cell.x * (i as f64 + 0.5),
                            -h.y + cell.y * (j as f64 + 0.5),
                            -h.z + cell.z * (k as f64 + 0.5),
                        );
                        let c = frame.iso().transform_point(&local);
                        out.push(SphereSpec {
                            center: c.coords.into(),
                            radius: r,
                        });
                    }
                }
            }
            out
        }
    }
}

/// Grid dimensions with product exactly `count` minimizing the largest cell
/// diagonal.
fn box_grid(h: &Vector3<f64>, count: usize) -> [usize; 3] {
    let mut best = [count, 1, 1];
    let mut best_diag = f64::INFINITY;
    for nx in 1..=count {
        if count % nx != 0 {
            continue;
        }
        for ny in 1..=count / nx {
            if (count / nx) % ny != 0 {
                continue;
            }
            let nz = count / nx / ny;
            let diag = Vector3::new(h.x / nx as f64, h.y / ny as f64, h.z / nz as f64).norm();
            if diag < best_diag - 1e-12 {
                best_diag = diag;
                best = [nx, ny, nz];
            }
        }
    }
    best
}
