//! Randomized Bookshelf and Table scenes.
//!
//! The robot starts near the origin facing +x with the arm at home. Scene
//! furniture stands a little over a metre ahead. Every sampling range is a
//! field of [`ScenarioRanges`], so a replay file plus its ranges fully
//! determines a scene.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frame::{Frame, Pose};
use crate::kinematics::{PlanarPose, RobotModel, RobotState};
use crate::sdf::{Scene, SdfNode};
use crate::shape::{sample_points, SurfaceRep};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Bookshelf,
    Table,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Bookshelf => "bookshelf",
            ScenarioKind::Table => "table",
        }
    }

    fn salt(self) -> u64 {
        match self {
            ScenarioKind::Bookshelf => 0x6b6f_6f62,
            ScenarioKind::Table => 0x7461_626c,
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bookshelf" => Ok(ScenarioKind::Bookshelf),
            "table" => Ok(ScenarioKind::Table),
            other => Err(format!("unknown scenario kind {other:?} (expected bookshelf or table)")),
        }
    }
}

/// A closed interval `[lo, hi]` to sample from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.1 > self.0 {
            rng.gen_range(self.0..=self.1)
        } else {
            self.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BookshelfRanges {
    /// x of the shelf front face (m).
    pub front_x: Range,
    pub center_y: Range,
    pub width: Range,
    pub depth: f64,
    pub board_thickness: f64,
    /// Top surface of the bottom shelf (m).
    pub bottom_height: Range,
    /// Clear height between the bottom and the top shelf (m).
    pub gap: Range,
    pub cylinder_radius: Range,
    pub cylinder_height: Range,
    /// Cylinder axis distance behind the front face (m).
    pub cylinder_setback: Range,
    /// Tool point distance behind the front face (m).
    pub target_depth: Range,
    /// Lateral offset of the blocking cylinder from the target (m).
    pub blocker_offset: Range,
    /// How far the blocking cylinder stands in front of the target (m).
    pub blocker_standoff: Range,
    /// Heading of the approach direction about world z (rad).
    pub target_yaw: Range,
    /// Rotation of the hand about its approach direction (rad).
    pub target_spin: Range,
}

impl Default for BookshelfRanges {
    fn default() -> Self {
        Self {
            front_x: Range(1.5, 1.9),
            center_y: Range(-0.3, 0.3),
            width: Range(0.8, 1.2),
            depth: 0.4,
            board_thickness: 0.03,
            bottom_height: Range(0.35, 0.7),
            gap: Range(0.35, 0.5),
            cylinder_radius: Range(0.025, 0.05),
            cylinder_height: Range(0.1, 0.25),
            cylinder_setback: Range(0.04, 0.12),
            target_depth: Range(0.12, 0.25),
            blocker_offset: Range(0.08, 0.16),
            blocker_standoff: Range(0.12, 0.2),
            target_yaw: Range(-0.3, 0.3),
            target_spin: Range(-0.3, 0.3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableRanges {
    pub front_x: Range,
    pub center_y: Range,
    pub width: Range,
    pub depth: Range,
    /// Table top height (m).
    pub height: Range,
    pub cylinder_radius: Range,
    pub cylinder_height: Range,
    /// Cylinder axis distance behind the table edge (m).
    pub cylinder_setback: Range,
    /// Tool point distance behind the table edge (m).
    pub target_depth: Range,
    /// Tool point height above the table top (m).
    pub target_lift: Range,
    pub blocker_offset: Range,
    pub blocker_standoff: Range,
    pub target_yaw: Range,
}

impl Default for TableRanges {
    fn default() -> Self {
        Self {
            front_x: Range(1.5, 1.9),
            center_y: Range(-0.3, 0.3),
            width: Range(1.0, 1.4),
            depth: Range(0.6, 0.8),
            height: Range(0.45, 0.75),
            cylinder_radius: Range(0.025, 0.05),
            cylinder_height: Range(0.1, 0.3),
            cylinder_setback: Range(0.06, 0.3),
            target_depth: Range(0.2, 0.45),
            target_lift: Range(0.04, 0.15),
            blocker_offset: Range(0.14, 0.22),
            blocker_standoff: Range(0.12, 0.2),
            target_yaw: Range(-PI, PI),
        }
    }
}

/// Where the robot base may start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StartRanges {
    pub x: Range,
    pub y: Range,
    pub theta: Range,
}

impl Default for StartRanges {
    fn default() -> Self {
        Self {
            x: Range(-0.3, 0.3),
            y: Range(-0.4, 0.4),
            theta: Range(-0.4, 0.4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioRanges {
    pub bookshelf: BookshelfRanges,
    pub table: TableRanges,
    pub start: StartRanges,
    /// Required obstacle clearance of the hand at the target (m).
    pub target_clearance: f64,
    /// Rejected samples tolerated before giving up.
    pub max_rejections: usize,
}

impl ScenarioRanges {
    pub fn standard() -> Self {
        Self {
            target_clearance: 0.05,
            max_rejections: 1000,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub scene: Scene,
    /// Tool frame target.
    pub target: Frame,
    pub start: RobotState,
}

impl Scenario {
    pub fn target_pose(&self) -> Pose {
        *self.target.iso()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        s.scene.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn boxed(center: [f64; 3], half: [f64; 3]) -> SdfNode {
    SdfNode::Box {
        frame: Frame::from_xyz(center),
        half_extents: half,
    }
}

fn upright_cylinder(x: f64, y: f64, z_bottom: f64, radius: f64, height: f64) -> SdfNode {
    SdfNode::Cylinder {
        frame: Frame::from_xyz([x, y, z_bottom + height / 2.0]),
        radius,
        half_height: height / 2.0,
    }
}

fn tool_frame(position: [f64; 3], rotation: UnitQuaternion<f64>) -> Frame {
    let (r, p, y) = rotation.euler_angles();
    Frame::new(position, [r, p, y])
}

/// Builds scenarios for one robot. Rejection sampling keeps only targets
/// where the hand, placed at the target, clears every obstacle.
#[derive(Debug, Clone)]
pub struct ScenarioGenerator {
    model: RobotModel,
    ranges: ScenarioRanges,
    hand_points: Vec<(usize, Point3<f64>)>,
}

impl ScenarioGenerator {
    pub fn new(model: RobotModel, ranges: ScenarioRanges) -> Result<Self> {
        let hand = model.hand_link();
        let wrist = model.links[hand].parent_joint;
        let rep = sample_points(&model, 9476, 0)?;
        let SurfaceRep::Points(points) = rep else {
            unreachable!()
        };
        let hand_points = points
            .into_iter()
            .filter(|p| p.link == hand || model.links[p.link].parent_joint == wrist)
            .map(|p| (p.link, p.local))
            .collect();
        Ok(Self {
            model,
            ranges,
            hand_points,
        })
    }

    pub fn standard() -> Self {
        Self::new(RobotModel::frankie(), ScenarioRanges::standard())
            .expect("the built-in robot model samples")
    }

    pub fn ranges(&self) -> &ScenarioRanges {
        &self.ranges
    }

    pub fn generate(&self, kind: ScenarioKind, seed: u64) -> Result<Scenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind.salt().rotate_left(32));
        let start = self.sample_start(&mut rng);
        for _ in 0..self.ranges.max_rejections.max(1) {
            let (scene, target) = match kind {
                ScenarioKind::Bookshelf => self.sample_bookshelf(&mut rng),
                ScenarioKind::Table => self.sample_table(&mut rng),
            };
            if self.hand_clearance(&scene, &target) >= self.ranges.target_clearance {
                return Ok(Scenario {
                    kind,
                    seed,
                    scene,
                    target,
                    start,
                });
            }
        }
        Err(Error::Generation {
            kind: kind.name().into(),
            attempts: self.ranges.max_rejections.max(1),
        })
    }

    /// Smallest obstacle distance over the hand and wrist link points when
    /// the tool sits at `target`.
    pub fn hand_clearance(&self, scene: &Scene, target: &Frame) -> f64 {
        let flange = target.iso() * self.model.ee_transform.iso().inverse();
        self.hand_points
            .iter()
            .map(|(link, p)| {
                let pose = flange * self.model.links[*link].origin.iso();
                scene.eval(&(pose * p))
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn sample_start(&self, rng: &mut impl Rng) -> RobotState {
        let s = &self.ranges.start;
        let base = PlanarPose::new(s.x.sample(rng), s.y.sample(rng), s.theta.sample(rng));
        RobotState::home(&self.model, base)
    }

    fn sample_bookshelf(&self, rng: &mut impl Rng) -> (Scene, Frame) {
        let r = &self.ranges.bookshelf;
        let x0 = r.front_x.sample(rng);
        let yc = r.center_y.sample(rng);
        let width = r.width.sample(rng);
        let bottom = r.bottom_height.sample(rng);
        let gap = r.gap.sample(rng);
        let t = r.board_thickness;
        let d = r.depth;
        let top = bottom + gap;
        let height = top + t;
        let xc = x0 + d / 2.0;

        let mut obstacles = vec![
            boxed([xc, yc - width / 2.0 + t / 2.0, height / 2.0], [d / 2.0, t / 2.0, height / 2.0]),
            boxed([xc, yc + width / 2.0 - t / 2.0, height / 2.0], [d / 2.0, t / 2.0, height / 2.0]),
            boxed([x0 + d - t / 2.0, yc, height / 2.0], [t / 2.0, width / 2.0, height / 2.0]),
            boxed([xc, yc, bottom / 2.0], [d / 2.0, width / 2.0, bottom / 2.0]),
            boxed([xc, yc, top + t / 2.0], [d / 2.0, width / 2.0, t / 2.0]),
        ];
        let inner = width / 2.0 - t;
        let reach = inner - 0.12;
        let tx = x0 + r.target_depth.sample(rng);
        let ty = yc + rng.gen_range(-reach..reach);
        let tz = bottom + rng.gen_range(0.07..(gap - 0.07));

        let radius = r.cylinder_radius.sample(rng);
        let h = r.cylinder_height.sample(rng).min(gap - 0.02);
        let y = yc + rng.gen_range(-(inner - radius)..(inner - radius));
        let x = x0 + r.cylinder_setback.sample(rng);
        obstacles.push(upright_cylinder(x, y, bottom, radius, h));

        let radius = r.cylinder_radius.sample(rng);
        let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let y = (ty + side * r.blocker_offset.sample(rng)).clamp(yc - inner + radius, yc + inner - radius);
        let x = (tx - r.blocker_standoff.sample(rng)).max(x0 + radius);
        let h = (tz - bottom + r.cylinder_height.sample(rng) / 2.0).min(gap - 0.02);
        obstacles.push(upright_cylinder(x, y, bottom, radius, h));

        let rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), r.target_yaw.sample(rng))
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2)
            * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), r.target_spin.sample(rng));
        (Scene::new(obstacles), tool_frame([tx, ty, tz], rotation))
    }

    fn sample_table(&self, rng: &mut impl Rng) -> (Scene, Frame) {
        let r = &self.ranges.table;
        let x0 = r.front_x.sample(rng);
        let yc = r.center_y.sample(rng);
        let width = r.width.sample(rng);
        let depth = r.depth.sample(rng);
        let h = r.height.sample(rng);
        let mut obstacles = vec![boxed([x0 + depth / 2.0, yc, h / 2.0], [depth / 2.0, width / 2.0, h / 2.0])];
        let span = width / 2.0 - 0.1;
        let tx = x0 + r.target_depth.sample(rng).min(depth - 0.1);
        let ty = yc + rng.gen_range(-(span - 0.1)..(span - 0.1));
        let tz = h + r.target_lift.sample(rng);
        for _ in 0..3 {
            let radius = r.cylinder_radius.sample(rng);
            let ch = r.cylinder_height.sample(rng);
            let x = x0 + r.cylinder_setback.sample(rng).min(depth - radius - 0.02);
            let y = yc + rng.gen_range(-span..span);
            obstacles.push(upright_cylinder(x, y, h, radius, ch));
        }
        let radius = r.cylinder_radius.sample(rng);
        let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let y = ty + side * r.blocker_offset.sample(rng);
        let x = (tx - r.blocker_standoff.sample(rng)).max(x0 + radius);
        let ch = tz - h + r.cylinder_height.sample(rng) / 2.0;
        obstacles.push(upright_cylinder(x, y, h, radius, ch));
        let rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), r.target_yaw.sample(rng))
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI);
        (Scene::new(obstacles), tool_frame([tx, ty, tz], rotation))
    }
}

pub fn generate_bookshelf(seed: u64) -> Result<Scenario> {
    ScenarioGenerator::standard().generate(ScenarioKind::Bookshelf, seed)
}

pub fn generate_table(seed: u64) -> Result<Scenario> {
    ScenarioGenerator::standard().generate(ScenarioKind::Table, seed)
}
