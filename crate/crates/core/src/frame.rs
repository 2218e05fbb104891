//! Rigid transforms with a stable, human-editable serialized form.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// World-frame rigid transform.
pub type Pose = Isometry3<f64>;

/// A rigid transform stored as translation plus roll/pitch/yaw (URDF
/// convention, `R = Rz(yaw) Ry(pitch) Rx(roll)`). The isometry is derived
/// once at construction, so serializing and reloading reproduces it bit for
/// bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    xyz: [f64; 3],
    rpy: [f64; 3],
    iso: Pose,
}

impl Frame {
    pub fn new(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        let rotation = UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]);
        let iso = Isometry3::from_parts(Translation3::new(xyz[0], xyz[1], xyz[2]), rotation);
        Self { xyz, rpy, iso }
    }

    pub fn identity() -> Self {
        Self::new([0.0; 3], [0.0; 3])
    }

    pub fn from_xyz(xyz: [f64; 3]) -> Self {
        Self::new(xyz, [0.0; 3])
    }

    pub fn iso(&self) -> &Pose {
        &self.iso
    }

    pub fn xyz(&self) -> [f64; 3] {
        self.xyz
    }

    pub fn rpy(&self) -> [f64; 3] {
        self.rpy
    }

    /// Maps a world point into this frame.
    #[inline]
    pub fn to_local(&self, p: &Point3<f64>) -> Point3<f64> {
        self.iso.inverse_transform_point(p)
    }

    #[inline]
    pub fn vector_to_world(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.iso.rotation * v
    }
}

impl Default for Frame {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Serialize, Deserialize)]
struct FrameRepr {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

impl Serialize for Frame {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FrameRepr {
            xyz: self.xyz,
            rpy: self.rpy,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Frame {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = FrameRepr::deserialize(d)?;
        Ok(Frame::new(r.xyz, r.rpy))
    }
}

/// Rotation vector (axis times angle) taking `from` onto `to`, expressed in
/// the world frame: `exp([w]x) from = to`. The angle lies in `[0, pi]`.
pub fn rotation_error(from: &UnitQuaternion<f64>, to: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut q = (to * from.inverse()).into_inner();
    if q.w < 0.0 {
        q = -q;
    }
    let v = q.imag();
    let s = v.norm();
    if s < 1e-12 {
        return v * 2.0;
    }
    let angle = 2.0 * s.atan2(q.w);
    v * (angle / s)
}

/// Angle between two orientations in `[0, pi]`.
pub fn angular_distance(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    rotation_error(a, b).norm()
}
