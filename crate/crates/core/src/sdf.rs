//! Analytic signed distance fields for static scenes.
//!
//! Distances are negative inside a solid. Unions take the hard minimum of
//! their children, which is exact outside disjoint children and a lower
//! bound otherwise.

use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frame::Frame;
use crate::{Error, Result};

/// Children whose distances differ by less than this count as tied.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SdfNode {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        frame: Frame,
        half_extents: [f64; 3],
    },
    /// Axis along the local z of `frame`.
    Cylinder {
        frame: Frame,
        radius: f64,
        half_height: f64,
    },
    HalfSpace {
        point: [f64; 3],
        normal: [f64; 3],
    },
    Union {
        children: Vec<SdfNode>,
    },
}

/// Distance and unit gradient at one point. `degenerate` marks points where
/// the gradient came from a tie-break rather than a unique direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfQuery {
    pub distance: f64,
    pub gradient: Vector3<f64>,
    pub degenerate: bool,
}

impl SdfQuery {
    /// Closest surface point, `p - d * g`.
    pub fn nearest_point(&self, p: &Point3<f64>) -> Point3<f64> {
        p - self.gradient * self.distance
    }
}

fn unit_or_x(v: Vector3<f64>) -> (Vector3<f64>, bool) {
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        (v / n, false)
    } else {
        (Vector3::x(), true)
    }
}

/// Index of the largest entry; ties go to the lowest index and are reported.
fn argmax3(v: &Vector3<f64>) -> (usize, bool) {
    let mut best = 0;
    for i in 1..3 {
        if v[i] > v[best] {
            best = i;
        }
    }
    let tied = (0..3).any(|i| i != best && (v[best] - v[i]).abs() < TIE_EPS);
    (best, tied)
}

fn sign_or_pos(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

impl SdfNode {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScene(msg));
        match self {
            SdfNode::Sphere { center, radius } => {
                if !(*radius > 0.0) || !radius.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return bad(format!("sphere radius must be positive, got {radius}"));
                }
            }
            SdfNode::Box { half_extents, .. } => {
                if half_extents.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
                    return bad(format!("box half extents must be positive, got {half_extents:?}"));
                }
            }
            SdfNode::Cylinder {
                radius, half_height, ..
            } => {
                if !(*radius > 0.0) || !(*half_height > 0.0) || !radius.is_finite() || !half_height.is_finite() {
                    return bad(format!(
                        "cylinder radius and half height must be positive, got {radius}, {half_height}"
                    ));
                }
            }
            SdfNode::HalfSpace { point, normal } => {
                let n = Vector3::from(*normal).norm();
                if (n - 1.0).abs() > 1e-9 || point.iter().any(|c| !c.is_finite()) {
                    return bad(format!("half-space normal must be unit length, got norm {n}"));
                }
            }
            SdfNode::Union { children } => {
                if children.is_empty() {
                    return bad("union needs at least one child".into());
                }
                for c in children {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, p: &Point3<f64>) -> f64 {
        match self {
            SdfNode::Sphere { center, radius } => (p - Point3::from(*center)).norm() - radius,
            SdfNode::Box {
                frame,
                half_extents,
            } => {
                let q = frame.to_local(p).coords.abs() - Vector3::from(*half_extents);
                let outside = q.map(|v| v.max(0.0)).norm();
                outside + q.max().min(0.0)
            }
            SdfNode::Cylinder {
                frame,
                radius,
                half_height,
            } => {
                let l = frame.to_local(p);
                let dr = l.x.hypot(l.y) - radius;
                let dz = l.z.abs() - half_height;
                dr.max(0.0).hypot(dz.max(0.0)) + dr.max(dz).min(0.0)
            }
            SdfNode::HalfSpace { point, normal } => {
                (p - Point3::from(*point)).dot(&Vector3::from(*normal))
            }
            SdfNode::Union { children } => children
                .iter()
                .map(|c| c.eval(p))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn query(&self, p: &Point3<f64>) -> SdfQuery {
        match self {
            SdfNode::Sphere { center, radius } => {
                let r = p - Point3::from(*center);
                let (gradient, degenerate) = unit_or_x(r);
                SdfQuery {
                    distance: r.norm() - radius,
                    gradient,
                    degenerate,
                }
            }
            SdfNode::Box {
                frame,
                half_extents,
            } => {
                let l = frame.to_local(p).coords;
                let q = l.abs() - Vector3::from(*half_extents);
                let (local_grad, distance, degenerate) = if q.max() > 0.0 {
                    let out = Vector3::from_fn(|i, _| q[i].max(0.0) * sign_or_pos(l[i]));
                    let n = out.norm();
                    (out / n, n, false)
                } else {
                    let (axis, tied) = argmax3(&q);
                    let mut g = Vector3::zeros();
                    g[axis] = sign_or_pos(l[axis]);
                    (g, q[axis], tied || l[axis] == 0.0)
                };
                SdfQuery {
                    distance,
                    gradient: frame.vector_to_world(&local_grad),
                    degenerate,
                }
            }
            SdfNode::Cylinder {
                frame,
                radius,
                half_height,
            } => {
                let l = frame.to_local(p);
                let r = l.x.hypot(l.y);
                let (radial, radial_degenerate) = unit_or_x(Vector3::new(l.x, l.y, 0.0));
                let dr = r - radius;
                let dz = l.z.abs() - half_height;
                let axial = Vector3::new(0.0, 0.0, sign_or_pos(l.z));
                let (local_grad, distance, degenerate) = if dr > 0.0 || dz > 0.0 {
                    let a = dr.max(0.0);
                    let b = dz.max(0.0);
                    let n = a.hypot(b);
                    (
                        (radial * a + axial * b) / n,
                        n,
                        dr > 0.0 && radial_degenerate,
                    )
                } else if dr > dz + TIE_EPS {
                    (radial, dr, radial_degenerate)
                } else if dz > dr + TIE_EPS {
                    (axial, dz, l.z == 0.0)
                } else {
                    (radial, dr, true)
                };
                SdfQuery {
                    distance,
                    gradient: frame.vector_to_world(&local_grad),
                    degenerate,
                }
            }
            SdfNode::HalfSpace { point, normal } => {
                let n = Vector3::from(*normal);
                SdfQuery {
                    distance: (p - Point3::from(*point)).dot(&n),
                    gradient: n,
                    degenerate: false,
                }
            }
            SdfNode::Union { children } => {
                let mut best = children[0].query(p);
                let mut tied = false;
                for c in &children[1..] {
                    let d = c.eval(p);
                    if d < best.distance - TIE_EPS {
                        best = c.query(p);
                        tied = false;
                    } else if (d - best.distance).abs() < TIE_EPS {
                        tied = true;
                    }
                }
                best.degenerate |= tied;
                best
            }
        }
    }

    pub fn grad(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.query(p).gradient
    }

    pub fn nearest_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.query(p).nearest_point(p)
    }

    /// Queries many points; results keep the input order and equal the
    /// single-point queries exactly.
    pub fn eval_batch(&self, points: &[Point3<f64>]) -> Vec<SdfQuery> {
        const PAR_THRESHOLD: usize = 4096;
        if points.len() < PAR_THRESHOLD {
            points.iter().map(|p| self.query(p)).collect()
        } else {
            points.par_iter().map(|p| self.query(p)).collect()
        }
    }
}

/// A static scene: the union of its obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub obstacles: Vec<SdfNode>,
}

impl Scene {
    pub fn new(obstacles: Vec<SdfNode>) -> Self {
        Self { obstacles }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        self.obstacles.iter().try_for_each(SdfNode::validate)
    }

    /// Signed distance; `+inf` for an empty scene.
    pub fn eval(&self, p: &Point3<f64>) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.eval(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Same tie-break rules as [`SdfNode::Union`]. An empty scene reports
    /// infinite distance and a `+x` gradient flagged degenerate.
    pub fn query(&self, p: &Point3<f64>) -> SdfQuery {
        let mut best = SdfQuery {
            distance: f64::INFINITY,
            gradient: Vector3::x(),
            degenerate: true,
        };
        let mut tied = false;
        for o in &self.obstacles {
            let d = o.eval(p);
            if d < best.distance - TIE_EPS {
                best = o.query(p);
                tied = false;
            } else if (d - best.distance).abs() < TIE_EPS {
                tied = true;
            }
        }
        best.degenerate |= tied;
        best
    }

    pub fn eval_batch(&self, points: &[Point3<f64>]) -> Vec<SdfQuery> {
        points.iter().map(|p| self.query(p)).collect()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(s).map_err(|e| Error::json("<scene>", e))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: Scene = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_box() -> SdfNode {
        SdfNode::Box {
            frame: Frame::identity(),
            half_extents: [1.0; 3],
        }
    }

    fn ground() -> SdfNode {
        SdfNode::HalfSpace {
            point: [0.0; 3],
            normal: [0.0, 0.0, 1.0],
        }
    }

    #[test]
    fn primitive_values() {
        let s = SdfNode::Sphere {
            center: [0.0; 3],
            radius: 0.5,
        };
        assert_relative_eq!(s.eval(&Point3::new(1.0, 0.0, 0.0)), 0.5);
        assert_relative_eq!(unit_box().eval(&Point3::new(2.0, 2.0, 0.0)), 2f64.sqrt());
        assert_relative_eq!(unit_box().eval(&Point3::origin()), -1.0);
        let u = SdfNode::Union {
            children: vec![s, ground()],
        };
        assert_relative_eq!(u.eval(&Point3::new(0.0, 0.0, 2.0)), 1.5);
    }

    #[test]
    fn gradients_and_projection() {
        let s = SdfNode::Sphere {
            center: [0.0; 3],
            radius: 0.5,
        };
        let p = Point3::new(2.0, 0.0, 0.0);
        assert_eq!(s.grad(&p), Vector3::x());
        assert_relative_eq!(s.nearest_point(&p), Point3::new(0.5, 0.0, 0.0));
        let on = Point3::new(0.0, 0.5, 0.0);
        assert_relative_eq!(s.nearest_point(&on), on);
        assert_eq!(ground().grad(&Point3::new(3.0, -1.0, 0.2)), Vector3::z());
    }

    #[test]
    fn degenerate_points_use_tie_break() {
        let s = SdfNode::Sphere {
            center: [1.0, 2.0, 3.0],
            radius: 0.5,
        };
        let q = s.query(&Point3::new(1.0, 2.0, 3.0));
        assert!(q.degenerate);
        assert_eq!(q.gradient, Vector3::x());

        let q = unit_box().query(&Point3::origin());
        assert!(q.degenerate);
        assert_eq!(q.gradient, Vector3::x());

        let a = SdfNode::Sphere {
            center: [-1.0, 0.0, 0.0],
            radius: 0.5,
        };
        let b = SdfNode::Sphere {
            center: [1.0, 0.0, 0.0],
            radius: 0.5,
        };
        let q = SdfNode::Union {
            children: vec![a, b],
        }
        .query(&Point3::new(0.0, 1.0, 0.0));
        assert!(q.degenerate);
        assert_relative_eq!(q.gradient, Vector3::new(1.0, 1.0, 0.0).normalize());
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        assert!(SdfNode::Union { children: vec![] }.validate().is_err());
        assert!(SdfNode::Sphere {
            center: [0.0; 3],
            radius: 0.0
        }
        .validate()
        .is_err());
        assert!(SdfNode::HalfSpace {
            point: [0.0; 3],
            normal: [0.0, 0.0, 2.0]
        }
        .validate()
        .is_err());
        assert!(SdfNode::Cylinder {
            frame: Frame::identity(),
            radius: 0.1,
            half_height: -1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn empty_scene_is_infinitely_far() {
        let q = Scene::empty().query(&Point3::origin());
        assert!(q.distance.is_infinite() && q.degenerate);
    }
}
