//! Collision proxies for the robot: surface point sets sampled from the
//! link solids, or the covering spheres declared in the robot model.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;

use nalgebra::{Point3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kinematics::{Frames, RobotModel, RobotState, Solid};
use crate::sdf::Scene;
use crate::{Error, Result};

/// Point counts of the two canonical sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointPreset {
    Coarse,
    Fine,
}

impl PointPreset {
    pub fn count(self) -> usize {
        match self {
            PointPreset::Coarse => 2358,
            PointPreset::Fine => 9476,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPoint {
    pub link: usize,
    pub local: Point3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSphere {
    pub link: usize,
    pub center: Point3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceRep {
    Points(Vec<LinkPoint>),
    Spheres(Vec<LinkSphere>),
}

impl SurfaceRep {
    pub fn len(&self) -> usize {
        match self {
            SurfaceRep::Points(p) => p.len(),
            SurfaceRep::Spheres(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The rep as (link, local center, radius) triples; points have radius 0.
    pub fn elements(&self) -> Vec<LinkSphere> {
        match self {
            SurfaceRep::Points(p) => p
                .iter()
                .map(|p| LinkSphere {
                    link: p.link,
                    center: p.local,
                    radius: 0.0,
                })
                .collect(),
            SurfaceRep::Spheres(s) => s.clone(),
        }
    }

    /// Radius of the largest surface region a point set may leave without a
    /// sample, taken as the mean spacing `h = sqrt(area / n)`. Faces are
    /// covered well within that, but a corner of a link box sits up to
    /// about `h` from the nearest sample. Zero for spheres, which cover
    /// the body.
    pub fn gap_radius(&self, model: &RobotModel) -> f64 {
        match self {
            SurfaceRep::Points(p) if !p.is_empty() => {
                let area: f64 = model
                    .links
                    .iter()
                    .flat_map(|l| &l.solids)
                    .map(Solid::surface_area)
                    .sum();
                (area / p.len() as f64).sqrt()
            }
            _ => 0.0,
        }
    }

    /// The covering spheres declared in the model.
    pub fn model_spheres(model: &RobotModel) -> Self {
        SurfaceRep::Spheres(
            model
                .links
                .iter()
                .enumerate()
                .flat_map(|(k, l)| {
                    l.spheres.iter().map(move |s| LinkSphere {
                        link: k,
                        center: Point3::from(s.center),
                        radius: s.radius,
                    })
                })
                .collect(),
        )
    }
}

/// A patch of surface parametrised over the unit square so that uniform
/// parameters give area-uniform points.
#[derive(Debug, Clone)]
enum Patch {
    /// `origin + u * du + v * dv`.
    Rect {
        origin: Vector3<f64>,
        du: Vector3<f64>,
        dv: Vector3<f64>,
    },
    /// Band of a cylinder side between axial offsets `z0` and `z1`.
    Band {
        center: Vector3<f64>,
        axis: Vector3<f64>,
        e1: Vector3<f64>,
        e2: Vector3<f64>,
        radius: f64,
        z0: f64,
        z1: f64,
    },
    Disk {
        center: Vector3<f64>,
        e1: Vector3<f64>,
        e2: Vector3<f64>,
        radius: f64,
    },
    /// Hemisphere bulging along `pole`.
    Dome {
        center: Vector3<f64>,
        pole: Vector3<f64>,
        e1: Vector3<f64>,
        e2: Vector3<f64>,
        radius: f64,
    },
}

/// Shirley-Chiu concentric map: unit square onto the unit disk, area
/// preserving up to the constant factor pi / 4.
fn concentric(u: f64, v: f64) -> Vector2<f64> {
    let a = 2.0 * u - 1.0;
    let b = 2.0 * v - 1.0;
    if a == 0.0 && b == 0.0 {
        return Vector2::zeros();
    }
    let (r, phi) = if a.abs() > b.abs() {
        (a, FRAC_PI_4 * (b / a))
    } else {
        (b, 2.0 * FRAC_PI_4 - FRAC_PI_4 * (a / b))
    };
    Vector2::new(r * phi.cos(), r * phi.sin())
}

impl Patch {
    fn area(&self) -> f64 {
        match self {
            Patch::Rect { du, dv, .. } => du.cross(dv).norm(),
            Patch::Band { radius, z0, z1, .. } => 2.0 * PI * radius * (z1 - z0),
            Patch::Disk { radius, .. } => PI * radius * radius,
            Patch::Dome { radius, .. } => 2.0 * PI * radius * radius,
        }
    }

    fn point(&self, u: f64, v: f64) -> Point3<f64> {
        let p = match self {
            Patch::Rect { origin, du, dv } => origin + du * u + dv * v,
            Patch::Band {
                center,
                axis,
                e1,
                e2,
                radius,
                z0,
                z1,
            } => {
                let phi = 2.0 * PI * u;
                center + axis * (z0 + (z1 - z0) * v) + (e1 * phi.cos() + e2 * phi.sin()) * *radius
            }
            Patch::Disk {
                center,
                e1,
                e2,
                radius,
            } => {
                let d = concentric(u, v);
                center + (e1 * d.x + e2 * d.y) * *radius
            }
            Patch::Dome {
                center,
                pole,
                e1,
                e2,
                radius,
            } => {
                // Lambert azimuthal equal-area lift of the disk.
                let d = concentric(u, v);
                let r2 = d.norm_squared();
                let s = (2.0 - r2).max(0.0).sqrt();
                center + (e1 * (d.x * s) + e2 * (d.y * s) + pole * (1.0 - r2)) * *radius
            }
        };
        Point3::from(p)
    }
}

fn orthonormal_pair(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if axis.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

/// Longest allowed side ratio of a patch before it is cut into strips.
const MAX_ASPECT: f64 = 1.5;

fn strips(len_u: f64, len_v: f64) -> usize {
    let ratio = len_v / len_u;
    if ratio > MAX_ASPECT {
        (ratio / MAX_ASPECT).ceil() as usize
    } else {
        1
    }
}

fn push_rect(out: &mut Vec<Patch>, origin: Vector3<f64>, du: Vector3<f64>, dv: Vector3<f64>) {
    let (lu, lv) = (du.norm(), dv.norm());
    let (origin, du, dv) = if lu >= lv {
        (origin, dv, du)
    } else {
        (origin, du, dv)
    };
    let n = strips(du.norm(), dv.norm());
    let step = dv / n as f64;
    for i in 0..n {
        out.push(Patch::Rect {
            origin: origin + step * i as f64,
            du,
            dv: step,
        });
    }
}

fn push_band(
    out: &mut Vec<Patch>,
    center: Vector3<f64>,
    axis: Vector3<f64>,
    radius: f64,
    z0: f64,
    z1: f64,
) {
    let (e1, e2) = orthonormal_pair(&axis);
    let n = strips(2.0 * PI * radius, z1 - z0);
    let step = (z1 - z0) / n as f64;
    for i in 0..n {
        out.push(Patch::Band {
            center,
            axis,
            e1,
            e2,
            radius,
            z0: z0 + step * i as f64,
            z1: z0 + step * (i + 1) as f64,
        });
    }
}

fn patches(solid: &Solid) -> Vec<Patch> {
    let mut out = Vec::new();
    match solid {
        Solid::Box {
            frame,
            half_extents: h,
        } => {
            let iso = frame.iso();
            let c = iso.translation.vector;
            let axes: Vec<Vector3<f64>> = (0..3)
                .map(|i| iso.rotation * Vector3::ith(i, 1.0) * h[i])
                .collect();
            for i in 0..3 {
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                for s in [-1.0, 1.0] {
                    let origin = c + axes[i] * s - axes[a] - axes[b];
                    push_rect(&mut out, origin, axes[a] * 2.0, axes[b] * 2.0);
                }
            }
        }
        Solid::Cylinder {
            frame,
            radius,
            half_height,
        } => {
            let iso = frame.iso();
            let c = iso.translation.vector;
            let axis = iso.rotation * Vector3::z();
            push_band(&mut out, c, axis, *radius, -half_height, *half_height);
            let (e1, e2) = orthonormal_pair(&axis);
            for s in [-1.0, 1.0] {
                out.push(Patch::Disk {
                    center: c + axis * (s * half_height),
                    e1,
                    e2,
                    radius: *radius,
                });
            }
        }
        Solid::Capsule { a, b, radius } => {
            let a = Vector3::from(*a);
            let b = Vector3::from(*b);
            let len = (b - a).norm();
            let axis = if len > 0.0 { (b - a) / len } else { Vector3::z() };
            let (e1, e2) = orthonormal_pair(&axis);
            if len > 0.0 {
                push_band(&mut out, a, axis, *radius, 0.0, len);
            }
            for (center, pole) in [(a, -axis), (b, axis)] {
                out.push(Patch::Dome {
                    center,
                    pole,
                    e1,
                    e2,
                    radius: *radius,
                });
            }
        }
        Solid::Sphere { center, radius } => {
            let c = Vector3::from(*center);
            let (e1, e2) = orthonormal_pair(&Vector3::z());
            for pole in [Vector3::z(), -Vector3::z()] {
                out.push(Patch::Dome {
                    center: c,
                    pole,
                    e1,
                    e2,
                    radius: *radius,
                });
            }
        }
    }
    out
}

/// Splits `total` proportionally to `weights` by largest remainder. With
/// `at_least_one`, empty entries then take a unit from the largest one.
fn allocate(total: usize, weights: &[f64], at_least_one: bool) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = quotas[i] - quotas[i].floor();
        let rj = quotas[j] - quotas[j].floor();
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    if at_least_one {
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let largest = (0..counts.len()).max_by_key(|&i| (counts[i], usize::MAX - i)).unwrap();
            counts[largest] -= 1;
            counts[empty] += 1;
        }
    }
    counts
}

/// Inverse powers of the plastic number: the R2 low-discrepancy sequence.
const R2: [f64; 2] = [0.754_877_666_246_692_8, 0.569_840_290_998_053_2];

/// Samples `target_total` points on the link surfaces. Links get counts
/// proportional to their surface area (at least one each), then each
/// patch of a link gets its area share, filled with a randomly shifted R2
/// sequence. The same `(model, target_total, seed)` always gives the same
/// points.
pub fn sample_points(model: &RobotModel, target_total: usize, seed: u64) -> Result<SurfaceRep> {
    let n_links = model.links.len();
    if target_total < n_links {
        return Err(Error::Sampling(format!(
            "{target_total} points cannot cover {n_links} links"
        )));
    }
    let link_patches: Vec<Vec<Patch>> = model
        .links
        .iter()
        .map(|l| l.solids.iter().flat_map(patches).collect())
        .collect();
    if let Some(k) = link_patches.iter().position(Vec::is_empty) {
        return Err(Error::Sampling(format!(
            "link {} has no solids to sample",
            model.links[k].name
        )));
    }
    let areas: Vec<f64> = link_patches
        .iter()
        .map(|ps| ps.iter().map(Patch::area).sum())
        .collect();
    let link_counts = allocate(target_total, &areas, true);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target_total);
    for (k, (ps, &count)) in link_patches.iter().zip(&link_counts).enumerate() {
        let weights: Vec<f64> = ps.iter().map(Patch::area).collect();
        for (patch, &m) in ps.iter().zip(&allocate(count, &weights, false)) {
            let shift: [f64; 2] = [rng.gen(), rng.gen()];
            for i in 0..m {
                let n = (i + 1) as f64;
                let u = (shift[0] + n * R2[0]).fract();
                let v = (shift[1] + n * R2[1]).fract();
                out.push(LinkPoint {
                    link: k,
                    local: patch.point(u, v),
                });
            }
        }
    }
    Ok(SurfaceRep::Points(out))
}

pub fn sample_preset(model: &RobotModel, preset: PointPreset, seed: u64) -> Result<SurfaceRep> {
    sample_points(model, preset.count(), seed)
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    link_index: usize,
    x: f64,
    y: f64,
    z: f64,
}

/// Writes a point set as CSV with header `link_index,x,y,z`.
pub fn save_points(points: &[LinkPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(PointRow {
            link_index: p.link,
            x: p.local.x,
            y: p.local.y,
            z: p.local.z,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a point set written by [`save_points`] and checks every link index
/// against `model`.
pub fn load_points(path: impl AsRef<Path>, model: &RobotModel) -> Result<SurfaceRep> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers != vec!["link_index", "x", "y", "z"] {
        return Err(Error::PointFile {
            path: path.into(),
            line: 1,
            msg: format!("expected header link_index,x,y,z, got {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let err = |msg: String| Error::PointFile {
            path: path.into(),
            line,
            msg,
        };
        let row: PointRow = record.deserialize(Some(&headers)).map_err(|e| err(e.to_string()))?;
        if row.link_index >= model.links.len() {
            return Err(err(format!(
                "link index {} out of range for a {}-link model",
                row.link_index,
                model.links.len()
            )));
        }
        if !(row.x.is_finite() && row.y.is_finite() && row.z.is_finite()) {
            return Err(err("non-finite coordinate".into()));
        }
        out.push(LinkPoint {
            link: row.link_index,
            local: Point3::new(row.x, row.y, row.z),
        });
    }
    Ok(SurfaceRep::Points(out))
}

/// World position and link of every element of the rep, in rep order.
pub fn world_points(rep: &SurfaceRep, model: &RobotModel, state: &RobotState) -> Vec<(Point3<f64>, usize)> {
    let frames = Frames::compute(model, state);
    rep.elements()
        .iter()
        .map(|e| (frames.links[e.link] * e.center, e.link))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDistance {
    /// Scene distance at the center minus the radius.
    pub distance: f64,
    pub gradient: Vector3<f64>,
    pub link: usize,
    pub center: Point3<f64>,
}

pub fn sphere_distances(
    spheres: &[LinkSphere],
    scene: &Scene,
    model: &RobotModel,
    state: &RobotState,
) -> Vec<SphereDistance> {
    let frames = Frames::compute(model, state);
    spheres
        .iter()
        .map(|s| {
            let center = frames.links[s.link] * s.center;
            let q = scene.query(&center);
            SphereDistance {
                distance: q.distance - s.radius,
                gradient: q.gradient,
                link: s.link,
                center,
            }
        })
        .collect()
}

/// One proxy element close to an obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proximity {
    pub link: usize,
    pub world: Point3<f64>,
    /// Obstacle distance of the element surface (scene distance minus radius).
    pub distance: f64,
    pub gradient: Vector3<f64>,
}

/// Bounding sphere (local frame) over a run of sorted elements.
#[derive(Debug, Clone)]
struct Cluster {
    link: usize,
    center: Point3<f64>,
    reach: f64,
    range: std::ops::Range<usize>,
}

const LEAF_SIZE: usize = 32;

fn bound(centers: &[Point3<f64>], radii: &[f64]) -> (Point3<f64>, f64) {
    let mean = centers.iter().fold(Vector3::zeros(), |a, c| a + c.coords) / centers.len() as f64;
    let center = Point3::from(mean);
    let reach = centers
        .iter()
        .zip(radii)
        .map(|(c, r)| (c - center).norm() + r)
        .fold(0.0, f64::max);
    (center, reach)
}

/// Reorders `idx` into leaves of at most [`LEAF_SIZE`] elements by
/// recursive median splits along the widest axis.
fn split(idx: &mut [usize], elements: &[LinkSphere], offset: usize, leaves: &mut Vec<std::ops::Range<usize>>) {
    if idx.len() <= LEAF_SIZE {
        leaves.push(offset..offset + idx.len());
        return;
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &i in idx.iter() {
        lo = lo.inf(&elements[i].center.coords);
        hi = hi.sup(&elements[i].center.coords);
    }
    let axis = (hi - lo).imax();
    let mid = idx.len() / 2;
    idx.select_nth_unstable_by(mid, |&a, &b| {
        elements[a].center[axis]
            .total_cmp(&elements[b].center[axis])
            .then(a.cmp(&b))
    });
    let (left, right) = idx.split_at_mut(mid);
    split(left, elements, offset, leaves);
    split(right, elements, offset + mid, leaves);
}

/// A rep arranged for fast distance queries: elements are grouped by link
/// and then into small spatial clusters, each with a bounding sphere.
/// Scene distances are 1-Lipschitz, so a cluster whose bounding sphere lies
/// beyond the cutoff cannot contain a closer element and is skipped whole.
#[derive(Debug, Clone)]
pub struct CollisionBody {
    links: Vec<(Cluster, std::ops::Range<usize>)>,
    leaves: Vec<Cluster>,
    centers: Vec<Point3<f64>>,
    radii: Vec<f64>,
    /// Position of each sorted element in the original rep.
    index: Vec<usize>,
}

impl CollisionBody {
    pub fn new(rep: &SurfaceRep) -> Self {
        let elements = rep.elements();
        let mut by_link: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, e) in elements.iter().enumerate() {
            by_link.entry(e.link).or_default().push(i);
        }
        let mut body = Self {
            links: Vec::new(),
            leaves: Vec::new(),
            centers: Vec::with_capacity(elements.len()),
            radii: Vec::with_capacity(elements.len()),
            index: Vec::with_capacity(elements.len()),
        };
        for (link, mut idx) in by_link {
            let offset = body.index.len();
            let mut ranges = Vec::new();
            split(&mut idx, &elements, offset, &mut ranges);
            for &i in &idx {
                body.centers.push(elements[i].center);
                body.radii.push(elements[i].radius);
                body.index.push(i);
            }
            let first_leaf = body.leaves.len();
            for range in ranges {
                let (center, reach) = bound(&body.centers[range.clone()], &body.radii[range.clone()]);
                body.leaves.push(Cluster {
                    link,
                    center,
                    reach,
                    range,
                });
            }
            let all = offset..body.index.len();
            let (center, reach) = bound(&body.centers[all.clone()], &body.radii[all.clone()]);
            body.links.push((
                Cluster {
                    link,
                    center,
                    reach,
                    range: all,
                },
                first_leaf..body.leaves.len(),
            ));
        }
        body
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Every element whose obstacle distance is below `cutoff`, in rep order.
    pub fn proximities(&self, scene: &Scene, frames: &Frames, cutoff: f64) -> Vec<Proximity> {
        let mut found = Vec::new();
        for (group, leaves) in &self.links {
            let pose = &frames.links[group.link];
            if scene.eval(&(pose * group.center)) - group.reach >= cutoff {
                continue;
            }
            for leaf in &self.leaves[leaves.clone()] {
                if scene.eval(&(pose * leaf.center)) - leaf.reach >= cutoff {
                    continue;
                }
                for i in leaf.range.clone() {
                    let world = pose * self.centers[i];
                    let q = scene.query(&world);
                    let distance = q.distance - self.radii[i];
                    if distance < cutoff {
                        found.push((
                            self.index[i],
                            Proximity {
                                link: leaf.link,
                                world,
                                distance,
                                gradient: q.gradient,
                            },
                        ));
                    }
                }
            }
        }
        found.sort_unstable_by_key(|(i, _)| *i);
        found.into_iter().map(|(_, p)| p).collect()
    }

    /// Smallest obstacle distance over all elements, with its link.
    pub fn min_distance(&self, scene: &Scene, frames: &Frames) -> (f64, Option<usize>) {
        let mut best = (f64::INFINITY, None);
        for (group, leaves) in &self.links {
            let pose = &frames.links[group.link];
            if scene.eval(&(pose * group.center)) - group.reach >= best.0 {
                continue;
            }
            for leaf in &self.leaves[leaves.clone()] {
                if scene.eval(&(pose * leaf.center)) - leaf.reach >= best.0 {
                    continue;
                }
                for i in leaf.range.clone() {
                    let d = scene.eval(&(pose * self.centers[i])) - self.radii[i];
                    if d < best.0 {
                        best = (d, Some(leaf.link));
                    }
                }
            }
        }
        best
    }
}
