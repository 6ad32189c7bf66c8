//! Synthetic crowd scenes with known ground truth.
//!
//! Persons are template skeletons with the schema's reference bone lengths,
//! a random heading, a random stride and a few degrees of jitter per bone.
//! Cameras sit on a circle around the scene looking at its centre.
//! Detections are the exact projections, perturbed by Gaussian pixel noise,
//! then thinned by occlusion and corrupted by swaps with the nearest other
//! person. Everything is a pure function of the spec.

use std::collections::BTreeMap;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{BBox, Detection2D, Keypoint, SigmaModel, ViewDetections};
use crate::geometry::{CameraView, GeometryError, Point2, Point3};
pub use crate::homography::ground_homography_from_cameras;
use crate::homography::{GroundHomography, HomographyError};
use crate::reconstruct::Pose3D;
use crate::skeleton::SkeletonSchema;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("cannot place person {placed} of {requested} at least {spacing} m from the others")]
    InfeasibleSpec { placed: usize, requested: usize, spacing: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Homography(#[from] HomographyError),
}

/// Placement attempts per person before giving up.
pub const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub n_persons: usize,
    pub n_views: usize,
    /// Standard deviation of the pixel noise.
    pub noise_px: f64,
    pub occlusion_rate: f64,
    /// Probability that a joint is replaced by the same joint of the
    /// nearest other person.
    pub swap_rate: f64,
    /// Ground rectangle `[width, depth]` in metres, centred on the origin.
    pub area: [f64; 2],
    /// Minimum distance between person positions on the ground.
    pub min_spacing: f64,
    /// Largest per-bone articulation jitter in degrees.
    pub jitter_deg: f64,
    /// Largest forward or backward leg swing in degrees.
    pub max_stride_deg: f64,
    /// Confidence reported for every detected joint.
    pub confidence: f64,
    pub camera_height: f64,
    pub image_size: [u32; 2],
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_persons: 10,
            n_views: 4,
            noise_px: 2.0,
            occlusion_rate: 0.0,
            swap_rate: 0.0,
            area: [6.0, 6.0],
            min_spacing: 0.4,
            jitter_deg: 5.0,
            max_stride_deg: 20.0,
            confidence: 1.0,
            camera_height: 3.5,
            image_size: [1920, 1080],
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if self.n_views < 2 {
            return bad("at least 2 views are needed");
        }
        if !(0.0..1.0).contains(&self.occlusion_rate) || !(0.0..1.0).contains(&self.swap_rate) {
            return bad("occlusion_rate and swap_rate must lie in [0, 1)");
        }
        if !(self.noise_px >= 0.0) || !(self.min_spacing >= 0.0) || !(self.jitter_deg >= 0.0) {
            return bad("noise_px, min_spacing and jitter_deg must be non-negative");
        }
        if !(self.area[0] > 0.0 && self.area[1] > 0.0) {
            return bad("area must be positive");
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return bad("confidence must lie in (0, 1]");
        }
        if !(self.camera_height > 0.0) || self.image_size[0] == 0 || self.image_size[1] == 0 {
            return bad("camera_height and image_size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub spec: SceneSpec,
    pub poses3d: Vec<Pose3D>,
    pub cameras: Vec<CameraView>,
    /// Plane-induced homographies for every ordered view pair `(a, b)`,
    /// `a != b`, taking pixels of `b` to pixels of `a`.
    pub homographies: Vec<GroundHomography>,
    /// Detections per view, in shuffled order.
    pub detections: Vec<Vec<Detection2D>>,
    /// `(view, detection index)` to person id.
    pub correspondence: BTreeMap<(usize, usize), usize>,
}

impl GroundTruth {
    pub fn views(&self) -> Vec<ViewDetections> {
        self.cameras
            .iter()
            .zip(&self.detections)
            .map(|(c, d)| ViewDetections { camera: c.clone(), detections: d.clone() })
            .collect()
    }

    /// Detection index of `person` in `view`, if detected there.
    pub fn detection_of(&self, view: usize, person: usize) -> Option<usize> {
        self.correspondence.iter().find(|(&(v, _), &p)| v == view && p == person).map(|(&(_, d), _)| d)
    }
}

/// Nominal bone direction for `child`, in a body frame with x to the
/// person's left, y forward and z up.
fn nominal_direction(name: &str) -> Vector3<f64> {
    let side = if name.starts_with("left") { 1.0 } else { -1.0 };
    let d = match name {
        n if n.ends_with("eye") => Vector3::new(0.5 * side, 0.3, 0.8),
        n if n.ends_with("ear") => Vector3::new(0.6 * side, -0.8, 0.0),
        n if n.ends_with("shoulder") => Vector3::new(0.6 * side, -0.3, -0.75),
        n if n.ends_with("elbow") => Vector3::new(0.15 * side, 0.0, -1.0),
        n if n.ends_with("wrist") => Vector3::new(0.05 * side, 0.3, -1.0),
        n if n.ends_with("hip") => Vector3::new(-0.12 * side, 0.0, -1.0),
        n if n.ends_with("knee") || n.ends_with("ankle") => Vector3::new(0.0, 0.0, -1.0),
        n if n.ends_with("heel") => Vector3::new(0.0, -0.3, -1.0),
        n if n.contains("toe") => {
            let spread = if n.contains("small") { 0.35 } else { 0.1 };
            Vector3::new(spread * side, 1.0, -0.3)
        }
        _ => Vector3::new(0.0, 0.0, -1.0),
    };
    d.normalize()
}

fn random_tilt(rng: &mut ChaCha8Rng, max_rad: f64) -> Rotation3<f64> {
    if max_rad <= 0.0 {
        return Rotation3::identity();
    }
    let axis = loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break Unit::new_normalize(v);
        }
    };
    Rotation3::from_axis_angle(&axis, rng.random_range(0.0..max_rad))
}

/// One person in the body frame: nose-rooted, lowest heel on `z = 0`,
/// horizontal origin between the hips.
fn body_pose(schema: &SkeletonSchema, spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let names = schema.joint_names();
    let swing = rng.random_range(-1.0..1.0) * spec.max_stride_deg.to_radians();
    let jitter = spec.jitter_deg.to_radians();
    let mut pts = vec![Point3::origin(); schema.num_joints()];
    let mut rot = vec![Rotation3::identity(); schema.num_joints()];
    for (bi, parent, child) in schema.traversal(0) {
        let name = names[child].as_str();
        let mut r = rot[parent];
        // the knee carries the leg swing down to the foot
        if name.ends_with("knee") {
            let s = if name.starts_with("left") { swing } else { -swing };
            r = Rotation3::from_axis_angle(&Vector3::x_axis(), s);
        }
        rot[child] = r;
        let d = random_tilt(rng, jitter) * (r * nominal_direction(name));
        pts[child] = pts[parent] + d * schema.b_ref()[bi];
    }
    let [lh, rh] = schema.heel_indices();
    let floor = pts[lh].z.min(pts[rh].z);
    let hips: Vec<&Point3> = names.iter().zip(&pts).filter(|(n, _)| n.ends_with("hip")).map(|(_, p)| p).collect();
    let centre = if hips.is_empty() {
        Vector3::zeros()
    } else {
        hips.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / hips.len() as f64
    };
    pts.iter().map(|p| Point3::new(p.x - centre.x, p.y - centre.y, p.z - floor)).collect()
}

fn place(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Point2>, SynthError> {
    let [w, d] = spec.area;
    let mut spots: Vec<Point2> = Vec::with_capacity(spec.n_persons);
    for placed in 0..spec.n_persons {
        let spot = (0..PLACEMENT_ATTEMPTS)
            .map(|_| Point2::new(rng.random_range(-w / 2.0..w / 2.0), rng.random_range(-d / 2.0..d / 2.0)))
            .find(|p| spots.iter().all(|q| (p - q).norm() >= spec.min_spacing))
            .ok_or(SynthError::InfeasibleSpec { placed, requested: spec.n_persons, spacing: spec.min_spacing })?;
        spots.push(spot);
    }
    Ok(spots)
}

/// Cameras evenly spaced on a circle, far enough out and with a focal
/// length short enough that the whole area stays in frame.
fn ring_cameras(spec: &SceneSpec) -> Result<Vec<CameraView>, SynthError> {
    let half_diag = 0.5 * spec.area[0].hypot(spec.area[1]);
    let radius = 2.0 * half_diag + 3.0;
    let target = Point3::new(0.0, 0.0, 0.9);
    let [w, h] = spec.image_size;
    // the nearest scene point sits about radius - half_diag away; keep a
    // half-diagonal plus a body height of margin inside the shorter side
    let reach = (half_diag + 1.0) / (radius - half_diag);
    let focal = 0.5 * w.min(h) as f64 / reach;
    (0..spec.n_views)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / spec.n_views as f64;
            let eye = Point3::new(radius * a.cos(), radius * a.sin(), spec.camera_height);
            Ok(CameraView::look_at(k, focal, &eye, &target, &Vector3::z(), w, h)?)
        })
        .collect()
}

/// Generates one frame from `spec`, using the default sigma model for the
/// detections' uncertainties.
pub fn generate(spec: &SceneSpec, schema: &SkeletonSchema) -> Result<GroundTruth, SynthError> {
    generate_with(spec, schema, &SigmaModel::default())
}

pub fn generate_with(spec: &SceneSpec, schema: &SkeletonSchema, sigma: &SigmaModel) -> Result<GroundTruth, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let spots = place(spec, &mut rng)?;
    let poses3d: Vec<Pose3D> = spots
        .iter()
        .enumerate()
        .map(|(i, spot)| {
            let heading = Rotation3::from_axis_angle(&Vector3::z_axis(), rng.random_range(0.0..std::f64::consts::TAU));
            let body = body_pose(schema, spec, &mut rng);
            let pts = body.iter().map(|p| heading * p + Vector3::new(spot.x, spot.y, 0.0)).collect();
            Pose3D::from_points(i, pts)
        })
        .collect();

    let cameras = ring_cameras(spec)?;
    let mut homographies = Vec::new();
    for a in &cameras {
        for b in &cameras {
            if a.id() != b.id() {
                homographies.push(ground_homography_from_cameras(a, b)?);
            }
        }
    }

    // nearest other person, for swaps
    let nearest: Vec<Option<usize>> = (0..spots.len())
        .map(|i| {
            (0..spots.len())
                .filter(|&k| k != i)
                .min_by(|&a, &b| (spots[a] - spots[i]).norm().total_cmp(&(spots[b] - spots[i]).norm()))
        })
        .collect();

    let noise = Normal::new(0.0, spec.noise_px.max(0.0)).expect("finite standard deviation");
    let m = schema.num_joints();
    let mut detections = Vec::with_capacity(cameras.len());
    let mut correspondence = BTreeMap::new();
    for cam in &cameras {
        let (w, h) = (cam.width() as f64, cam.height() as f64);
        // noisy projections first, so swaps copy what the other person's
        // detection would have shown
        let noisy: Vec<Vec<Option<Point2>>> = poses3d
            .iter()
            .map(|pose| {
                pose.joints
                    .iter()
                    .map(|q| {
                        let q = q.expect("ground truth is complete");
                        let p = cam.project(&q).ok().filter(|_| cam.depth(&q) > 0.0)?;
                        let (dx, dy) = if spec.noise_px > 0.0 { (noise.sample(&mut rng), noise.sample(&mut rng)) } else { (0.0, 0.0) };
                        Some(Point2::new(p.x + dx, p.y + dy))
                    })
                    .collect()
            })
            .collect();
        let mut view_dets = Vec::new();
        for (i, joints) in noisy.iter().enumerate() {
            let mut raw: Vec<Option<(Point2, f64)>> = Vec::with_capacity(m);
            for (j, p) in joints.iter().enumerate() {
                let mut p = *p;
                if spec.occlusion_rate > 0.0 && rng.random::<f64>() < spec.occlusion_rate {
                    p = None;
                }
                if spec.swap_rate > 0.0 && rng.random::<f64>() < spec.swap_rate {
                    if let Some(k) = nearest[i] {
                        p = p.and(noisy[k][j]);
                    }
                }
                let inside = p.filter(|p| p.x >= -0.1 * w && p.x <= 1.1 * w && p.y >= -0.1 * h && p.y <= 1.1 * h);
                raw.push(inside.map(|p| (p, spec.confidence)));
            }
            let present: Vec<Point2> = raw.iter().flatten().map(|(p, _)| *p).collect();
            let Some(bbox) = BBox::around(&present, 0.1) else { continue };
            view_dets.push((i, bbox, raw));
        }
        view_dets.shuffle(&mut rng);
        let dets: Vec<Detection2D> = view_dets
            .into_iter()
            .enumerate()
            .map(|(d, (person, bbox, raw))| {
                correspondence.insert((cam.id(), d), person);
                Detection2D::from_raw(cam.id(), d, bbox, &raw, sigma)
            })
            .collect();
        detections.push(dets);
    }

    Ok(GroundTruth { spec: spec.clone(), poses3d, cameras, homographies, detections, correspondence })
}

/// Replaces every detected joint by its exact projection, keeping the
/// detections' boxes, confidences and sigmas.
pub fn exact_projections(gt: &GroundTruth) -> Vec<Vec<Detection2D>> {
    gt.detections
        .iter()
        .zip(&gt.cameras)
        .map(|(dets, cam)| {
            dets.iter()
                .map(|d| {
                    let person = gt.correspondence[&(cam.id(), d.person_index)];
                    let mut d = d.clone();
                    for (j, k) in d.joints.iter_mut().enumerate() {
                        if let Some(k) = k {
                            let q = gt.poses3d[person].joints[j].expect("ground truth is complete");
                            *k = Keypoint { point: cam.project(&q).expect("visible joint"), ..*k };
                        }
                    }
                    d
                })
                .collect()
        })
        .collect()
}
