//! JSON file formats shared by the CLI and the synthetic generator.
//!
//! - calibration: `[{"id", "P": 3x4 rows, "width", "height"}]`
//! - detections: a list of frames, each a list of
//!   `{"view", "persons": [{"bbox": [x, y, w, h], "joints": [[x, y, c] | null]}]}`
//! - poses: a list of `{"frame", "persons": [{"id", "joints": [[x, y, z] | null], "nll", "reproj_rms"}]}`
//! - homography cache: `[{"from", "to", "H": 3x3 rows}]`, frames as a view
//!   index or `"ground"`
//! - ground correspondences: `[{"view_a", "view_b", "points": [[xa, ya, xb, yb]]}]`
//! - tracks: a list of `{"frame", "persons": [{"members": [[view, det]], "closed"}]}`
//! - ground-truth correspondence: a list of `{"frame", "links": [[view, det, person]]}`
//!
//! Floats are written with shortest round-trip formatting, so reading a file
//! back gives the same bits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix3x4};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{BBox, Detection2D, SigmaModel, ViewDetections};
use crate::geometry::{CameraView, Point2, Point3};
use crate::homography::{Frame, GroundHomography};
use crate::matching::{PersonTrack, PersonTrackSet};
use crate::reconstruct::Pose3D;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl IoError {
    fn parse(path: &Path, msg: impl ToString) -> Self {
        IoError::Parse { path: path.to_path_buf(), msg: msg.to_string() }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| IoError::parse(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: usize,
    #[serde(rename = "P")]
    pub p: [[f64; 4]; 3],
    pub width: u32,
    pub height: u32,
}

impl CameraRecord {
    pub fn from_camera(c: &CameraView) -> Self {
        let p = c.projection();
        Self { id: c.id(), p: std::array::from_fn(|r| std::array::from_fn(|k| p[(r, k)])), width: c.width(), height: c.height() }
    }

    pub fn to_camera(&self) -> Result<CameraView, crate::geometry::GeometryError> {
        let p = Matrix3x4::from_fn(|r, k| self.p[r][k]);
        CameraView::new(self.id, p, self.width, self.height)
    }
}

pub fn read_calibration(path: &Path) -> Result<Vec<CameraView>, IoError> {
    let records: Vec<CameraRecord> = read_json(path)?;
    let mut cams = Vec::with_capacity(records.len());
    for r in &records {
        if cams.iter().any(|c: &CameraView| c.id() == r.id) {
            return Err(IoError::parse(path, format!("camera id {} repeated", r.id)));
        }
        cams.push(r.to_camera().map_err(|e| IoError::parse(path, format!("camera {}: {e}", r.id)))?);
    }
    Ok(cams)
}

pub fn write_calibration(path: &Path, cams: &[CameraView]) -> Result<(), IoError> {
    write_json(path, &cams.iter().map(CameraRecord::from_camera).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub bbox: [f64; 4],
    pub joints: Vec<Option<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub view: usize,
    pub persons: Vec<PersonRecord>,
}

/// One frame's detections, in file order.
pub type FrameRecord = Vec<ViewRecord>;

impl ViewRecord {
    pub fn from_detections(view: usize, dets: &[Detection2D]) -> Self {
        Self {
            view,
            persons: dets
                .iter()
                .map(|d| PersonRecord {
                    bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
                    joints: d.joints.iter().map(|k| k.map(|k| [k.point.x, k.point.y, k.confidence])).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DetectionsFile {
    Frames(Vec<FrameRecord>),
    Single(FrameRecord),
}

pub fn read_detection_frames(path: &Path) -> Result<Vec<FrameRecord>, IoError> {
    match read_json::<DetectionsFile>(path)? {
        DetectionsFile::Frames(f) => Ok(f),
        DetectionsFile::Single(f) => Ok(vec![f]),
    }
}

pub fn write_detection_frames(path: &Path, frames: &[FrameRecord]) -> Result<(), IoError> {
    write_json(path, &frames)
}

/// Binds one frame's records to cameras: sigmas come from `model`, joints
/// outside the 10%-expanded image are dropped and views without a record
/// get no detections. Joint lists longer than `num_joints` are an error;
/// shorter ones are padded as absent.
pub fn frame_views(
    frame: &FrameRecord,
    cams: &[CameraView],
    num_joints: usize,
    model: &SigmaModel,
) -> Result<Vec<ViewDetections>, String> {
    let mut views: Vec<ViewDetections> =
        cams.iter().map(|c| ViewDetections { camera: c.clone(), detections: Vec::new() }).collect();
    for rec in frame {
        let slot = views
            .iter_mut()
            .find(|v| v.camera.id() == rec.view)
            .ok_or_else(|| format!("detections for unknown view {}", rec.view))?;
        if !slot.detections.is_empty() {
            return Err(format!("view {} listed twice in one frame", rec.view));
        }
        for (i, p) in rec.persons.iter().enumerate() {
            if p.joints.len() > num_joints {
                return Err(format!("view {} person {i}: {} joints, schema has {num_joints}", rec.view, p.joints.len()));
            }
            let bbox = BBox::new(p.bbox[0], p.bbox[1], p.bbox[2], p.bbox[3]);
            let mut raw: Vec<Option<(Point2, f64)>> =
                p.joints.iter().map(|j| j.map(|[x, y, c]| (Point2::new(x, y), c))).collect();
            raw.resize(num_joints, None);
            let mut det = Detection2D::from_raw(rec.view, i, bbox, &raw, model);
            det.clip_to_frame(&slot.camera);
            slot.detections.push(det);
        }
    }
    Ok(views)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub id: usize,
    pub joints: Vec<Option<[f64; 3]>>,
    pub nll: f64,
    pub reproj_rms: f64,
}

impl PoseRecord {
    pub fn from_pose(p: &Pose3D) -> Self {
        Self {
            id: p.person_id,
            joints: p.joints.iter().map(|q| q.map(|q| [q.x, q.y, q.z])).collect(),
            nll: p.nll,
            reproj_rms: p.reproj_rms,
        }
    }

    pub fn to_pose(&self) -> Pose3D {
        Pose3D {
            person_id: self.id,
            joints: self.joints.iter().map(|q| q.map(|[x, y, z]| Point3::new(x, y, z))).collect(),
            per_joint_views: vec![0; self.joints.len()],
            nll: self.nll,
            reproj_rms: self.reproj_rms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    pub frame: usize,
    pub persons: Vec<PoseRecord>,
}

pub fn read_poses(path: &Path) -> Result<Vec<PoseFrame>, IoError> {
    read_json(path)
}

pub fn write_poses(path: &Path, frames: &[PoseFrame]) -> Result<(), IoError> {
    write_json(path, &frames)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomographyRecord {
    pub from: Frame,
    pub to: Frame,
    #[serde(rename = "H")]
    pub h: [[f64; 3]; 3],
}

impl HomographyRecord {
    pub fn from_homography(h: &GroundHomography) -> Self {
        let m = h.matrix();
        Self { from: h.from_view(), to: h.to_view(), h: std::array::from_fn(|r| std::array::from_fn(|k| m[(r, k)])) }
    }
}

pub fn read_homographies(path: &Path) -> Result<Vec<GroundHomography>, IoError> {
    let recs: Vec<HomographyRecord> = read_json(path)?;
    recs.iter()
        .map(|r| {
            GroundHomography::new(r.from, r.to, Matrix3::from_fn(|i, k| r.h[i][k]))
                .map_err(|e| IoError::parse(path, format!("{} -> {}: {e}", r.from, r.to)))
        })
        .collect()
}

pub fn write_homographies(path: &Path, hs: &[GroundHomography]) -> Result<(), IoError> {
    write_json(path, &hs.iter().map(HomographyRecord::from_homography).collect::<Vec<_>>())
}

/// Ground-plane point pairs between two frames; each row is
/// `[xa, ya, xb, yb]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceRecord {
    pub view_a: Frame,
    pub view_b: Frame,
    pub points: Vec<[f64; 4]>,
}

impl CorrespondenceRecord {
    /// Pairs oriented from `view_b` to `view_a`.
    pub fn pairs_b_to_a(&self) -> Vec<(Point2, Point2)> {
        self.points.iter().map(|p| (Point2::new(p[2], p[3]), Point2::new(p[0], p[1]))).collect()
    }
}

pub fn read_correspondences(path: &Path) -> Result<Vec<CorrespondenceRecord>, IoError> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub members: Vec<[usize; 2]>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub frame: usize,
    pub persons: Vec<TrackRecord>,
    pub dropped_links: usize,
}

impl TrackFrame {
    pub fn from_tracks(frame: usize, t: &PersonTrackSet) -> Self {
        Self {
            frame,
            persons: t
                .persons
                .iter()
                .map(|p| TrackRecord { members: p.members.iter().map(|(&v, &d)| [v, d]).collect(), closed: p.closed })
                .collect(),
            dropped_links: t.dropped_links,
        }
    }

    pub fn to_tracks(&self) -> PersonTrackSet {
        PersonTrackSet {
            persons: self
                .persons
                .iter()
                .map(|p| PersonTrack { members: p.members.iter().map(|&[v, d]| (v, d)).collect(), closed: p.closed })
                .collect(),
            dropped_links: self.dropped_links,
        }
    }
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackFrame>, IoError> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceFrame {
    pub frame: usize,
    /// `[view, detection, person]`
    pub links: Vec<[usize; 3]>,
}

impl CorrespondenceFrame {
    pub fn from_map(frame: usize, map: &BTreeMap<(usize, usize), usize>) -> Self {
        Self { frame, links: map.iter().map(|(&(v, d), &p)| [v, d, p]).collect() }
    }

    pub fn to_map(&self) -> BTreeMap<(usize, usize), usize> {
        self.links.iter().map(|&[v, d, p]| ((v, d), p)).collect()
    }
}

pub fn read_gt_correspondence(path: &Path) -> Result<Vec<CorrespondenceFrame>, IoError> {
    read_json(path)
}
