//! 2D person detections and the per-joint uncertainty model.

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraView, Point2};

/// Axis-aligned box in pixels: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    /// Tight box around `points`, grown by `pad` of its size on each side.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a Point2>, pad: f64) -> Option<Self> {
        let mut it = points.into_iter().peekable();
        it.peek()?;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in it {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let (w, h) = (x1 - x0, y1 - y0);
        Some(Self { x: x0 - pad * w, y: y0 - pad * h, w: w * (1.0 + 2.0 * pad), h: h * (1.0 + 2.0 * pad) })
    }
}

/// Maps a detection's box and a joint's confidence to a pixel standard
/// deviation: `sigma0 * (diag / d_ref) / max(confidence, c_floor)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmaModel {
    pub sigma0: f64,
    pub d_ref: f64,
    pub c_floor: f64,
}

impl Default for SigmaModel {
    fn default() -> Self {
        Self { sigma0: 2.0, d_ref: 400.0, c_floor: 0.1 }
    }
}

impl SigmaModel {
    pub fn sigma(&self, bbox: &BBox, confidence: f64) -> f64 {
        let c = confidence.clamp(0.0, 1.0).max(self.c_floor);
        let diag = bbox.diagonal().max(f64::MIN_POSITIVE);
        self.sigma0 * (diag / self.d_ref) / c
    }
}

/// Free-function form of [`SigmaModel::sigma`].
pub fn sigma_model(model: &SigmaModel, bbox: &BBox, confidence: f64) -> f64 {
    model.sigma(bbox, confidence)
}

/// One observed joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub point: Point2,
    pub confidence: f64,
    /// Standard deviation in pixels, always positive.
    pub sigma: f64,
}

/// One person's 2D skeleton in one view. Absent joints are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection2D {
    pub view: usize,
    pub person_index: usize,
    pub bbox: BBox,
    pub joints: Vec<Option<Keypoint>>,
}

impl Detection2D {
    /// Builds a detection from raw `(point, confidence)` joints, deriving each
    /// joint's sigma from the box with `model`.
    pub fn from_raw(
        view: usize,
        person_index: usize,
        bbox: BBox,
        raw: &[Option<(Point2, f64)>],
        model: &SigmaModel,
    ) -> Self {
        let joints = raw
            .iter()
            .map(|j| {
                j.map(|(point, confidence)| Keypoint { point, confidence, sigma: model.sigma(&bbox, confidence) })
            })
            .collect();
        Self { view, person_index, bbox, joints }
    }

    pub fn joint(&self, j: usize) -> Option<&Keypoint> {
        self.joints.get(j).and_then(|k| k.as_ref())
    }

    pub fn num_present(&self) -> usize {
        self.joints.iter().filter(|j| j.is_some()).count()
    }

    /// Drops joints that are non-finite or fall outside the image grown by
    /// 10% on each side.
    pub fn clip_to_frame(&mut self, camera: &CameraView) {
        let (w, h) = (camera.width() as f64, camera.height() as f64);
        for j in self.joints.iter_mut() {
            if let Some(k) = j {
                let p = k.point;
                let inside = p.x.is_finite()
                    && p.y.is_finite()
                    && p.x >= -0.1 * w
                    && p.x <= 1.1 * w
                    && p.y >= -0.1 * h
                    && p.y <= 1.1 * h;
                if !inside || !(k.sigma > 0.0) {
                    *j = None;
                }
            }
        }
    }
}

/// One view's camera and its detections for a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewDetections {
    pub camera: CameraView,
    pub detections: Vec<Detection2D>,
}
