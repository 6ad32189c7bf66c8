//! Evaluation measures: MPJPE, PCP, OKS-based AP/AR, reprojection error
//! statistics and cross-view matching precision.
//!
//! Poses are in metres; MPJPE is reported in millimetres, PCP and AP/AR in
//! percent.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::ViewDetections;
use crate::geometry::{Point2, Point3};
use crate::matching::PersonTrackSet;
use crate::reconstruct::Pose3D;
use crate::skeleton::SkeletonSchema;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no predicted person could be matched to the ground truth")]
    NoMatches,
    #[error("OKS constants: {0}")]
    MissingConstants(String),
    #[error("no ground-truth correspondence given")]
    NoGroundTruth,
    #[error("tracks contain no cross-view links")]
    NoLinks,
}

/// MSCOCO per-keypoint OKS sigmas for the 17 body joints.
pub const COCO_SIGMAS: [f64; 17] =
    [0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089];

/// Sigma reused for joints outside the COCO set (the ankle value).
pub const FOOT_SIGMA: f64 = 0.089;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Largest hip-centre distance at which a prediction can be paired with
    /// a ground-truth person, in metres.
    pub hip_gate: f64,
    /// A part is correct when both endpoint errors are at most this
    /// fraction of its true length.
    pub pcp_threshold: f64,
    /// Per-joint OKS sigmas; empty means COCO values with the ankle value
    /// for the remaining joints.
    pub oks_sigmas: Vec<f64>,
    pub histogram_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { hip_gate: 0.5, pcp_threshold: 0.5, oks_sigmas: Vec::new(), histogram_bins: 50 }
    }
}

impl EvalConfig {
    pub fn sigmas_for(&self, num_joints: usize) -> Result<Vec<f64>, MetricsError> {
        if self.oks_sigmas.is_empty() {
            return Ok((0..num_joints).map(|j| COCO_SIGMAS.get(j).copied().unwrap_or(FOOT_SIGMA)).collect());
        }
        if self.oks_sigmas.len() != num_joints {
            return Err(MetricsError::MissingConstants(format!(
                "{} sigmas given for {num_joints} joints",
                self.oks_sigmas.len()
            )));
        }
        if self.oks_sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(MetricsError::MissingConstants("sigmas must be positive".into()));
        }
        Ok(self.oks_sigmas.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JointKind {
    Head,
    Shoulder,
    Elbow,
    Wrist,
    Hip,
    Knee,
    Ankle,
    Foot,
    Other,
}

fn joint_kind(name: &str) -> JointKind {
    match name {
        n if n == "nose" || n.ends_with("eye") || n.ends_with("ear") => JointKind::Head,
        n if n.ends_with("shoulder") => JointKind::Shoulder,
        n if n.ends_with("elbow") => JointKind::Elbow,
        n if n.ends_with("wrist") => JointKind::Wrist,
        n if n.ends_with("hip") => JointKind::Hip,
        n if n.ends_with("knee") => JointKind::Knee,
        n if n.ends_with("ankle") => JointKind::Ankle,
        n if n.contains("toe") || n.ends_with("heel") => JointKind::Foot,
        _ => JointKind::Other,
    }
}

/// MPJPE column for a joint.
pub fn mpjpe_group(name: &str) -> &'static str {
    match joint_kind(name) {
        JointKind::Head => "head",
        JointKind::Shoulder => "shoulder",
        JointKind::Elbow => "elbow",
        JointKind::Wrist => "wrist",
        JointKind::Hip => "hip",
        JointKind::Knee => "knee",
        JointKind::Ankle | JointKind::Foot => "foot",
        JointKind::Other => "other",
    }
}

pub const MPJPE_GROUPS: [&str; 8] = ["head", "shoulder", "elbow", "wrist", "hip", "knee", "foot", "other"];

/// PCP part group for a bone.
pub fn pcp_group(a: &str, b: &str) -> &'static str {
    use JointKind::*;
    let (ka, kb) = (joint_kind(a), joint_kind(b));
    let has = |k: JointKind| ka == k || kb == k;
    match (ka, kb) {
        (Head, Head) => "head",
        _ if has(Shoulder) && has(Elbow) => "upper_arms",
        _ if has(Elbow) && has(Wrist) => "lower_arms",
        _ if has(Hip) && has(Knee) => "upper_legs",
        _ if has(Knee) && has(Ankle) => "lower_legs",
        _ if has(Foot) => "feet",
        _ if has(Shoulder) || has(Hip) => "torso",
        _ => "other",
    }
}

pub const PCP_GROUPS: [&str; 8] = ["head", "torso", "upper_arms", "lower_arms", "upper_legs", "lower_legs", "feet", "other"];

/// Centre of the present hip joints.
fn hip_centre(pose: &Pose3D, hips: &[usize]) -> Option<Point3> {
    let pts: Vec<Point3> = hips.iter().filter_map(|&j| pose.joints.get(j).copied().flatten()).collect();
    if pts.is_empty() {
        return None;
    }
    Some(Point3::from(pts.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords) / pts.len() as f64))
}

/// Pairs predictions with ground-truth persons greedily by ascending
/// hip-centre distance, one-to-one, within `gate`. Returns `(pred, gt)`
/// index pairs sorted by ground-truth index.
pub fn match_persons(pred: &[Pose3D], gt: &[Pose3D], schema: &SkeletonSchema, gate: f64) -> Vec<(usize, usize)> {
    let hips: Vec<usize> =
        schema.joint_names().iter().enumerate().filter(|(_, n)| joint_kind(n) == JointKind::Hip).map(|(j, _)| j).collect();
    let pc: Vec<Option<Point3>> = pred.iter().map(|p| hip_centre(p, &hips)).collect();
    let gc: Vec<Option<Point3>> = gt.iter().map(|p| hip_centre(p, &hips)).collect();
    let mut cand = Vec::new();
    for (i, a) in pc.iter().enumerate() {
        for (k, b) in gc.iter().enumerate() {
            if let (Some(a), Some(b)) = (a, b) {
                let d = (a - b).norm();
                if d <= gate {
                    cand.push((d, i, k));
                }
            }
        }
    }
    cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_p, mut used_g) = (vec![false; pred.len()], vec![false; gt.len()]);
    let mut out = Vec::new();
    for (_, i, k) in cand {
        if !used_p[i] && !used_g[k] {
            used_p[i] = true;
            used_g[k] = true;
            out.push((i, k));
        }
    }
    out.sort_by_key(|&(_, k)| k);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpjpeReport {
    /// Mean over every matched joint, millimetres.
    pub overall_mm: f64,
    /// Mean per joint group, for groups with at least one joint.
    pub per_group_mm: BTreeMap<String, f64>,
    pub matched_persons: usize,
    pub joints: usize,
}

/// Mean per-joint position error over matched persons and joints present in
/// both prediction and ground truth.
pub fn mpjpe(pred: &[Pose3D], gt: &[Pose3D], schema: &SkeletonSchema, cfg: &EvalConfig) -> Result<MpjpeReport, MetricsError> {
    mpjpe_frames(&[(pred, gt)], schema, cfg)
}

/// [`mpjpe`] pooled over frames; persons are matched within each frame.
pub fn mpjpe_frames(
    frames: &[(&[Pose3D], &[Pose3D])],
    schema: &SkeletonSchema,
    cfg: &EvalConfig,
) -> Result<MpjpeReport, MetricsError> {
    let mut total = 0.0;
    let mut n = 0usize;
    let mut matched = 0usize;
    let mut groups: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for &(pred, gt) in frames {
        let pairs = match_persons(pred, gt, schema, cfg.hip_gate);
        matched += pairs.len();
        for &(i, k) in &pairs {
            for (j, (p, g)) in pred[i].joints.iter().zip(&gt[k].joints).enumerate() {
                if let (Some(p), Some(g)) = (p, g) {
                    let e = (p - g).norm() * 1000.0;
                    total += e;
                    n += 1;
                    let slot = groups.entry(mpjpe_group(&schema.joint_names()[j]).to_string()).or_default();
                    slot.0 += e;
                    slot.1 += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(MetricsError::NoMatches);
    }
    Ok(MpjpeReport {
        overall_mm: total / n as f64,
        per_group_mm: groups.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
        matched_persons: matched,
        joints: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcpReport {
    pub overall: f64,
    pub per_group: BTreeMap<String, f64>,
    pub parts: usize,
}

/// Percentage of correct parts. Every ground-truth person counts; parts of
/// unmatched persons and parts with a missing predicted endpoint are
/// incorrect.
pub fn pcp(pred: &[Pose3D], gt: &[Pose3D], schema: &SkeletonSchema, cfg: &EvalConfig) -> Result<PcpReport, MetricsError> {
    pcp_frames(&[(pred, gt)], schema, cfg)
}

/// [`pcp`] pooled over frames.
pub fn pcp_frames(frames: &[(&[Pose3D], &[Pose3D])], schema: &SkeletonSchema, cfg: &EvalConfig) -> Result<PcpReport, MetricsError> {
    let names = schema.joint_names();
    let mut groups: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let (mut correct, mut total, mut matched) = (0usize, 0usize, 0usize);
    for &(pred, gt) in frames {
        let pairs = match_persons(pred, gt, schema, cfg.hip_gate);
        matched += pairs.len();
        let partner: HashMap<usize, usize> = pairs.iter().map(|&(i, k)| (k, i)).collect();
        for (k, g) in gt.iter().enumerate() {
            for &(a, b) in schema.bones() {
                let (Some(ga), Some(gb)) = (g.joints[a], g.joints[b]) else { continue };
                let limit = cfg.pcp_threshold * (ga - gb).norm();
                let ok = partner.get(&k).is_some_and(|&i| match (pred[i].joints[a], pred[i].joints[b]) {
                    (Some(pa), Some(pb)) => (pa - ga).norm() <= limit && (pb - gb).norm() <= limit,
                    _ => false,
                });
                let slot = groups.entry(pcp_group(&names[a], &names[b]).to_string()).or_default();
                slot.0 += ok as usize;
                slot.1 += 1;
                correct += ok as usize;
                total += 1;
            }
        }
    }
    if matched == 0 || total == 0 {
        return Err(MetricsError::NoMatches);
    }
    Ok(PcpReport {
        overall: 100.0 * correct as f64 / total as f64,
        per_group: groups.into_iter().map(|(k, (c, t))| (k, 100.0 * c as f64 / t as f64)).collect(),
        parts: total,
    })
}

/// A ground-truth 2D person for OKS scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct OksTruth {
    /// Labeled keypoints; `None` is unlabeled and skipped.
    pub keypoints: Vec<Option<Point2>>,
    /// Object scale `s^2`, the box area in square pixels.
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OksPrediction {
    pub keypoints: Vec<Option<Point2>>,
    pub score: f64,
}

/// Ground truth and predictions of one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OksImage {
    pub truths: Vec<OksTruth>,
    pub predictions: Vec<OksPrediction>,
}

/// Object keypoint similarity. Missing predicted keypoints contribute zero;
/// `None` when the truth has no labeled keypoint.
pub fn oks(pred: &[Option<Point2>], truth: &OksTruth, sigmas: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (j, g) in truth.keypoints.iter().enumerate() {
        let Some(g) = g else { continue };
        n += 1;
        if let Some(Some(p)) = pred.get(j) {
            let kappa = 2.0 * sigmas[j];
            sum += (-(p - g).norm_squared() / (2.0 * truth.area * kappa * kappa)).exp();
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// OKS thresholds .50:.05:.95.
pub fn oks_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| 0.5 + 0.05 * i as f64)
}

/// COCO area ranges in square pixels.
pub const AREA_MEDIUM: (f64, f64) = (32.0 * 32.0, 96.0 * 96.0);
pub const AREA_LARGE: (f64, f64) = (96.0 * 96.0, f64::INFINITY);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OksReport {
    /// AP averaged over the ten thresholds, percent.
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// `None` when no ground truth falls in the size range.
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    pub ar: f64,
    pub ar50: f64,
    pub ar75: f64,
    pub ar_medium: Option<f64>,
    pub ar_large: Option<f64>,
    /// Per threshold `(threshold, ap, ar)`.
    pub per_threshold: Vec<(f64, f64, f64)>,
}

/// AP (101-point interpolated) and recall at one threshold and area range,
/// as fractions. `None` when no truth is in range.
fn ap_ar_at(images: &[OksImage], sigmas: &[f64], threshold: f64, range: (f64, f64)) -> Option<(f64, f64)> {
    let in_range = |a: f64| a >= range.0 && a <= range.1;
    let n_truth: usize = images.iter().map(|im| im.truths.iter().filter(|t| in_range(t.area)).count()).sum();
    if n_truth == 0 {
        return None;
    }
    // (score, image, prediction index, tp, ignored)
    let mut dets: Vec<(f64, usize, usize, bool, bool)> = Vec::new();
    for (ii, im) in images.iter().enumerate() {
        let mut order: Vec<usize> = (0..im.predictions.len()).collect();
        order.sort_by(|&a, &b| im.predictions[b].score.total_cmp(&im.predictions[a].score).then(a.cmp(&b)));
        // truths in range are matched before ignored ones
        let mut truth_order: Vec<usize> = (0..im.truths.len()).collect();
        truth_order.sort_by_key(|&k| !in_range(im.truths[k].area));
        let mut taken = vec![false; im.truths.len()];
        for &d in &order {
            let pred = &im.predictions[d];
            let mut best: Option<(usize, f64)> = None;
            for &k in &truth_order {
                if taken[k] {
                    continue;
                }
                // once a regular match exists, ignored truths are not considered
                if best.is_some_and(|(b, _)| in_range(im.truths[b].area)) && !in_range(im.truths[k].area) {
                    break;
                }
                let Some(o) = oks(&pred.keypoints, &im.truths[k], sigmas) else { continue };
                if o >= threshold && best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((k, o));
                }
            }
            match best {
                Some((k, _)) => {
                    taken[k] = true;
                    dets.push((pred.score, ii, d, true, !in_range(im.truths[k].area)));
                }
                None => dets.push((pred.score, ii, d, false, false)),
            }
        }
    }
    dets.retain(|d| !d.4);
    dets.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(dets.len());
    let mut precision = Vec::with_capacity(dets.len());
    for (i, d) in dets.iter().enumerate() {
        tp += d.3 as usize;
        recall.push(tp as f64 / n_truth as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut ap = 0.0;
    for r in 0..=100 {
        let r = r as f64 / 100.0;
        let idx = recall.partition_point(|&x| x < r);
        ap += precision.get(idx).copied().unwrap_or(0.0);
    }
    Some((ap / 101.0, recall.last().copied().unwrap_or(0.0)))
}

/// COCO-style keypoint AP/AR over a set of images. Predictions are
/// matched greedily in descending score order to the unmatched truth of
/// highest OKS. All detections are kept (no per-image cap).
pub fn oks_ap_ar(images: &[OksImage], sigmas: &[f64]) -> Result<OksReport, MetricsError> {
    let m = images
        .iter()
        .flat_map(|im| im.truths.iter().map(|t| t.keypoints.len()).chain(im.predictions.iter().map(|p| p.keypoints.len())))
        .max()
        .unwrap_or(0);
    if sigmas.len() < m {
        return Err(MetricsError::MissingConstants(format!("{} sigmas for {m} keypoints", sigmas.len())));
    }
    let all = (0.0, f64::INFINITY);
    let sweep = |range: (f64, f64)| -> Option<Vec<(f64, f64)>> {
        oks_thresholds().iter().map(|&t| ap_ar_at(images, sigmas, t, range)).collect()
    };
    let mean = |v: &[(f64, f64)], pick: fn(&(f64, f64)) -> f64| 100.0 * v.iter().map(pick).sum::<f64>() / v.len() as f64;
    let full = sweep(all).unwrap_or_else(|| vec![(0.0, 0.0); 10]);
    let medium = sweep(AREA_MEDIUM);
    let large = sweep(AREA_LARGE);
    Ok(OksReport {
        ap: mean(&full, |x| x.0),
        ap50: 100.0 * full[0].0,
        ap75: 100.0 * full[5].0,
        ap_medium: medium.as_ref().map(|v| mean(v, |x| x.0)),
        ap_large: large.as_ref().map(|v| mean(v, |x| x.0)),
        ar: mean(&full, |x| x.1),
        ar50: 100.0 * full[0].1,
        ar75: 100.0 * full[5].1,
        ar_medium: medium.as_ref().map(|v| mean(v, |x| x.1)),
        ar_large: large.as_ref().map(|v| mean(v, |x| x.1)),
        per_threshold: oks_thresholds().iter().zip(&full).map(|(&t, &(p, r))| (t, 100.0 * p, 100.0 * r)).collect(),
    })
}

/// Fraction of cross-view links inside tracks that join detections of the
/// same true person. A track of `n` detections has `n (n - 1) / 2` links;
/// detections missing from `gt` count as wrong.
pub fn matching_precision(
    tracks: &PersonTrackSet,
    gt: &BTreeMap<(usize, usize), usize>,
) -> Result<f64, MetricsError> {
    let (correct, total) = link_counts(tracks, gt)?;
    if total == 0 {
        return Err(MetricsError::NoLinks);
    }
    Ok(correct as f64 / total as f64)
}

/// `(correct, total)` link counts behind [`matching_precision`].
pub fn link_counts(tracks: &PersonTrackSet, gt: &BTreeMap<(usize, usize), usize>) -> Result<(usize, usize), MetricsError> {
    if gt.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for t in &tracks.persons {
        let ids: Vec<Option<usize>> = t.members.iter().map(|(&v, &d)| gt.get(&(v, d)).copied()).collect();
        for i in 0..ids.len() {
            for k in i + 1..ids.len() {
                total += 1;
                correct += matches!((ids[i], ids[k]), (Some(a), Some(b)) if a == b) as usize;
            }
        }
    }
    Ok((correct, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReprojStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population variance.
    pub var: f64,
    pub count: usize,
}

pub fn reproj_stats(errors: &[f64]) -> Option<ReprojStats> {
    if errors.is_empty() {
        return None;
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(ReprojStats { mean, min, max, var, count: errors.len() })
}

/// Pixel distance between every reconstructed joint's projection and each
/// 2D detection it was built from. `pose.person_id` indexes `tracks`.
pub fn reprojection_errors(poses: &[Pose3D], tracks: &PersonTrackSet, views: &[ViewDetections]) -> Vec<f64> {
    let mut out = Vec::new();
    for pose in poses {
        let Some(track) = tracks.persons.get(pose.person_id) else { continue };
        for (&view, &det) in &track.members {
            let Some(v) = views.iter().find(|v| v.camera.id() == view) else { continue };
            let Some(d) = v.detections.get(det) else { continue };
            for (q, k) in pose.joints.iter().zip(&d.joints) {
                if let (Some(q), Some(k)) = (q, k) {
                    if let Ok(p) = v.camera.project(q) {
                        out.push((p - k.point).norm());
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `bins` equal bins from 0 to the largest error; the last bin is
    /// closed on the right.
    pub fn of(errors: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let max = errors.iter().copied().fold(0.0, f64::max);
        let bin_width = if max > 0.0 { max / bins as f64 } else { 1.0 };
        let mut counts = vec![0; bins];
        for &e in errors {
            let i = ((e / bin_width).floor() as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self { bin_width, counts }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left_px,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i as f64 * self.bin_width, c));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub mpjpe_mm: Option<MpjpeReport>,
    pub pcp: Option<PcpReport>,
    pub oks: Option<OksReport>,
    pub reproj: Option<ReprojStats>,
    pub matching_precision: Option<f64>,
    pub histogram: Option<Histogram>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// Flat `metric,value` table.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, f64)> = Vec::new();
        if let Some(m) = &self.mpjpe_mm {
            rows.push(("mpjpe_mm".into(), m.overall_mm));
            rows.extend(m.per_group_mm.iter().map(|(k, v)| (format!("mpjpe_mm.{k}"), *v)));
        }
        if let Some(p) = &self.pcp {
            rows.push(("pcp".into(), p.overall));
            rows.extend(p.per_group.iter().map(|(k, v)| (format!("pcp.{k}"), *v)));
        }
        if let Some(o) = &self.oks {
            for (k, v) in [("ap", o.ap), ("ap50", o.ap50), ("ap75", o.ap75), ("ar", o.ar), ("ar50", o.ar50), ("ar75", o.ar75)] {
                rows.push((k.into(), v));
            }
            for (k, v) in [("ap_m", o.ap_medium), ("ap_l", o.ap_large), ("ar_m", o.ar_medium), ("ar_l", o.ar_large)] {
                if let Some(v) = v {
                    rows.push((k.into(), v));
                }
            }
        }
        if let Some(r) = &self.reproj {
            for (k, v) in [("reproj.mean", r.mean), ("reproj.min", r.min), ("reproj.max", r.max), ("reproj.var", r.var)] {
                rows.push((k.into(), v));
            }
        }
        if let Some(p) = self.matching_precision {
            rows.push(("matching_precision".into(), p));
        }
        let mut s = String::from("metric,value\n");
        for (k, v) in rows {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }
}
