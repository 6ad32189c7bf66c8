//! End-to-end orchestration: detections in, poses (and optionally an
//! evaluation) out.
//!
//! Per frame: rectify every detection's heels onto the ground plane, match
//! consecutive views around the ring, merge into person tracks, then
//! reconstruct each person.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{SigmaModel, ViewDetections};
use crate::exec::{self, Execution};
use crate::geometry::{CameraView, Point2};
use crate::homography::{estimate_homography, image_to_ground, Frame, GroundHomography, HomographyError};
use crate::io::{self, CorrespondenceRecord, FrameRecord, IoError, PoseFrame, PoseRecord, TrackFrame};
use crate::matching::{
    extract_foot_pairs, match_pair, merge_multiview, Assignment, FootPair, MatchingConfig, MatchingError, PersonTrackSet,
    RingLink,
};
use crate::metrics::{self, EvalConfig, EvalReport, Histogram, MetricsError, OksImage, OksPrediction, OksTruth};
use crate::reconstruct::{reconstruct_scene, Pose3D, SolverConfig, SolverEvent};
use crate::skeleton::SkeletonSchema;
use crate::synth::SceneSpec;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("no frame produced any pose")]
    NoPoses,
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Input(_) => 2,
            PipelineError::NoPoses => 3,
        }
    }
}

impl From<IoError> for PipelineError {
    fn from(e: IoError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub calibration: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    /// Cached homographies; entries into `"ground"` are used directly.
    pub homographies: Option<PathBuf>,
    /// Annotated ground-plane point pairs.
    pub correspondences: Option<PathBuf>,
    /// Skeleton schema JSON; the bundled 23-joint schema when absent.
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Ground-truth poses, for evaluation.
    pub ground_truth: Option<PathBuf>,
    /// Ground-truth `(view, detection) -> person` links, for matching
    /// precision.
    pub gt_correspondence: Option<PathBuf>,
    pub dump_matching: Option<PathBuf>,
}

/// Everything the CLI can be told, as one TOML document. Every section and
/// key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub matching: MatchingConfig,
    pub solver: SolverConfig,
    pub sigma: SigmaModel,
    pub eval: EvalConfig,
    pub synth: SceneSpec,
    pub execution: Execution,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub log_level: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig::default(),
            matching: MatchingConfig::default(),
            solver: SolverConfig::default(),
            sigma: SigmaModel::default(),
            eval: EvalConfig::default(),
            synth: SceneSpec::default(),
            execution: Execution::default(),
            threads: 0,
            log_level: "info".into(),
        }
    }
}

/// Commented default configuration.
pub const DEFAULT_CONFIG_TOML: &str = r#"# crowdpose3d configuration. Every key is optional; CLI flags override.
log_level = "info"        # error | warn | info | debug | trace
execution = "parallel"    # parallel | sequential
threads = 0               # 0: one worker per core

[paths]
# calibration = "calib.json"            # [{"id", "P", "width", "height"}]
# detections = "detections.json"        # frames of {"view", "persons"}
# homographies = "homographies.json"    # cached {"from", "to", "H"}
# correspondences = "ground_pairs.json" # {"view_a", "view_b", "points"}
# schema = "skeleton.json"              # bundled 23-joint schema if unset
# out = "out"
# ground_truth = "gt_poses.json"
# gt_correspondence = "gt_correspondence.json"
# dump_matching = "matching_dump"

[matching]
gate = 1.0      # assignments costing more are split again
c_min = 0.05    # heels below this confidence are unusable
solver = "jonker_volgenant"   # or "hungarian"
[matching.weights]
k1 = 1.0        # foot location distance, metres
k2 = 1.0        # stride length difference, metres
k3 = 0.5        # |sin| of the angle between strides

[solver]
max_iters = 100
gradient_tol = 1e-10
step_tol = 1e-10
initial_damping = 1e-3
damping_up = 10.0
damping_down = 3.0
run_mle_stage = true
allow_prior_completion = false

[sigma]
sigma0 = 2.0    # pixels at the reference box diagonal and full confidence
d_ref = 400.0   # reference box diagonal, pixels
c_floor = 0.1   # confidences are clamped below at this value

[eval]
hip_gate = 0.5
pcp_threshold = 0.5
histogram_bins = 50

[synth]
n_persons = 10
n_views = 4
noise_px = 2.0
occlusion_rate = 0.0
swap_rate = 0.0
area = [6.0, 6.0]
min_spacing = 0.4
seed = 0
"#;

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let s = &self.solver;
        if s.max_iters == 0
            || !(s.gradient_tol > 0.0 && s.step_tol > 0.0 && s.initial_damping > 0.0)
            || !(s.damping_up > 1.0 && s.damping_down > 1.0)
        {
            return bad("solver tolerances and damping must be positive, damping factors > 1".into());
        }
        let w = &self.matching.weights;
        if !(w.k1 >= 0.0 && w.k2 >= 0.0 && w.k3 >= 0.0) || !(self.matching.gate >= 0.0) {
            return bad("matching weights and gate must be non-negative".into());
        }
        let g = &self.sigma;
        if !(g.sigma0 > 0.0 && g.d_ref > 0.0 && g.c_floor > 0.0 && g.c_floor <= 1.0) {
            return bad("sigma model parameters must be positive, c_floor in (0, 1]".into());
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<SkeletonSchema, PipelineError> {
        match &self.paths.schema {
            None => Ok(SkeletonSchema::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
                SkeletonSchema::from_json(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Checks that every configured input path exists.
    pub fn check_paths(&self) -> Result<(), PipelineError> {
        let p = &self.paths;
        let required = [("calibration", &p.calibration), ("detections", &p.detections)];
        for (name, path) in required {
            match path {
                None => return Err(PipelineError::Config(format!("no {name} file given"))),
                Some(path) if !path.exists() => {
                    return Err(PipelineError::Config(format!("{name} file {} does not exist", path.display())))
                }
                _ => {}
            }
        }
        let optional = [
            ("homographies", &p.homographies),
            ("correspondences", &p.correspondences),
            ("schema", &p.schema),
            ("ground_truth", &p.ground_truth),
            ("gt_correspondence", &p.gt_correspondence),
        ];
        for (name, path) in optional {
            if let Some(path) = path.as_ref().filter(|p| !p.exists()) {
                return Err(PipelineError::Config(format!("{name} file {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// Image-to-ground homography for every camera. Sources, by priority: a
/// cached map into the ground frame; an estimate from ground annotations;
/// a chain through a view-to-view map onto a view already resolved; the
/// plane `z = 0` of the calibration.
pub fn resolve_ground_maps(
    cams: &[CameraView],
    cache: &[GroundHomography],
    annotations: &[CorrespondenceRecord],
) -> Result<BTreeMap<usize, GroundHomography>, HomographyError> {
    let mut direct: Vec<GroundHomography> = cache.to_vec();
    for rec in annotations {
        direct.push(estimate_homography(rec.view_b, rec.view_a, &rec.pairs_b_to_a())?);
    }
    let mut maps: BTreeMap<usize, GroundHomography> = BTreeMap::new();
    for h in &direct {
        if let (Frame::View(k), Frame::Ground) = (h.from_view(), h.to_view()) {
            maps.entry(k).or_insert_with(|| h.clone());
        }
    }
    let views: Vec<usize> = cams.iter().map(|c| c.id()).collect();
    loop {
        let mut grew = false;
        for &k in &views {
            if maps.contains_key(&k) {
                continue;
            }
            for h in &direct {
                // k -> j, or j -> k inverted
                let step = match (h.from_view(), h.to_view()) {
                    (Frame::View(a), Frame::View(b)) if a == k => Some((b, h.clone())),
                    (Frame::View(a), Frame::View(b)) if b == k => Some((a, h.inverse())),
                    _ => None,
                };
                if let Some((j, hk)) = step {
                    if let Some(gj) = maps.get(&j) {
                        let chained = gj.compose(&hk)?;
                        maps.insert(k, chained);
                        grew = true;
                        break;
                    }
                }
            }
        }
        if !grew {
            break;
        }
    }
    for cam in cams {
        if let std::collections::btree_map::Entry::Vacant(slot) = maps.entry(cam.id()) {
            slot.insert(image_to_ground(cam)?);
        }
    }
    Ok(maps)
}

/// One view pair's matching, for debugging dumps.
#[derive(Debug, Clone, Serialize)]
pub struct MatchingDump {
    pub frame: usize,
    pub view_a: usize,
    pub view_b: usize,
    /// Detection index of each row and column.
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub cost: Vec<Vec<f64>>,
    pub assignment: Assignment,
}

#[derive(Debug, Clone, Default)]
pub struct FrameMatching {
    pub tracks: PersonTrackSet,
    pub dumps: Vec<MatchingDump>,
    /// Detections left out of matching, as `(view, detection, reason)`.
    pub skipped: Vec<(usize, usize, String)>,
}

/// Matches one frame's detections around the ring of views in id order.
/// Detections without usable heels become singleton tracks.
pub fn match_frame(
    frame: usize,
    views: &[ViewDetections],
    ground_maps: &BTreeMap<usize, GroundHomography>,
    schema: &SkeletonSchema,
    cfg: &MatchingConfig,
) -> Result<FrameMatching, MatchingError> {
    let mut order: Vec<&ViewDetections> = views.iter().collect();
    order.sort_by_key(|v| v.camera.id());
    let mut out = FrameMatching::default();
    let mut feet: Vec<Vec<FootPair>> = Vec::with_capacity(order.len());
    for v in &order {
        let h = ground_maps
            .get(&v.camera.id())
            .ok_or_else(|| MatchingError::ViewMismatch(format!("no ground homography for view {}", v.camera.id())))?;
        let mut fv = Vec::new();
        for d in &v.detections {
            match extract_foot_pairs(d, schema.heel_indices(), h, cfg.c_min) {
                Ok(fp) => fv.push(fp),
                Err(e) => out.skipped.push((d.view, d.person_index, e.to_string())),
            }
        }
        feet.push(fv);
    }
    let n = order.len();
    let edges: Vec<(usize, usize)> = match n {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
    };
    let ground = GroundHomography::identity(Frame::Ground, Frame::Ground);
    let mut links = Vec::with_capacity(edges.len());
    for (a, b) in edges {
        let (va, vb) = (order[a].camera.id(), order[b].camera.id());
        let (graph, asg) = if feet[a].is_empty() || feet[b].is_empty() {
            (None, Assignment::empty(feet[a].len(), feet[b].len()))
        } else {
            let (g, asg) = match_pair(&feet[a], &feet[b], &ground, cfg)?;
            (Some(g), asg)
        };
        let rows: Vec<usize> = feet[a].iter().map(|f| f.index).collect();
        let cols: Vec<usize> = feet[b].iter().map(|f| f.index).collect();
        let mapped = Assignment {
            pairs: asg.pairs.iter().map(|&(l, m, c)| (rows[l], cols[m], c)).collect(),
            unmatched_a: asg.unmatched_a.iter().map(|&l| rows[l]).collect(),
            unmatched_b: asg.unmatched_b.iter().map(|&m| cols[m]).collect(),
        };
        if let Some(g) = graph {
            out.dumps.push(MatchingDump {
                frame,
                view_a: va,
                view_b: vb,
                rows: rows.clone(),
                cols: cols.clone(),
                cost: g.cost.row_iter().map(|r| r.iter().copied().collect()).collect(),
                assignment: mapped.clone(),
            });
        }
        links.push(RingLink { view_a: va, view_b: vb, assignment: mapped });
    }
    let mut tracks = if links.is_empty() { PersonTrackSet::default() } else { merge_multiview(&links)? };
    tracks.add_singletons(order.iter().flat_map(|v| (0..v.detections.len()).map(move |d| (v.camera.id(), d))));
    out.tracks = tracks;
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct FrameResult {
    pub frame: usize,
    pub matching: FrameMatching,
    pub poses: Vec<Pose3D>,
    pub events: Vec<SolverEvent>,
    /// Soft error that emptied this frame.
    pub error: Option<String>,
}

impl FrameResult {
    pub fn pose_frame(&self) -> PoseFrame {
        PoseFrame { frame: self.frame, persons: self.poses.iter().map(PoseRecord::from_pose).collect() }
    }
}

/// Matching plus reconstruction of one frame. Matching failures are soft:
/// the frame comes back empty with `error` set.
pub fn process_frame(
    frame: usize,
    views: &[ViewDetections],
    ground_maps: &BTreeMap<usize, GroundHomography>,
    schema: &SkeletonSchema,
    cfg: &PipelineConfig,
) -> FrameResult {
    match match_frame(frame, views, ground_maps, schema, &cfg.matching) {
        Ok(matching) => {
            let scene = reconstruct_scene(&matching.tracks, views, schema, &cfg.solver, cfg.execution);
            FrameResult { frame, matching, poses: scene.poses, events: scene.events, error: None }
        }
        Err(e) => FrameResult { frame, error: Some(e.to_string()), ..FrameResult::default() },
    }
}

/// Inputs for [`evaluate_frames`], one entry per frame.
pub struct FrameEval<'a> {
    pub pred: &'a [Pose3D],
    pub gt: &'a [Pose3D],
    pub views: Option<&'a [ViewDetections]>,
    pub tracks: Option<&'a PersonTrackSet>,
    pub correspondence: Option<&'a BTreeMap<(usize, usize), usize>>,
}

fn projected(cam: &CameraView, pose: &Pose3D) -> Vec<Option<Point2>> {
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    pose.joints
        .iter()
        .map(|q| {
            q.filter(|q| cam.depth(q) > 0.0)
                .and_then(|q| cam.project(&q).ok())
                .filter(|p| p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h)
        })
        .collect()
}

/// Aggregates metrics over frames. Person matching for MPJPE and PCP is
/// done per frame. AP/AR use one image per (frame, view): truths are the
/// ground-truth joints projected into the view, with the tight box area
/// as scale; predictions are the reprojected estimates scored by
/// `1 / (1 + reproj_rms)`.
pub fn evaluate_frames(frames: &[FrameEval<'_>], schema: &SkeletonSchema, cfg: &EvalConfig) -> Result<EvalReport, MetricsError> {
    let pairs: Vec<(&[Pose3D], &[Pose3D])> = frames.iter().map(|f| (f.pred, f.gt)).collect();
    let mut report = EvalReport {
        mpjpe_mm: metrics::mpjpe_frames(&pairs, schema, cfg).ok(),
        pcp: metrics::pcp_frames(&pairs, schema, cfg).ok(),
        ..EvalReport::default()
    };

    let sigmas = cfg.sigmas_for(schema.num_joints())?;
    let mut images = Vec::new();
    let mut errors = Vec::new();
    let (mut correct, mut total, mut have_gt) = (0usize, 0usize, false);
    for f in frames {
        if let Some(views) = f.views {
            for v in views {
                let truths = f
                    .gt
                    .iter()
                    .filter_map(|g| {
                        let kps = projected(&v.camera, g);
                        let pts: Vec<Point2> = kps.iter().flatten().copied().collect();
                        let b = crate::detection::BBox::around(&pts, 0.0)?;
                        Some(OksTruth { keypoints: kps, area: b.area().max(1.0) })
                    })
                    .collect();
                let predictions = f
                    .pred
                    .iter()
                    .map(|p| OksPrediction { keypoints: projected(&v.camera, p), score: 1.0 / (1.0 + p.reproj_rms) })
                    .collect();
                images.push(OksImage { truths, predictions });
            }
            if let Some(t) = f.tracks {
                errors.extend(metrics::reprojection_errors(f.pred, t, views));
            }
        }
        if let (Some(t), Some(c)) = (f.tracks, f.correspondence) {
            if let Ok((ok, n)) = metrics::link_counts(t, c) {
                correct += ok;
                total += n;
                have_gt = true;
            }
        }
    }
    if !images.is_empty() {
        report.oks = Some(metrics::oks_ap_ar(&images, &sigmas)?);
    }
    if have_gt && total > 0 {
        report.matching_precision = Some(correct as f64 / total as f64);
    }
    report.reproj = metrics::reproj_stats(&errors);
    if !errors.is_empty() {
        report.histogram = Some(Histogram::of(&errors, cfg.histogram_bins));
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub frames: Vec<FrameResult>,
    pub report: Option<EvalReport>,
}

impl RunOutput {
    pub fn pose_frames(&self) -> Vec<PoseFrame> {
        self.frames.iter().map(|f| f.pose_frame()).collect()
    }
}

/// Loaded inputs of a run.
pub struct RunInputs {
    pub cameras: Vec<CameraView>,
    pub frames: Vec<FrameRecord>,
    pub ground_maps: BTreeMap<usize, GroundHomography>,
    pub schema: SkeletonSchema,
    pub gt: Option<Vec<Vec<Pose3D>>>,
    pub gt_correspondence: Option<Vec<BTreeMap<(usize, usize), usize>>>,
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<RunInputs, PipelineError> {
    cfg.validate()?;
    cfg.check_paths()?;
    let schema = cfg.schema()?;
    let p = &cfg.paths;
    let cameras = io::read_calibration(p.calibration.as_ref().expect("checked"))?;
    let frames = io::read_detection_frames(p.detections.as_ref().expect("checked"))?;
    let cache = match &p.homographies {
        Some(path) => io::read_homographies(path)?,
        None => Vec::new(),
    };
    let annotations = match &p.correspondences {
        Some(path) => io::read_correspondences(path)?,
        None => Vec::new(),
    };
    let ground_maps =
        resolve_ground_maps(&cameras, &cache, &annotations).map_err(|e| PipelineError::Input(format!("homographies: {e}")))?;
    let gt = match &p.ground_truth {
        Some(path) => {
            let frames = io::read_poses(path)?;
            let mut by_frame = vec![Vec::new(); frames.iter().map(|f| f.frame + 1).max().unwrap_or(0)];
            for f in frames {
                by_frame[f.frame] = f.persons.iter().map(|r| r.to_pose()).collect();
            }
            Some(by_frame)
        }
        None => None,
    };
    let gt_correspondence = match &p.gt_correspondence {
        Some(path) => {
            let frames = io::read_gt_correspondence(path)?;
            let mut by_frame = vec![BTreeMap::new(); frames.iter().map(|f| f.frame + 1).max().unwrap_or(0)];
            for f in frames {
                by_frame[f.frame] = f.to_map();
            }
            Some(by_frame)
        }
        None => None,
    };
    Ok(RunInputs { cameras, frames, ground_maps, schema, gt, gt_correspondence })
}

/// Runs every frame of already loaded inputs.
pub fn run_loaded(inputs: &RunInputs, cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    let views: Vec<Vec<ViewDetections>> = inputs
        .frames
        .iter()
        .enumerate()
        .map(|(f, rec)| {
            io::frame_views(rec, &inputs.cameras, inputs.schema.num_joints(), &cfg.sigma)
                .map_err(|e| PipelineError::Input(format!("frame {f}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let frames: Vec<FrameResult> = exec::map_range(cfg.execution, views.len(), |f| {
        process_frame(f, &views[f], &inputs.ground_maps, &inputs.schema, cfg)
    });
    for fr in &frames {
        if let Some(e) = &fr.error {
            log::warn!("frame {}: {e}", fr.frame);
        }
    }

    let report = match &inputs.gt {
        None => None,
        Some(gt) => {
            let empty = Vec::new();
            let evals: Vec<FrameEval<'_>> = frames
                .iter()
                .map(|fr| FrameEval {
                    pred: &fr.poses,
                    gt: gt.get(fr.frame).unwrap_or(&empty),
                    views: Some(&views[fr.frame]),
                    tracks: Some(&fr.matching.tracks),
                    correspondence: inputs.gt_correspondence.as_ref().and_then(|c| c.get(fr.frame)),
                })
                .collect();
            match evaluate_frames(&evals, &inputs.schema, &cfg.eval) {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("evaluation skipped: {e}");
                    None
                }
            }
        }
    };
    Ok(RunOutput { frames, report })
}

/// Writes poses, tracks, diagnostics and the evaluation into `out`, and
/// matching dumps into `dump` when given.
pub fn write_outputs(run: &RunOutput, out: &Path, dump: Option<&Path>) -> Result<(), PipelineError> {
    io::write_poses(&out.join("poses.json"), &run.pose_frames())?;
    let tracks: Vec<TrackFrame> = run.frames.iter().map(|f| TrackFrame::from_tracks(f.frame, &f.matching.tracks)).collect();
    io::write_json(&out.join("tracks.json"), &tracks)?;
    let mut log = String::new();
    for f in &run.frames {
        if let Some(e) = &f.error {
            log.push_str(&format!("frame={} kind=frame_error message={e:?}\n", f.frame));
        }
        for (v, d, why) in &f.matching.skipped {
            log.push_str(&format!("frame={} kind=unmatched view={v} detection={d} message={why:?}\n", f.frame));
        }
        for e in &f.events {
            log.push_str(&format!("frame={} person={} kind={} message={:?}\n", f.frame, e.person, e.kind, e.message));
        }
    }
    io::write_text(&out.join("diagnostics.log"), &log)?;
    if let Some(r) = &run.report {
        io::write_text(&out.join("eval.json"), &(r.to_json() + "\n"))?;
        io::write_text(&out.join("eval.csv"), &r.to_csv())?;
        if let Some(h) = &r.histogram {
            io::write_text(&out.join("reproj_histogram.csv"), &h.to_csv())?;
        }
    }
    if let Some(dir) = dump {
        for f in &run.frames {
            for d in &f.matching.dumps {
                io::write_json(&dir.join(format!("frame{:05}_view{}_view{}.json", d.frame, d.view_a, d.view_b)), d)?;
            }
        }
    }
    Ok(())
}

/// The `run` pipeline: load, process, write. Fails with
/// [`PipelineError::NoPoses`] when frames exist but none yields a pose.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    let inputs = load_inputs(cfg)?;
    let run = run_loaded(&inputs, cfg)?;
    if let Some(out) = &cfg.paths.out {
        write_outputs(&run, out, cfg.paths.dump_matching.as_deref())?;
    }
    let n_poses: usize = run.frames.iter().map(|f| f.poses.len()).sum();
    log::info!("{} frames, {n_poses} poses", run.frames.len());
    if n_poses == 0 {
        return Err(PipelineError::NoPoses);
    }
    Ok(run)
}

/// Writes a synthetic scene as CLI inputs into `dir`: calibration,
/// detections (one frame per entry of `scenes`), ground-truth poses and
/// correspondence, and the ground homographies. Returns a config pointing
/// at those files.
pub fn export_scenes(
    scenes: &[crate::synth::GroundTruth],
    dir: &Path,
    base: &PipelineConfig,
) -> Result<PipelineConfig, PipelineError> {
    let first = scenes.first().ok_or_else(|| PipelineError::Config("no scenes to export".into()))?;
    let calib = dir.join("calib.json");
    io::write_calibration(&calib, &first.cameras)?;
    let frames: Vec<FrameRecord> = scenes
        .iter()
        .map(|s| s.detections.iter().zip(&s.cameras).map(|(d, c)| io::ViewRecord::from_detections(c.id(), d)).collect())
        .collect();
    let detections = dir.join("detections.json");
    io::write_detection_frames(&detections, &frames)?;
    let gt_frames: Vec<PoseFrame> = scenes
        .iter()
        .enumerate()
        .map(|(f, s)| PoseFrame { frame: f, persons: s.poses3d.iter().map(PoseRecord::from_pose).collect() })
        .collect();
    let ground_truth = dir.join("gt_poses.json");
    io::write_poses(&ground_truth, &gt_frames)?;
    let corr: Vec<io::CorrespondenceFrame> =
        scenes.iter().enumerate().map(|(f, s)| io::CorrespondenceFrame::from_map(f, &s.correspondence)).collect();
    let gt_correspondence = dir.join("gt_correspondence.json");
    io::write_json(&gt_correspondence, &corr)?;
    let maps: Vec<GroundHomography> = first
        .cameras
        .iter()
        .map(image_to_ground)
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::Input(e.to_string()))?;
    let homographies = dir.join("homographies.json");
    io::write_homographies(&homographies, &maps)?;

    let mut cfg = base.clone();
    cfg.paths.calibration = Some(calib);
    cfg.paths.detections = Some(detections);
    cfg.paths.homographies = Some(homographies);
    cfg.paths.ground_truth = Some(ground_truth);
    cfg.paths.gt_correspondence = Some(gt_correspondence);
    Ok(cfg)
}
