//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Reference values come from
//! independent recomputations in this file, not from the library.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crowdpose3d::homography::{compose_check, ground_homography_from_cameras, image_to_ground};
use crowdpose3d::matching::{merge_multiview, solve_lap, Assignment, MatchingConfig, PersonTrack, PersonTrackSet, RingLink};
use crowdpose3d::metrics::{self, EvalConfig, OksImage, OksPrediction, OksReport, OksTruth};
use crowdpose3d::pipeline::match_frame;
use crowdpose3d::reconstruct::{neg_log_posterior, reconstruct_scene, solve_person, stack_joints, Pose3D, SolverConfig};
use crowdpose3d::synth::{generate, GroundTruth, SceneSpec};
use crowdpose3d::timing;
use crowdpose3d::{CameraView, Detection2D, SigmaModel, Execution, GroundHomography, Point2, Point3, SkeletonSchema};

type Outcome = Result<String, String>;

fn ensure(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- helpers

fn ground_maps(gt: &GroundTruth) -> BTreeMap<usize, GroundHomography> {
    gt.cameras.iter().map(|c| (c.id(), image_to_ground(c).expect("camera sees the ground"))).collect()
}

fn person_views<'a>(gt: &'a GroundTruth, person: usize) -> Vec<(&'a CameraView, &'a Detection2D)> {
    gt.cameras
        .iter()
        .filter_map(|c| gt.detection_of(c.id(), person).map(|d| (c, &gt.detections[c.id()][d])))
        .collect()
}

fn joint_error(a: &Option<Point3>, b: &Option<Point3>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some((a - b).norm()),
        _ => None,
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mean_error(pred: &[Option<Point3>], truth: &[Option<Point3>]) -> f64 {
    let e: Vec<f64> = pred.iter().zip(truth).filter_map(|(p, g)| joint_error(p, g)).collect();
    mean(&e)
}

// ------------------------------------------------------- 1: LAP optimality

/// Minimum total cost over every injective map from the smaller side into
/// the larger one.
fn brute_force_lap(c: &DMatrix<f64>) -> f64 {
    let t = if c.nrows() <= c.ncols() { c.clone() } else { c.transpose() };
    let (n, m) = t.shape();
    fn rec(t: &DMatrix<f64>, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == t.nrows() {
            *best = best.min(acc);
            return;
        }
        for col in 0..t.ncols() {
            if !used[col] {
                used[col] = true;
                rec(t, row + 1, used, acc + t[(row, col)], best);
                used[col] = false;
            }
        }
    }
    let mut best = if n == 0 { 0.0 } else { f64::INFINITY };
    rec(&t, 0, &mut vec![false; m], 0.0, &mut best);
    best
}

fn lap_is_valid(a: &Assignment, c: &DMatrix<f64>) -> bool {
    let (n, m) = c.shape();
    let mut rows = vec![false; n];
    let mut cols = vec![false; m];
    for &(r, k, v) in &a.pairs {
        if rows[r] || cols[k] || v != c[(r, k)] {
            return false;
        }
        rows[r] = true;
        cols[k] = true;
    }
    a.pairs.len() == n.min(m)
}

fn criterion_lap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    let mut run = |n: usize, m: usize, rng: &mut ChaCha8Rng| {
        let integer = rng.random_bool(0.3);
        let c = DMatrix::from_fn(n, m, |_, _| {
            if integer {
                rng.random_range(0..10) as f64
            } else {
                rng.random_range(-5.0..20.0)
            }
        });
        let got = solve_lap(&c).expect("finite costs");
        let diff = (got.total_cost() - brute_force_lap(&c)).abs();
        worst = worst.max(diff);
        if diff > 1e-9 || !lap_is_valid(&got, &c) {
            mismatches += 1;
        }
    };
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        run(n, n, &mut rng);
    }
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let mut m = rng.random_range(1..=8);
        while m == n {
            m = rng.random_range(1..=8);
        }
        run(n, m, &mut rng);
    }
    ensure(mismatches == 0, format!("1500 instances, {mismatches} mismatches, worst cost gap {worst:.1e}"))
}

// -------------------------------------------------- 2: Jacobian vs differences

fn criterion_jacobian() -> Outcome {
    let schema = SkeletonSchema::default();
    if schema.num_joints() != 23 {
        return Err(format!("default schema has {} joints", schema.num_joints()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let perturb = Normal::new(0.0, 0.03).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let spec = SceneSpec { n_persons: 1, n_views: 4, noise_px: 2.0, seed: 1000 + seed, ..SceneSpec::default() };
        let gt = generate(&spec, &schema).map_err(|e| e.to_string())?;
        let views = person_views(&gt, 0);
        if views.len() != 4 {
            return Err(format!("seed {seed}: person seen in {} views", views.len()));
        }
        let mut x = stack_joints(&gt.poses3d[0].joints);
        for v in x.iter_mut() {
            *v += perturb.sample(&mut rng);
        }
        let ev = neg_log_posterior(&x, &views, &schema).map_err(|e| e.to_string())?;
        let mut fd = DMatrix::zeros(ev.residuals.len(), x.len());
        for k in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            let rp = neg_log_posterior(&xp, &views, &schema).map_err(|e| e.to_string())?.residuals;
            let rm = neg_log_posterior(&xm, &views, &schema).map_err(|e| e.to_string())?.residuals;
            fd.set_column(k, &((rp - rm) / (2.0 * h)));
        }
        let rel = (&ev.jacobian - &fd).norm() / ev.jacobian.norm();
        worst = worst.max(rel);
    }
    ensure(worst < 1e-5, format!("100 persons, M = 23, 4 views, worst relative error {worst:.2e} (limit 1e-5)"))
}

// ------------------------------------------------------ 3: noiseless recovery

fn criterion_noiseless() -> Outcome {
    let schema = SkeletonSchema::default();
    let solver = SolverConfig::default();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let spec = SceneSpec { n_persons: 10, n_views: 4, noise_px: 0.0, occlusion_rate: 0.0, seed: 300 + seed, ..SceneSpec::default() };
        let gt = generate(&spec, &schema).map_err(|e| e.to_string())?;
        let views = gt.views();
        let m = match_frame(0, &views, &ground_maps(&gt), &schema, &MatchingConfig::default()).map_err(|e| e.to_string())?;
        let precision = metrics::matching_precision(&m.tracks, &gt.correspondence).map_err(|e| e.to_string())?;
        if precision != 1.0 {
            return Err(format!("seed {seed}: matching precision {precision}"));
        }
        let rec = reconstruct_scene(&m.tracks, &views, &schema, &solver, Execution::Parallel);
        if rec.poses.len() != 10 {
            return Err(format!("seed {seed}: {} of 10 persons reconstructed", rec.poses.len()));
        }
        for pose in &rec.poses {
            let (&v, &d) = m.tracks.persons[pose.person_id].members.iter().next().expect("non-empty track");
            let person = gt.correspondence[&(v, d)];
            worst = worst.max(mean_error(&pose.joints, &gt.poses3d[person].joints));
        }
    }
    ensure(worst < 1e-6, format!("20 scenes, precision 1.0, worst per-person MPJPE {worst:.2e} m (limit 1e-6)"))
}

// ------------------------------------------------------------ 4: MAP vs DLT

fn criterion_map_vs_dlt() -> Outcome {
    let schema = SkeletonSchema::default();
    let solver = SolverConfig::default();
    let (mut map_err, mut dlt_err) = (Vec::new(), Vec::new());
    for seed in 0..100 {
        let spec = SceneSpec { n_persons: 1, n_views: 2, noise_px: 2.0, seed: 4000 + seed, ..SceneSpec::default() };
        let gt = generate(&spec, &schema).map_err(|e| e.to_string())?;
        let sol = solve_person(&person_views(&gt, 0), &schema, &solver).map_err(|e| format!("seed {seed}: {e}"))?;
        let truth = &gt.poses3d[0].joints;
        // compare on joints both estimates provide
        let pairs: Vec<(f64, f64)> = (0..truth.len())
            .filter_map(|j| Some((joint_error(&sol.pose.joints[j], &truth[j])?, joint_error(&sol.dlt[j], &truth[j])?)))
            .collect();
        map_err.push(mean(&pairs.iter().map(|p| p.0).collect::<Vec<_>>()));
        dlt_err.push(mean(&pairs.iter().map(|p| p.1).collect::<Vec<_>>()));
    }
    let (map_mean, dlt_mean) = (mean(&map_err) * 1000.0, mean(&dlt_err) * 1000.0);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut wins, mut wins_low_conf) = (0, 0);
    let trials = 100;
    for seed in 0..trials {
        let spec = SceneSpec { n_persons: 1, n_views: 4, noise_px: 2.0, seed: 5000 + seed, ..SceneSpec::default() };
        let mut gt = generate(&spec, &schema).map_err(|e| e.to_string())?;
        let view = rng.random_range(0..4);
        let det = gt.detection_of(view, 0).ok_or("person not detected")?;
        let present: Vec<usize> =
            (0..schema.num_joints()).filter(|&j| gt.detections[view][det].joints[j].is_some()).collect();
        let joint = *present.choose(&mut rng).expect("some joint present");
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        if let Some(k) = gt.detections[view][det].joints[joint].as_mut() {
            k.point += nalgebra::Vector2::new(angle.cos(), angle.sin()) * 40.0;
        }
        let beats = |gt: &GroundTruth| -> Result<bool, String> {
            let sol = solve_person(&person_views(gt, 0), &schema, &solver).map_err(|e| format!("seed {seed}: {e}"))?;
            let truth = &gt.poses3d[0].joints[joint];
            match (joint_error(&sol.pose.joints[joint], truth), joint_error(&sol.dlt[joint], truth)) {
                (Some(m), Some(d)) => Ok(m < d),
                _ => Err(format!("seed {seed}: corrupted joint not reconstructed")),
            }
        };
        wins += beats(&gt)? as usize;
        // Not scored: the same outlier reported at confidence 0.3, as a
        // heatmap detector would for a displaced peak.
        let sigma = SigmaModel::default().sigma(&gt.detections[view][det].bbox, 0.3);
        if let Some(k) = gt.detections[view][det].joints[joint].as_mut() {
            k.confidence = 0.3;
            k.sigma = sigma;
        }
        wins_low_conf += beats(&gt)? as usize;
    }
    let rate = wins as f64 / trials as f64;
    ensure(
        map_mean < dlt_mean && rate >= 0.9,
        format!(
            "2 views @ 2 px: MPJPE MAP {map_mean:.1} mm vs DLT {dlt_mean:.1} mm; 40 px outlier at full confidence: MAP better on {:.0}% (need 90%) [unscored: at confidence 0.3, {:.0}%]",
            rate * 100.0,
            100.0 * wins_low_conf as f64 / trials as f64
        ),
    )
}

// ------------------------------------------------------ 5: MLE stage ablation

/// `a <= b` up to solver round-off: both runs stop at the same optimum to
/// within the 1e-10 step and gradient tolerances.
fn at_most(a: f64, b: f64) -> bool {
    a <= b + 1e-9 * b.abs().max(1.0)
}

fn criterion_mle_ablation() -> Outcome {
    let schema = SkeletonSchema::default();
    let on = SolverConfig::default();
    let off = SolverConfig { run_mle_stage: false, ..on };
    let (mut reproj_on, mut reproj_off) = (Vec::new(), Vec::new());
    let mut nll_wins = 0;
    let scenes = 100;
    for seed in 0..scenes {
        let spec = SceneSpec { n_persons: 4, noise_px: 2.0, occlusion_rate: 0.1, seed: 6000 + seed, ..SceneSpec::default() };
        let gt = generate(&spec, &schema).map_err(|e| e.to_string())?;
        let tracks = PersonTrackSet::from_correspondence(&gt.correspondence);
        let views = gt.views();
        let a = reconstruct_scene(&tracks, &views, &schema, &on, Execution::Parallel);
        let b = reconstruct_scene(&tracks, &views, &schema, &off, Execution::Parallel);
        let by_id = |poses: &[Pose3D]| -> HashMap<usize, (f64, f64)> {
            poses.iter().map(|p| (p.person_id, (p.nll, p.reproj_rms))).collect()
        };
        let (ma, mb) = (by_id(&a.poses), by_id(&b.poses));
        let common: Vec<usize> = ma.keys().filter(|k| mb.contains_key(k)).copied().collect();
        if common.is_empty() {
            return Err(format!("seed {seed}: no person reconstructed in both runs"));
        }
        reproj_on.push(mean(&common.iter().map(|k| ma[k].1).collect::<Vec<_>>()));
        reproj_off.push(mean(&common.iter().map(|k| mb[k].1).collect::<Vec<_>>()));
        let nll_on: f64 = common.iter().map(|k| ma[k].0).sum();
        let nll_off: f64 = common.iter().map(|k| mb[k].0).sum();
        nll_wins += at_most(nll_on, nll_off) as usize;
    }
    let (r_on, r_off) = (mean(&reproj_on), mean(&reproj_off));
    let rate = nll_wins as f64 / scenes as f64;
    ensure(
        at_most(r_on, r_off) && rate >= 0.8,
        format!(
            "reprojection RMS on {r_on:.6} px vs off {r_off:.6} px (gap {:.1e}); nll(on) <= nll(off) in {:.0}% (need 80%)",
            r_on - r_off,
            rate * 100.0
        ),
    )
}

// ------------------------------------------- 6: feet matching vs epipolar

/// Fundamental matrix with `x_b^T F x_a = 0` for pixels of `a` and `b`.
fn fundamental(a: &CameraView, b: &CameraView) -> Matrix3<f64> {
    let (pa, pb) = (a.projection(), b.projection());
    let centre = a.center().expect("finite camera");
    let e = pb * centre.to_homogeneous();
    let skew = Matrix3::new(0.0, -e.z, e.y, e.z, 0.0, -e.x, -e.y, e.x, 0.0);
    let pinv = pa.transpose() * (pa * pa.transpose()).try_inverse().expect("full rank");
    skew * pb * pinv
}

fn line_distance(line: &Vector3<f64>, p: &Point2) -> f64 {
    (line.x * p.x + line.y * p.y + line.z).abs() / (line.x * line.x + line.y * line.y).sqrt()
}

/// Baseline associating detections by the mean symmetric epipolar distance
/// of their shared joints, with the same LAP and ring merge as the feet
/// matcher.
fn epipolar_tracks(gt: &GroundTruth) -> PersonTrackSet {
    let n = gt.cameras.len();
    let mut links = Vec::new();
    for a in 0..n {
        let b = (a + 1) % n;
        let f = fundamental(&gt.cameras[a], &gt.cameras[b]);
        let (da, db) = (&gt.detections[a], &gt.detections[b]);
        let cost = DMatrix::from_fn(da.len(), db.len(), |l, m| {
            let d: Vec<f64> = da[l]
                .joints
                .iter()
                .zip(&db[m].joints)
                .filter_map(|(x, y)| {
                    let (x, y) = (x.as_ref()?.point, y.as_ref()?.point);
                    let in_b = f * x.to_homogeneous();
                    let in_a = f.transpose() * y.to_homogeneous();
                    Some(0.5 * (line_distance(&in_b, &y) + line_distance(&in_a, &x)))
                })
                .collect();
            if d.is_empty() {
                1e6
            } else {
                mean(&d)
            }
        });
        let assignment = solve_lap(&cost).expect("finite costs");
        links.push(RingLink { view_a: a, view_b: b, assignment });
    }
    let mut tracks = merge_multiview(&links).expect("well-formed ring");
    tracks.add_singletons((0..n).flat_map(|v| (0..gt.detections[v].len()).map(move |d| (v, d))));
    tracks
}

fn criterion_matching_vs_epipolar() -> Outcome {
    let schema = SkeletonSchema::default();
    let (mut ours, mut base) = (Vec::new(), Vec::new());
    for seed in 0..50 {
        let spec = SceneSpec {
            n_persons: 15,
            n_views: 4,
            noise_px: 2.0,
            min_spacing: 0.4,
            swap_rate: 0.05,
            seed: 7000 + seed,
            ..SceneSpec::default()
        };
        let gt = generate(&spec, &schema).map_err(|e| e.to_string())?;
        let m = match_frame(0, &gt.views(), &ground_maps(&gt), &schema, &MatchingConfig::default()).map_err(|e| e.to_string())?;
        ours.push(metrics::matching_precision(&m.tracks, &gt.correspondence).map_err(|e| e.to_string())?);
        base.push(metrics::matching_precision(&epipolar_tracks(&gt), &gt.correspondence).map_err(|e| e.to_string())?);
    }
    let (p, b) = (mean(&ours), mean(&base));
    ensure(p >= 0.95 && p > b, format!("50 scenes of 15 persons: feet precision {p:.4} vs epipolar {b:.4} (need >= 0.95 and above baseline)"))
}

// ---------------------------------------------------------- 7: complexity

fn criterion_complexity() -> Outcome {
    let ns = [8usize, 16, 32, 64];
    let csv = timing::to_csv(&timing::bench_sweep(&ns, 5, 7));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("bench.csv");
    std::fs::write(&path, &csv).map_err(|e| e.to_string())?;
    // read the figures back from the CSV as a user would
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let mut rows: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| e.to_string());
        rows.insert(f[0].parse().map_err(|e: std::num::ParseIntError| e.to_string())?, (num(1)?, num(2)?));
    }
    let ratio = rows[&32].0 / rows[&16].0;
    let times: Vec<f64> = ns.iter().map(|n| rows[n].1).collect();
    let slope = timing::loglog_slope(&ns, &times);
    ensure(ratio <= 10.0 && slope < 4.0, format!("T_lap(32)/T_lap(16) = {ratio:.2} (limit 10); match-pair log-log slope {slope:.2} (limit 4)"))
}

// ------------------------------------------------------ 8: plane transfer

fn random_camera(id: usize, rng: &mut ChaCha8Rng) -> CameraView {
    let radius = rng.random_range(6.0..15.0);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let eye = Point3::new(radius * angle.cos(), radius * angle.sin(), rng.random_range(2.0..6.0));
    let target = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0));
    CameraView::look_at(id, rng.random_range(800.0..1500.0), &eye, &target, &Vector3::z(), 1920, 1080).expect("valid camera")
}

fn criterion_plane_transfer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut transfer: f64 = 0.0;
    for _ in 0..100 {
        let (a, b) = (random_camera(0, &mut rng), random_camera(1, &mut rng));
        let h = ground_homography_from_cameras(&a, &b).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let x = Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0);
            let (pa, pb) = (a.project(&x).unwrap(), b.project(&x).unwrap());
            transfer = transfer.max((h.rectify(&pb).map_err(|e| e.to_string())? - pa).norm());
        }
    }
    let mut chain: f64 = 0.0;
    for _ in 0..100 {
        let cams: Vec<CameraView> = (0..3).map(|i| random_camera(i, &mut rng)).collect();
        let hab = ground_homography_from_cameras(&cams[0], &cams[1]).map_err(|e| e.to_string())?;
        let hbc = ground_homography_from_cameras(&cams[1], &cams[2]).map_err(|e| e.to_string())?;
        let hac = ground_homography_from_cameras(&cams[0], &cams[2]).map_err(|e| e.to_string())?;
        chain = chain.max(compose_check(&hab, &hbc, &hac).map_err(|e| e.to_string())?);
    }
    ensure(
        transfer < 1e-9 && chain < 1e-9,
        format!("10^4 points: max transfer error {transfer:.2e} px; 100 triples: max compose_check {chain:.2e}"),
    )
}

// ----------------------------------------------------------- 9: determinism

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_crowdpose3d")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn synth_then_run(dir: &Path, tag: &str, threads: &str) -> Result<Vec<u8>, String> {
    let scene = dir.join(format!("scene_{tag}"));
    let result = dir.join(format!("run_{tag}"));
    let s = scene.to_str().unwrap();
    cli(&["synth", "--seed", "7", "--no-eval", "--out", s])?;
    let input = |f: &str| scene.join("input").join(f).to_string_lossy().into_owned();
    cli(&[
        "run",
        "--calib",
        &input("calib.json"),
        "--detections",
        &input("detections.json"),
        "--homographies",
        &input("homographies.json"),
        "--threads",
        threads,
        "--out",
        result.to_str().unwrap(),
    ])?;
    std::fs::read(result.join("poses.json")).map_err(|e| e.to_string())
}

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = synth_then_run(dir.path(), "a", "1")?;
    let second = synth_then_run(dir.path(), "b", "4")?;
    let persons = serde_json::from_slice::<serde_json::Value>(&first)
        .ok()
        .and_then(|v| v.get(0)?.get("persons")?.as_array().map(|a| a.len()))
        .unwrap_or(0);
    ensure(
        first == second && persons > 0,
        format!("two runs ({} bytes, {persons} persons, 1 vs 4 threads): {}", first.len(), if first == second { "identical" } else { "differ" }),
    )
}

// ------------------------------------------------------- 10: metric oracles

// Default-schema groupings, written out independently of the library.
const JOINT_GROUP: [&str; 23] = [
    "head", "head", "head", "head", "head", "shoulder", "shoulder", "elbow", "elbow", "wrist", "wrist", "hip", "hip",
    "knee", "knee", "foot", "foot", "foot", "foot", "foot", "foot", "foot", "foot",
];
const BONE_GROUP: [&str; 22] = [
    "head", "head", "head", "head", "torso", "torso", "upper_arms", "lower_arms", "upper_arms", "lower_arms", "torso",
    "torso", "upper_legs", "lower_legs", "upper_legs", "lower_legs", "feet", "feet", "feet", "feet", "feet", "feet",
];
const HIPS: [usize; 2] = [11, 12];

/// Ground-truth persons far apart, predictions near their own person, plus
/// stray predictions. Returns `(pred, gt, partner)` with `partner[k]` the
/// prediction derived from ground-truth person `k`.
fn random_poses(rng: &mut ChaCha8Rng) -> (Vec<Pose3D>, Vec<Pose3D>, Vec<Option<usize>>) {
    let noise = Normal::new(0.0, 0.05).unwrap();
    let n = rng.random_range(1..=5);
    let mut gt = Vec::new();
    let mut pred = Vec::new();
    let mut origin = Vec::new();
    for k in 0..n {
        let base = Vector3::new(3.0 * k as f64, rng.random_range(-1.0..1.0), 0.0);
        let joints: Vec<Option<Point3>> = (0..23)
            .map(|j| {
                let keep = HIPS.contains(&j) || rng.random_bool(0.9);
                keep.then(|| {
                    Point3::from(base + Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(0.0..1.7)))
                })
            })
            .collect();
        if rng.random_bool(0.85) {
            let p = joints
                .iter()
                .enumerate()
                .map(|(j, g)| {
                    let keep = HIPS.contains(&j) || rng.random_bool(0.9);
                    g.filter(|_| keep).map(|g| g + Vector3::from_fn(|_, _| noise.sample(rng)))
                })
                .collect();
            pred.push(Pose3D { person_id: 0, joints: p, per_joint_views: vec![2; 23], nll: 0.0, reproj_rms: 0.0 });
            origin.push(Some(k));
        }
        gt.push(Pose3D { person_id: k, joints, per_joint_views: vec![0; 23], nll: 0.0, reproj_rms: 0.0 });
    }
    if rng.random_bool(0.3) {
        let far: Vec<Option<Point3>> = (0..23).map(|_| Some(Point3::new(0.0, 100.0, rng.random_range(0.0..1.7)))).collect();
        pred.push(Pose3D { person_id: 0, joints: far, per_joint_views: vec![2; 23], nll: 0.0, reproj_rms: 0.0 });
        origin.push(None);
    }
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.shuffle(rng);
    let pred: Vec<Pose3D> = order.iter().map(|&i| pred[i].clone()).collect();
    let mut partner = vec![None; n];
    for (new, &old) in order.iter().enumerate() {
        if let Some(k) = origin[old] {
            partner[k] = Some(new);
        }
    }
    (pred, gt, partner)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn oracle_mpjpe(pred: &[Pose3D], gt: &[Pose3D], partner: &[Option<usize>]) -> Option<(f64, BTreeMap<String, f64>, usize)> {
    let mut all = Vec::new();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (k, g) in gt.iter().enumerate() {
        let Some(i) = partner[k] else { continue };
        for j in 0..23 {
            if let Some(e) = joint_error(&pred[i].joints[j], &g.joints[j]) {
                all.push(e * 1000.0);
                groups.entry(JOINT_GROUP[j].to_string()).or_default().push(e * 1000.0);
            }
        }
    }
    (!all.is_empty()).then(|| (mean(&all), groups.into_iter().map(|(k, v)| (k, mean(&v))).collect(), all.len()))
}

fn oracle_pcp(pred: &[Pose3D], gt: &[Pose3D], partner: &[Option<usize>], schema: &SkeletonSchema) -> (f64, BTreeMap<String, f64>) {
    let mut groups: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let (mut ok, mut total) = (0.0, 0.0);
    for (k, g) in gt.iter().enumerate() {
        for (b, &(ja, jb)) in schema.bones().iter().enumerate() {
            let (Some(ga), Some(gb)) = (g.joints[ja], g.joints[jb]) else { continue };
            let len = (ga - gb).norm();
            let correct = partner[k].is_some_and(|i| {
                let p = &pred[i];
                matches!((p.joints[ja], p.joints[jb]), (Some(pa), Some(pb)) if (pa - ga).norm() <= 0.5 * len && (pb - gb).norm() <= 0.5 * len)
            });
            let c = if correct { 1.0 } else { 0.0 };
            ok += c;
            total += 1.0;
            let slot = groups.entry(BONE_GROUP[b].to_string()).or_default();
            slot.0 += c;
            slot.1 += 1.0;
        }
    }
    (100.0 * ok / total, groups.into_iter().map(|(k, (c, t))| (k, 100.0 * c / t)).collect())
}

fn maps_close(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|((ka, va), (kb, vb))| ka == kb && close(*va, *vb))
}

fn random_oks_images(rng: &mut ChaCha8Rng, m: usize) -> Vec<OksImage> {
    let n_images = rng.random_range(1..=3);
    let mut images = Vec::new();
    for _ in 0..n_images {
        let mut im = OksImage::default();
        for _ in 0..rng.random_range(0..=4) {
            let side: f64 = rng.random_range(15.0..150.0);
            let origin = nalgebra::Vector2::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..600.0));
            let keypoints: Vec<Option<Point2>> = (0..m)
                .map(|_| rng.random_bool(0.8).then(|| Point2::new(rng.random_range(0.0..side), rng.random_range(0.0..side)) + origin))
                .collect();
            let truth = OksTruth { keypoints, area: side * side * rng.random_range(0.5..1.0) };
            if rng.random_bool(0.8) {
                let scale = side * rng.random_range(0.0..0.3);
                let kp = truth
                    .keypoints
                    .iter()
                    .map(|k| {
                        let k = k.unwrap_or(Point2::new(origin.x, origin.y));
                        rng.random_bool(0.9)
                            .then(|| k + nalgebra::Vector2::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
                    })
                    .collect();
                im.predictions.push(OksPrediction { keypoints: kp, score: rng.random_range(0.0..1.0) });
            }
            im.truths.push(truth);
        }
        for _ in 0..rng.random_range(0..=2) {
            let kp = (0..m).map(|_| Some(Point2::new(rng.random_range(0.0..1100.0), rng.random_range(0.0..700.0)))).collect();
            im.predictions.push(OksPrediction { keypoints: kp, score: rng.random_range(0.0..1.0) });
        }
        images.push(im);
    }
    if images.iter().all(|im| im.truths.is_empty()) {
        images[0].truths.push(OksTruth { keypoints: vec![Some(Point2::new(5.0, 5.0)); m], area: 400.0 });
    }
    images
}

fn oracle_oks(pred: &[Option<Point2>], truth: &OksTruth, sigmas: &[f64]) -> Option<f64> {
    let terms: Vec<f64> = truth
        .keypoints
        .iter()
        .enumerate()
        .filter_map(|(j, g)| {
            let g = (*g)?;
            let var = (2.0 * sigmas[j]).powi(2);
            Some(match pred[j] {
                Some(p) => (-((p.x - g.x).powi(2) + (p.y - g.y).powi(2)) / var / truth.area / 2.0).exp(),
                None => 0.0,
            })
        })
        .collect();
    (!terms.is_empty()).then(|| terms.iter().sum::<f64>() / terms.len() as f64)
}

/// COCO evaluation of one threshold and area range: per-image greedy
/// matching, then the 101-point interpolated precision. Predictions carry
/// no area, so unmatched ones are false positives in every range.
fn oracle_eval(images: &[OksImage], sigmas: &[f64], t: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let ignored = |a: f64| a < lo || a > hi;
    let mut scored: Vec<(f64, bool)> = Vec::new();
    let mut npig = 0;
    for im in images {
        let mut gts: Vec<usize> = (0..im.truths.len()).filter(|&k| !ignored(im.truths[k].area)).collect();
        npig += gts.len();
        gts.extend((0..im.truths.len()).filter(|&k| ignored(im.truths[k].area)));
        let mut dts: Vec<usize> = (0..im.predictions.len()).collect();
        dts.sort_by(|&a, &b| im.predictions[b].score.partial_cmp(&im.predictions[a].score).unwrap());
        let mut gtm = vec![false; im.truths.len()];
        for d in dts {
            let mut best = t.min(1.0 - 1e-10);
            let mut m: Option<usize> = None;
            for &g in &gts {
                if gtm[g] {
                    continue;
                }
                if let Some(mm) = m {
                    if !ignored(im.truths[mm].area) && ignored(im.truths[g].area) {
                        break;
                    }
                }
                let Some(o) = oracle_oks(&im.predictions[d].keypoints, &im.truths[g], sigmas) else { continue };
                if o < best {
                    continue;
                }
                best = o;
                m = Some(g);
            }
            match m {
                Some(g) => {
                    gtm[g] = true;
                    if !ignored(im.truths[g].area) {
                        scored.push((im.predictions[d].score, true));
                    }
                }
                None => scored.push((im.predictions[d].score, false)),
            }
        }
    }
    if npig == 0 {
        return None;
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut rc = Vec::new();
    let mut pr = Vec::new();
    for &(_, hit) in &scored {
        if hit {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        rc.push(tp / npig as f64);
        pr.push(tp / (tp + fp));
    }
    let ap = (0..=100)
        .map(|i| {
            let r = i as f64 / 100.0;
            // interpolated precision: best precision at any recall >= r
            (0..rc.len()).filter(|&k| rc[k] >= r).map(|k| pr[k]).fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 101.0;
    Some((ap, rc.last().copied().unwrap_or(0.0)))
}

fn oracle_report(images: &[OksImage], sigmas: &[f64]) -> [Option<f64>; 10] {
    let ts: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
    let sweep = |lo: f64, hi: f64| -> Option<Vec<(f64, f64)>> { ts.iter().map(|&t| oracle_eval(images, sigmas, t, lo, hi)).collect() };
    let avg = |v: &Option<Vec<(f64, f64)>>, ap: bool| {
        v.as_ref().map(|v| 100.0 * v.iter().map(|x| if ap { x.0 } else { x.1 }).sum::<f64>() / v.len() as f64)
    };
    let all = sweep(0.0, f64::INFINITY);
    let med = sweep(32.0 * 32.0, 96.0 * 96.0);
    let large = sweep(96.0 * 96.0, f64::INFINITY);
    let at = |i: usize, ap: bool| all.as_ref().map(|v| 100.0 * if ap { v[i].0 } else { v[i].1 });
    [
        avg(&all, true),
        at(0, true),
        at(5, true),
        avg(&med, true),
        avg(&large, true),
        avg(&all, false),
        at(0, false),
        at(5, false),
        avg(&med, false),
        avg(&large, false),
    ]
}

fn report_fields(r: &OksReport) -> [Option<f64>; 10] {
    [Some(r.ap), Some(r.ap50), Some(r.ap75), r.ap_medium, r.ap_large, Some(r.ar), Some(r.ar50), Some(r.ar75), r.ar_medium, r.ar_large]
}

/// Tracks built from the truth with random swaps and stray detections.
fn random_tracks(rng: &mut ChaCha8Rng) -> (PersonTrackSet, BTreeMap<(usize, usize), usize>) {
    let views = rng.random_range(2..=4);
    let persons = rng.random_range(1..=6);
    let mut gt = BTreeMap::new();
    let mut tracks: Vec<PersonTrack> = (0..persons).map(|_| PersonTrack { members: BTreeMap::new(), closed: false }).collect();
    for v in 0..views {
        let mut dets: Vec<Option<usize>> = (0..persons).filter(|_| rng.random_bool(0.8)).map(Some).collect();
        if rng.random_bool(0.3) {
            dets.push(None);
        }
        dets.shuffle(rng);
        for (d, p) in dets.iter().enumerate() {
            if let Some(p) = p {
                gt.insert((v, d), *p);
            }
            let mut slot = p.unwrap_or_else(|| rng.random_range(0..persons));
            if rng.random_bool(0.2) {
                slot = rng.random_range(0..persons);
            }
            tracks[slot].members.entry(v).or_insert(d);
        }
    }
    (PersonTrackSet { persons: tracks, dropped_links: 0 }, gt)
}

fn oracle_precision(tracks: &PersonTrackSet, gt: &BTreeMap<(usize, usize), usize>) -> Option<f64> {
    let pairs = |n: usize| (n * n.saturating_sub(1) / 2) as f64;
    let (mut correct, mut total) = (0.0, 0.0);
    for t in &tracks.persons {
        total += pairs(t.members.len());
        let mut by_person: HashMap<usize, usize> = HashMap::new();
        for (v, d) in &t.members {
            if let Some(p) = gt.get(&(*v, *d)) {
                *by_person.entry(*p).or_default() += 1;
            }
        }
        correct += by_person.values().map(|&c| pairs(c)).sum::<f64>();
    }
    (total > 0.0).then(|| correct / total)
}

fn criterion_metric_oracles() -> Outcome {
    let schema = SkeletonSchema::default();
    let cfg = EvalConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures: Vec<String> = Vec::new();
    for i in 0..50 {
        let (pred, gt, partner) = random_poses(&mut rng);
        let lib = metrics::mpjpe(&pred, &gt, &schema, &cfg).ok();
        let ok = match (lib, oracle_mpjpe(&pred, &gt, &partner)) {
            (None, None) => true,
            (Some(r), Some((overall, groups, n))) => close(r.overall_mm, overall) && maps_close(&r.per_group_mm, &groups) && r.joints == n,
            _ => false,
        };
        if !ok {
            failures.push(format!("mpjpe #{i}"));
        }
        let lib = metrics::pcp(&pred, &gt, &schema, &cfg).ok();
        let ok = match lib {
            Some(r) => {
                let (overall, groups) = oracle_pcp(&pred, &gt, &partner, &schema);
                close(r.overall, overall) && maps_close(&r.per_group, &groups)
            }
            None => partner.iter().all(|p| p.is_none()),
        };
        if !ok {
            failures.push(format!("pcp #{i}"));
        }
    }
    let sigmas = cfg.sigmas_for(schema.num_joints()).map_err(|e| e.to_string())?;
    for i in 0..50 {
        let images = random_oks_images(&mut rng, schema.num_joints());
        let lib = report_fields(&metrics::oks_ap_ar(&images, &sigmas).map_err(|e| e.to_string())?);
        let want = oracle_report(&images, &sigmas);
        let ok = lib.iter().zip(&want).all(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => close(*a, *b),
            (None, None) => true,
            _ => false,
        });
        if !ok {
            failures.push(format!("oks #{i}: {lib:?} vs {want:?}"));
        }
    }
    for i in 0..50 {
        let (tracks, gt) = random_tracks(&mut rng);
        let ok = match (metrics::matching_precision(&tracks, &gt).ok(), oracle_precision(&tracks, &gt)) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        if !ok {
            failures.push(format!("matching_precision #{i}"));
        }
    }
    ensure(failures.is_empty(), format!("4 x 50 instances, {} disagreements {:?}", failures.len(), failures))
}

// -------------------------------------------------------------------- main

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("LAP optimality vs brute force", Duration::from_secs(30), criterion_lap),
        ("Jacobian vs central differences", Duration::from_secs(10), criterion_jacobian),
        ("noiseless recovery", Duration::from_secs(60), criterion_noiseless),
        ("MAP beats DLT", Duration::from_secs(300), criterion_map_vs_dlt),
        ("MLE stage ablation", Duration::from_secs(300), criterion_mle_ablation),
        ("feet matching beats epipolar baseline", Duration::from_secs(300), criterion_matching_vs_epipolar),
        ("matching complexity", Duration::from_secs(120), criterion_complexity),
        ("homography plane transfer", Duration::from_secs(10), criterion_plane_transfer),
        ("deterministic synth -> run", Duration::from_secs(30), criterion_determinism),
        ("metric oracles", Duration::from_secs(30), criterion_metric_oracles),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s budget", budget.as_secs())),
            Err(d) => (false, d),
        };
        failed += !pass as usize;
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
