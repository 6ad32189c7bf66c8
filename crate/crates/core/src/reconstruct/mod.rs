//! Per-person 3D reconstruction.
//!
//! Three stages: linear triangulation of every joint seen in two or more
//! views, an optional per-joint maximum-likelihood refinement of the
//! reprojection error, and a joint MAP refinement that adds the bone-length
//! prior. Both refinements use the Levenberg-Marquardt trust region in
//! [`lm`].

pub mod lm;
mod objective;
mod triangulate;

pub use objective::{neg_log_posterior, stack_joints, Evaluation, PersonObjective, MIN_BONE_LENGTH};
pub use triangulate::{triangulate_dlt, DLT_DEGENERACY};

pub use crate::detection::{sigma_model, SigmaModel};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{Detection2D, ViewDetections};
use crate::exec::{self, Execution};
use crate::geometry::{CameraView, GeometryError, Point2, Point3};
use crate::matching::PersonTrackSet;
use crate::skeleton::SkeletonSchema;
use lm::{levenberg_marquardt, LeastSquaresProblem, LmReport, Termination};

/// Gradient infinity-norm above which hitting `max_iters` counts as a
/// failure to converge.
pub const NONCONVERGENCE_GRADIENT: f64 = 1e-4;

/// Perturbation applied to a joint sitting on top of its bone partner.
const BONE_REPAIR_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error("triangulation needs at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("view {0} observed twice")]
    DuplicateView(usize),
    #[error("rays are nearly parallel")]
    DegenerateGeometry,
    #[error("point is at infinity")]
    PointAtInfinity,
    #[error("bone {bone} ({joint_a}-{joint_b}) has zero length")]
    ZeroLengthBone { bone: usize, joint_a: usize, joint_b: usize },
    #[error("no joint is observed in two or more views")]
    NoTriangulableJoint,
    #[error("track references view {view} detection {detection}, which does not exist")]
    InvalidTrack { view: usize, detection: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub run_mle_stage: bool,
    /// Also estimate joints seen in a single view when a bone ties them to
    /// a triangulated joint.
    pub allow_prior_completion: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            gradient_tol: 1e-10,
            step_tol: 1e-10,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 3.0,
            run_mle_stage: true,
            allow_prior_completion: false,
        }
    }
}

/// One person's reconstructed joints.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub person_id: usize,
    pub joints: Vec<Option<Point3>>,
    pub per_joint_views: Vec<usize>,
    /// Final negative log posterior, constants dropped.
    pub nll: f64,
    /// RMS reprojection distance in pixels over the observations used.
    pub reproj_rms: f64,
}

impl Pose3D {
    /// A ground-truth style pose with every joint present.
    pub fn from_points(person_id: usize, points: Vec<Point3>) -> Self {
        let m = points.len();
        Self { person_id, joints: points.into_iter().map(Some).collect(), per_joint_views: vec![0; m], nll: 0.0, reproj_rms: 0.0 }
    }

    pub fn num_present(&self) -> usize {
        self.joints.iter().filter(|j| j.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub termination: Termination,
    pub gradient_inf: f64,
    pub converged: bool,
    /// Non-fatal events such as dropped joints.
    pub events: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PersonSolution {
    pub pose: Pose3D,
    /// Linear triangulation used to start the refinement.
    pub dlt: Vec<Option<Point3>>,
    /// Per-joint maximum-likelihood estimates, when that stage ran.
    pub mle: Option<Vec<Option<Point3>>>,
    pub diagnostics: SolveDiagnostics,
    /// Objective values of the MAP stage after each accepted step.
    pub map_history: Vec<f64>,
}

/// Restricts a [`PersonObjective`] to a subset of joints; the rest stay at
/// `base`.
struct ActiveProblem<'o, 'a> {
    objective: &'o PersonObjective<'a>,
    joints: Vec<usize>,
    base: Vec<f64>,
}

impl ActiveProblem<'_, '_> {
    fn expand(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut full = self.base.clone();
        for (k, &j) in self.joints.iter().enumerate() {
            full[3 * j..3 * j + 3].copy_from_slice(&x.as_slice()[3 * k..3 * k + 3]);
        }
        full
    }

    fn reduce(&self, full: &[f64]) -> DVector<f64> {
        DVector::from_iterator(3 * self.joints.len(), self.joints.iter().flat_map(|&j| full[3 * j..3 * j + 3].iter().copied()))
    }
}

impl LeastSquaresProblem for ActiveProblem<'_, '_> {
    type Error = ReconstructError;

    fn evaluate(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), ReconstructError> {
        let e = self.objective.evaluate(&self.expand(x))?;
        let cols: Vec<usize> = self.joints.iter().flat_map(|&j| 3 * j..3 * j + 3).collect();
        let jac = e.jacobian.select_columns(cols.iter());
        Ok((e.residuals, jac))
    }

    fn repair(&self, x: &mut DVector<f64>, err: &ReconstructError) -> bool {
        let ReconstructError::ZeroLengthBone { joint_b, .. } = err else { return false };
        match self.joints.iter().position(|&j| j == *joint_b) {
            Some(k) => {
                x[3 * k] += BONE_REPAIR_STEP;
                true
            }
            None => false,
        }
    }
}

/// Point on the viewing ray of `pixel` closest to `anchor`.
fn closest_on_ray(camera: &CameraView, pixel: &Point2, anchor: &Point3) -> Option<Point3> {
    let center = camera.center().ok()?;
    let m = camera.projection().fixed_view::<3, 3>(0, 0).into_owned();
    let dir = m.try_inverse()? * Vector3::new(pixel.x, pixel.y, 1.0);
    let dir = dir.try_normalize(0.0)?;
    let t = (anchor - center).dot(&dir);
    Some(center + dir * t.max(0.0))
}

fn reprojection_rms(objective: &PersonObjective<'_>, joints: &[Option<Point3>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (j, q) in joints.iter().enumerate() {
        let Some(q) = q else { continue };
        for (cam, p) in objective.observations_of(j) {
            if let Ok(proj) = cam.project(q) {
                sum += (proj - p).norm_squared();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn unstack(x: &[f64], active: &[bool]) -> Vec<Option<Point3>> {
    active
        .iter()
        .enumerate()
        .map(|(j, &a)| a.then(|| Point3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2])))
        .collect()
}

/// Reconstructs one person from its per-view detections.
pub fn solve_person(
    views: &[(&CameraView, &Detection2D)],
    schema: &SkeletonSchema,
    cfg: &SolverConfig,
) -> Result<PersonSolution, ReconstructError> {
    let m = schema.num_joints();
    let objective = PersonObjective::new(views, schema);
    let counts = objective.view_counts();
    let mut events = Vec::new();

    let mut active: Vec<bool> = counts.iter().map(|&c| c >= 2).collect();
    let mut x = vec![0.0; 3 * m];
    for j in 0..m {
        if !active[j] {
            continue;
        }
        match triangulate_dlt(&objective.observations_of(j)) {
            Ok(p) => x[3 * j..3 * j + 3].copy_from_slice(&[p.x, p.y, p.z]),
            Err(e) => {
                active[j] = false;
                events.push(format!("joint {j} dropped: {e}"));
            }
        }
    }
    if !active.iter().any(|&a| a) {
        return Err(ReconstructError::NoTriangulableJoint);
    }
    let dlt = unstack(&x, &active);

    if cfg.allow_prior_completion {
        let mut completed = active.clone();
        for &(a, b) in schema.bones() {
            for (single, anchor) in [(a, b), (b, a)] {
                if counts[single] == 1 && active[anchor] && !completed[single] {
                    let (cam, pixel) = objective.observations_of(single)[0];
                    let q = Point3::new(x[3 * anchor], x[3 * anchor + 1], x[3 * anchor + 2]);
                    if let Some(p) = closest_on_ray(cam, &pixel, &q) {
                        x[3 * single..3 * single + 3].copy_from_slice(&[p.x, p.y, p.z]);
                        completed[single] = true;
                        events.push(format!("joint {single} completed from a single view"));
                    }
                }
            }
        }
        active = completed;
    }

    let mle = if cfg.run_mle_stage {
        for j in (0..m).filter(|&j| active[j] && counts[j] >= 2) {
            let mut only = vec![false; m];
            only[j] = true;
            let single = objective.clone().with_active(only).with_prior(false);
            let problem = ActiveProblem { objective: &single, joints: vec![j], base: x.clone() };
            let rep = levenberg_marquardt(&problem, problem.reduce(&x), cfg)?;
            x[3 * j..3 * j + 3].copy_from_slice(rep.x.as_slice());
        }
        Some(unstack(&x, &active))
    } else {
        None
    };

    let map_objective = objective.with_active(active.clone());
    let joints: Vec<usize> = (0..m).filter(|&j| active[j]).collect();
    let problem = ActiveProblem { objective: &map_objective, joints, base: x.clone() };
    let rep: LmReport = levenberg_marquardt(&problem, problem.reduce(&x), cfg)?;
    let x = problem.expand(&rep.x);
    let converged = !(rep.termination == Termination::MaxIterations && rep.gradient_inf > NONCONVERGENCE_GRADIENT);
    if !converged {
        events.push(format!("no convergence after {} iterations, gradient {:e}", rep.iterations, rep.gradient_inf));
    }

    let joints = unstack(&x, &active);
    let reproj_rms = reprojection_rms(&map_objective, &joints);
    let per_joint_views = counts.iter().zip(&active).map(|(&c, &a)| if a { c } else { c.min(1) }).collect();
    Ok(PersonSolution {
        pose: Pose3D { person_id: 0, joints, per_joint_views, nll: rep.value, reproj_rms },
        dlt,
        mle,
        diagnostics: SolveDiagnostics {
            iterations: rep.iterations,
            termination: rep.termination,
            gradient_inf: rep.gradient_inf,
            converged,
            events,
        },
        map_history: rep.accepted_values,
    })
}

/// One solver event for the diagnostics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverEvent {
    pub person: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SceneReconstruction {
    pub poses: Vec<Pose3D>,
    pub events: Vec<SolverEvent>,
}

/// Gathers `(camera, detection)` pairs for one track.
pub fn track_views<'a>(
    members: &BTreeMap<usize, usize>,
    views: &'a [ViewDetections],
) -> Result<Vec<(&'a CameraView, &'a Detection2D)>, ReconstructError> {
    members
        .iter()
        .map(|(&view, &detection)| {
            views
                .iter()
                .find(|v| v.camera.id() == view)
                .and_then(|v| v.detections.get(detection).map(|d| (&v.camera, d)))
                .ok_or(ReconstructError::InvalidTrack { view, detection })
        })
        .collect()
}

/// Solves every tracked person independently. Persons that cannot be
/// triangulated are dropped and reported in `events`; `person_id` is the
/// track index.
pub fn reconstruct_scene(
    tracks: &PersonTrackSet,
    views: &[ViewDetections],
    schema: &SkeletonSchema,
    cfg: &SolverConfig,
    exec: Execution,
) -> SceneReconstruction {
    let results = exec::map_range(exec, tracks.persons.len(), |i| {
        track_views(&tracks.persons[i].members, views).and_then(|v| solve_person(&v, schema, cfg))
    });
    let mut out = SceneReconstruction::default();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(mut sol) => {
                sol.pose.person_id = i;
                for e in sol.diagnostics.events.drain(..) {
                    out.events.push(SolverEvent { person: i, kind: "solve".into(), message: e });
                }
                out.events.push(SolverEvent {
                    person: i,
                    kind: if sol.diagnostics.converged { "converged" } else { "non_convergence" }.into(),
                    message: format!(
                        "{:?} after {} iterations, nll {:.6e}",
                        sol.diagnostics.termination, sol.diagnostics.iterations, sol.pose.nll
                    ),
                });
                out.poses.push(sol.pose);
            }
            Err(e) => {
                log::debug!("person {i} dropped: {e}");
                out.events.push(SolverEvent { person: i, kind: "dropped".into(), message: e.to_string() });
            }
        }
    }
    out
}
