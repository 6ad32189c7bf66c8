//! Negative log posterior of one person's 3D joints.
//!
//! Residuals, in row order:
//! - two per (joint, view) observation: `(q - proj(P, Q)) / sigma`;
//! - one per bone with both endpoints active: `(b_ref - |Qa - Qb|) / sigma_l`.
//!
//! The value is `0.5 * |r|^2`; Gaussian normalizing constants are omitted.

use nalgebra::{DMatrix, DVector};

use super::ReconstructError;
use crate::detection::Detection2D;
use crate::geometry::{CameraView, Point2, Point3, HOMOGENEOUS_EPS};
use crate::skeleton::SkeletonSchema;

/// Bones shorter than this have no defined direction.
pub const MIN_BONE_LENGTH: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Observation<'a> {
    joint: usize,
    camera: &'a CameraView,
    point: Point2,
    sigma: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub residuals: DVector<f64>,
    /// Rows match `residuals`; columns are the full `3M` coordinates.
    pub jacobian: DMatrix<f64>,
    /// Number of leading rows that are reprojection residuals.
    pub n_reprojection_rows: usize,
}

impl Evaluation {
    /// Value of the likelihood part alone.
    pub fn likelihood_value(&self) -> f64 {
        0.5 * self.residuals.rows(0, self.n_reprojection_rows).norm_squared()
    }

    /// `J^T r`.
    pub fn gradient(&self) -> DVector<f64> {
        self.jacobian.tr_mul(&self.residuals)
    }
}

/// One person's observations bound to a skeleton. Joints marked active are
/// optimization variables; the others are ignored entirely.
#[derive(Debug, Clone)]
pub struct PersonObjective<'a> {
    schema: &'a SkeletonSchema,
    observations: Vec<Observation<'a>>,
    active: Vec<bool>,
    include_prior: bool,
}

impl<'a> PersonObjective<'a> {
    /// Active joints default to those seen in at least two views.
    pub fn new(views: &[(&'a CameraView, &'a Detection2D)], schema: &'a SkeletonSchema) -> Self {
        let m = schema.num_joints();
        let mut observations = Vec::new();
        let mut counts = vec![0usize; m];
        for (cam, det) in views {
            for (j, kp) in det.joints.iter().enumerate().take(m) {
                if let Some(kp) = kp {
                    observations.push(Observation { joint: j, camera: cam, point: kp.point, sigma: kp.sigma });
                    counts[j] += 1;
                }
            }
        }
        let active = counts.iter().map(|&c| c >= 2).collect();
        Self { schema, observations, active, include_prior: true }
    }

    pub fn with_active(mut self, active: Vec<bool>) -> Self {
        assert_eq!(active.len(), self.schema.num_joints());
        self.active = active;
        self
    }

    pub fn with_prior(mut self, include_prior: bool) -> Self {
        self.include_prior = include_prior;
        self
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn schema(&self) -> &SkeletonSchema {
        self.schema
    }

    /// Number of views observing each joint.
    pub fn view_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.schema.num_joints()];
        for o in &self.observations {
            counts[o.joint] += 1;
        }
        counts
    }

    /// Observations of joint `j` as `(camera, point)`.
    pub fn observations_of(&self, j: usize) -> Vec<(&'a CameraView, Point2)> {
        self.observations.iter().filter(|o| o.joint == j).map(|o| (o.camera, o.point)).collect()
    }

    fn active_bones(&self) -> impl Iterator<Item = (usize, (usize, usize))> + '_ {
        self.schema
            .bones()
            .iter()
            .copied()
            .enumerate()
            .filter(move |&(_, (a, b))| self.include_prior && self.active[a] && self.active[b])
    }

    pub fn num_residuals(&self) -> usize {
        2 * self.observations.iter().filter(|o| self.active[o.joint]).count() + self.active_bones().count()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation, ReconstructError> {
        let m = self.schema.num_joints();
        assert_eq!(x.len(), 3 * m, "expected {} coordinates", 3 * m);
        let rows = self.num_residuals();
        let mut r = DVector::zeros(rows);
        let mut jac = DMatrix::zeros(rows, 3 * m);
        let mut row = 0;
        for o in self.observations.iter().filter(|o| self.active[o.joint]) {
            let c = 3 * o.joint;
            let p = o.camera.projection();
            let h = [0, 1, 2].map(|k| p[(k, 0)] * x[c] + p[(k, 1)] * x[c + 1] + p[(k, 2)] * x[c + 2] + p[(k, 3)]);
            if h[2].abs() < HOMOGENEOUS_EPS {
                return Err(ReconstructError::PointAtInfinity);
            }
            let proj = [h[0] / h[2], h[1] / h[2]];
            let q = [o.point.x, o.point.y];
            for k in 0..2 {
                r[row] = (q[k] - proj[k]) / o.sigma;
                for d in 0..3 {
                    jac[(row, c + d)] = -(p[(k, d)] - proj[k] * p[(2, d)]) / (h[2] * o.sigma);
                }
                row += 1;
            }
        }
        let n_reprojection_rows = row;
        for (bi, (a, b)) in self.active_bones() {
            let (ca, cb) = (3 * a, 3 * b);
            let d = [x[ca] - x[cb], x[ca + 1] - x[cb + 1], x[ca + 2] - x[cb + 2]];
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if len < MIN_BONE_LENGTH {
                return Err(ReconstructError::ZeroLengthBone { bone: bi, joint_a: a, joint_b: b });
            }
            let sigma = self.schema.sigma_bone()[bi];
            r[row] = (self.schema.b_ref()[bi] - len) / sigma;
            for k in 0..3 {
                let g = d[k] / (len * sigma);
                jac[(row, ca + k)] = -g;
                jac[(row, cb + k)] = g;
            }
            row += 1;
        }
        Ok(Evaluation { value: 0.5 * r.norm_squared(), residuals: r, jacobian: jac, n_reprojection_rows })
    }
}

/// Negative log posterior (up to constants), residuals and analytic
/// Jacobian of a stacked `3M` joint vector, with joints seen in two or more
/// views active.
pub fn neg_log_posterior(
    x: &[f64],
    views: &[(&CameraView, &Detection2D)],
    schema: &SkeletonSchema,
) -> Result<Evaluation, ReconstructError> {
    PersonObjective::new(views, schema).evaluate(x)
}

/// Stacks joints into a `3M` vector, absent joints as zeros.
pub fn stack_joints(joints: &[Option<Point3>]) -> Vec<f64> {
    joints.iter().flat_map(|j| j.map(|p| [p.x, p.y, p.z]).unwrap_or([0.0; 3])).collect()
}
