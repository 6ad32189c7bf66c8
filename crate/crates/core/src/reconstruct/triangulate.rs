use nalgebra::DMatrix;

use super::ReconstructError;
use crate::geometry::{null_vector, CameraView, Point2, Point3, HOMOGENEOUS_EPS};

/// Relative gap between the two smallest singular values of the DLT system
/// below which the rays are treated as parallel.
pub const DLT_DEGENERACY: f64 = 1e-10;

/// Linear triangulation: two rows `x P3 - P1`, `y P3 - P2` per view, each
/// scaled to unit norm, solved for the homogeneous null vector.
pub fn triangulate_dlt(obs: &[(&CameraView, Point2)]) -> Result<Point3, ReconstructError> {
    if obs.len() < 2 {
        return Err(ReconstructError::TooFewViews(obs.len()));
    }
    for (i, (a, _)) in obs.iter().enumerate() {
        if obs[..i].iter().any(|(b, _)| b.id() == a.id()) {
            return Err(ReconstructError::DuplicateView(a.id()));
        }
    }
    let mut a = DMatrix::<f64>::zeros(2 * obs.len(), 4);
    for (i, (cam, q)) in obs.iter().enumerate() {
        let p = cam.projection();
        for (k, coord) in [q.x, q.y].into_iter().enumerate() {
            let mut row = coord * p.row(2) - p.row(k);
            let n = row.norm();
            if n > 0.0 {
                row /= n;
            }
            a.row_mut(2 * i + k).copy_from(&row);
        }
    }
    let nv = null_vector(&a)?;
    if nv.relative_gap() < DLT_DEGENERACY {
        return Err(ReconstructError::DegenerateGeometry);
    }
    let x = nv.vector;
    if x[3].abs() < HOMOGENEOUS_EPS {
        return Err(ReconstructError::PointAtInfinity);
    }
    Ok(Point3::new(x[0] / x[3], x[1] / x[3], x[2] / x[3]))
}
