//! Pinhole cameras, perspective projection and the homogeneous least-squares
//! kernel shared by triangulation and homography estimation.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Vector3, Vector4};
use thiserror::Error;

pub type Point2 = nalgebra::Point2<f64>;
pub type Point3 = nalgebra::Point3<f64>;

/// Homogeneous coordinates with a magnitude below this are treated as points
/// at infinity.
pub const HOMOGENEOUS_EPS: f64 = 1e-12;

/// Relative gap between the two smallest singular values below which the
/// null vector of a homogeneous system is considered non-unique.
pub const NULLSPACE_GAP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point maps to infinity (homogeneous coordinate {0:e})")]
    PointAtInfinity(f64),
    #[error("homogeneous system is degenerate: smallest singular values {smallest:e} and {second:e}")]
    DegenerateSystem { smallest: f64, second: f64 },
    #[error("homogeneous system needs at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("projection matrix of view {0} is rank deficient")]
    RankDeficient(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// A calibrated view: a 3x4 projection matrix in pixel units plus the image
/// size.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    id: usize,
    p: Matrix3x4<f64>,
    width: u32,
    height: u32,
}

impl CameraView {
    pub fn new(id: usize, p: Matrix3x4<f64>, width: u32, height: u32) -> Result<Self, GeometryError> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("projection matrix"));
        }
        let sv = p.svd(false, false).singular_values;
        let max = sv.max();
        if max <= 0.0 || sv.min() <= 1e-12 * max {
            return Err(GeometryError::RankDeficient(id));
        }
        Ok(Self { id, p, width, height })
    }

    /// Builds `P = K [R | t]`.
    pub fn from_krt(
        id: usize,
        k: &Matrix3<f64>,
        r: &Matrix3<f64>,
        t: &Vector3<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
        Self::new(id, k * rt, width, height)
    }

    /// A camera at `eye` looking at `target`, with square pixels and the
    /// principal point at the image centre. World `up` fixes the roll.
    pub fn look_at(
        id: usize,
        focal: f64,
        eye: &Point3,
        target: &Point3,
        up: &Vector3<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(up).normalize();
        let down = forward.cross(&right);
        // rows of R are the camera axes expressed in world coordinates
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye.coords);
        let k = Matrix3::new(
            focal,
            0.0,
            width as f64 / 2.0,
            0.0,
            focal,
            height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        Self::from_krt(id, &k, &r, &t, width, height)
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn projection(&self) -> &Matrix3x4<f64> {
        &self.p
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Same camera with a different view index.
    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn project(&self, point: &Point3) -> Result<Point2, GeometryError> {
        project(self, point)
    }

    /// Third homogeneous coordinate of `P [X; 1]`. Positive in front of the
    /// camera when `P` comes from [`CameraView::from_krt`] with det(R) > 0.
    pub fn depth(&self, point: &Point3) -> f64 {
        (self.p.row(2) * point.to_homogeneous())[0]
    }

    /// Optical centre: the right null vector of `P`, dehomogenized.
    pub fn center(&self) -> Result<Point3, GeometryError> {
        let a = DMatrix::from_fn(3, 4, |r, c| self.p[(r, c)]);
        let c = solve_homogeneous_ls(&a)?;
        if c[3].abs() < HOMOGENEOUS_EPS {
            return Err(GeometryError::PointAtInfinity(c[3]));
        }
        Ok(Point3::new(c[0] / c[3], c[1] / c[3], c[2] / c[3]))
    }

    /// RQ decomposition into intrinsics `K` (positive diagonal, `K[2,2] = 1`),
    /// rotation `R` (det +1) and translation `t`, such that `P ~ K [R | t]`
    /// up to a nonzero scale.
    pub fn decompose(&self) -> (Matrix3<f64>, Matrix3<f64>, Vector3<f64>) {
        let m = self.p.fixed_view::<3, 3>(0, 0).into_owned();
        let flip = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        let qr = (flip * m).transpose().qr();
        let mut k = flip * qr.r().transpose() * flip;
        let mut r = flip * qr.q().transpose();
        for i in 0..3 {
            if k[(i, i)] < 0.0 {
                let col = -k.column(i);
                k.set_column(i, &col);
                let row = -r.row(i);
                r.set_row(i, &row);
            }
        }
        let mut p4 = self.p.column(3).into_owned();
        if r.determinant() < 0.0 {
            r = -r;
            p4 = -p4;
        }
        let t = k.try_inverse().map(|ki| ki * p4).unwrap_or_else(Vector3::zeros);
        let s = k[(2, 2)];
        (k / s, r, t)
    }
}

/// Perspective projection with homogeneous normalization.
pub fn project(camera: &CameraView, point: &Point3) -> Result<Point2, GeometryError> {
    let h = camera.p * Vector4::new(point.x, point.y, point.z, 1.0);
    if h[2].abs() < HOMOGENEOUS_EPS {
        return Err(GeometryError::PointAtInfinity(h[2]));
    }
    Ok(Point2::new(h[0] / h[2], h[1] / h[2]))
}

/// Null vector of a homogeneous system together with the singular values
/// that decide whether it is well defined.
#[derive(Debug, Clone)]
pub struct NullVector {
    pub vector: DVector<f64>,
    pub smallest: f64,
    pub second: f64,
    pub largest: f64,
}

impl NullVector {
    /// Relative gap between the two smallest singular values.
    pub fn relative_gap(&self) -> f64 {
        if self.largest > 0.0 {
            (self.second - self.smallest) / self.largest
        } else {
            0.0
        }
    }
}

/// Right singular vector of the smallest singular value, without any
/// uniqueness check. Rows are zero-padded when `n < m`.
pub fn null_vector(a: &DMatrix<f64>) -> Result<NullVector, GeometryError> {
    let (n, m) = a.shape();
    if m == 0 || n + 1 < m {
        return Err(GeometryError::TooFewRows { needed: m.saturating_sub(1), got: n });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite("homogeneous system"));
    }
    let padded;
    let a = if n < m {
        padded = a.clone().resize_vertically(m, 0.0);
        &padded
    } else {
        a
    };
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let min_idx = order[0];
    let mut x: DVector<f64> = v_t.row(min_idx).transpose();
    x /= x.norm();
    canonical_sign(x.as_mut_slice());
    Ok(NullVector {
        vector: x,
        smallest: sv[min_idx],
        second: if m > 1 { sv[order[1]] } else { f64::INFINITY },
        largest: sv[order[m - 1]],
    })
}

/// Unit-norm minimizer of `||A x||`, sign fixed so the first nonzero
/// component is positive.
pub fn solve_homogeneous_ls(a: &DMatrix<f64>) -> Result<DVector<f64>, GeometryError> {
    let nv = null_vector(a)?;
    if nv.relative_gap() < NULLSPACE_GAP {
        return Err(GeometryError::DegenerateSystem { smallest: nv.smallest, second: nv.second });
    }
    Ok(nv.vector)
}

/// Flips `x` so its first component with magnitude above 1e-12 is positive.
pub fn canonical_sign(x: &mut [f64]) {
    if let Some(first) = x.iter().copied().find(|v| v.abs() > 1e-12) {
        if first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
}
