//! Ground-plane homographies between views and rectification of foot points
//! into a shared ground frame.

use std::fmt;

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{solve_homogeneous_ls, CameraView, GeometryError, Point2, HOMOGENEOUS_EPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomographyError {
    #[error("degenerate correspondence configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("homography is singular (condition ratio {0:e})")]
    Singular(f64),
    #[error("point maps to infinity (homogeneous coordinate {0:e})")]
    PointAtInfinity(f64),
    #[error("frame mismatch: {0}")]
    IndexMismatch(String),
    #[error("plane z = 0 is degenerate for camera {0}")]
    DegenerateGeometry(usize),
    #[error(transparent)]
    NumericalFailure(#[from] GeometryError),
}

/// Coordinate frame of a planar point: the image of a view, or the metric
/// world ground plane `z = 0`.
///
/// Serialized as the view index, or the string `"ground"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Frame {
    View(usize),
    Ground,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frame::View(k) => write!(f, "view {k}"),
            Frame::Ground => f.write_str("ground"),
        }
    }
}

impl Serialize for Frame {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Frame::View(k) => s.serialize_u64(*k as u64),
            Frame::Ground => s.serialize_str("ground"),
        }
    }
}

impl<'de> Deserialize<'de> for Frame {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(usize),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Index(k) => Ok(Frame::View(k)),
            Raw::Name(n) if n == "ground" => Ok(Frame::Ground),
            Raw::Name(n) => Err(serde::de::Error::custom(format!("unknown frame '{n}'"))),
        }
    }
}

/// Smallest accepted ratio of the smallest to the largest singular value.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Projective map taking points of frame `from` to frame `to`, stored with
/// unit Frobenius norm and `H[2,2] >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundHomography {
    from: Frame,
    to: Frame,
    h: Matrix3<f64>,
}

impl GroundHomography {
    pub fn new(from: Frame, to: Frame, h: Matrix3<f64>) -> Result<Self, HomographyError> {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("homography").into());
        }
        let h = normalize(&h).ok_or(HomographyError::Singular(0.0))?;
        // A determinant threshold on the normalized matrix would reject
        // regular pixel-to-pixel maps, whose translation entries dwarf the
        // rest; compare singular values instead.
        let sv = h.singular_values();
        let rcond = sv.min() / sv.max();
        if !(rcond > SINGULAR_RCOND) {
            return Err(HomographyError::Singular(rcond));
        }
        Ok(Self { from, to, h })
    }

    pub fn identity(from: Frame, to: Frame) -> Self {
        Self::new(from, to, Matrix3::identity()).expect("identity is regular")
    }

    pub fn from_view(&self) -> Frame {
        self.from
    }

    pub fn to_view(&self) -> Frame {
        self.to
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.h
    }

    pub fn inverse(&self) -> Self {
        let inv = self.h.try_inverse().expect("determinant checked at construction");
        Self::new(self.to, self.from, inv).expect("inverse of a regular homography is regular")
    }

    /// `self ∘ other`: maps `other.from` to `self.to`.
    pub fn compose(&self, other: &GroundHomography) -> Result<Self, HomographyError> {
        if other.to != self.from {
            return Err(HomographyError::IndexMismatch(format!(
                "cannot chain {} -> {} after {} -> {}",
                self.from, self.to, other.from, other.to
            )));
        }
        Self::new(other.from, self.to, self.h * other.h)
    }

    pub fn rectify(&self, p: &Point2) -> Result<Point2, HomographyError> {
        rectify(self, p)
    }
}

/// Unit Frobenius norm; `H[2,2]` made nonnegative when it is not
/// negligible, otherwise the first nonzero entry is made positive.
fn normalize(h: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let n = h.norm();
    if n <= 0.0 {
        return None;
    }
    // already unit norm: keep the bits so cached matrices round-trip
    let mut out = if (n - 1.0).abs() <= 4.0 * f64::EPSILON { *h } else { h / n };
    let flip = if out[(2, 2)].abs() > 1e-9 {
        out[(2, 2)] < 0.0
    } else {
        // row-major scan to match the serialized order
        (0..9).map(|i| out[(i / 3, i % 3)]).find(|v| v.abs() > 1e-12).is_some_and(|v| v < 0.0)
    };
    if flip {
        out = -out;
    }
    Some(out)
}

/// Homogeneous normalization of `H [p; 1]`.
pub fn rectify(h: &GroundHomography, p: &Point2) -> Result<Point2, HomographyError> {
    let v = h.h * Vector3::new(p.x, p.y, 1.0);
    if v[2].abs() < HOMOGENEOUS_EPS {
        return Err(HomographyError::PointAtInfinity(v[2]));
    }
    Ok(Point2::new(v[0] / v[2], v[1] / v[2]))
}

/// Similarity taking a point set to centroid 0 and mean distance √2.
fn hartley_transform(points: &[Point2]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points.iter().map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn check_general_position(src: &[Point2]) -> Result<(), HomographyError> {
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in src {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let bbox_area = (max_x - min_x) * (max_y - min_y);
    let tol = 1e-9 * bbox_area;
    let n = src.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (src[i], src[j], src[k]);
                let area = 0.5 * ((b - a).perp(&(c - a))).abs();
                if !(area > tol) {
                    return Err(HomographyError::DegenerateConfiguration(format!(
                        "source points {i}, {j}, {k} are collinear"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// DLT estimate with Hartley normalization of the map taking each
/// correspondence's first point (in `from`) to its second point (in `to`).
pub fn estimate_homography(
    from: Frame,
    to: Frame,
    correspondences: &[(Point2, Point2)],
) -> Result<GroundHomography, HomographyError> {
    if correspondences.len() < 4 {
        return Err(HomographyError::DegenerateConfiguration(format!(
            "need at least 4 correspondences, got {}",
            correspondences.len()
        )));
    }
    if correspondences.iter().any(|(a, b)| !(a.coords.iter().chain(b.coords.iter()).all(|v| v.is_finite()))) {
        return Err(GeometryError::NonFinite("correspondences").into());
    }
    let src: Vec<Point2> = correspondences.iter().map(|c| c.0).collect();
    let dst: Vec<Point2> = correspondences.iter().map(|c| c.1).collect();
    check_general_position(&src)?;

    let t_src = hartley_transform(&src);
    let t_dst = hartley_transform(&dst);
    let mut a = DMatrix::<f64>::zeros(2 * src.len(), 9);
    for (i, (s, d)) in src.iter().zip(&dst).enumerate() {
        let s = t_src * Vector3::new(s.x, s.y, 1.0);
        let d = t_dst * Vector3::new(d.x, d.y, 1.0);
        let (x, y) = (s[0], s[1]);
        let (u, v) = (d[0], d[1]);
        let r0 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        let r1 = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u];
        for c in 0..9 {
            a[(2 * i, c)] = r0[c];
            a[(2 * i + 1, c)] = r1[c];
        }
    }
    let h = solve_homogeneous_ls(&a)?;
    let hn = Matrix3::from_row_slice(h.as_slice());
    let t_dst_inv = t_dst.try_inverse().expect("similarity is invertible");
    GroundHomography::new(from, to, t_dst_inv * hn * t_src)
}

/// Consistency score of `h_jl` against the chain `h_jk ∘ h_kl`: Frobenius
/// distance between the normalized matrices.
pub fn compose_check(
    h_jk: &GroundHomography,
    h_kl: &GroundHomography,
    h_jl: &GroundHomography,
) -> Result<f64, HomographyError> {
    if h_kl.to != h_jk.from || h_jl.from != h_kl.from || h_jl.to != h_jk.to {
        return Err(HomographyError::IndexMismatch(format!(
            "expected j<-k, k<-l, j<-l; got {}<-{}, {}<-{}, {}<-{}",
            h_jk.to, h_jk.from, h_kl.to, h_kl.from, h_jl.to, h_jl.from
        )));
    }
    let chained = h_jk.compose(h_kl)?;
    Ok((h_jl.h - chained.h).norm())
}

/// The 3x3 matrix `P E` mapping ground-plane coordinates `(x, y, 1)` to
/// homogeneous pixels.
fn ground_to_image(cam: &CameraView) -> Matrix3<f64> {
    let p: &Matrix3x4<f64> = cam.projection();
    Matrix3::from_columns(&[p.column(0).into_owned(), p.column(1).into_owned(), p.column(3).into_owned()])
}

/// Exact homography induced by the world plane `z = 0`, taking pixels of
/// `cam_b` to pixels of `cam_a`.
pub fn ground_homography_from_cameras(
    cam_a: &CameraView,
    cam_b: &CameraView,
) -> Result<GroundHomography, HomographyError> {
    let ga = ground_to_image(cam_a);
    let gb = ground_to_image(cam_b);
    let gb_inv = invert_plane_map(&gb, cam_b.id())?;
    if ga.determinant().abs() <= 1e-12 * ga.norm().powi(3) {
        return Err(HomographyError::DegenerateGeometry(cam_a.id()));
    }
    GroundHomography::new(Frame::View(cam_b.id()), Frame::View(cam_a.id()), ga * gb_inv)
}

/// Homography taking pixels of `cam` to metric ground coordinates.
pub fn image_to_ground(cam: &CameraView) -> Result<GroundHomography, HomographyError> {
    let g = ground_to_image(cam);
    GroundHomography::new(Frame::View(cam.id()), Frame::Ground, invert_plane_map(&g, cam.id())?)
}

fn invert_plane_map(g: &Matrix3<f64>, id: usize) -> Result<Matrix3<f64>, HomographyError> {
    if g.determinant().abs() <= 1e-12 * g.norm().powi(3) {
        return Err(HomographyError::DegenerateGeometry(id));
    }
    g.try_inverse().ok_or(HomographyError::DegenerateGeometry(id))
}
