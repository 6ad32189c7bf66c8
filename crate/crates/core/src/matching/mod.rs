//! Cross-view person association from ground-plane foot positions.
//!
//! Each detection contributes a pair of heels, rectified into a shared
//! ground frame. For every view pair the feet form a complete bipartite
//! graph whose edges score location, stride size and stride direction; the
//! assignment is solved as a LAP and the pairwise results are merged around
//! a ring of views into person tracks.

mod lap;
mod merge;

pub use lap::{solve_lap, solve_lap_with, Assignment, LapSolver};
pub use merge::{merge_multiview, PersonTrack, PersonTrackSet, RingLink};

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::Detection2D;
use crate::geometry::Point2;
use crate::homography::{Frame, GroundHomography, HomographyError};

/// Strides shorter than this carry no size or direction information.
pub const STRIDE_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("cost matrix entry is not finite: {0}")]
    InvalidCost(f64),
    #[error("frame mismatch: {0}")]
    ViewMismatch(String),
    #[error("detection {index} in view {view} has no usable heels")]
    MissingFeet { view: usize, index: usize },
    #[error("pairwise assignments do not form a ring of views: {0}")]
    RingTopologyError(String),
    #[error(transparent)]
    Homography(#[from] HomographyError),
}

/// Edge-cost weights for foot location, stride size and stride direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchWeights {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self { k1: 1.0, k2: 1.0, k3: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchingConfig {
    pub weights: MatchWeights,
    /// Matched pairs costing more than this are split up again.
    pub gate: f64,
    /// Minimum heel confidence for a detection to take part in matching.
    pub c_min: f64,
    pub solver: LapSolver,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self { weights: MatchWeights::default(), gate: 1.0, c_min: 0.05, solver: LapSolver::JonkerVolgenant }
    }
}

/// A detection's two heels, rectified into `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct FootPair {
    pub view: usize,
    /// Index of the owning detection within its view.
    pub index: usize,
    pub frame: Frame,
    /// Heel pixels in the source image.
    pub left: Point2,
    pub right: Point2,
    /// Rectified right heel minus rectified left heel.
    pub stride: Vector2<f64>,
    /// Midpoint of the rectified heels.
    pub anchor: Point2,
}

impl FootPair {
    pub fn rectified_left(&self) -> Point2 {
        self.anchor - self.stride * 0.5
    }

    pub fn rectified_right(&self) -> Point2 {
        self.anchor + self.stride * 0.5
    }
}

/// Rectifies the heels of `det` with `h_to_ref`, which must map from the
/// detection's view.
pub fn extract_foot_pairs(
    det: &Detection2D,
    heel_indices: [usize; 2],
    h_to_ref: &GroundHomography,
    c_min: f64,
) -> Result<FootPair, MatchingError> {
    if h_to_ref.from_view() != Frame::View(det.view) {
        return Err(MatchingError::ViewMismatch(format!(
            "detection in view {} rectified with a homography from {}",
            det.view,
            h_to_ref.from_view()
        )));
    }
    let heel = |j: usize| det.joint(j).filter(|k| k.confidence > c_min).map(|k| k.point);
    let missing = || MatchingError::MissingFeet { view: det.view, index: det.person_index };
    let left = heel(heel_indices[0]).ok_or_else(missing)?;
    let right = heel(heel_indices[1]).ok_or_else(missing)?;
    let rl = h_to_ref.rectify(&left)?;
    let rr = h_to_ref.rectify(&right)?;
    Ok(FootPair {
        view: det.view,
        index: det.person_index,
        frame: h_to_ref.to_view(),
        left,
        right,
        stride: rr - rl,
        anchor: Point2::from((rl.coords + rr.coords) * 0.5),
    })
}

/// Cost of pairing `fp_a` with `fp_b`. `h` maps `fp_b`'s frame into
/// `fp_a`'s frame; both of `fp_b`'s heels are carried across before the
/// stride terms are evaluated.
pub fn edge_cost(
    fp_a: &FootPair,
    fp_b: &FootPair,
    h: &GroundHomography,
    weights: &MatchWeights,
) -> Result<f64, MatchingError> {
    if fp_b.frame != h.from_view() || fp_a.frame != h.to_view() {
        return Err(MatchingError::ViewMismatch(format!(
            "homography {} -> {} cannot compare feet in {} and {}",
            h.from_view(),
            h.to_view(),
            fp_a.frame,
            fp_b.frame
        )));
    }
    let p_m = h.rectify(&fp_b.anchor)?;
    let v_m = h.rectify(&fp_b.rectified_right())? - h.rectify(&fp_b.rectified_left())?;
    let v_l = fp_a.stride;
    let location = (fp_a.anchor - p_m).norm();
    let (nl, nm) = (v_l.norm(), v_m.norm());
    if nl < STRIDE_EPS || nm < STRIDE_EPS {
        return Ok(weights.k1 * location);
    }
    let size = (nl - nm).abs();
    let sine = v_l.perp(&v_m).abs() / (nl * nm);
    Ok(weights.k1 * location + weights.k2 * size + weights.k3 * sine)
}

/// Complete bipartite graph between the feet of two views.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub view_a: usize,
    pub view_b: usize,
    pub cost: DMatrix<f64>,
}

pub fn build_graph(
    view_a: usize,
    view_b: usize,
    feet_a: &[FootPair],
    feet_b: &[FootPair],
    h: &GroundHomography,
    weights: &MatchWeights,
) -> Result<BipartiteGraph, MatchingError> {
    for fp in feet_a {
        if fp.view != view_a {
            return Err(MatchingError::ViewMismatch(format!("foot pair of view {} listed under view {view_a}", fp.view)));
        }
    }
    for fp in feet_b {
        if fp.view != view_b {
            return Err(MatchingError::ViewMismatch(format!("foot pair of view {} listed under view {view_b}", fp.view)));
        }
    }
    let mut cost = DMatrix::zeros(feet_a.len(), feet_b.len());
    for (l, a) in feet_a.iter().enumerate() {
        for (m, b) in feet_b.iter().enumerate() {
            cost[(l, m)] = edge_cost(a, b, h, weights)?;
        }
    }
    Ok(BipartiteGraph { view_a, view_b, cost })
}

/// Optimal assignment between two views' feet, with pairs above the gate
/// returned to the unmatched pools. Indices are positions in the input
/// slices.
pub fn match_pair(
    feet_a: &[FootPair],
    feet_b: &[FootPair],
    h: &GroundHomography,
    cfg: &MatchingConfig,
) -> Result<(BipartiteGraph, Assignment), MatchingError> {
    let view_a = feet_a.first().map(|f| f.view).unwrap_or(usize::MAX);
    let view_b = feet_b.first().map(|f| f.view).unwrap_or(usize::MAX);
    let graph = build_graph(view_a, view_b, feet_a, feet_b, h, &cfg.weights)?;
    let mut assignment = solve_lap_with(&graph.cost, cfg.solver)?;
    let (kept, gated): (Vec<_>, Vec<_>) = assignment.pairs.iter().partition(|p| p.2 <= cfg.gate);
    assignment.pairs = kept;
    for (l, m, _) in gated {
        assignment.unmatched_a.push(l);
        assignment.unmatched_b.push(m);
    }
    assignment.unmatched_a.sort_unstable();
    assignment.unmatched_b.sort_unstable();
    Ok((graph, assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{BBox, SigmaModel};
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn foot(view: usize, index: usize, left: Point2, right: Point2) -> FootPair {
        FootPair {
            view,
            index,
            frame: Frame::Ground,
            left,
            right,
            stride: right - left,
            anchor: Point2::from((left.coords + right.coords) * 0.5),
        }
    }

    fn ground_id() -> GroundHomography {
        GroundHomography::identity(Frame::Ground, Frame::Ground)
    }

    fn det_with_heels(view: usize, left: Option<(Point2, f64)>, right: Option<(Point2, f64)>) -> Detection2D {
        let mut raw = vec![None; 23];
        raw[19] = left;
        raw[22] = right;
        Detection2D::from_raw(view, 4, BBox::new(0.0, 0.0, 100.0, 200.0), &raw, &SigmaModel::default())
    }

    #[test]
    fn identical_feet_cost_nothing() {
        let a = foot(0, 0, Point2::new(1.0, 2.0), Point2::new(1.3, 2.1));
        let b = FootPair { view: 1, ..a.clone() };
        assert_eq!(edge_cost(&a, &b, &ground_id(), &MatchWeights::default()).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_unit_strides_cost_one() {
        let a = foot(0, 0, Point2::new(-0.5, 0.0), Point2::new(0.5, 0.0));
        let b = foot(1, 0, Point2::new(0.0, -0.5), Point2::new(0.0, 0.5));
        let w = MatchWeights { k1: 1.0, k2: 1.0, k3: 1.0 };
        assert_relative_eq!(edge_cost(&a, &b, &ground_id(), &w).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_stride_keeps_only_location() {
        let a = foot(0, 0, Point2::new(0.0, 0.0), Point2::new(0.0, 0.0));
        let b = foot(1, 0, Point2::new(3.0, 4.0), Point2::new(3.5, 4.0));
        let w = MatchWeights { k1: 2.0, k2: 1.0, k3: 1.0 };
        assert_relative_eq!(edge_cost(&a, &b, &ground_id(), &w).unwrap(), 2.0 * (3.25f64.powi(2) + 16.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn cost_matches_formula_reevaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pt = |rng: &mut ChaCha8Rng| Point2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        for _ in 0..200 {
            let a = foot(0, 0, pt(&mut rng), pt(&mut rng));
            let b = foot(1, 0, pt(&mut rng), pt(&mut rng));
            let w = MatchWeights { k1: rng.random_range(0.0..2.0), k2: rng.random_range(0.0..2.0), k3: rng.random_range(0.0..2.0) };
            let (al, ar) = (a.left, a.right);
            let (bl, br) = (b.left, b.right);
            let (pa, pb) = ((al.x + ar.x) / 2.0, (al.y + ar.y) / 2.0);
            let (qa, qb) = ((bl.x + br.x) / 2.0, (bl.y + br.y) / 2.0);
            let (vx, vy) = (ar.x - al.x, ar.y - al.y);
            let (ux, uy) = (br.x - bl.x, br.y - bl.y);
            let nv = (vx * vx + vy * vy).sqrt();
            let nu = (ux * ux + uy * uy).sqrt();
            let want = w.k1 * ((pa - qa).powi(2) + (pb - qb).powi(2)).sqrt()
                + w.k2 * (nv - nu).abs()
                + w.k3 * ((vx * uy - vy * ux) / (nv * nu)).abs();
            assert_relative_eq!(edge_cost(&a, &b, &ground_id(), &w).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn cost_symmetric_under_swap_with_inverse_rigid_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let va = Frame::View(0);
        let vb = Frame::View(1);
        for _ in 0..200 {
            let th: f64 = rng.random_range(-3.0..3.0);
            let m = Matrix3::new(th.cos(), -th.sin(), rng.random_range(-5.0..5.0), th.sin(), th.cos(), rng.random_range(-5.0..5.0), 0.0, 0.0, 1.0);
            let h = GroundHomography::new(vb, va, m).unwrap();
            let mut pt = || Point2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let mut a = foot(0, 0, pt(), pt());
            let mut b = foot(1, 0, pt(), pt());
            a.frame = va;
            b.frame = vb;
            let w = MatchWeights::default();
            let ab = edge_cost(&a, &b, &h, &w).unwrap();
            let ba = edge_cost(&b, &a, &h.inverse(), &w).unwrap();
            assert!((ab - ba).abs() < 1e-9, "{ab} vs {ba}");
        }
    }

    #[test]
    fn frame_mismatch_rejected() {
        let a = foot(0, 0, Point2::origin(), Point2::new(1.0, 0.0));
        let h = GroundHomography::identity(Frame::View(1), Frame::Ground);
        assert!(matches!(edge_cost(&a, &a, &h, &MatchWeights::default()), Err(MatchingError::ViewMismatch(_))));
    }

    #[test]
    fn extract_midpoint_and_stride() {
        let det = det_with_heels(2, Some((Point2::new(0.0, 0.0), 0.9)), Some((Point2::new(0.3, 0.0), 0.9)));
        let h = GroundHomography::identity(Frame::View(2), Frame::Ground);
        let fp = extract_foot_pairs(&det, [19, 22], &h, 0.05).unwrap();
        assert_relative_eq!(fp.anchor.coords, Point2::new(0.15, 0.0).coords, epsilon = 1e-15);
        assert_relative_eq!(fp.stride, Vector2::new(0.3, 0.0), epsilon = 1e-15);
        assert_eq!(fp.frame, Frame::Ground);
        assert_eq!(fp.index, 4);
    }

    #[test]
    fn low_confidence_heel_is_missing() {
        let det = det_with_heels(2, Some((Point2::new(0.0, 0.0), 0.01)), Some((Point2::new(0.3, 0.0), 0.9)));
        let h = GroundHomography::identity(Frame::View(2), Frame::Ground);
        assert!(matches!(extract_foot_pairs(&det, [19, 22], &h, 0.05), Err(MatchingError::MissingFeet { view: 2, index: 4 })));
        let det = det_with_heels(2, None, Some((Point2::new(0.3, 0.0), 0.9)));
        assert!(matches!(extract_foot_pairs(&det, [19, 22], &h, 0.05), Err(MatchingError::MissingFeet { .. })));
    }

    #[test]
    fn extract_matches_recomputation_under_random_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let mut m = Matrix3::identity();
            for v in m.iter_mut() {
                *v += rng.random_range(-0.2..0.2);
            }
            m[(2, 0)] *= 0.01;
            m[(2, 1)] *= 0.01;
            let h = GroundHomography::new(Frame::View(0), Frame::Ground, m).unwrap();
            let l = Point2::new(rng.random_range(0.0..50.0), rng.random_range(0.0..50.0));
            let r = Point2::new(rng.random_range(0.0..50.0), rng.random_range(0.0..50.0));
            let det = det_with_heels(0, Some((l, 0.5)), Some((r, 0.5)));
            let fp = extract_foot_pairs(&det, [19, 22], &h, 0.05).unwrap();
            let map = |p: Point2| {
                let v = h.matrix() * nalgebra::Vector3::new(p.x, p.y, 1.0);
                Point2::new(v[0] / v[2], v[1] / v[2])
            };
            let (rl, rr) = (map(l), map(r));
            assert_relative_eq!(fp.stride, rr - rl, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(fp.anchor.coords, (rl.coords + rr.coords) / 2.0, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(fp.rectified_left().coords, rl.coords, epsilon = 1e-9);
        }
    }

    #[test]
    fn empty_side_leaves_everyone_unmatched() {
        let feet_a = vec![foot(0, 0, Point2::origin(), Point2::new(0.3, 0.0)), foot(0, 1, Point2::new(2.0, 0.0), Point2::new(2.3, 0.0))];
        let (_, a) = match_pair(&feet_a, &[], &ground_id(), &MatchingConfig::default()).unwrap();
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_a, vec![0, 1]);
    }

    #[test]
    fn gate_splits_expensive_pairs() {
        let feet_a = vec![foot(0, 0, Point2::origin(), Point2::new(0.3, 0.0)), foot(0, 1, Point2::new(5.0, 0.0), Point2::new(5.3, 0.0))];
        let feet_b = vec![foot(1, 0, Point2::new(0.01, 0.0), Point2::new(0.31, 0.0)), foot(1, 1, Point2::new(9.0, 0.0), Point2::new(9.3, 0.0))];
        let (g, a) = match_pair(&feet_a, &feet_b, &ground_id(), &MatchingConfig::default()).unwrap();
        assert_eq!(g.cost.shape(), (2, 2));
        assert_eq!(a.pairs.len(), 1);
        assert_eq!((a.pairs[0].0, a.pairs[0].1), (0, 0));
        assert_eq!(a.unmatched_a, vec![1]);
        assert_eq!(a.unmatched_b, vec![1]);
    }
}
