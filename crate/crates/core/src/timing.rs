//! Timing sweep behind the `bench` subcommand: LAP solve, one view pair's
//! matching, and per-person reconstruction, each as a function of the
//! number of persons `N`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::exec::Execution;
use crate::homography::{Frame, GroundHomography};
use crate::matching::{match_pair, solve_lap, FootPair, MatchingConfig, PersonTrackSet};
use crate::reconstruct::{reconstruct_scene, SolverConfig};
use crate::skeleton::SkeletonSchema;
use crate::synth::{generate, SceneSpec};
use crate::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    /// Seconds per `solve_lap` call on an `n x n` matrix.
    pub lap_s: f64,
    /// Seconds per `match_pair` call (graph construction plus LAP).
    pub match_pair_s: f64,
    /// Seconds to reconstruct all `n` persons of a 4-view scene.
    pub reconstruct_s: f64,
}

/// Best time per call over `reps` batches; each batch repeats `f` until it
/// has run for at least `min_batch`.
pub fn time_per_call(reps: usize, min_batch: Duration, mut f: impl FnMut()) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let mut calls = 0u32;
        while calls == 0 || start.elapsed() < min_batch {
            f();
            calls += 1;
        }
        best = best.min(start.elapsed().as_secs_f64() / calls as f64);
    }
    best
}

/// `n` persons scattered over a square, seen identically from two views
/// apart from a little heel noise, in the ground frame.
pub fn synthetic_feet(n: usize, rng: &mut ChaCha8Rng) -> (Vec<FootPair>, Vec<FootPair>) {
    let side = (n as f64).sqrt() * 1.2;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let c = Point2::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
        let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let half = nalgebra::Vector2::new(heading.cos(), heading.sin()) * rng.random_range(0.05..0.25);
        for (view, out) in [(0, &mut a), (1, &mut b)] {
            let jitter = nalgebra::Vector2::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01));
            let (l, r) = (c - half + jitter, c + half + jitter);
            out.push(FootPair {
                view,
                index: i,
                frame: Frame::Ground,
                left: l,
                right: r,
                stride: r - l,
                anchor: Point2::from((l.coords + r.coords) * 0.5),
            });
        }
    }
    (a, b)
}

pub fn bench_sweep(ns: &[usize], reps: usize, seed: u64) -> Vec<BenchRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = SkeletonSchema::default();
    let batch = Duration::from_millis(20);
    ns.iter()
        .map(|&n| {
            let cost = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
            let lap_s = time_per_call(reps, batch, || {
                std::hint::black_box(solve_lap(&cost).expect("finite costs"));
            });

            let (fa, fb) = synthetic_feet(n, &mut rng);
            let ground = GroundHomography::identity(Frame::Ground, Frame::Ground);
            let cfg = MatchingConfig::default();
            let match_pair_s = time_per_call(reps, batch, || {
                std::hint::black_box(match_pair(&fa, &fb, &ground, &cfg).expect("consistent feet"));
            });

            let side = 2.0 + (n as f64).sqrt() * 1.5;
            let spec = SceneSpec { n_persons: n, area: [side, side], seed: seed ^ n as u64, ..SceneSpec::default() };
            let reconstruct_s = match generate(&spec, &schema) {
                Ok(gt) => {
                    let tracks = PersonTrackSet::from_correspondence(&gt.correspondence);
                    let views = gt.views();
                    let solver = SolverConfig::default();
                    time_per_call(reps.min(3), Duration::ZERO, || {
                        std::hint::black_box(reconstruct_scene(&tracks, &views, &schema, &solver, Execution::Sequential));
                    })
                }
                Err(e) => {
                    log::warn!("bench scene for n = {n}: {e}");
                    f64::NAN
                }
            };
            BenchRow { n, lap_s, match_pair_s, reconstruct_s }
        })
        .collect()
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("n,lap_s,match_pair_s,reconstruct_s\n");
    for r in rows {
        s.push_str(&format!("{},{:.9e},{:.9e},{:.9e}\n", r.n, r.lap_s, r.match_pair_s, r.reconstruct_s));
    }
    s
}

/// Least-squares slope of `log t` against `log n`.
pub fn loglog_slope(ns: &[usize], times: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
