//! Multi-view 3D pose reconstruction for crowds.
//!
//! People are associated across views by matching their feet on the ground
//! plane (a linear assignment per view pair, merged around a ring of views),
//! then each person's joints are triangulated and refined by MAP estimation
//! under an uncertainty-weighted reprojection likelihood and a bone-length
//! prior.
//!
//! ```
//! use std::collections::BTreeMap;
//! use crowdpose3d::homography::image_to_ground;
//! use crowdpose3d::matching::MatchingConfig;
//! use crowdpose3d::pipeline::match_frame;
//! use crowdpose3d::reconstruct::{reconstruct_scene, SolverConfig};
//! use crowdpose3d::synth::{generate, SceneSpec};
//! use crowdpose3d::{Execution, SkeletonSchema};
//!
//! let schema = SkeletonSchema::default();
//! let gt = generate(&SceneSpec { n_persons: 8, seed: 1, ..Default::default() }, &schema).unwrap();
//! let views = gt.views();
//! let ground: BTreeMap<_, _> = gt.cameras.iter().map(|c| (c.id(), image_to_ground(c).unwrap())).collect();
//! let tracks = match_frame(0, &views, &ground, &schema, &MatchingConfig::default()).unwrap().tracks;
//! let scene = reconstruct_scene(&tracks, &views, &schema, &SolverConfig::default(), Execution::Parallel);
//! assert_eq!(scene.poses.len(), 8);
//! ```

pub mod detection;
pub mod exec;
pub mod geometry;
pub mod homography;
pub mod io;
pub mod matching;
pub mod metrics;
pub mod pipeline;
pub mod reconstruct;
pub mod skeleton;
pub mod synth;
pub mod timing;

pub use exec::Execution;
pub use geometry::{CameraView, GeometryError, Point2, Point3};
pub use homography::{Frame, GroundHomography, HomographyError};
pub use skeleton::SkeletonSchema;
pub use detection::{BBox, Detection2D, SigmaModel, ViewDetections};
