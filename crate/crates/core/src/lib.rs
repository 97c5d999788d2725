//! Multi-view template-based 6DoF object pose tracking.
//!
//! The tracker aligns rendered silhouettes of a triangle mesh with color
//! segmentations in several synchronized, calibrated cameras and solves for
//! one object pose with a joint Gauss-Newton step in an object-centered
//! frame. A synthetic simulator, pose metrics and experiment harness are
//! included.

pub mod camera;
pub mod energy;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod io;
pub mod metrics;
pub mod renderer;
pub mod simulator;
pub mod solver;

pub use camera::{CameraIntrinsics, CameraView};
pub use geometry::{RigidTransform, Twist};
pub use renderer::TriangleMesh;
