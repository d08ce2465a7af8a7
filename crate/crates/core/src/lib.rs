//! Self-supervised photometric depth: per-pixel disparity, camera motion and
//! intrinsics recovered from short monocular sequences by direct gradient
//! descent on an SSIM + L1 reconstruction objective.
//!
//! Modules, bottom-up:
//!
//! - [`types`], [`rng`]: rasters, the disparity/depth map, parameter blocks and
//!   splittable seeded randomness.
//! - [`geometry`]: pinhole camera, learned-intrinsics decoding, SE(3) exponential,
//!   reprojection and bilinear warping.
//! - [`losses`]: photometric loss, minimum reconstruction, automask, smoothness.
//! - [`optim`]: analytic forward/backward pass, AdamW and the solve loop.
//! - [`augment`]: aspect-ratio crops, support offsets, flip and colour jitter.
//! - [`eval`]: scale/shift alignment, depth metrics and cross-dataset aggregation.
//! - [`synth`]: analytic plane scenes used as ground truth.
//! - [`io`]: PFM, camera/pose text records, manifests, configs and colorized depth.

// `!(x > 0.0)` is how config checks reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use geometry::{Camera, IntrinsicsRaw, Pose, WarpResult};
pub use rng::Rng;
pub use types::{DepthField, DepthRange, DisparityField, Image, ParamBlock, ParamTag};
