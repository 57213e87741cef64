//! Stereo trajectory analysis for activity recognition.
//!
//! The crate is organised as a chain of stages, each usable on its own:
//!
//! * [`media`]: frames, clips, PGM/PPM I/O and a synthetic stereo scene renderer.
//! * [`roi`]: mixture-of-Gaussians background subtraction and active-region boxes.
//! * [`keypoints`]: FAST corners, gradient-histogram patch descriptors, reciprocal matching.
//! * [`flowfields`]: pyramidal Lucas-Kanade and Farneback optical flow.
//! * [`tracking`]: fixed-length trajectories built with interest-point, LK or Farneback tracking.
//! * [`stereo`]: fundamental matrix estimation, rectification, and disparity augmentation.
//! * [`shape`]: concatenated finite-difference trajectory descriptors.
//! * [`encoding`]: diagonal GMM fitting by EM and improved Fisher vectors.
//! * [`classify`]: one-vs-rest linear SVM and leave-one-actor-out evaluation.
//! * [`pipeline`]: configuration, text file formats, synthetic activity datasets,
//!   end-to-end experiments and trajectory overlays.

pub mod classify;
pub mod encoding;
mod error;
pub mod flowfields;
pub mod keypoints;
pub mod media;
pub mod pipeline;
pub mod plane;
pub mod roi;
pub mod shape;
pub mod stereo;
pub mod tracking;

pub use error::{Error, Result};
