//! Stereo matching with CNN-scored ground control points.
//!
//! The pipeline trains a small siamese convolutional network to score
//! per-pixel matching confidence, selects ground control points (GCPs)
//! from the confidence volume, refines SAD or Census matching costs with
//! those GCPs, and computes final disparity maps with 16-direction
//! semi-global matching.
//!
//! Modules follow the pipeline stages:
//! - [`imageio`]: rasters, normalization, KITTI-style disparity PNGs
//! - [`cost`]: SAD and Census matching-cost volumes
//! - [`net`]: the siamese network, training, and dense confidence inference
//! - [`gcp`]: GCP selection and matching-cost refinement
//! - [`sgm`]: semi-global aggregation and winner-takes-all extraction
//! - [`eval`]: error metrics, per-frame reports, threshold sweeps
//! - [`synth`]: random-dot stereograms with exact ground truth
//! - [`pipeline`]: configuration and end-to-end wiring for the CLI

pub mod cost;
pub mod error;
pub mod eval;
pub mod gcp;
pub mod imageio;
pub mod net;
pub mod pipeline;
pub mod sgm;
pub mod synth;

pub use cost::{CostKind, CostVolume, WindowSpec};
pub use error::{Error, Result};
pub use gcp::{GcpMask, RefineConfig};
pub use imageio::{DisparityMap, GrayImage, GroundTruth};
pub use net::{ConfidenceVolume, NetworkParams, TrainConfig};
pub use pipeline::PipelineConfig;
pub use sgm::{AggregatedVolume, SgmConfig};
