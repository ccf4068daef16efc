//! Multi-view plane-sweep depth estimation with edge-aware semi-global
//! matching.
//!
//! The crate consumes a bundle of five consecutive calibrated frames and
//! produces a dense depth map for the center (reference) frame. The stages
//! are:
//!
//! 1. **geometry** – camera models, plane-induced homographies and
//!    inverse-depth plane sampling.
//! 2. **edges** – a binary line mask of the reference image (lightweight
//!    LSD-style detector or gradient threshold) used to relax smoothing at
//!    object boundaries.
//! 3. **matching** – per-plane warping, 9x7 Census / Hamming matching and
//!    occlusion-aware cost-volume assembly.
//! 4. **sgm** – eight-path semi-global optimization with mask-modulated
//!    penalties, winner extraction and a 3x3 median post-filter.
//! 5. **roi** – Soft-NMS over detection boxes and fusion of per-box depth
//!    fragments, enabling reconstruction confined to detected regions.
//! 6. **pipeline** – end-to-end orchestration, resolution handling, file
//!    formats and timing.
//!
//! The **synth** module renders planar scenes with exact ground truth and
//! backs most of the end-to-end tests.

pub mod edges;
pub mod geometry;
pub mod io;
pub mod matching;
pub mod pipeline;
pub mod raster;
pub mod roi;
pub mod sgm;
pub mod synth;

pub use geometry::{
    depth_from_plane, plane_homography, projection_matrix, sample_planes, CameraIntrinsics,
    CameraPose, CameraView, PlaneStack, SweepPlane,
};
pub use matching::{build_cost_volume, census_transform, hamming_cost, warp_image, CostVolume, ImageBundle};
pub use raster::{GrayRaster, Mask, PixelRect};
pub use sgm::{aggregate, extract_depth, median_filter_3x3, winner_take_all, DepthMap, PlaneIndexMap, SgmParams};
