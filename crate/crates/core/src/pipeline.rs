//! End-to-end orchestration: bundle assembly, resolution handling, full
//! versus selective execution, and per-stage timing.
//!
//! `run` expects inputs already at processing resolution; compose it with
//! [`select_bundle`] and [`rescale_inputs`]. In selective mode each
//! surviving detection box is treated as an independent image: the bundle
//! is cropped to the box (principal point shifted accordingly), the full
//! stage sequence runs on the crop, and the per-box depth fragments are
//! fused back into one reference-frame map. Consequently the selective
//! output inside a box equals a full run on the cropped bundle, and a box
//! covering the whole frame reproduces full mode bit for bit.

use std::time::Instant;

use nalgebra::Vector3;
use thiserror::Error;

use crate::edges::EdgeProvider;
use crate::geometry::GeometryError;
use crate::matching::{build_cost_volume, ImageBundle, MatchingError, CENSUS_HEIGHT, CENSUS_WIDTH};
use crate::roi::{fuse_selective_depth, soft_nms, DetectionBox, RoiError};
use crate::sgm::{aggregate, extract_depth, median_filter_3x3, winner_take_all, DepthMap, SgmError, SgmParams};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("center index {center} out of range for a {len}-frame sequence (need 2 <= center <= len-3)")]
    OutOfRange { center: usize, len: usize },
    #[error("scaled size {width}x{height} is below the {}x{} matching window", CENSUS_WIDTH, CENSUS_HEIGHT)]
    DegenerateSize { width: usize, height: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Sgm(#[from] SgmError),
    #[error(transparent)]
    Roi(#[from] RoiError),
}

/// Knobs of one pipeline invocation. The depth range has no sensible
/// default and must always be supplied.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub plane_count: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub p1: f32,
    pub p2: f32,
    /// Processing downscale factor applied by [`rescale_inputs`].
    pub scale: f64,
    pub overlap_threshold: f64,
    pub score_cutoff: f64,
    pub selective: bool,
    pub edge_provider: EdgeProvider,
}

impl PipelineConfig {
    pub fn new(d_min: f64, d_max: f64) -> Self {
        Self {
            plane_count: 128,
            d_min,
            d_max,
            p1: 5.0,
            p2: 50.0,
            scale: 0.5,
            overlap_threshold: 0.3,
            score_cutoff: 0.8,
            selective: false,
            edge_provider: EdgeProvider::default(),
        }
    }

    fn validate(&self) -> Result<SgmParams, PipelineError> {
        if self.plane_count < 2 {
            return Err(PipelineError::InvalidConfig(format!(
                "plane count must be at least 2, got {}",
                self.plane_count
            )));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "scale must be in (0, 1], got {}",
                self.scale
            )));
        }
        if !(0.0..=1.0).contains(&self.overlap_threshold) {
            return Err(PipelineError::InvalidConfig(format!(
                "overlap threshold must be in [0, 1], got {}",
                self.overlap_threshold
            )));
        }
        SgmParams::new(self.p1, self.p2).map_err(PipelineError::InvalidConfig)
    }
}

/// Wall time per stage plus any non-fatal warnings of the run.
#[derive(Debug, Clone, Default)]
pub struct TimingReport {
    stages: Vec<(String, f64)>,
    pub total_ms: f64,
    pub warnings: Vec<String>,
}

impl TimingReport {
    fn add(&mut self, name: &str, ms: f64) {
        if let Some(entry) = self.stages.iter_mut().find(|(n, _)| n == name) {
            entry.1 += ms;
        } else {
            self.stages.push((name.to_string(), ms));
        }
    }

    pub fn stages(&self) -> &[(String, f64)] {
        &self.stages
    }

    pub fn stage_ms(&self, name: &str) -> f64 {
        self.stages
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, ms)| *ms)
            .unwrap_or(0.0)
    }

    /// Structured text form: one `stage milliseconds` line each, then the
    /// total; warnings as comments.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            out.push_str(&format!("# warning: {w}\n"));
        }
        for (name, ms) in &self.stages {
            out.push_str(&format!("{name} {ms:.3}\n"));
        }
        out.push_str(&format!("total {:.3}\n", self.total_ms));
        out
    }
}

/// Pick the five-frame bundle centered at `center_index`; the sequence
/// boundaries have no padding.
pub fn select_bundle(
    sequence: &[crate::geometry::CameraView],
    center_index: usize,
) -> Result<ImageBundle, PipelineError> {
    let len = sequence.len();
    if len < 5 || center_index < 2 || center_index + 2 >= len {
        return Err(PipelineError::OutOfRange {
            center: center_index,
            len,
        });
    }
    Ok(ImageBundle::new(
        sequence[center_index].clone(),
        [
            sequence[center_index - 2].clone(),
            sequence[center_index - 1].clone(),
        ],
        [
            sequence[center_index + 1].clone(),
            sequence[center_index + 2].clone(),
        ],
    )?)
}

/// Downscale the bundle by area averaging and carry intrinsics and ROI
/// coordinates along. Intrinsics scale by the realized per-axis factor;
/// ROI coordinates are rounded outward. `scale = 1` is the identity.
pub fn rescale_inputs(
    bundle: &ImageBundle,
    rois: &[DetectionBox],
    config: &PipelineConfig,
) -> Result<(ImageBundle, Vec<DetectionBox>), PipelineError> {
    if !(config.scale > 0.0 && config.scale <= 1.0) {
        return Err(PipelineError::InvalidConfig(format!(
            "scale must be in (0, 1], got {}",
            config.scale
        )));
    }
    if config.scale == 1.0 {
        return Ok((bundle.clone(), rois.to_vec()));
    }
    let (w, h) = (bundle.width(), bundle.height());
    let new_w = (w as f64 * config.scale).round() as usize;
    let new_h = (h as f64 * config.scale).round() as usize;
    if new_w < CENSUS_WIDTH || new_h < CENSUS_HEIGHT {
        return Err(PipelineError::DegenerateSize {
            width: new_w,
            height: new_h,
        });
    }
    let sx = new_w as f64 / w as f64;
    let sy = new_h as f64 / h as f64;
    let scale_view = |view: &crate::geometry::CameraView| crate::geometry::CameraView {
        intrinsics: view.intrinsics.scaled(sx, sy),
        pose: view.pose,
        image: view.image.resize_area(new_w, new_h),
    };
    let scaled = ImageBundle::new(
        scale_view(&bundle.reference),
        [scale_view(&bundle.before[0]), scale_view(&bundle.before[1])],
        [scale_view(&bundle.after[0]), scale_view(&bundle.after[1])],
    )?;
    let scaled_rois = rois.iter().map(|b| b.scaled_outward(sx, sy)).collect();
    Ok((scaled, scaled_rois))
}

/// Run the depth pipeline on a processing-resolution bundle.
///
/// Full mode: line mask, cost volume, eight-path SGM, winner extraction,
/// depth, median filter. Selective mode: Soft-NMS with the score cutoff,
/// then the full stage sequence per surviving box on the cropped bundle,
/// fused by detection score. Zero surviving boxes produce an all-invalid
/// map plus a warning rather than an error, so batch runs continue.
pub fn run(
    bundle: &ImageBundle,
    rois: &[DetectionBox],
    config: &PipelineConfig,
) -> Result<(DepthMap, TimingReport), PipelineError> {
    let params = config.validate()?;
    let total_start = Instant::now();
    let mut report = TimingReport::default();

    let depth = if config.selective {
        run_selective(bundle, rois, config, &params, &mut report)?
    } else {
        run_stages(bundle, config, &params, &mut report)?
    };

    report.total_ms = ms_since(total_start);
    Ok((depth, report))
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn run_stages(
    bundle: &ImageBundle,
    config: &PipelineConfig,
    params: &SgmParams,
    report: &mut TimingReport,
) -> Result<DepthMap, PipelineError> {
    let t = Instant::now();
    let mask = config.edge_provider.line_mask(&bundle.reference.image);
    report.add("edges", ms_since(t));

    let t = Instant::now();
    let stack = crate::geometry::sample_planes(
        config.d_min,
        config.d_max,
        config.plane_count,
        Vector3::z(),
    )?;
    let volume = build_cost_volume(bundle, &stack, None)?;
    report.add("matching", ms_since(t));

    let t = Instant::now();
    let aggregated = aggregate(&volume, &mask, params)?;
    report.add("sgm", ms_since(t));

    let t = Instant::now();
    let indices = winner_take_all(&aggregated);
    let depth = extract_depth(&indices, &stack, &bundle.reference.intrinsics);
    report.add("extract", ms_since(t));

    let t = Instant::now();
    let depth = median_filter_3x3(&depth);
    report.add("median", ms_since(t));

    Ok(depth)
}

fn run_selective(
    bundle: &ImageBundle,
    rois: &[DetectionBox],
    config: &PipelineConfig,
    params: &SgmParams,
    report: &mut TimingReport,
) -> Result<DepthMap, PipelineError> {
    let (w, h) = (bundle.width(), bundle.height());

    let t = Instant::now();
    let boxes = soft_nms(rois, config.overlap_threshold, config.score_cutoff);
    report.add("soft_nms", ms_since(t));

    if boxes.is_empty() {
        report
            .warnings
            .push("no detections survived Soft-NMS; emitting an all-invalid depth map".into());
        return Ok(DepthMap::new_invalid(w, h));
    }

    let mut fragments: Vec<(DetectionBox, DepthMap)> = Vec::with_capacity(boxes.len());
    for bx in boxes {
        let Some(rect) = bx.pixel_rect(w, h) else {
            report
                .warnings
                .push(format!("box ({},{})-({},{}) lies outside the frame; skipped", bx.x0, bx.y0, bx.x1, bx.y1));
            continue;
        };
        if rect.width() < CENSUS_WIDTH || rect.height() < CENSUS_HEIGHT {
            report.warnings.push(format!(
                "box ({},{})-({},{}) is smaller than the matching window; skipped",
                bx.x0, bx.y0, bx.x1, bx.y1
            ));
            continue;
        }
        let t = Instant::now();
        let sub_bundle = bundle.crop(rect)?;
        report.add("crop", ms_since(t));
        let fragment = run_stages(&sub_bundle, config, params, report)?;
        fragments.push((bx, fragment));
    }

    if fragments.is_empty() {
        report
            .warnings
            .push("every surviving box was skipped; emitting an all-invalid depth map".into());
        return Ok(DepthMap::new_invalid(w, h));
    }

    let t = Instant::now();
    let fused = fuse_selective_depth(&fragments, w, h)?;
    report.add("fuse", ms_since(t));
    Ok(fused)
}
