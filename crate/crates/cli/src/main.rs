//! `depth`: multi-view plane-sweep depth estimation for one five-frame
//! bundle of a calibrated image sequence, full-frame or confined to
//! detected regions of interest.
//!
//! Exit code 0 on success; on failure a JSON error record is written to
//! stderr and the exit code is nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use nalgebra::{Matrix3, Vector3};

use planesweep::edges::{EdgeProvider, LsdParams};
use planesweep::geometry::{CameraIntrinsics, CameraPose, CameraView};
use planesweep::io;
use planesweep::pipeline::{rescale_inputs, run, select_bundle, PipelineConfig};
use planesweep::roi::DetectionBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EdgeKind {
    /// LSD-style line segment detection (default configuration).
    Lsd,
    /// Gradient-magnitude threshold mask.
    Gradient,
    /// No line mask; full smoothing everywhere.
    None,
}

#[derive(Parser, Debug)]
#[command(
    name = "depth",
    about = "Multi-view plane-sweep depth estimation with edge-aware SGM",
    version
)]
struct Args {
    /// Camera file: JSON list of frames with intrinsics, rotation R
    /// (row-major, world-to-camera) and camera center C
    #[arg(long)]
    cameras: PathBuf,

    /// Directory holding the frame images referenced by the camera file
    #[arg(long)]
    frames: PathBuf,

    /// Index of the reference frame within the camera file (needs two
    /// frames on either side)
    #[arg(long)]
    center: usize,

    /// Detection file: `frame_id x0 y0 x1 y1 score label` per line, in
    /// original image pixels
    #[arg(long)]
    rois: Option<PathBuf>,

    /// Reconstruct only inside the detected regions
    #[arg(long)]
    selective: bool,

    /// Number of frontoparallel sweep planes
    #[arg(long, default_value_t = 128)]
    planes: usize,

    /// Nearest plane distance in meters
    #[arg(long)]
    dmin: f64,

    /// Farthest plane distance in meters
    #[arg(long)]
    dmax: f64,

    /// SGM penalty for one-step plane changes
    #[arg(long, default_value_t = 5.0)]
    p1: f32,

    /// SGM penalty for larger plane changes
    #[arg(long, default_value_t = 50.0)]
    p2: f32,

    /// Processing downscale factor
    #[arg(long, default_value_t = 0.5)]
    scale: f64,

    /// Soft-NMS overlap threshold
    #[arg(long = "nms-threshold", default_value_t = 0.3)]
    nms_threshold: f64,

    /// Drop detections whose decayed score falls below this
    #[arg(long = "score-cutoff", default_value_t = 0.8)]
    score_cutoff: f64,

    /// Line mask source for the edge-aware penalties
    #[arg(long, value_enum, default_value_t = EdgeKind::Lsd)]
    edge: EdgeKind,

    /// Depth output as PFM (invalid pixels +inf)
    #[arg(long = "out-pfm")]
    out_pfm: Option<PathBuf>,

    /// Depth output as color-coded PNG (red near, blue far)
    #[arg(long = "out-png")]
    out_png: Option<PathBuf>,

    /// Timing report (stage name and milliseconds per line)
    #[arg(long)]
    timing: Option<PathBuf>,

    /// Process every valid center index with stride 1; output names get a
    /// `_NNN` suffix
    #[arg(long)]
    batch: bool,

    /// Dump the line mask and a few cost-volume slices here
    #[arg(long = "debug-dir")]
    debug_dir: Option<PathBuf>,
}

struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

macro_rules! cli_from {
    ($ty:ty, $kind:expr) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($kind, e.to_string())
            }
        }
    };
}

cli_from!(planesweep::io::IoError, "io");
cli_from!(planesweep::geometry::GeometryError, "geometry");
cli_from!(planesweep::matching::MatchingError, "matching");
cli_from!(planesweep::roi::RoiError, "roi");
cli_from!(planesweep::pipeline::PipelineError, "pipeline");

fn main() -> ExitCode {
    let args = Args::parse();
    match run_cli(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": { "kind": e.kind, "message": e.message }
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

fn run_cli(args: &Args) -> Result<(), CliError> {
    let frames = io::read_camera_file(&args.cameras)?;
    let views: Vec<CameraView> = frames
        .iter()
        .map(|f| -> Result<CameraView, CliError> {
            let image = io::load_gray_image(args.frames.join(&f.image_path))?;
            let intrinsics = CameraIntrinsics::with_skew(f.fx, f.fy, f.cx, f.cy, f.skew)?;
            let pose = CameraPose::new(
                Matrix3::from_row_slice(&f.r),
                Vector3::new(f.c[0], f.c[1], f.c[2]),
            )?;
            Ok(CameraView::new(intrinsics, pose, image))
        })
        .collect::<Result<_, _>>()?;

    let roi_records = match &args.rois {
        Some(path) => io::read_roi_file(path)?,
        None => Vec::new(),
    };

    let mut config = PipelineConfig::new(args.dmin, args.dmax);
    config.plane_count = args.planes;
    config.p1 = args.p1;
    config.p2 = args.p2;
    config.scale = args.scale;
    config.overlap_threshold = args.nms_threshold;
    config.score_cutoff = args.score_cutoff;
    config.selective = args.selective;
    config.edge_provider = match args.edge {
        EdgeKind::Lsd => EdgeProvider::Lsd(LsdParams::default()),
        EdgeKind::Gradient => EdgeProvider::GradientThreshold { threshold: 30.0 },
        EdgeKind::None => EdgeProvider::Disabled,
    };

    if args.batch {
        if views.len() < 5 {
            return Err(CliError::new(
                "pipeline",
                format!("batch mode needs at least 5 frames, got {}", views.len()),
            ));
        }
        for center in 2..views.len() - 2 {
            process_center(args, &frames, &views, &roi_records, &config, center, true)?;
        }
        Ok(())
    } else {
        process_center(args, &frames, &views, &roi_records, &config, args.center, false)
    }
}

fn process_center(
    args: &Args,
    frames: &[io::CameraFileFrame],
    views: &[CameraView],
    roi_records: &[io::RoiRecord],
    config: &PipelineConfig,
    center: usize,
    suffixed: bool,
) -> Result<(), CliError> {
    let bundle = select_bundle(views, center)?;
    let frame_id = &frames[center].id;
    let rois: Vec<DetectionBox> = roi_records
        .iter()
        .filter(|r| &r.frame_id == frame_id)
        .map(|r| r.detection.clone())
        .collect();

    let (bundle, rois) = rescale_inputs(&bundle, &rois, config)?;
    let (depth, report) = run(&bundle, &rois, config)?;
    for warning in &report.warnings {
        eprintln!("warning (frame {frame_id}): {warning}");
    }

    let out_path = |base: &Path| -> PathBuf {
        if !suffixed {
            return base.to_path_buf();
        }
        let stem = base.file_stem().unwrap_or_default().to_string_lossy();
        let ext = base
            .extension()
            .map(|e| format!(".{}", e.to_string_lossy()))
            .unwrap_or_default();
        base.with_file_name(format!("{stem}_{center:03}{ext}"))
    };

    if let Some(path) = &args.out_pfm {
        io::write_depth_pfm_file(&depth, out_path(path))?;
    }
    if let Some(path) = &args.out_png {
        io::write_depth_png(&depth, config.d_min, config.d_max, out_path(path))?;
    }
    if let Some(path) = &args.timing {
        std::fs::write(out_path(path), report.to_text())
            .map_err(|e| CliError::new("io", e.to_string()))?;
    }
    if let Some(dir) = &args.debug_dir {
        write_debug_dumps(dir, center, &bundle, config)?;
    }
    Ok(())
}

/// Recompute the line mask and cost volume for inspection dumps. Only runs
/// when explicitly requested; doubles the matching work.
fn write_debug_dumps(
    dir: &Path,
    center: usize,
    bundle: &planesweep::matching::ImageBundle,
    config: &PipelineConfig,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::new("io", e.to_string()))?;
    let mask = config.edge_provider.line_mask(&bundle.reference.image);
    io::write_mask_png(&mask, dir.join(format!("line_mask_{center:03}.png")))?;

    let stack = planesweep::geometry::sample_planes(
        config.d_min,
        config.d_max,
        config.plane_count,
        Vector3::z(),
    )?;
    let volume = planesweep::matching::build_cost_volume(bundle, &stack, None)?;
    for plane in [0, config.plane_count / 2, config.plane_count - 1] {
        io::write_cost_slice_png(
            &volume,
            plane,
            dir.join(format!("cost_{center:03}_plane_{plane:03}.png")),
        )?;
    }
    Ok(())
}
