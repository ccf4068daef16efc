//! Drive the real `depth` binary over a synthetic scene emitted in the
//! pipeline's own file formats.

use std::path::Path;
use std::process::Command;

use planesweep::io::{self, RoiRecord};
use planesweep::roi::DetectionBox;
use planesweep::synth::two_plane_scene;

fn depth_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_depth"))
}

fn emit_scene(dir: &Path) -> std::path::PathBuf {
    let scene = two_plane_scene(96, 72, 10.0, 30.0, 0.25);
    scene.emit(dir).unwrap()
}

#[test]
fn full_mode_produces_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cameras = emit_scene(dir.path());
    let pfm = dir.path().join("depth.pfm");
    let png = dir.path().join("depth.png");
    let timing = dir.path().join("timing.txt");

    let status = depth_cmd()
        .args(["--cameras", cameras.to_str().unwrap()])
        .args(["--frames", dir.path().to_str().unwrap()])
        .args(["--center", "2"])
        .args(["--dmin", "8", "--dmax", "40", "--planes", "24"])
        .args(["--scale", "1.0", "--edge", "none"])
        .args(["--out-pfm", pfm.to_str().unwrap()])
        .args(["--out-png", png.to_str().unwrap()])
        .args(["--timing", timing.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());

    let depth = io::read_depth_pfm_file(&pfm).unwrap();
    assert_eq!((depth.width(), depth.height()), (96, 72));
    assert!(depth.valid_count() > 96 * 72 / 2);
    assert!(png.metadata().unwrap().len() > 0);

    let report = std::fs::read_to_string(&timing).unwrap();
    for stage in ["edges", "matching", "sgm", "extract", "median", "total"] {
        assert!(report.lines().any(|l| l.starts_with(stage)), "missing {stage}");
    }
}

#[test]
fn selective_mode_confines_depth_to_the_box() {
    let dir = tempfile::tempdir().unwrap();
    let cameras = emit_scene(dir.path());
    let rois = dir.path().join("rois.txt");
    io::write_roi_file(
        &[RoiRecord {
            frame_id: "002".into(),
            detection: DetectionBox::new(24.0, 18.0, 72.0, 54.0, 0.93, "building").unwrap(),
        }],
        &rois,
    )
    .unwrap();
    let pfm = dir.path().join("depth.pfm");

    let status = depth_cmd()
        .args(["--cameras", cameras.to_str().unwrap()])
        .args(["--frames", dir.path().to_str().unwrap()])
        .args(["--center", "2", "--selective"])
        .args(["--rois", rois.to_str().unwrap()])
        .args(["--dmin", "8", "--dmax", "40", "--planes", "24"])
        .args(["--scale", "1.0", "--edge", "none"])
        .args(["--out-pfm", pfm.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());

    let depth = io::read_depth_pfm_file(&pfm).unwrap();
    assert!(depth.valid_count() > 0);
    for y in 0..72 {
        for x in 0..96 {
            if !(24..72).contains(&x) || !(18..54).contains(&y) {
                assert_eq!(depth.get(x, y), None, "unexpected depth outside box at ({x},{y})");
            }
        }
    }
}

#[test]
fn batch_mode_writes_suffixed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cameras = emit_scene(dir.path());
    let pfm = dir.path().join("depth.pfm");

    let status = depth_cmd()
        .args(["--cameras", cameras.to_str().unwrap()])
        .args(["--frames", dir.path().to_str().unwrap()])
        .args(["--center", "2", "--batch"])
        .args(["--dmin", "8", "--dmax", "40", "--planes", "12"])
        .args(["--scale", "1.0", "--edge", "none"])
        .args(["--out-pfm", pfm.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    // five frames: only center 2 is valid
    assert!(dir.path().join("depth_002.pfm").exists());
    assert!(!dir.path().join("depth_001.pfm").exists());
}

#[test]
fn missing_camera_file_yields_json_error_record() {
    let output = depth_cmd()
        .args(["--cameras", "/nonexistent/cameras.json"])
        .args(["--frames", "/tmp"])
        .args(["--center", "2", "--dmin", "8", "--dmax", "40"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(record["error"]["kind"], "io");
    assert!(record["error"]["message"].is_string());
}

#[test]
fn out_of_range_center_yields_json_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let cameras = emit_scene(dir.path());
    let output = depth_cmd()
        .args(["--cameras", cameras.to_str().unwrap()])
        .args(["--frames", dir.path().to_str().unwrap()])
        .args(["--center", "0", "--dmin", "8", "--dmax", "40"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(record["error"]["kind"], "pipeline");
}
