//! Emit a synthetic five-frame scene (camera file + PNG frames + a
//! detection file) into a directory, ready for the `depth` CLI.
//!
//! Usage: `cargo run --release -p planesweep --example gen_scene -- [dir]`

use planesweep::io::{write_roi_file, RoiRecord};
use planesweep::roi::DetectionBox;
use planesweep::synth::two_plane_scene;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "demo_scene".to_string());
    let scene = two_plane_scene(640, 480, 10.0, 30.0, 0.25);
    let camera_path = scene.emit(&dir).expect("failed to write scene");

    // detection around the 10 m slab in the reference frame
    let (_, gt) = scene.render(2);
    let mut x0 = usize::MAX;
    let mut y0 = usize::MAX;
    let (mut x1, mut y1) = (0usize, 0usize);
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if gt.get(x, y).is_some_and(|d| d < 20.0) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    let margin = 6.0;
    let detection = DetectionBox::new(
        (x0 as f64 - margin).max(0.0),
        (y0 as f64 - margin).max(0.0),
        (x1 as f64 + margin).min(gt.width() as f64),
        (y1 as f64 + margin).min(gt.height() as f64),
        0.93,
        "building",
    )
    .unwrap();
    let roi_path = std::path::Path::new(&dir).join("rois.txt");
    write_roi_file(
        &[RoiRecord {
            frame_id: "002".into(),
            detection,
        }],
        &roi_path,
    )
    .expect("failed to write detections");

    println!("scene written to {dir}/");
    println!("  cameras: {}", camera_path.display());
    println!("  detections: {}", roi_path.display());
    println!();
    println!("try:");
    println!(
        "  cargo run --release -p planesweep-cli --bin depth -- \\\n    --cameras {dir}/cameras.json --frames {dir} --center 2 \\\n    --dmin 8 --dmax 40 --out-pfm depth.pfm --out-png depth.png --timing timing.txt"
    );
    println!(
        "  cargo run --release -p planesweep-cli --bin depth -- \\\n    --cameras {dir}/cameras.json --frames {dir} --center 2 --selective \\\n    --rois {dir}/rois.txt --dmin 8 --dmax 40 --out-png depth_roi.png"
    );
}
