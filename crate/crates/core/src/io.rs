//! File formats: PFM depth maps, color-coded depth PNGs, the JSON camera
//! file and the plain-text detection file, plus debug dumps.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::CostVolume;
use crate::raster::{GrayRaster, Mask};
use crate::roi::DetectionBox;
use crate::sgm::DepthMap;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

fn malformed(what: &'static str, detail: impl Into<String>) -> IoError {
    IoError::Malformed {
        what,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// PFM
// ---------------------------------------------------------------------------

/// Write a single-channel PFM: rows bottom-to-top, little-endian (scale
/// field -1.0), invalid pixels encoded as +inf.
pub fn write_depth_pfm(depth: &DepthMap, mut w: impl Write) -> Result<(), IoError> {
    write!(w, "Pf\n{} {}\n-1.0\n", depth.width(), depth.height())?;
    for y in (0..depth.height()).rev() {
        for x in 0..depth.width() {
            w.write_all(&depth.raw(x, y).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_depth_pfm_file(depth: &DepthMap, path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut file = BufWriter::new(File::create(path)?);
    write_depth_pfm(depth, &mut file)?;
    file.flush()?;
    Ok(())
}

/// Read a single-channel PFM written by [`write_depth_pfm`]. Both
/// endiannesses are accepted; the scale magnitude is ignored.
pub fn read_depth_pfm(mut r: impl Read) -> Result<DepthMap, IoError> {
    let mut header = Vec::new();
    // three whitespace-terminated tokens after the magic line
    let mut tokens = Vec::new();
    let mut token = Vec::new();
    let mut buf = [0u8; 1];
    while tokens.len() < 4 {
        r.read_exact(&mut buf)?;
        header.push(buf[0]);
        if buf[0].is_ascii_whitespace() {
            if !token.is_empty() {
                tokens.push(String::from_utf8_lossy(&token).into_owned());
                token.clear();
            }
            // exactly one whitespace separates the scale from the raster
        } else {
            token.push(buf[0]);
        }
    }
    if tokens[0] != "Pf" {
        return Err(malformed("pfm", format!("bad magic {:?}", tokens[0])));
    }
    let width: usize = tokens[1]
        .parse()
        .map_err(|_| malformed("pfm", "bad width"))?;
    let height: usize = tokens[2]
        .parse()
        .map_err(|_| malformed("pfm", "bad height"))?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| malformed("pfm", "bad scale"))?;
    let little_endian = scale < 0.0;

    let mut raw = vec![0u8; width * height * 4];
    r.read_exact(&mut raw)?;
    let mut depth = DepthMap::new_invalid(width, height);
    for y in 0..height {
        let src_row = height - 1 - y;
        for x in 0..width {
            let i = (src_row * width + x) * 4;
            let bytes = [raw[i], raw[i + 1], raw[i + 2], raw[i + 3]];
            let v = if little_endian {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
            depth.set(x, y, v);
        }
    }
    Ok(depth)
}

pub fn read_depth_pfm_file(path: impl AsRef<Path>) -> Result<DepthMap, IoError> {
    read_depth_pfm(BufReader::new(File::open(path)?))
}

// ---------------------------------------------------------------------------
// Color-coded depth PNG
// ---------------------------------------------------------------------------

/// Map a valid depth onto the red-green-blue ramp, linear in inverse depth
/// with `near` at red. Invalid pixels are black.
pub fn depth_color(depth: f32, near: f64, far: f64) -> [u8; 3] {
    if !depth.is_finite() {
        return [0, 0, 0];
    }
    let inv_near = 1.0 / near;
    let inv_far = 1.0 / far;
    let t = ((inv_near - 1.0 / depth as f64) / (inv_near - inv_far)).clamp(0.0, 1.0);
    let r = (1.0 - 2.0 * t).max(0.0);
    let g = 1.0 - (2.0 * t - 1.0).abs();
    let b = (2.0 * t - 1.0).max(0.0);
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

pub fn write_depth_png(
    depth: &DepthMap,
    near: f64,
    far: f64,
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let mut img = image::RgbImage::new(depth.width() as u32, depth.height() as u32);
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            img.put_pixel(x as u32, y as u32, image::Rgb(depth_color(depth.raw(x, y), near, far)));
        }
    }
    img.save(path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Grayscale rasters and debug dumps
// ---------------------------------------------------------------------------

pub fn load_gray_image(path: impl AsRef<Path>) -> Result<GrayRaster, IoError> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(GrayRaster::from_fn(w, h, |x, y| {
        img.get_pixel(x as u32, y as u32)[0] as f32
    }))
}

pub fn save_gray_image(raster: &GrayRaster, path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut img = image::GrayImage::new(raster.width() as u32, raster.height() as u32);
    for y in 0..raster.height() {
        for x in 0..raster.width() {
            let v = raster.get(x, y).clamp(0.0, 255.0).round() as u8;
            img.put_pixel(x as u32, y as u32, image::Luma([v]));
        }
    }
    img.save(path)?;
    Ok(())
}

/// Dump a line mask as a binary PNG (0 = no line, 255 = line).
pub fn write_mask_png(mask: &Mask, path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut img = image::GrayImage::new(mask.width() as u32, mask.height() as u32);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            img.put_pixel(
                x as u32,
                y as u32,
                image::Luma([if mask.get(x, y) { 255 } else { 0 }]),
            );
        }
    }
    img.save(path)?;
    Ok(())
}

/// Dump one plane of a cost volume, costs scaled by 4 onto 0..248.
pub fn write_cost_slice_png(
    volume: &CostVolume,
    plane: usize,
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let mut img = image::GrayImage::new(volume.width() as u32, volume.height() as u32);
    for y in 0..volume.height() {
        for x in 0..volume.width() {
            let v = (volume.cost_at(x, y, plane) * 4.0).clamp(0.0, 248.0).round() as u8;
            img.put_pixel(x as u32, y as u32, image::Luma([v]));
        }
    }
    img.save(path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Camera file
// ---------------------------------------------------------------------------

/// One frame of the camera file: a top-level JSON list of these records.
/// `r` is the world-to-camera rotation, row-major; `c` the camera center.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CameraFileFrame {
    pub id: String,
    pub image_path: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    #[serde(rename = "C")]
    pub c: [f64; 3],
}

pub fn read_camera_file(path: impl AsRef<Path>) -> Result<Vec<CameraFileFrame>, IoError> {
    let file = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(file)?)
}

pub fn write_camera_file(
    frames: &[CameraFileFrame],
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, frames)?;
    file.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Detection (ROI) file
// ---------------------------------------------------------------------------

/// One detection record: frame id plus box in original-image pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiRecord {
    pub frame_id: String,
    pub detection: DetectionBox,
}

/// Read the detection file: one whitespace-separated record per line,
/// `frame_id x0 y0 x1 y1 score label`; `#` starts a comment.
pub fn read_roi_file(path: impl AsRef<Path>) -> Result<Vec<RoiRecord>, IoError> {
    let file = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(malformed(
                "roi file",
                format!("line {}: expected 7 fields, got {}", lineno + 1, fields.len()),
            ));
        }
        let parse = |s: &str, what: &'static str| -> Result<f64, IoError> {
            s.parse()
                .map_err(|_| malformed("roi file", format!("line {}: bad {what}", lineno + 1)))
        };
        let detection = DetectionBox::new(
            parse(fields[1], "x0")?,
            parse(fields[2], "y0")?,
            parse(fields[3], "x1")?,
            parse(fields[4], "y1")?,
            parse(fields[5], "score")?,
            fields[6],
        )
        .map_err(|e| malformed("roi file", format!("line {}: {e}", lineno + 1)))?;
        records.push(RoiRecord {
            frame_id: fields[0].to_string(),
            detection,
        });
    }
    Ok(records)
}

pub fn write_roi_file(records: &[RoiRecord], path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# frame_id x0 y0 x1 y1 score label")?;
    for r in records {
        let b = &r.detection;
        writeln!(
            file,
            "{} {} {} {} {} {} {}",
            r.frame_id, b.x0, b.y0, b.x1, b.y1, b.score, b.label
        )?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_is_bit_identical() {
        let mut depth = DepthMap::new_invalid(5, 3);
        depth.set(0, 0, 1.25);
        depth.set(4, 2, 37.5);
        depth.set(2, 1, 0.1);
        let mut bytes = Vec::new();
        write_depth_pfm(&depth, &mut bytes).unwrap();
        let back = read_depth_pfm(bytes.as_slice()).unwrap();
        let bits = |d: &DepthMap| d.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&depth), bits(&back));
    }

    #[test]
    fn pfm_header_and_row_order() {
        let mut depth = DepthMap::new_invalid(2, 2);
        depth.set(0, 0, 1.0);
        depth.set(1, 1, 2.0);
        let mut bytes = Vec::new();
        write_depth_pfm(&depth, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"Pf\n2 2\n-1.0\n"));
        let pixels = &bytes[b"Pf\n2 2\n-1.0\n".len()..];
        // bottom row first: (0,1)=inf, (1,1)=2.0
        assert_eq!(f32::from_le_bytes(pixels[0..4].try_into().unwrap()), f32::INFINITY);
        assert_eq!(f32::from_le_bytes(pixels[4..8].try_into().unwrap()), 2.0);
        assert_eq!(f32::from_le_bytes(pixels[8..12].try_into().unwrap()), 1.0);
    }

    #[test]
    fn depth_color_ramp_endpoints() {
        assert_eq!(depth_color(2.0, 2.0, 50.0), [255, 0, 0]);
        assert_eq!(depth_color(50.0, 2.0, 50.0), [0, 0, 255]);
        assert_eq!(depth_color(f32::INFINITY, 2.0, 50.0), [0, 0, 0]);
        // ramp midpoint in inverse depth is green
        let mid = 1.0 / ((1.0 / 2.0 + 1.0 / 50.0) / 2.0);
        assert_eq!(depth_color(mid as f32, 2.0, 50.0), [0, 255, 0]);
    }

    #[test]
    fn camera_file_round_trip() {
        let frames = vec![CameraFileFrame {
            id: "000".into(),
            image_path: "frame_000.png".into(),
            fx: 300.0,
            fy: 300.0,
            cx: 160.0,
            cy: 120.0,
            skew: 0.0,
            r: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            c: [0.5, 0.0, 0.0],
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cameras.json");
        write_camera_file(&frames, &path).unwrap();
        assert_eq!(read_camera_file(&path).unwrap(), frames);
    }

    #[test]
    fn roi_file_round_trip_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rois.txt");
        std::fs::write(
            &path,
            "# comment line\n002 10 20 110 140 0.91 building\n\n002 5 5 50 60 0.85 building # trailing\n",
        )
        .unwrap();
        let records = read_roi_file(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].frame_id, "002");
        assert_eq!(records[0].detection.x1, 110.0);
        assert_eq!(records[1].detection.score, 0.85);

        let path2 = dir.path().join("rois2.txt");
        write_roi_file(&records, &path2).unwrap();
        assert_eq!(read_roi_file(&path2).unwrap(), records);
    }

    #[test]
    fn malformed_roi_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "002 10 20 110 140 0.91\n").unwrap();
        assert!(read_roi_file(&path).is_err());
    }

    #[test]
    fn all_invalid_map_writes_black_png_and_infinite_pfm() {
        let dir = tempfile::tempdir().unwrap();
        let depth = DepthMap::new_invalid(6, 4);
        let png_path = dir.path().join("invalid.png");
        write_depth_png(&depth, 2.0, 50.0, &png_path).unwrap();
        let img = image::open(&png_path).unwrap().into_rgb8();
        assert!(img.pixels().all(|p| p.0 == [0, 0, 0]));

        let mut bytes = Vec::new();
        write_depth_pfm(&depth, &mut bytes).unwrap();
        let back = read_depth_pfm(bytes.as_slice()).unwrap();
        assert!(back.as_slice().iter().all(|v| *v == f32::INFINITY));
    }

    #[test]
    fn gray_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = GrayRaster::from_fn(7, 5, |x, y| ((x * 31 + y * 57) % 256) as f32);
        save_gray_image(&img, &path).unwrap();
        let back = load_gray_image(&path).unwrap();
        assert_eq!(img, back);
    }
}
