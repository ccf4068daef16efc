//! Binary line mask of the reference image, used to relax the SGM
//! large-change penalty at likely object boundaries.
//!
//! The default detector is a lightweight LSD-style extractor (gradient
//! orientation, region growing with a 22.5 degree tolerance, rectangle
//! fitting, a-contrario NFA validation with epsilon = 1). Downstream only
//! consumes the binary mask, so a plain gradient-magnitude threshold and a
//! disabled provider are available as well.

mod lsd;

pub use lsd::{detect_lines, LsdParams};

use crate::raster::{GrayRaster, Mask};

/// Per-pixel boolean map marking pixels covered by detected line segments.
pub type LineMask = Mask;

/// Straight segment with sub-pixel endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSegment {
    pub p0: (f32, f32),
    pub p1: (f32, f32),
    pub width: f32,
}

impl LineSegment {
    pub fn length(&self) -> f32 {
        let dx = self.p1.0 - self.p0.0;
        let dy = self.p1.1 - self.p0.1;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Source of the line mask fed into the SGM penalty modulation.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeProvider {
    /// LSD-style segment detection, rasterized.
    Lsd(LsdParams),
    /// Plain gradient-magnitude threshold (intensity units per pixel).
    GradientThreshold { threshold: f32 },
    /// No mask; every pixel keeps the full P2 penalty.
    Disabled,
}

impl Default for EdgeProvider {
    fn default() -> Self {
        EdgeProvider::Lsd(LsdParams::default())
    }
}

impl EdgeProvider {
    pub fn line_mask(&self, image: &GrayRaster) -> LineMask {
        match self {
            EdgeProvider::Lsd(params) => {
                let segments = detect_lines(image, params);
                rasterize_mask(&segments, image.width(), image.height())
            }
            EdgeProvider::GradientThreshold { threshold } => {
                gradient_threshold_mask(image, *threshold)
            }
            EdgeProvider::Disabled => Mask::new_false(image.width(), image.height()),
        }
    }
}

/// Rasterize segments into a mask: Bresenham coverage widened to the
/// segment width (at least one pixel). Out-of-bounds parts are clipped.
pub fn rasterize_mask(segments: &[LineSegment], width: usize, height: usize) -> LineMask {
    let mut mask = Mask::new_false(width, height);
    for seg in segments {
        let w_px = (seg.width.round() as i64).max(1);
        let dx = seg.p1.0 - seg.p0.0;
        let dy = seg.p1.1 - seg.p0.1;
        let len = (dx * dx + dy * dy).sqrt();
        if len <= 0.0 {
            continue;
        }
        let (px, py) = (dy / len, -dx / len);
        for i in 0..w_px {
            let t = (i - (w_px - 1) / 2) as f32;
            let x0 = (seg.p0.0 + t * px).round() as i64;
            let y0 = (seg.p0.1 + t * py).round() as i64;
            let x1 = (seg.p1.0 + t * px).round() as i64;
            let y1 = (seg.p1.1 + t * py).round() as i64;
            bresenham(&mut mask, x0, y0, x1, y1);
        }
    }
    mask
}

fn bresenham(mask: &mut Mask, mut x0: i64, mut y0: i64, x1: i64, y1: i64) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 && (x0 as usize) < mask.width() && (y0 as usize) < mask.height() {
            mask.set(x0 as usize, y0 as usize, true);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn gradient_threshold_mask(image: &GrayRaster, threshold: f32) -> Mask {
    let (w, h) = (image.width(), image.height());
    let mut mask = Mask::new_false(w, h);
    if w < 2 || h < 2 {
        return mask;
    }
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let a = image.get(x, y);
            let b = image.get(x + 1, y);
            let c = image.get(x, y + 1);
            let d = image.get(x + 1, y + 1);
            let gx = 0.5 * ((b - a) + (d - c));
            let gy = 0.5 * ((c - a) + (d - b));
            if (gx * gx + gy * gy).sqrt() >= threshold {
                mask.set(x, y, true);
            }
        }
    }
    mask
}
