//! Basic raster containers shared across the pipeline: grayscale images,
//! binary masks and integer pixel rectangles.
//!
//! Intensities are stored as `f32`. Pixel `(x, y)` sits at continuous
//! coordinate `(x, y)`; every module (warping, ray casting, depth
//! extraction) uses this convention.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster dimensions must be positive, got {width}x{height}")]
    EmptyRaster { width: usize, height: usize },
    #[error("data length {len} does not match {width}x{height}")]
    LengthMismatch {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("rectangle ({x0},{y0})-({x1},{y1}) is empty or inverted")]
    EmptyRect { x0: usize, y0: usize, x1: usize, y1: usize },
}

/// Single-channel f32 image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        if data.len() != width * height {
            return Err(RasterError::LengthMismatch {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Extract the sub-image covered by `rect`.
    pub fn crop(&self, rect: PixelRect) -> GrayRaster {
        let mut out = GrayRaster::new(rect.width(), rect.height());
        for y in 0..rect.height() {
            let src = (rect.y0 + y) * self.width + rect.x0;
            let dst = y * rect.width();
            out.data[dst..dst + rect.width()].copy_from_slice(&self.data[src..src + rect.width()]);
        }
        out
    }

    /// Area-average (box filter) resize. `new_width`/`new_height` must not
    /// exceed the source dimensions.
    pub fn resize_area(&self, new_width: usize, new_height: usize) -> GrayRaster {
        assert!(new_width > 0 && new_height > 0);
        assert!(new_width <= self.width && new_height <= self.height);
        if new_width == self.width && new_height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / new_width as f64;
        let sy = self.height as f64 / new_height as f64;
        let mut out = GrayRaster::new(new_width, new_height);
        for oy in 0..new_height {
            let y_lo = oy as f64 * sy;
            let y_hi = (oy + 1) as f64 * sy;
            for ox in 0..new_width {
                let x_lo = ox as f64 * sx;
                let x_hi = (ox + 1) as f64 * sx;
                let mut acc = 0.0f64;
                let mut area = 0.0f64;
                let iy0 = y_lo.floor() as usize;
                let iy1 = (y_hi.ceil() as usize).min(self.height);
                let ix0 = x_lo.floor() as usize;
                let ix1 = (x_hi.ceil() as usize).min(self.width);
                for iy in iy0..iy1 {
                    let wy = overlap(iy as f64, (iy + 1) as f64, y_lo, y_hi);
                    if wy <= 0.0 {
                        continue;
                    }
                    for ix in ix0..ix1 {
                        let wx = overlap(ix as f64, (ix + 1) as f64, x_lo, x_hi);
                        if wx <= 0.0 {
                            continue;
                        }
                        acc += (self.data[iy * self.width + ix] as f64) * wx * wy;
                        area += wx * wy;
                    }
                }
                out.data[oy * new_width + ox] = (acc / area) as f32;
            }
        }
        out
    }
}

#[inline]
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Per-pixel boolean map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new_false(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn new_true(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn as_mut_slice(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn crop(&self, rect: PixelRect) -> Mask {
        let mut out = Mask::new_false(rect.width(), rect.height());
        for y in 0..rect.height() {
            for x in 0..rect.width() {
                out.set(x, y, self.get(rect.x0 + x, rect.y0 + y));
            }
        }
        out
    }
}

/// Axis-aligned integer pixel rectangle, max-exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self, RasterError> {
        if x1 <= x0 || y1 <= y0 {
            return Err(RasterError::EmptyRect { x0, y0, x1, y1 });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.x1 <= width && self.y1 <= height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_area_halves_by_block_average() {
        let img = GrayRaster::from_fn(4, 2, |x, y| (y * 4 + x) as f32);
        let half = img.resize_area(2, 1);
        // each output pixel averages a 2x2 block
        assert_eq!(half.get(0, 0), (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
        assert_eq!(half.get(1, 0), (2.0 + 3.0 + 6.0 + 7.0) / 4.0);
    }

    #[test]
    fn resize_area_fractional_boxes() {
        // 3 -> 2 columns: boxes [0,1.5) and [1.5,3)
        let img = GrayRaster::from_vec(3, 1, vec![0.0, 3.0, 6.0]).unwrap();
        let out = img.resize_area(2, 1);
        assert!((out.get(0, 0) - (0.0 + 0.5 * 3.0) / 1.5).abs() < 1e-6);
        assert!((out.get(1, 0) - (0.5 * 3.0 + 6.0) / 1.5).abs() < 1e-6);
    }

    #[test]
    fn crop_extracts_sub_image() {
        let img = GrayRaster::from_fn(5, 4, |x, y| (y * 10 + x) as f32);
        let rect = PixelRect::new(1, 2, 4, 4).unwrap();
        let sub = img.crop(rect);
        assert_eq!(sub.width(), 3);
        assert_eq!(sub.height(), 2);
        assert_eq!(sub.get(0, 0), 21.0);
        assert_eq!(sub.get(2, 1), 33.0);
    }

    #[test]
    fn empty_rect_rejected() {
        assert!(PixelRect::new(3, 1, 3, 5).is_err());
        assert!(PixelRect::new(1, 5, 3, 5).is_err());
    }
}
