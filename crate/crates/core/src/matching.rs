//! Census-based photo-consistency over sweep planes: per-plane homography
//! warping, 9x7 Census transform, Hamming dissimilarity and occlusion-aware
//! cost-volume assembly.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{plane_homography, CameraView, GeometryError, PlaneStack};
use crate::raster::{GrayRaster, Mask, PixelRect};

pub const CENSUS_WIDTH: usize = 9;
pub const CENSUS_HEIGHT: usize = 7;
pub const CENSUS_BITS: u32 = 62;
/// Largest possible Census dissimilarity; also the pessimistic fill for
/// invalid cells.
pub const MAX_COST: f32 = 62.0;

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("image {width}x{height} is smaller than the {}x{} census window", CENSUS_WIDTH, CENSUS_HEIGHT)]
    ImageTooSmall { width: usize, height: usize },
    #[error("bundle views must share dimensions and intrinsics")]
    BundleMismatch,
    #[error("homography is numerically degenerate")]
    NumericalDegeneracy,
    #[error("roi has zero area")]
    EmptyRoi,
    #[error("roi exceeds the image bounds")]
    RoiOutOfBounds,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Five-view bundle: the reference frame plus two temporal neighbors on
/// each side.
#[derive(Debug, Clone)]
pub struct ImageBundle {
    pub reference: CameraView,
    pub before: [CameraView; 2],
    pub after: [CameraView; 2],
}

impl ImageBundle {
    pub fn new(
        reference: CameraView,
        before: [CameraView; 2],
        after: [CameraView; 2],
    ) -> Result<Self, MatchingError> {
        let bundle = Self {
            reference,
            before,
            after,
        };
        let (w, h) = (bundle.width(), bundle.height());
        let k = bundle.reference.intrinsics;
        for view in bundle.matching_views() {
            if view.image.width() != w || view.image.height() != h || view.intrinsics != k {
                return Err(MatchingError::BundleMismatch);
            }
        }
        Ok(bundle)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.reference.image.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.reference.image.height()
    }

    /// The four matching views, left subset first.
    pub fn matching_views(&self) -> impl Iterator<Item = &CameraView> {
        self.before.iter().chain(self.after.iter())
    }

    /// Bundle cropped to `rect`, with the principal point shifted so the
    /// crop behaves as an independent image.
    pub fn crop(&self, rect: PixelRect) -> Result<ImageBundle, MatchingError> {
        if !rect.fits_in(self.width(), self.height()) {
            return Err(MatchingError::RoiOutOfBounds);
        }
        let crop_view = |view: &CameraView| CameraView {
            intrinsics: view.intrinsics.shifted(rect.x0 as f64, rect.y0 as f64),
            pose: view.pose,
            image: view.image.crop(rect),
        };
        Ok(ImageBundle {
            reference: crop_view(&self.reference),
            before: [crop_view(&self.before[0]), crop_view(&self.before[1])],
            after: [crop_view(&self.after[0]), crop_view(&self.after[1])],
        })
    }
}

/// 62 neighbor comparisons of a 9x7 window, row-major, center skipped.
/// Bit `k` is set iff the k-th neighbor is strictly darker than the center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CensusDescriptor(pub u64);

impl CensusDescriptor {
    #[inline]
    pub fn bits(self) -> u64 {
        self.0
    }
}

/// Population count of the XOR of two descriptors, in `[0, 62]`.
#[inline]
pub fn hamming_cost(a: CensusDescriptor, b: CensusDescriptor) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// Census descriptors for a whole raster plus per-pixel validity.
#[derive(Debug, Clone)]
pub struct CensusRaster {
    width: usize,
    height: usize,
    desc: Vec<u64>,
    valid: Vec<bool>,
}

impl CensusRaster {
    #[inline]
    pub fn descriptor(&self, x: usize, y: usize) -> CensusDescriptor {
        CensusDescriptor(self.desc[y * self.width + x])
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
}

/// 9x7 Census transform. Descriptors whose window exits the image are
/// flagged invalid.
pub fn census_transform(image: &GrayRaster) -> Result<CensusRaster, MatchingError> {
    if image.width() < CENSUS_WIDTH || image.height() < CENSUS_HEIGHT {
        return Err(MatchingError::ImageTooSmall {
            width: image.width(),
            height: image.height(),
        });
    }
    Ok(census_impl(image, None))
}

/// Census over a partially valid raster (e.g. a warped image): a descriptor
/// is valid only if the full window lies inside the image and every tap is
/// valid.
pub fn census_transform_masked(image: &GrayRaster, tap_valid: &Mask) -> CensusRaster {
    census_impl(image, Some(tap_valid))
}

fn census_impl(image: &GrayRaster, tap_valid: Option<&Mask>) -> CensusRaster {
    let (w, h) = (image.width(), image.height());
    let rx = CENSUS_WIDTH / 2;
    let ry = CENSUS_HEIGHT / 2;
    let mut desc = vec![0u64; w * h];
    let mut valid = vec![false; w * h];

    desc.par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (desc_row, valid_row))| {
            if y < ry || y + ry >= h {
                return;
            }
            let src = image.as_slice();
            'pixel: for x in rx..w - rx {
                if let Some(mask) = tap_valid {
                    for dy in 0..CENSUS_HEIGHT {
                        for dx in 0..CENSUS_WIDTH {
                            if !mask.get(x + dx - rx, y + dy - ry) {
                                continue 'pixel;
                            }
                        }
                    }
                }
                let center = src[y * w + x];
                let mut bits = 0u64;
                let mut k = 0u32;
                for dy in 0..CENSUS_HEIGHT {
                    let row = (y + dy - ry) * w + x - rx;
                    for dx in 0..CENSUS_WIDTH {
                        if dx == rx && dy == ry {
                            continue;
                        }
                        if src[row + dx] < center {
                            bits |= 1u64 << k;
                        }
                        k += 1;
                    }
                }
                desc_row[x] = bits;
                valid_row[x] = true;
            }
        });

    CensusRaster {
        width: w,
        height: h,
        desc,
        valid,
    }
}

/// Inverse-warp `image` through `h`: output pixel `p` takes the bilinear
/// sample at `h * p`. A pixel is valid only if every interpolation tap with
/// nonzero weight lies inside the source.
pub fn warp_image(image: &GrayRaster, h: &Matrix3<f64>) -> Result<(GrayRaster, Mask), MatchingError> {
    if h.determinant().abs() < 1e-12 {
        return Err(MatchingError::NumericalDegeneracy);
    }
    let (w, ht) = (image.width(), image.height());
    let mut out = GrayRaster::new(w, ht);
    let mut valid = Mask::new_false(w, ht);
    let src = image.as_slice();

    out.as_mut_slice()
        .par_chunks_mut(w)
        .zip(valid.as_mut_slice().par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (out_row, valid_row))| {
            for x in 0..w {
                let q = h * Vector3::new(x as f64, y as f64, 1.0);
                if q.z.abs() < 1e-12 {
                    continue;
                }
                let sx = q.x / q.z;
                let sy = q.y / q.z;
                let x0f = sx.floor();
                let y0f = sy.floor();
                let fx = (sx - x0f) as f32;
                let fy = (sy - y0f) as f32;
                let x0 = x0f as i64;
                let y0 = y0f as i64;
                if x0 < 0 || y0 < 0 {
                    continue;
                }
                let (x0, y0) = (x0 as usize, y0 as usize);
                if x0 >= w || y0 >= ht {
                    continue;
                }
                if (fx > 0.0 && x0 + 1 >= w) || (fy > 0.0 && y0 + 1 >= ht) {
                    continue;
                }
                let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
                let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
                let v00 = src[y0 * w + x0];
                let v10 = src[y0 * w + x1];
                let v01 = src[y1 * w + x0];
                let v11 = src[y1 * w + x1];
                let top = v00 + fx * (v10 - v00);
                let bot = v01 + fx * (v11 - v01);
                out_row[x] = top + fy * (bot - top);
                valid_row[x] = true;
            }
        });

    Ok((out, valid))
}

/// Per-pixel, per-plane dissimilarity scores with validity flags.
/// Layout is pixel-major: index `(y*W + x)*D + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    planes: usize,
    cost: Vec<f32>,
    valid: Vec<bool>,
}

impl CostVolume {
    /// Volume with every cell flagged invalid and filled with [`MAX_COST`].
    pub fn new_invalid(width: usize, height: usize, planes: usize) -> Self {
        Self {
            width,
            height,
            planes,
            cost: vec![MAX_COST; width * height * planes],
            valid: vec![false; width * height * planes],
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
    pub fn planes(&self) -> usize {
        self.planes
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, d: usize) -> usize {
        (y * self.width + x) * self.planes + d
    }

    #[inline]
    pub fn cost_at(&self, x: usize, y: usize, d: usize) -> f32 {
        self.cost[self.index(x, y, d)]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize, d: usize) -> bool {
        self.valid[self.index(x, y, d)]
    }

    pub fn set(&mut self, x: usize, y: usize, d: usize, cost: f32, valid: bool) {
        let i = self.index(x, y, d);
        self.cost[i] = cost;
        self.valid[i] = valid;
    }

    pub fn costs(&self) -> &[f32] {
        &self.cost
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub(crate) fn costs_mut(&mut self) -> &mut [f32] {
        &mut self.cost
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f32], &mut [bool]) {
        (&mut self.cost, &mut self.valid)
    }

    /// Costs of all planes at one pixel.
    #[inline]
    pub fn pixel_costs(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.planes;
        &self.cost[i..i + self.planes]
    }

    #[inline]
    pub fn pixel_validity(&self, x: usize, y: usize) -> &[bool] {
        let i = (y * self.width + x) * self.planes;
        &self.valid[i..i + self.planes]
    }
}

/// Build the plane-sweep cost volume for a bundle.
///
/// For every plane the four matching images are warped into the reference
/// frame (always over the full image extent), Census-transformed, and
/// compared against the reference descriptors. The costs of the two
/// temporal subsets are averaged over their valid members and the minimum
/// of the two subsets is stored, which masks occlusions that affect only
/// one side of the trajectory. When `roi` is given, only cells inside it
/// are computed; the produced cells are identical to the corresponding
/// sub-block of a full run.
pub fn build_cost_volume(
    bundle: &ImageBundle,
    stack: &PlaneStack,
    roi: Option<PixelRect>,
) -> Result<CostVolume, MatchingError> {
    let (w, h) = (bundle.width(), bundle.height());
    let rect = match roi {
        Some(r) => {
            if !r.fits_in(w, h) {
                return Err(MatchingError::RoiOutOfBounds);
            }
            if r.area() == 0 {
                return Err(MatchingError::EmptyRoi);
            }
            r
        }
        None => PixelRect::full(w, h),
    };

    let ref_census = census_transform(&bundle.reference.image)?;
    let mut volume = CostVolume::new_invalid(w, h, stack.len());

    for (d, plane) in stack.planes().iter().enumerate() {
        let warped: Vec<CensusRaster> = bundle
            .matching_views()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|view| {
                let h = plane_homography(&bundle.reference, view, plane)?;
                let (img, valid) = warp_image(&view.image, &h)?;
                Ok(census_impl(&img, Some(&valid)))
            })
            .collect::<Result<_, MatchingError>>()?;

        let planes = volume.planes;
        let (cost, valid) = volume.parts_mut();
        cost.par_chunks_mut(w * planes)
            .zip(valid.par_chunks_mut(w * planes))
            .enumerate()
            .for_each(|(y, (cost_row, valid_row))| {
                if y < rect.y0 || y >= rect.y1 {
                    return;
                }
                for x in rect.x0..rect.x1 {
                    if !ref_census.is_valid(x, y) {
                        continue;
                    }
                    let r = ref_census.descriptor(x, y);
                    let subset_mean = |views: &[CensusRaster]| -> Option<f32> {
                        let mut sum = 0.0f32;
                        let mut n = 0u32;
                        for v in views {
                            if v.is_valid(x, y) {
                                sum += hamming_cost(r, v.descriptor(x, y)) as f32;
                                n += 1;
                            }
                        }
                        (n > 0).then(|| sum / n as f32)
                    };
                    let left = subset_mean(&warped[..2]);
                    let right = subset_mean(&warped[2..]);
                    let best = match (left, right) {
                        (Some(a), Some(b)) => a.min(b),
                        (Some(a), None) => a,
                        (None, Some(b)) => b,
                        (None, None) => continue,
                    };
                    cost_row[x * planes + d] = best;
                    valid_row[x * planes + d] = true;
                }
            });
    }

    Ok(volume)
}
