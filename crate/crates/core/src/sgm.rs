//! Eight-path semi-global optimization with line-mask-modulated penalties,
//! winner extraction, ray-based depth extraction and the 3x3 median
//! post-filter.
//!
//! The per-direction recurrence is the standard SGM dynamic program
//!
//! ```text
//! L(p,i) = C(p,i) + min( L(q,i),
//!                        L(q,i-1) + P1, L(q,i+1) + P1,
//!                        min_k L(q,k) + P2_eff(p) ) - min_k L(q,k)
//! ```
//!
//! where `q` is the predecessor along the path and `P2_eff(p)` drops to
//! `P1` wherever the line mask is set at the *current* pixel, letting depth
//! discontinuities survive at detected object boundaries. A missing
//! predecessor contributes the raw cost only. The aggregate is the sum over
//! the eight directions, accumulated in a fixed direction order.
//!
//! All cell values are small multiples of 0.5, so every f32 operation here
//! is exact and results are bit-identical regardless of thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{depth_from_plane, CameraIntrinsics, PlaneStack};
use crate::matching::CostVolume;
use crate::raster::Mask;

/// Aggregation directions: horizontal, vertical and both diagonals, each
/// way. The order is fixed; sums run in this order.
pub const DIRECTIONS: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

#[derive(Debug, Error)]
pub enum SgmError {
    #[error("mask dimensions {mask_w}x{mask_h} do not match volume {vol_w}x{vol_h}")]
    DimensionMismatch {
        mask_w: usize,
        mask_h: usize,
        vol_w: usize,
        vol_h: usize,
    },
}

/// SGM penalties. Invariant: `0 < p1 <= p2`; [`SgmParams::new`] enforces it,
/// literal construction is available for degenerate diagnostic setups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgmParams {
    /// Penalty for a plane-index change of exactly one.
    pub p1: f32,
    /// Penalty for larger index changes; relaxed to `p1` on masked pixels.
    pub p2: f32,
}

impl SgmParams {
    pub fn new(p1: f32, p2: f32) -> Result<Self, String> {
        if !(p1 > 0.0 && p1 <= p2) {
            return Err(format!("penalties must satisfy 0 < p1 <= p2, got p1={p1}, p2={p2}"));
        }
        Ok(Self { p1, p2 })
    }
}

impl Default for SgmParams {
    fn default() -> Self {
        Self { p1: 5.0, p2: 50.0 }
    }
}

/// Per-pixel winning plane index into a [`PlaneStack`], or invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneIndexMap {
    width: usize,
    height: usize,
    idx: Vec<u32>,
}

const INVALID_INDEX: u32 = u32::MAX;

impl PlaneIndexMap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            idx: vec![INVALID_INDEX; width * height],
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
    pub fn index(&self, x: usize, y: usize) -> Option<usize> {
        let v = self.idx[y * self.width + x];
        (v != INVALID_INDEX).then_some(v as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, index: Option<usize>) {
        self.idx[y * self.width + x] = match index {
            Some(i) => i as u32,
            None => INVALID_INDEX,
        };
    }
}

/// Per-pixel depth in meters; invalid pixels carry `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f32>,
}

impl DepthMap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![f32::INFINITY; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, depth: Vec<f32>) -> Self {
        assert_eq!(depth.len(), width * height);
        Self { width, height, depth }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Depth if the pixel is valid.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        let v = self.depth[y * self.width + x];
        v.is_finite().then_some(v)
    }

    /// Raw stored value; invalid pixels read as `+inf`.
    #[inline]
    pub fn raw(&self, x: usize, y: usize) -> f32 {
        self.depth[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f32) {
        self.depth[y * self.width + x] = depth;
    }

    pub fn set_invalid(&mut self, x: usize, y: usize) {
        self.depth[y * self.width + x] = f32::INFINITY;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.depth
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.depth
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }
}

/// Run the eight-path aggregation of the cost volume. The mask relaxes the
/// large-change penalty at masked pixels; validity flags are carried over
/// from the input volume.
pub fn aggregate(
    volume: &CostVolume,
    mask: &Mask,
    params: &SgmParams,
) -> Result<CostVolume, SgmError> {
    check_mask(volume, mask)?;
    let n = volume.costs().len();
    let mut agg = vec![0.0f32; n];
    for dir in DIRECTIONS {
        let l = direction_pass(volume, mask, params, dir);
        agg.par_chunks_mut(4096)
            .zip(l.par_chunks(4096))
            .for_each(|(a, b)| {
                for (ai, bi) in a.iter_mut().zip(b) {
                    *ai += *bi;
                }
            });
    }
    let mut out = CostVolume::new_invalid(volume.width(), volume.height(), volume.planes());
    out.costs_mut().copy_from_slice(&agg);
    let (_, valid) = out.parts_mut();
    valid.copy_from_slice(volume.validity());
    Ok(out)
}

/// Single-direction path aggregation; exposed so the scanline dynamic
/// program can be checked against exhaustive minimization.
pub fn aggregate_direction(
    volume: &CostVolume,
    mask: &Mask,
    params: &SgmParams,
    direction: (i32, i32),
) -> Result<CostVolume, SgmError> {
    check_mask(volume, mask)?;
    assert!(
        DIRECTIONS.contains(&direction),
        "direction must be one of the eight aggregation paths"
    );
    let l = direction_pass(volume, mask, params, direction);
    let mut out = CostVolume::new_invalid(volume.width(), volume.height(), volume.planes());
    out.costs_mut().copy_from_slice(&l);
    let (_, valid) = out.parts_mut();
    valid.copy_from_slice(volume.validity());
    Ok(out)
}

fn check_mask(volume: &CostVolume, mask: &Mask) -> Result<(), SgmError> {
    if mask.width() != volume.width() || mask.height() != volume.height() {
        return Err(SgmError::DimensionMismatch {
            mask_w: mask.width(),
            mask_h: mask.height(),
            vol_w: volume.width(),
            vol_h: volume.height(),
        });
    }
    Ok(())
}

fn direction_pass(
    volume: &CostVolume,
    mask: &Mask,
    params: &SgmParams,
    (dx, dy): (i32, i32),
) -> Vec<f32> {
    let (w, h, d) = (volume.width(), volume.height(), volume.planes());
    let cost = volume.costs();
    let mut l = vec![0.0f32; w * h * d];

    if dy == 0 {
        // horizontal: rows are independent scanlines
        l.par_chunks_mut(w * d)
            .enumerate()
            .for_each(|(y, l_row)| {
                let cost_row = &cost[y * w * d..(y + 1) * w * d];
                let mut prev = vec![0.0f32; d];
                let mut prev_min = 0.0f32;
                let mut first = true;
                let xs: Vec<usize> = if dx > 0 {
                    (0..w).collect()
                } else {
                    (0..w).rev().collect()
                };
                for x in xs {
                    let base = x * d;
                    if first {
                        l_row[base..base + d].copy_from_slice(&cost_row[base..base + d]);
                        first = false;
                    } else {
                        let p2 = if mask.get(x, y) { params.p1 } else { params.p2 };
                        step(
                            &cost_row[base..base + d],
                            &prev,
                            prev_min,
                            params.p1,
                            p2,
                            &mut l_row[base..base + d],
                        );
                    }
                    prev.copy_from_slice(&l_row[base..base + d]);
                    prev_min = min_of(&prev);
                }
            });
    } else {
        // vertical / diagonal: sweep rows, pixels within a row only depend
        // on the previous row
        let ys: Vec<usize> = if dy > 0 {
            (0..h).collect()
        } else {
            (0..h).rev().collect()
        };
        let mut row_buf = vec![0.0f32; w * d];
        let mut prev_mins = vec![0.0f32; w];
        for (i, &y) in ys.iter().enumerate() {
            let cost_row = &cost[y * w * d..(y + 1) * w * d];
            if i == 0 {
                row_buf.copy_from_slice(cost_row);
            } else {
                let prev_y = (y as i32 - dy) as usize;
                let prev_row = &l[prev_y * w * d..(prev_y + 1) * w * d];
                prev_mins
                    .par_iter_mut()
                    .zip(prev_row.par_chunks(d))
                    .for_each(|(m, chunk)| *m = min_of(chunk));
                let prev_mins = &prev_mins;
                row_buf
                    .par_chunks_mut(d)
                    .enumerate()
                    .for_each(|(x, lp)| {
                        let qx = x as i64 - dx as i64;
                        let cost_p = &cost_row[x * d..(x + 1) * d];
                        if qx < 0 || qx >= w as i64 {
                            lp.copy_from_slice(cost_p);
                            return;
                        }
                        let qx = qx as usize;
                        let p2 = if mask.get(x, y) { params.p1 } else { params.p2 };
                        step(
                            cost_p,
                            &prev_row[qx * d..(qx + 1) * d],
                            prev_mins[qx],
                            params.p1,
                            p2,
                            lp,
                        );
                    });
            }
            l[y * w * d..(y + 1) * w * d].copy_from_slice(&row_buf);
        }
    }

    l
}

#[inline]
fn step(cost: &[f32], prev: &[f32], prev_min: f32, p1: f32, p2: f32, out: &mut [f32]) {
    let d = cost.len();
    let jump = prev_min + p2;
    for i in 0..d {
        let mut best = prev[i];
        if i > 0 {
            best = best.min(prev[i - 1] + p1);
        }
        if i + 1 < d {
            best = best.min(prev[i + 1] + p1);
        }
        best = best.min(jump);
        out[i] = cost[i] + best - prev_min;
    }
}

#[inline]
fn min_of(values: &[f32]) -> f32 {
    values.iter().copied().fold(f32::INFINITY, f32::min)
}

/// Per-pixel argmin over the valid cells; ties break toward the smallest
/// (nearest) plane index. Pixels with no valid cell come out invalid.
pub fn winner_take_all(aggregated: &CostVolume) -> PlaneIndexMap {
    let (w, h, d) = (aggregated.width(), aggregated.height(), aggregated.planes());
    let mut map = PlaneIndexMap::new_invalid(w, h);
    map.idx
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let costs = aggregated.pixel_costs(x, y);
                let valid = aggregated.pixel_validity(x, y);
                let mut best: Option<usize> = None;
                for i in 0..d {
                    if valid[i] && best.map_or(true, |b| costs[i] < costs[b]) {
                        best = Some(i);
                    }
                }
                *out = match best {
                    Some(i) => i as u32,
                    None => INVALID_INDEX,
                };
            }
        });
    map
}

/// Convert winning plane indices to metric depth by intersecting each
/// pixel's viewing ray with its plane. Invalid indices and parallel rays
/// produce invalid depths.
pub fn extract_depth(
    indices: &PlaneIndexMap,
    stack: &PlaneStack,
    intrinsics: &CameraIntrinsics,
) -> DepthMap {
    let (w, h) = (indices.width(), indices.height());
    let mut out = DepthMap::new_invalid(w, h);
    out.depth
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out_px) in row.iter_mut().enumerate() {
                if let Some(i) = indices.index(x, y) {
                    if let Ok(depth) =
                        depth_from_plane((x as f64, y as f64), &stack.planes()[i], intrinsics)
                    {
                        *out_px = depth as f32;
                    }
                }
            }
        });
    out
}

/// 3x3 median over the valid depths in the (border-truncated) window.
/// A pixel comes out invalid only if its window holds no valid depth at
/// all; with an even count the lower median is taken, keeping values on
/// the plane grid.
pub fn median_filter_3x3(depth: &DepthMap) -> DepthMap {
    let (w, h) = (depth.width(), depth.height());
    let mut out = DepthMap::new_invalid(w, h);
    out.depth
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            let mut window = [0.0f32; 9];
            for (x, out_px) in row.iter_mut().enumerate() {
                let mut n = 0;
                for dy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for dx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let v = depth.raw(dx, dy);
                        if v.is_finite() {
                            window[n] = v;
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    let vals = &mut window[..n];
                    vals.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                    *out_px = vals[(n - 1) / 2];
                }
            }
        });
    out
}
