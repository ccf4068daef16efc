//! Lightweight LSD-style line segment detector.
//!
//! Follows the structure of the classic a-contrario detector with its
//! default parameterization: 2x2 gradients, level-line angles, seed
//! ordering by gradient magnitude, region growing with a 22.5 degree
//! angle tolerance, rectangle fitting, and NFA validation against the
//! (W*H)^(5/2) test family with epsilon = 1. Rectangle refinement and the
//! internal rescaling stage of the original are omitted; detection runs at
//! the resolution of the input.

use statrs::function::gamma::ln_gamma;

use super::LineSegment;
use crate::raster::GrayRaster;

#[derive(Debug, Clone, PartialEq)]
pub struct LsdParams {
    /// Expected gradient quantization noise; sets the magnitude threshold
    /// `rho = quantization / sin(tolerance)`.
    pub quantization: f64,
    /// Angle tolerance in degrees for region growing and alignment.
    pub angle_tolerance_deg: f64,
    /// Detection threshold `log10(epsilon)`; 0 accepts at most about one
    /// false detection per image on noise.
    pub log_eps: f64,
}

impl Default for LsdParams {
    fn default() -> Self {
        Self {
            quantization: 2.0,
            angle_tolerance_deg: 22.5,
            log_eps: 0.0,
        }
    }
}

struct GradientField {
    width: usize,
    height: usize,
    magnitude: Vec<f64>,
    /// Level-line angle (tangent of the iso-intensity contour), full circle.
    angle: Vec<f64>,
}

impl GradientField {
    fn compute(image: &GrayRaster) -> Self {
        let (w, h) = (image.width(), image.height());
        let mut magnitude = vec![0.0; w * h];
        let mut angle = vec![0.0; w * h];
        if w >= 2 && h >= 2 {
            for y in 0..h - 1 {
                for x in 0..w - 1 {
                    let a = image.get(x, y) as f64;
                    let b = image.get(x + 1, y) as f64;
                    let c = image.get(x, y + 1) as f64;
                    let d = image.get(x + 1, y + 1) as f64;
                    let com1 = d - a;
                    let com2 = b - c;
                    let gx = 0.5 * (com1 + com2);
                    let gy = 0.5 * (com1 - com2);
                    let mag = (gx * gx + gy * gy).sqrt();
                    magnitude[y * w + x] = mag;
                    if mag > 0.0 {
                        angle[y * w + x] = gx.atan2(-gy);
                    }
                }
            }
        }
        Self {
            width: w,
            height: h,
            magnitude,
            angle,
        }
    }
}

#[inline]
fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = a - b;
    while d > std::f64::consts::PI {
        d -= 2.0 * std::f64::consts::PI;
    }
    while d < -std::f64::consts::PI {
        d += 2.0 * std::f64::consts::PI;
    }
    d.abs()
}

/// Detect straight segments. Deterministic for a fixed input; a constant
/// image yields an empty list.
pub fn detect_lines(image: &GrayRaster, params: &LsdParams) -> Vec<LineSegment> {
    let grad = GradientField::compute(image);
    let (w, h) = (grad.width, grad.height);
    if w < 2 || h < 2 {
        return Vec::new();
    }
    let tau = params.angle_tolerance_deg.to_radians();
    let rho = params.quantization / tau.sin();
    let p = params.angle_tolerance_deg / 180.0;
    let log_n_tests = 2.5 * ((w * h) as f64).log10();

    // seeds in decreasing magnitude order (binned pseudo-sort, like the
    // original)
    let max_mag = grad.magnitude.iter().cloned().fold(0.0, f64::max);
    if max_mag <= rho {
        return Vec::new();
    }
    const BINS: usize = 1024;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); BINS];
    for (i, &m) in grad.magnitude.iter().enumerate() {
        if m > rho {
            let b = ((m / max_mag) * (BINS - 1) as f64) as usize;
            bins[b].push(i);
        }
    }

    let mut used = vec![false; w * h];
    let mut segments = Vec::new();
    let mut region: Vec<usize> = Vec::new();

    for bin in bins.iter().rev() {
        for &seed in bin {
            if used[seed] {
                continue;
            }
            grow_region(&grad, seed, rho, tau, &mut used, &mut region);
            if region.len() < 5 {
                continue;
            }
            if let Some(seg) = fit_and_validate(&grad, &region, tau, p, log_n_tests, params.log_eps)
            {
                segments.push(seg);
            }
        }
    }
    segments
}

/// Grow an 8-connected region of pixels whose level-line angle stays within
/// the tolerance of the running region angle. Grown pixels are consumed
/// whether or not the region validates.
fn grow_region(
    grad: &GradientField,
    seed: usize,
    rho: f64,
    tau: f64,
    used: &mut [bool],
    region: &mut Vec<usize>,
) {
    let (w, h) = (grad.width, grad.height);
    region.clear();
    region.push(seed);
    used[seed] = true;
    let mut sum_dx = grad.angle[seed].cos();
    let mut sum_dy = grad.angle[seed].sin();
    let mut reg_angle = grad.angle[seed];
    let mut cursor = 0;
    while cursor < region.len() {
        let idx = region[cursor];
        cursor += 1;
        let (x, y) = (idx % w, idx / w);
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let nidx = ny * w + nx;
                if used[nidx] || grad.magnitude[nidx] <= rho {
                    continue;
                }
                if angle_diff(grad.angle[nidx], reg_angle) > tau {
                    continue;
                }
                used[nidx] = true;
                region.push(nidx);
                sum_dx += grad.angle[nidx].cos();
                sum_dy += grad.angle[nidx].sin();
                reg_angle = sum_dy.atan2(sum_dx);
            }
        }
    }
}

fn fit_and_validate(
    grad: &GradientField,
    region: &[usize],
    tau: f64,
    p: f64,
    log_n_tests: f64,
    log_eps: f64,
) -> Option<LineSegment> {
    let w = grad.width;
    // gradient sample (x, y) sits between the four pixels it differences
    let coord = |idx: usize| ((idx % w) as f64 + 0.5, (idx / w) as f64 + 0.5);

    // magnitude-weighted centroid
    let mut sw = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for &idx in region {
        let m = grad.magnitude[idx];
        let (x, y) = coord(idx);
        sw += m;
        cx += m * x;
        cy += m * y;
    }
    cx /= sw;
    cy /= sw;

    // principal elongation axis from the weighted covariance
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for &idx in region {
        let m = grad.magnitude[idx];
        let (x, y) = coord(idx);
        sxx += m * (x - cx) * (x - cx);
        syy += m * (y - cy) * (y - cy);
        sxy += m * (x - cx) * (y - cy);
    }
    let lambda = 0.5 * (sxx + syy + ((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy).sqrt());
    let (mut ax, mut ay) = if (lambda - sxx).abs() > (lambda - syy).abs() {
        (sxy, lambda - sxx)
    } else {
        (lambda - syy, sxy)
    };
    let norm = (ax * ax + ay * ay).sqrt();
    if norm < 1e-12 {
        return None;
    }
    ax /= norm;
    ay /= norm;

    // orient the axis along the region's level-line angle
    let mut sum_dx = 0.0;
    let mut sum_dy = 0.0;
    for &idx in region {
        sum_dx += grad.angle[idx].cos();
        sum_dy += grad.angle[idx].sin();
    }
    let reg_angle = sum_dy.atan2(sum_dx);
    let mut theta = ay.atan2(ax);
    if angle_diff(theta, reg_angle) > std::f64::consts::FRAC_PI_2 {
        theta += std::f64::consts::PI;
        ax = -ax;
        ay = -ay;
    }

    // extents along the axis and across it
    let (mut s_min, mut s_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut t_min, mut t_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &idx in region {
        let (x, y) = coord(idx);
        let s = (x - cx) * ax + (y - cy) * ay;
        let t = -(x - cx) * ay + (y - cy) * ax;
        s_min = s_min.min(s);
        s_max = s_max.max(s);
        t_min = t_min.min(t);
        t_max = t_max.max(t);
    }
    let half_len = 0.5 * (s_max - s_min) + 0.5;
    let half_wid = 0.5 * (t_max - t_min) + 0.5;
    let mid_s = 0.5 * (s_max + s_min);
    let mid_t = 0.5 * (t_max + t_min);
    let rcx = cx + mid_s * ax - mid_t * ay;
    let rcy = cy + mid_s * ay + mid_t * ax;

    // count aligned points inside the rectangle
    let bound = half_len.hypot(half_wid).ceil() as i64;
    let (mut n, mut k) = (0u64, 0u64);
    for dy in -bound..=bound {
        for dx in -bound..=bound {
            let gx = (rcx + dx as f64).floor() as i64;
            let gy = (rcy + dy as f64).floor() as i64;
            if gx < 0 || gy < 0 || gx as usize >= grad.width || gy as usize >= grad.height {
                continue;
            }
            let (x, y) = (gx as f64 + 0.5, gy as f64 + 0.5);
            let s = (x - rcx) * ax + (y - rcy) * ay;
            let t = -(x - rcx) * ay + (y - rcy) * ax;
            if s.abs() > half_len || t.abs() > half_wid {
                continue;
            }
            n += 1;
            let idx = gy as usize * grad.width + gx as usize;
            if grad.magnitude[idx] > 0.0 && angle_diff(grad.angle[idx], theta) <= tau {
                k += 1;
            }
        }
    }
    if n == 0 || k == 0 {
        return None;
    }

    let log_nfa = log_n_tests + log_binomial_tail(n, k, p);
    if log_nfa > log_eps {
        return None;
    }

    Some(LineSegment {
        p0: ((cx + s_min * ax) as f32, (cy + s_min * ay) as f32),
        p1: ((cx + s_max * ax) as f32, (cy + s_max * ay) as f32),
        width: (2.0 * half_wid) as f32,
    })
}

/// `log10` of the binomial tail `P[X >= k]` for `X ~ B(n, p)`.
fn log_binomial_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k > n {
        return f64::NEG_INFINITY;
    }
    let (nf, kf) = (n as f64, k as f64);
    if kf <= nf * p {
        // tail is at least ~1/2; never significant
        return 0.0;
    }
    let q = 1.0 - p;
    let log_term = ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0)
        + kf * p.ln()
        + (nf - kf) * q.ln();
    // sum the tail with the term ratio recurrence, factored by the first
    // term to stay in range
    let ratio_base = p / q;
    let mut scaled_sum = 1.0f64;
    let mut term = 1.0f64;
    let mut j = k;
    while j < n {
        term *= (nf - j as f64) / (j as f64 + 1.0) * ratio_base;
        scaled_sum += term;
        if term < 1e-12 * scaled_sum {
            break;
        }
        j += 1;
    }
    (log_term + scaled_sum.ln()) / std::f64::consts::LN_10
}
