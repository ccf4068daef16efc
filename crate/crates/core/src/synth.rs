//! Synthetic planar scenes with exact analytic ground truth, used as the
//! independent oracle for end-to-end tests. Scenes can also be written out
//! in the pipeline's camera-file + image-directory format so tests can
//! exercise the real CLI surface.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::geometry::{CameraIntrinsics, CameraPose, CameraView};
use crate::io::{self, CameraFileFrame, IoError};
use crate::matching::{ImageBundle, MatchingError};
use crate::raster::GrayRaster;
use crate::sgm::DepthMap;

/// Finite textured rectangle on a world plane. The texture is procedural
/// value noise attached to the surface, so it is consistent across views.
#[derive(Debug, Clone)]
pub struct PlanarPatch {
    /// Rectangle center in world coordinates.
    pub center: Vector3<f64>,
    /// In-plane axes; must be orthonormal.
    pub u_axis: Vector3<f64>,
    pub v_axis: Vector3<f64>,
    /// Half extents along the axes, world units.
    pub half_u: f64,
    pub half_v: f64,
    /// Noise lattice seed.
    pub seed: u64,
    /// World-unit size of one noise cell; choose it so a cell projects to
    /// several pixels (wider than the Census window scale).
    pub cell_size: f64,
    /// Intensity range of the texture: `base + amplitude * noise`.
    pub base: f32,
    pub amplitude: f32,
}

impl PlanarPatch {
    /// Plane z = `depth` (frontoparallel to an identity camera) spanning
    /// `[-half_w, half_w] x [-half_h, half_h]` around the optical axis.
    pub fn frontoparallel(depth: f64, half_w: f64, half_h: f64, seed: u64, cell_size: f64) -> Self {
        Self {
            center: Vector3::new(0.0, 0.0, depth),
            u_axis: Vector3::x(),
            v_axis: Vector3::y(),
            half_u: half_w,
            half_v: half_h,
            seed,
            cell_size,
            base: 40.0,
            amplitude: 170.0,
        }
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.u_axis.cross(&self.v_axis)
    }

    /// Intersect the ray `origin + s * dir`; returns `(s, u, v)` with local
    /// plane coordinates when the rectangle is hit in front of the origin.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let n = self.normal();
        let denom = n.dot(dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        let s = n.dot(&(self.center - origin)) / denom;
        if s <= 1e-9 {
            return None;
        }
        let hit = origin + dir * s;
        let rel = hit - self.center;
        let u = rel.dot(&self.u_axis);
        let v = rel.dot(&self.v_axis);
        if u.abs() <= self.half_u && v.abs() <= self.half_v {
            Some((s, u, v))
        } else {
            None
        }
    }

    fn texture(&self, u: f64, v: f64) -> f32 {
        self.base + self.amplitude * value_noise(self.seed, u / self.cell_size, v / self.cell_size)
    }
}

/// Smooth seeded value noise in [0, 1]: bilinear blend of hashed lattice
/// values.
pub fn value_noise(seed: u64, x: f64, y: f64) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = smoothstep((x - x0) as f32);
    let fy = smoothstep((y - y0) as f32);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v00 = lattice(seed, ix, iy);
    let v10 = lattice(seed, ix + 1, iy);
    let v01 = lattice(seed, ix, iy + 1);
    let v11 = lattice(seed, ix + 1, iy + 1);
    let top = v00 + fx * (v10 - v00);
    let bot = v01 + fx * (v11 - v01);
    top + fy * (bot - top)
}

#[inline]
fn smoothstep(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

#[inline]
fn lattice(seed: u64, x: i64, y: i64) -> f32 {
    // splitmix64 over the packed cell coordinates
    let mut z = seed
        ^ (x as u64).wrapping_mul(0x9E3779B97F4A7C15)
        ^ (y as u64).wrapping_mul(0xBF58476D1CE4E5B9);
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z = z ^ (z >> 31);
    (z >> 40) as f32 / (1u64 << 24) as f32
}

/// A set of textured patches observed by a camera trajectory.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub patches: Vec<PlanarPatch>,
    pub trajectory: Vec<CameraPose>,
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
}

impl SyntheticScene {
    /// Render one view: per-pixel nearest patch hit. Background pixels get
    /// intensity 0 and invalid ground-truth depth.
    pub fn render(&self, view_index: usize) -> (GrayRaster, DepthMap) {
        let pose = &self.trajectory[view_index];
        let mut image = GrayRaster::new(self.width, self.height);
        let mut depth = DepthMap::new_invalid(self.width, self.height);
        let origin = *pose.center();
        let rot_t = pose.rotation().transpose();

        let w = self.width;
        image
            .as_mut_slice()
            .par_chunks_mut(w)
            .zip(depth.as_mut_slice().par_chunks_mut(w))
            .enumerate()
            .for_each(|(y, (img_row, depth_row))| {
                for x in 0..w {
                    let ray_cam = self.intrinsics.ray(x as f64, y as f64);
                    let dir = rot_t * ray_cam;
                    let mut nearest: Option<(f64, f32)> = None;
                    for patch in &self.patches {
                        if let Some((s, u, v)) = patch.intersect(&origin, &dir) {
                            if nearest.map_or(true, |(best, _)| s < best) {
                                nearest = Some((s, patch.texture(u, v)));
                            }
                        }
                    }
                    if let Some((s, intensity)) = nearest {
                        // optical-axis depth: s parameterizes the K^-1 ray,
                        // whose camera z component is 1
                        depth_row[x] = (s * ray_cam.z) as f32;
                        img_row[x] = intensity;
                    }
                }
            });
        (image, depth)
    }

    pub fn view(&self, view_index: usize) -> CameraView {
        let (image, _) = self.render(view_index);
        CameraView::new(self.intrinsics, self.trajectory[view_index], image)
    }

    /// Render the five-view bundle around `center_index`.
    pub fn bundle(&self, center_index: usize) -> Result<ImageBundle, MatchingError> {
        ImageBundle::new(
            self.view(center_index),
            [self.view(center_index - 2), self.view(center_index - 1)],
            [self.view(center_index + 1), self.view(center_index + 2)],
        )
    }

    /// Write the scene as PNG frames plus a camera file; returns the camera
    /// file path.
    pub fn emit(&self, dir: impl AsRef<Path>) -> Result<PathBuf, IoError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut frames = Vec::new();
        for (i, pose) in self.trajectory.iter().enumerate() {
            let (image, _) = self.render(i);
            let name = format!("frame_{i:03}.png");
            io::save_gray_image(&image, dir.join(&name))?;
            let r = pose.rotation();
            let c = pose.center();
            frames.push(CameraFileFrame {
                id: format!("{i:03}"),
                image_path: name,
                fx: self.intrinsics.fx,
                fy: self.intrinsics.fy,
                cx: self.intrinsics.cx,
                cy: self.intrinsics.cy,
                skew: self.intrinsics.skew,
                r: [
                    r[(0, 0)],
                    r[(0, 1)],
                    r[(0, 2)],
                    r[(1, 0)],
                    r[(1, 1)],
                    r[(1, 2)],
                    r[(2, 0)],
                    r[(2, 1)],
                    r[(2, 2)],
                ],
                c: [c.x, c.y, c.z],
            });
        }
        let camera_path = dir.join("cameras.json");
        io::write_camera_file(&frames, &camera_path)?;
        Ok(camera_path)
    }
}

/// Standard two-plane test scene: a textured ground plane at `d_ground`
/// and a brighter slab at `d_slab` covering a centered box, seen from a
/// laterally translating five-camera trajectory.
pub fn two_plane_scene(
    width: usize,
    height: usize,
    d_slab: f64,
    d_ground: f64,
    baseline_step: f64,
) -> SyntheticScene {
    let fx = width as f64 * 0.9;
    let intrinsics = CameraIntrinsics::new(
        fx,
        fx,
        (width as f64 - 1.0) / 2.0,
        (height as f64 - 1.0) / 2.0,
    )
    .unwrap();
    // ground large enough to fill every view's frustum
    let mut ground = PlanarPatch::frontoparallel(
        d_ground,
        d_ground * 1.5,
        d_ground * 1.2,
        7,
        d_ground / 28.0,
    );
    ground.base = 30.0;
    ground.amplitude = 120.0;
    let slab_half_w = d_slab * 0.19;
    let slab_half_h = d_slab * 0.15;
    let mut slab = PlanarPatch::frontoparallel(d_slab, slab_half_w, slab_half_h, 13, d_slab / 30.0);
    slab.base = 120.0;
    slab.amplitude = 130.0;
    let trajectory = (-2..=2)
        .map(|i| CameraPose::identity_at(Vector3::new(i as f64 * baseline_step, 0.0, 0.0)))
        .collect();
    SyntheticScene {
        patches: vec![ground, slab],
        trajectory,
        intrinsics,
        width,
        height,
    }
}
