//! Software rasterization of a mesh into per-view geometry buffers.
//!
//! Every live triangle is projected through the pinhole camera, pixels whose
//! centers fall inside (edges inclusive) are shaded with perspective-correct
//! barycentrics, and a z-buffer keeps the nearest surface. Equal depths keep
//! the lower face index, so output does not depend on anything but the inputs.

use alloc::vec;
use alloc::vec::Vec;

use glam::{DVec2, DVec3};

use crate::cameras::CameraPose;
use crate::geometry::TexturedMesh;
use crate::tensor::Image;

/// Vertices closer to the camera plane than this are not rasterized.
const NEAR: f64 = 1e-4;

/// Background marker in [`ViewBuffers::face_id`].
pub const NO_FACE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewBuffers {
    /// Square image side in pixels.
    pub size: usize,
    /// Camera-space depth along the optical axis; `+inf` on background.
    pub depth: Vec<f32>,
    /// Camera-space unit normal (right, up, toward-camera axes).
    pub normal: Vec<[f32; 3]>,
    pub uv: Vec<[f32; 2]>,
    pub face_id: Vec<u32>,
    pub mask: Vec<bool>,
    /// `max(0, n · v)` with `v` the unit direction from the surface to the camera.
    pub score: Vec<f32>,
}

impl ViewBuffers {
    /// All-background buffers.
    pub fn empty(size: usize) -> Self {
        let n = size * size;
        Self {
            size,
            depth: vec![f32::INFINITY; n],
            normal: vec![[0.0; 3]; n],
            uv: vec![[0.0; 2]; n],
            face_id: vec![NO_FACE; n],
            mask: vec![false; n],
            score: vec![0.0; n],
        }
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.size * self.size
    }

    /// Row-major indices of foreground pixels.
    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Rasterizes `mesh` as seen from `pose`.
pub fn rasterize(mesh: &TexturedMesh, pose: &CameraPose) -> ViewBuffers {
    let size = pose.image_size;
    let mut out = ViewBuffers::empty(size);
    let mut zbuf = vec![f64::INFINITY; size * size];
    let focal = pose.focal();
    let half = 0.5 * size as f64;

    for face in mesh.live_faces() {
        let world = mesh.corners(face);
        let cam = world.map(|p| pose.to_camera(p));
        if cam.iter().any(|c| c.z <= NEAR) {
            continue;
        }
        let screen = cam.map(|c| DVec2::new(half + focal * c.x / c.z, half - focal * c.y / c.z));
        let area = edge(screen[0], screen[1], screen[2]);
        if !(area.abs() > 1e-12) {
            continue;
        }
        let lo = screen[0].min(screen[1]).min(screen[2]);
        let hi = screen[0].max(screen[1]).max(screen[2]);
        if hi.x < 0.0 || hi.y < 0.0 || lo.x > size as f64 || lo.y > size as f64 {
            continue;
        }
        let x0 = libm::floor(lo.x - 0.5).max(0.0) as usize;
        let y0 = libm::floor(lo.y - 0.5).max(0.0) as usize;
        let x1 = (libm::ceil(hi.x - 0.5).max(0.0) as usize).min(size - 1);
        let y1 = (libm::ceil(hi.y - 0.5).max(0.0) as usize).min(size - 1);

        let inv_depth = cam.map(|c| 1.0 / c.z);
        let uv = mesh.uv_coords()[face];
        let normal_world = mesh.face_normals()[face];
        let normal_cam = pose.rotate_to_camera(normal_world);
        let normal_cam = [normal_cam.x as f32, normal_cam.y as f32, normal_cam.z as f32];

        for y in y0..=y1 {
            for x in x0..=x1 {
                let c = DVec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let w = [
                    edge(screen[1], screen[2], c) / area,
                    edge(screen[2], screen[0], c) / area,
                    edge(screen[0], screen[1], c) / area,
                ];
                if w[0] < 0.0 || w[1] < 0.0 || w[2] < 0.0 {
                    continue;
                }
                let q = [w[0] * inv_depth[0], w[1] * inv_depth[1], w[2] * inv_depth[2]];
                let denom = q[0] + q[1] + q[2];
                let depth = 1.0 / denom;
                let idx = y * size + x;
                if !(depth < zbuf[idx]) {
                    continue;
                }
                let b = [q[0] / denom, q[1] / denom, q[2] / denom];
                let point = world[0] * b[0] + world[1] * b[1] + world[2] * b[2];
                let tex = uv[0] * b[0] + uv[1] * b[1] + uv[2] * b[2];
                let to_camera = (pose.position - point).normalize();
                let score = normal_world.dot(to_camera).clamp(0.0, 1.0);

                zbuf[idx] = depth;
                out.depth[idx] = depth as f32;
                out.normal[idx] = normal_cam;
                out.uv[idx] = [tex.x.clamp(0.0, 1.0) as f32, tex.y.clamp(0.0, 1.0) as f32];
                out.face_id[idx] = face as u32;
                out.mask[idx] = true;
                out.score[idx] = score as f32;
            }
        }
    }
    out
}

#[inline]
fn edge(a: DVec2, b: DVec2, c: DVec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Conditioning images derived from a render: normalized inverse depth and line art.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionImages {
    /// `(d_max − d) / (d_max − d_min)` on foreground, 0 on background.
    pub depth: Image,
    /// 1 on (dilated) depth/normal discontinuities and silhouettes, else 0.
    pub lineart: Image,
}

/// Normalized depth step that counts as a line.
pub const LINE_DEPTH_STEP: f32 = 0.1;
/// Normal angle (degrees) that counts as a crease.
pub const LINE_CREASE_DEG: f32 = 25.0;

pub fn make_condition_images(buffers: &ViewBuffers) -> ConditionImages {
    let size = buffers.size;
    let mut depth = Image::zeros(1, size, size);
    let (mut d_min, mut d_max) = (f32::INFINITY, f32::NEG_INFINITY);
    for i in buffers.foreground() {
        d_min = d_min.min(buffers.depth[i]);
        d_max = d_max.max(buffers.depth[i]);
    }
    let range = d_max - d_min;
    {
        let plane = depth.plane_mut(0);
        for i in buffers.foreground() {
            plane[i] = if range > 0.0 {
                ((d_max - buffers.depth[i]) / range).clamp(0.0, 1.0)
            } else {
                1.0
            };
        }
    }

    let edges = edge_map(buffers, depth.plane(0));
    let mut lineart = Image::zeros(1, size, size);
    let plane = lineart.plane_mut(0);
    for y in 0..size {
        for x in 0..size {
            let idx = y * size + x;
            if !buffers.mask[idx] {
                continue;
            }
            let hit = neighbourhood(x, y, size).any(|(nx, ny)| edges[ny * size + nx]);
            if hit {
                plane[idx] = 1.0;
            }
        }
    }
    ConditionImages { depth, lineart }
}

/// Undilated line pixels: foreground pixels with a 4-neighbour that is
/// background (or off-image), or differs by more than the depth/crease thresholds.
pub(crate) fn edge_map(buffers: &ViewBuffers, norm_depth: &[f32]) -> Vec<bool> {
    let size = buffers.size;
    let cos_crease = libm::cosf(LINE_CREASE_DEG.to_radians());
    let mut edges = vec![false; size * size];
    for y in 0..size {
        for x in 0..size {
            let p = y * size + x;
            if !buffers.mask[p] {
                continue;
            }
            let offsets = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)];
            edges[p] = offsets.iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= size as i64 || ny >= size as i64 {
                    return true;
                }
                let q = ny as usize * size + nx as usize;
                if !buffers.mask[q] {
                    return true;
                }
                let (a, b) = (buffers.normal[p], buffers.normal[q]);
                let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
                (norm_depth[p] - norm_depth[q]).abs() > LINE_DEPTH_STEP || cos < cos_crease
            });
        }
    }
    edges
}

fn neighbourhood(x: usize, y: usize, size: usize) -> impl Iterator<Item = (usize, usize)> {
    let xs = x.saturating_sub(1)..=(x + 1).min(size - 1);
    let ys = y.saturating_sub(1)..=(y + 1).min(size - 1);
    ys.flat_map(move |ny| xs.clone().map(move |nx| (nx, ny)))
}

/// Interpolated world-space surface point under a foreground pixel, recovered
/// from depth and the pixel ray.
pub fn surface_point(pose: &CameraPose, buffers: &ViewBuffers, idx: usize) -> Option<DVec3> {
    if !buffers.mask[idx] {
        return None;
    }
    let (x, y) = (idx % buffers.size, idx / buffers.size);
    let ray = pose.pixel_ray(x as f64 + 0.5, y as f64 + 0.5);
    let depth = buffers.depth[idx] as f64;
    Some(pose.position + ray * (depth / ray.dot(-pose.forward)))
}
