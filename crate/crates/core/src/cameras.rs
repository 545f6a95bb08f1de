//! Pinhole cameras looking at the origin, fixed rigs and normal-driven view selection.

use alloc::vec::Vec;

use glam::DVec3;

use crate::error::{Error, Result};
use crate::geometry::TexturedMesh;
use crate::kmeans::weighted_kmeans_directions;

/// Centroid directions closer than this (radians) collapse into one camera.
const MERGE_ANGLE: f64 = core::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: DVec3,
    /// Unit vector from the origin toward the camera; the camera looks along `-forward`.
    pub forward: DVec3,
    pub up: DVec3,
    pub fov_y: f64,
    pub image_size: usize,
}

impl CameraPose {
    /// A camera at `position` aimed at the origin. World +y is up unless the view
    /// is nearly vertical, in which case +x is used.
    pub fn look_at_origin(position: DVec3, fov_y: f64, image_size: usize) -> Result<Self> {
        if !(fov_y > 0.0 && fov_y < core::f64::consts::PI) {
            return Err(Error::InvalidCamera("fov_y must lie in (0, pi)"));
        }
        if image_size == 0 {
            return Err(Error::InvalidCamera("image size must be positive"));
        }
        let dist = position.length();
        if !(dist > 0.0) || !dist.is_finite() {
            return Err(Error::InvalidCamera("camera cannot sit at the origin"));
        }
        let forward = position / dist;
        let world_up = if forward.dot(DVec3::Y).abs() > 0.999 {
            DVec3::X
        } else {
            DVec3::Y
        };
        let right = world_up.cross(forward).normalize();
        let up = forward.cross(right);
        Ok(Self {
            position,
            forward,
            up,
            fov_y,
            image_size,
        })
    }

    #[inline]
    pub fn right(&self) -> DVec3 {
        self.up.cross(self.forward)
    }

    /// Focal length in pixels.
    #[inline]
    pub fn focal(&self) -> f64 {
        0.5 * self.image_size as f64 / libm::tan(0.5 * self.fov_y)
    }

    /// World point to camera coordinates `(x right, y up, depth)` with depth
    /// positive in front of the camera.
    #[inline]
    pub fn to_camera(&self, p: DVec3) -> DVec3 {
        let d = p - self.position;
        DVec3::new(d.dot(self.right()), d.dot(self.up), -d.dot(self.forward))
    }

    /// Rotates a world direction into camera axes (right, up, forward).
    #[inline]
    pub fn rotate_to_camera(&self, v: DVec3) -> DVec3 {
        DVec3::new(v.dot(self.right()), v.dot(self.up), v.dot(self.forward))
    }

    /// Projects a world point to continuous pixel coordinates (x right, y down;
    /// pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`) plus depth.
    pub fn project(&self, p: DVec3) -> Option<(f64, f64, f64)> {
        let c = self.to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        let f = self.focal();
        let half = 0.5 * self.image_size as f64;
        Some((half + f * c.x / c.z, half - f * c.y / c.z, c.z))
    }

    /// Unit world-space ray direction through continuous pixel coordinates.
    pub fn pixel_ray(&self, px: f64, py: f64) -> DVec3 {
        let f = self.focal();
        let half = 0.5 * self.image_size as f64;
        (self.right() * ((px - half) / f) - self.up * ((py - half) / f) - self.forward).normalize()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRig {
    pub poses: Vec<CameraPose>,
    pub radius: f64,
}

impl ViewRig {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn directions(&self) -> Vec<DVec3> {
        self.poses.iter().map(|p| p.forward).collect()
    }

    /// The default 36-view rig: 9 azimuths at elevations −30°, 0°, 30°, 60°,
    /// radius 2.5, 45° field of view.
    pub fn default_uniform(image_size: usize) -> Result<Self> {
        uniform_rig(
            9,
            &DEFAULT_ELEVATIONS_DEG.map(f64::to_radians),
            DEFAULT_RADIUS,
            DEFAULT_FOV_DEG.to_radians(),
            image_size,
        )
    }
}

pub const DEFAULT_ELEVATIONS_DEG: [f64; 4] = [-30.0, 0.0, 30.0, 60.0];
pub const DEFAULT_RADIUS: f64 = 2.5;
pub const DEFAULT_FOV_DEG: f64 = 45.0;
/// Upper bound on the number of selected views.
pub const DEFAULT_SELECT_K: usize = 16;

/// `n_azimuth × elevations.len()` cameras on a sphere of `radius`, elevation-major,
/// azimuths evenly spaced from 0 (the +x axis) counter-clockwise seen from +y.
pub fn uniform_rig(
    n_azimuth: usize,
    elevations: &[f64],
    radius: f64,
    fov_y: f64,
    image_size: usize,
) -> Result<ViewRig> {
    if !(radius > 1.0) {
        return Err(Error::InvalidRadius(radius));
    }
    if n_azimuth == 0 || elevations.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut poses = Vec::with_capacity(n_azimuth * elevations.len());
    for &el in elevations {
        for i in 0..n_azimuth {
            let az = 2.0 * core::f64::consts::PI * i as f64 / n_azimuth as f64;
            let dir = DVec3::new(
                libm::cos(el) * libm::cos(az),
                libm::sin(el),
                -libm::cos(el) * libm::sin(az),
            );
            poses.push(CameraPose::look_at_origin(radius * dir, fov_y, image_size)?);
        }
    }
    Ok(ViewRig { poses, radius })
}

/// Places cameras facing the area-weighted cluster centroids of the mesh's face normals.
///
/// At most `k` clusters and never more than the number of live faces. Directions
/// within one degree merge; poses are ordered by descending cluster weight, then
/// lexicographically by direction.
pub fn select_views(
    mesh: &TexturedMesh,
    k: usize,
    radius: f64,
    fov_y: f64,
    image_size: usize,
    seed: u64,
) -> Result<ViewRig> {
    if !(radius > 1.0) {
        return Err(Error::InvalidRadius(radius));
    }
    let faces: Vec<usize> = mesh.live_faces().collect();
    let normals: Vec<DVec3> = faces.iter().map(|&f| mesh.face_normals()[f]).collect();
    let weights: Vec<f64> = faces.iter().map(|&f| mesh.face_areas()[f]).collect();
    let k = k.min(faces.len());
    let clusters = weighted_kmeans_directions(&normals, &weights, k, seed)?;

    let mut merged: Vec<(DVec3, f64)> = Vec::new();
    let mut order: Vec<usize> = (0..clusters.centroids.len()).collect();
    order.sort_by(|&a, &b| cmp_cluster(&clusters.centroids, &clusters.cluster_weights, a, b));
    for i in order {
        let c = clusters.centroids[i];
        let w = clusters.cluster_weights[i];
        match merged
            .iter_mut()
            .find(|(d, _)| libm::acos(d.dot(c).clamp(-1.0, 1.0)) < MERGE_ANGLE)
        {
            Some(slot) => slot.1 += w,
            None => merged.push((c, w)),
        }
    }
    let dirs: Vec<DVec3> = merged.iter().map(|m| m.0).collect();
    let ws: Vec<f64> = merged.iter().map(|m| m.1).collect();
    let mut order: Vec<usize> = (0..merged.len()).collect();
    order.sort_by(|&a, &b| cmp_cluster(&dirs, &ws, a, b));

    let poses = order
        .into_iter()
        .map(|i| CameraPose::look_at_origin(radius * dirs[i], fov_y, image_size))
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewRig { poses, radius })
}

fn cmp_cluster(dirs: &[DVec3], weights: &[f64], a: usize, b: usize) -> core::cmp::Ordering {
    weights[b]
        .total_cmp(&weights[a])
        .then(dirs[a].x.total_cmp(&dirs[b].x))
        .then(dirs[a].y.total_cmp(&dirs[b].y))
        .then(dirs[a].z.total_cmp(&dirs[b].z))
}

/// Mean over live faces of the best cosine between the face normal and any
/// camera direction. 1.0 means every face is seen exactly head-on.
pub fn coverage_score(mesh: &TexturedMesh, directions: &[DVec3]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for f in mesh.live_faces() {
        let normal = mesh.face_normals()[f];
        let best = directions
            .iter()
            .map(|d| normal.dot(*d))
            .fold(f64::NEG_INFINITY, f64::max);
        sum += best;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
