//! Triangle meshes with a UV atlas.

use alloc::vec;
use alloc::vec::Vec;

use glam::{DVec2, DVec3};

use crate::error::{Error, Result};

/// Triangles with less area than this are flagged degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Tolerance for UV coordinates that stray just outside the unit square.
const UV_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub normal: DVec3,
    pub area: f64,
    pub degenerate: bool,
}

/// Unit normal and area of the triangle `(v0, v1, v2)`.
///
/// Collinear or coincident corners give `degenerate = true`, a zero normal and
/// zero area.
pub fn compute_face_normal_area(v0: DVec3, v1: DVec3, v2: DVec3) -> FaceGeometry {
    let cross = (v1 - v0).cross(v2 - v0);
    let len = cross.length();
    let area = 0.5 * len;
    if !(area >= DEGENERATE_AREA) {
        return FaceGeometry {
            normal: DVec3::ZERO,
            area: 0.0,
            degenerate: true,
        };
    }
    FaceGeometry {
        normal: cross / len,
        area,
        degenerate: false,
    }
}

/// One polygon corner as read from a file: vertex index and optional uv index.
pub type Corner = (usize, Option<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct TexturedMesh {
    vertices: Vec<DVec3>,
    triangles: Vec<[usize; 3]>,
    uv_coords: Vec<[DVec2; 3]>,
    face_normals: Vec<DVec3>,
    face_areas: Vec<f64>,
    degenerate: Vec<bool>,
}

impl TexturedMesh {
    /// Builds a mesh from triangles with per-corner UVs. Positions are kept as given.
    pub fn new(
        vertices: Vec<DVec3>,
        triangles: Vec<[usize; 3]>,
        uv_coords: Vec<[DVec2; 3]>,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::EmptyInput);
        }
        if uv_coords.len() != triangles.len() {
            return Err(Error::MissingUv {
                face: uv_coords.len().min(triangles.len()),
            });
        }
        for (face, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::IndexOutOfRange { face, index });
            }
        }
        let mut uv_coords = uv_coords;
        for (face, corners) in uv_coords.iter_mut().enumerate() {
            for uv in corners.iter_mut() {
                let ok = |x: f64| x.is_finite() && (-UV_SLACK..=1.0 + UV_SLACK).contains(&x);
                if !ok(uv.x) || !ok(uv.y) {
                    return Err(Error::UvOutOfRange {
                        face,
                        u: uv.x,
                        v: uv.y,
                    });
                }
                *uv = uv.clamp(DVec2::ZERO, DVec2::ONE);
            }
        }
        let mut mesh = Self {
            vertices,
            triangles,
            uv_coords,
            face_normals: Vec::new(),
            face_areas: Vec::new(),
            degenerate: Vec::new(),
        };
        mesh.recompute_faces();
        if mesh.degenerate.iter().all(|&d| d) {
            return Err(Error::DegenerateMesh);
        }
        Ok(mesh)
    }

    /// Builds a mesh from polygons, fan-triangulating anything with more than
    /// three corners, then normalizes it to the unit bounding sphere.
    pub fn from_polygons(
        positions: Vec<DVec3>,
        uvs: &[DVec2],
        faces: &[Vec<Corner>],
    ) -> Result<Self> {
        let mut triangles = Vec::new();
        let mut uv_coords = Vec::new();
        for (face, corners) in faces.iter().enumerate() {
            if corners.len() < 3 {
                return Err(Error::TooFewCorners {
                    face,
                    corners: corners.len(),
                });
            }
            let mut face_uv = Vec::with_capacity(corners.len());
            for &(v, t) in corners {
                if v >= positions.len() {
                    return Err(Error::IndexOutOfRange { face, index: v });
                }
                let t = t.ok_or(Error::MissingUv { face })?;
                let uv = *uvs.get(t).ok_or(Error::IndexOutOfRange { face, index: t })?;
                face_uv.push(uv);
            }
            for k in 1..corners.len() - 1 {
                triangles.push([corners[0].0, corners[k].0, corners[k + 1].0]);
                uv_coords.push([face_uv[0], face_uv[k], face_uv[k + 1]]);
            }
        }
        let mut mesh = Self::new(positions, triangles, uv_coords)?;
        mesh.normalize_to_unit_sphere()?;
        Ok(mesh)
    }

    /// Centers the mesh on its bounding-box center and scales it uniformly so
    /// the farthest vertex sits at distance 1.
    pub fn normalize_to_unit_sphere(&mut self) -> Result<()> {
        let (lo, hi) = self.bounds();
        let center = 0.5 * (lo + hi);
        let radius = self
            .vertices
            .iter()
            .map(|v| v.distance(center))
            .fold(0.0, f64::max);
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::DegenerateMesh);
        }
        for v in &mut self.vertices {
            *v = (*v - center) / radius;
        }
        self.recompute_faces();
        if self.degenerate.iter().all(|&d| d) {
            return Err(Error::DegenerateMesh);
        }
        Ok(())
    }

    /// Applies `f` to every vertex and recomputes normals and areas.
    pub fn transform(&mut self, f: impl Fn(DVec3) -> DVec3) {
        for v in &mut self.vertices {
            *v = f(*v);
        }
        self.recompute_faces();
    }

    fn recompute_faces(&mut self) {
        let n = self.triangles.len();
        self.face_normals = Vec::with_capacity(n);
        self.face_areas = Vec::with_capacity(n);
        self.degenerate = Vec::with_capacity(n);
        for tri in &self.triangles {
            let g = compute_face_normal_area(
                self.vertices[tri[0]],
                self.vertices[tri[1]],
                self.vertices[tri[2]],
            );
            self.face_normals.push(g.normal);
            self.face_areas.push(g.area);
            self.degenerate.push(g.degenerate);
        }
    }

    pub fn bounds(&self) -> (DVec3, DVec3) {
        self.vertices.iter().fold(
            (DVec3::splat(f64::INFINITY), DVec3::splat(f64::NEG_INFINITY)),
            |(lo, hi), &v| (lo.min(v), hi.max(v)),
        )
    }

    pub fn vertices(&self) -> &[DVec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn uv_coords(&self) -> &[[DVec2; 3]] {
        &self.uv_coords
    }

    pub fn face_normals(&self) -> &[DVec3] {
        &self.face_normals
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    pub fn face_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_degenerate(&self, face: usize) -> bool {
        self.degenerate[face]
    }

    pub fn corners(&self, face: usize) -> [DVec3; 3] {
        let t = self.triangles[face];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    /// Indices of faces with nonzero area.
    pub fn live_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.triangles.len()).filter(move |&f| !self.degenerate[f])
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas.iter().sum()
    }

    /// Per-texel count of live faces whose UV triangle contains the texel center.
    ///
    /// With `strict`, centers on a triangle edge are not counted, so texels
    /// straddling a shared chart edge do not count twice.
    pub fn uv_coverage_counts(&self, resolution: usize, strict: bool) -> Vec<u16> {
        let mut counts = vec![0u16; resolution * resolution];
        for face in self.live_faces() {
            for_each_uv_texel(&self.uv_coords[face], resolution, strict, |x, y| {
                let c = &mut counts[y * resolution + x];
                *c = c.saturating_add(1);
            });
        }
        counts
    }

    /// Texels whose center lies on the UV footprint of some live face.
    pub fn uv_footprint(&self, resolution: usize) -> Vec<bool> {
        self.uv_coverage_counts(resolution, false)
            .into_iter()
            .map(|c| c > 0)
            .collect()
    }

    /// Number of texels claimed by more than one face at `resolution`.
    pub fn uv_overlap_texels(&self, resolution: usize) -> usize {
        self.uv_coverage_counts(resolution, true)
            .into_iter()
            .filter(|&c| c > 1)
            .count()
    }
}

/// Visits the texels (column, row) of a `resolution²` texture whose centers
/// fall inside the UV triangle. Row 0 is the top of the image (`v = 1`).
pub fn for_each_uv_texel(
    uv: &[DVec2; 3],
    resolution: usize,
    strict: bool,
    mut visit: impl FnMut(usize, usize),
) {
    let r = resolution as f64;
    let p: [DVec2; 3] = [0, 1, 2].map(|i| DVec2::new(uv[i].x * r, (1.0 - uv[i].y) * r));
    let area = edge(p[0], p[1], p[2]);
    if area.abs() < 1e-18 {
        return;
    }
    let lo = p[0].min(p[1]).min(p[2]);
    let hi = p[0].max(p[1]).max(p[2]);
    let x0 = libm::floor(lo.x - 0.5).max(0.0) as usize;
    let y0 = libm::floor(lo.y - 0.5).max(0.0) as usize;
    let x1 = (libm::ceil(hi.x - 0.5).max(0.0) as usize).min(resolution.saturating_sub(1));
    let y1 = (libm::ceil(hi.y - 0.5).max(0.0) as usize).min(resolution.saturating_sub(1));
    let eps = if strict { 1e-9 } else { -1e-9 };
    for y in y0..=y1 {
        for x in x0..=x1 {
            let c = DVec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let w0 = edge(p[1], p[2], c) / area;
            let w1 = edge(p[2], p[0], c) / area;
            let w2 = edge(p[0], p[1], c) / area;
            if w0 > eps && w1 > eps && w2 > eps {
                visit(x, y);
            }
        }
    }
}

#[inline]
fn edge(a: DVec2, b: DVec2, c: DVec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Small procedural meshes used by tests, demos and the acceptance suite.
pub mod primitives {
    use super::*;

    /// Axis-aligned unit cube, two triangles per side, each side in its own
    /// cell of a 3×2 atlas. Winding is counter-clockwise seen from outside.
    pub fn cube_polygons() -> (Vec<DVec3>, Vec<DVec2>, Vec<Vec<Corner>>) {
        let mut positions = Vec::new();
        let mut uvs = Vec::new();
        let mut faces = Vec::new();
        // (normal axis, sign): corners listed counter-clockwise around the outward normal
        let sides: [[DVec3; 4]; 6] = [
            [DVec3::new(1., 0., 0.), DVec3::new(1., 1., 0.), DVec3::new(1., 1., 1.), DVec3::new(1., 0., 1.)],
            [DVec3::new(0., 0., 0.), DVec3::new(0., 0., 1.), DVec3::new(0., 1., 1.), DVec3::new(0., 1., 0.)],
            [DVec3::new(0., 1., 0.), DVec3::new(0., 1., 1.), DVec3::new(1., 1., 1.), DVec3::new(1., 1., 0.)],
            [DVec3::new(0., 0., 0.), DVec3::new(1., 0., 0.), DVec3::new(1., 0., 1.), DVec3::new(0., 0., 1.)],
            [DVec3::new(0., 0., 1.), DVec3::new(1., 0., 1.), DVec3::new(1., 1., 1.), DVec3::new(0., 1., 1.)],
            [DVec3::new(0., 0., 0.), DVec3::new(0., 1., 0.), DVec3::new(1., 1., 0.), DVec3::new(1., 0., 0.)],
        ];
        for (s, quad) in sides.iter().enumerate() {
            let base_v = positions.len();
            positions.extend_from_slice(quad);
            let (cx, cy) = ((s % 3) as f64, (s / 3) as f64);
            let base_t = uvs.len();
            let m = 0.02;
            for (du, dv) in [(0., 0.), (1., 0.), (1., 1.), (0., 1.)] {
                uvs.push(DVec2::new(
                    (cx + m + du * (1.0 - 2.0 * m)) / 3.0,
                    (cy + m + dv * (1.0 - 2.0 * m)) / 2.0,
                ));
            }
            faces.push((0..4).map(|k| (base_v + k, Some(base_t + k))).collect());
        }
        (positions, uvs, faces)
    }

    pub fn unit_cube() -> TexturedMesh {
        let (p, t, f) = cube_polygons();
        TexturedMesh::from_polygons(p, &t, &f).expect("cube is well formed")
    }

    /// Regular tetrahedron, each face in its own atlas quadrant.
    pub fn tetrahedron() -> TexturedMesh {
        let v = [
            DVec3::new(1., 1., 1.),
            DVec3::new(1., -1., -1.),
            DVec3::new(-1., 1., -1.),
            DVec3::new(-1., -1., 1.),
        ];
        let faces = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        let mut uvs = Vec::new();
        let mut polys = Vec::new();
        for (i, f) in faces.iter().enumerate() {
            let (cx, cy) = ((i % 2) as f64 * 0.5, (i / 2) as f64 * 0.5);
            let base = uvs.len();
            uvs.push(DVec2::new(cx + 0.05, cy + 0.05));
            uvs.push(DVec2::new(cx + 0.45, cy + 0.05));
            uvs.push(DVec2::new(cx + 0.25, cy + 0.45));
            polys.push((0..3).map(|k| (f[k], Some(base + k))).collect::<Vec<_>>());
        }
        TexturedMesh::from_polygons(v.to_vec(), &uvs, &polys).expect("tetrahedron is well formed")
    }

    /// Latitude/longitude sphere with an equirectangular atlas.
    pub fn uv_sphere(rings: usize, segments: usize) -> TexturedMesh {
        let mut positions = Vec::new();
        let mut uvs = Vec::new();
        for i in 0..=rings {
            let v = i as f64 / rings as f64;
            let theta = v * core::f64::consts::PI;
            for j in 0..=segments {
                let u = j as f64 / segments as f64;
                let phi = u * 2.0 * core::f64::consts::PI;
                positions.push(DVec3::new(
                    libm::sin(theta) * libm::cos(phi),
                    libm::cos(theta),
                    -libm::sin(theta) * libm::sin(phi),
                ));
                uvs.push(DVec2::new(u, 1.0 - v));
            }
        }
        let idx = |i: usize, j: usize| i * (segments + 1) + j;
        let mut polys = Vec::new();
        for i in 0..rings {
            for j in 0..segments {
                let q = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
                if i == 0 {
                    polys.push(alloc::vec![(q[0], Some(q[0])), (q[1], Some(q[1])), (q[2], Some(q[2]))]);
                } else if i == rings - 1 {
                    polys.push(alloc::vec![(q[0], Some(q[0])), (q[1], Some(q[1])), (q[3], Some(q[3]))]);
                } else {
                    polys.push(q.iter().map(|&k| (k, Some(k))).collect());
                }
            }
        }
        TexturedMesh::from_polygons(positions, &uvs, &polys).expect("sphere is well formed")
    }
}
