//! Normal-weighted fusion of per-view images in UV space.
//!
//! Every visible pixel is scattered to the texel containing its UV with weight
//! `exp(s / τ)`, `s` being the pixel's view-cosine score. The fused texel is the
//! weighted mean, which is exactly a softmax over all contributing pixels of all
//! views. Several resolutions are accumulated side by side and blended when the
//! fused texture is read back into the views.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::ViewBuffers;
use crate::tensor::{Image, Planar};
use crate::texture::{nearest_texel, texel_center, texel_coords, sample_masked};

/// Holes in a fused texture borrow the nearest covered texel within this radius.
pub const HOLE_SEARCH_RADIUS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct UvAccumulator {
    resolution: usize,
    channels: usize,
    /// `Σ exp(s_j) · color_j`, channels-first.
    weighted_sum: Vec<f64>,
    /// `Σ exp(s_j)`.
    weight_total: Vec<f64>,
}

impl UvAccumulator {
    pub fn new(resolution: usize, channels: usize) -> Self {
        let n = resolution * resolution;
        Self {
            resolution,
            channels,
            weighted_sum: vec![0.0; channels * n],
            weight_total: vec![0.0; n],
        }
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weight_total(&self) -> &[f64] {
        &self.weight_total
    }

    pub fn weighted_sum(&self, channel: usize) -> &[f64] {
        let n = self.resolution * self.resolution;
        &self.weighted_sum[channel * n..(channel + 1) * n]
    }

    /// Adds one contribution to texel `idx`.
    #[inline]
    pub fn add(&mut self, idx: usize, weight: f64, color: impl IntoIterator<Item = f64>) {
        let n = self.resolution * self.resolution;
        self.weight_total[idx] += weight;
        for (c, v) in color.into_iter().enumerate().take(self.channels) {
            self.weighted_sum[c * n + idx] += weight * v;
        }
    }

    #[inline]
    pub fn is_covered(&self, idx: usize) -> bool {
        self.weight_total[idx] > 0.0
    }

    pub fn coverage(&self) -> Vec<bool> {
        self.weight_total.iter().map(|&w| w > 0.0).collect()
    }

    pub fn covered_count(&self) -> usize {
        self.weight_total.iter().filter(|&&w| w > 0.0).count()
    }

    /// Weighted mean at texel `idx`, channel `c`; `None` on holes.
    #[inline]
    pub fn fused_value(&self, c: usize, idx: usize) -> Option<f64> {
        let w = self.weight_total[idx];
        (w > 0.0).then(|| self.weighted_sum[c * self.resolution * self.resolution + idx] / w)
    }

    /// Fused texture (holes set to 0) and its coverage.
    pub fn fused(&self) -> (Planar<f64>, Vec<bool>) {
        let r = self.resolution;
        let values = Planar::from_fn(self.channels, r, r, |c, y, x| {
            self.fused_value(c, y * r + x).unwrap_or(0.0)
        });
        (values, self.coverage())
    }

    /// Fused texture with holes patched from the nearest covered texel within
    /// [`HOLE_SEARCH_RADIUS`]; the mask marks texels that carry a value.
    fn fused_with_patches(&self) -> (Planar<f64>, Vec<bool>) {
        let (mut values, covered) = self.fused();
        let r = self.resolution as i64;
        let rad = HOLE_SEARCH_RADIUS as i64;
        let mut defined = covered.clone();
        for y in 0..r {
            for x in 0..r {
                let idx = (y * r + x) as usize;
                if covered[idx] {
                    continue;
                }
                let mut best: Option<(i64, usize)> = None;
                for dy in -rad..=rad {
                    for dx in -rad..=rad {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= r || ny >= r {
                            continue;
                        }
                        let n = (ny * r + nx) as usize;
                        let d2 = dx * dx + dy * dy;
                        if covered[n] && best.map_or(true, |(b, _)| d2 < b) {
                            best = Some((d2, n));
                        }
                    }
                }
                if let Some((_, n)) = best {
                    for c in 0..self.channels {
                        let v = values.plane(c)[n];
                        values.plane_mut(c)[idx] = v;
                    }
                    defined[idx] = true;
                }
            }
        }
        (values, defined)
    }
}

fn check_views(images: &[Image], buffers: &[ViewBuffers]) -> Result<()> {
    if images.len() != buffers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} images for {} views",
            images.len(),
            buffers.len()
        )));
    }
    for (img, buf) in images.iter().zip(buffers) {
        if img.height() != buf.size || img.width() != buf.size {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} image for a {} px view",
                img.height(),
                img.width(),
                buf.size
            )));
        }
    }
    Ok(())
}

/// Scatters every foreground pixel of every view into a `resolution²` accumulator
/// with weight `exp(score / temperature)`. Views are visited in order, pixels
/// row-major.
pub fn splat(
    images: &[Image],
    buffers: &[ViewBuffers],
    resolution: usize,
    temperature: f64,
) -> Result<UvAccumulator> {
    check_views(images, buffers)?;
    if !(temperature > 0.0) {
        return Err(Error::OutOfRange {
            name: "temperature",
            value: temperature,
        });
    }
    let channels = images.first().map_or(3, |i| i.channels());
    let mut acc = UvAccumulator::new(resolution, channels);
    for (img, buf) in images.iter().zip(buffers) {
        for p in buf.foreground() {
            let (x, y) = nearest_texel(buf.uv[p], resolution);
            let w = libm::exp(buf.score[p] as f64 / temperature);
            acc.add(
                y * resolution + x,
                w,
                (0..channels).map(|c| img.plane(c)[p] as f64),
            );
        }
    }
    Ok(acc)
}

/// Blend weights for the coarse, middle and fine textures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleWeights {
    pub coarse: f64,
    pub mid: f64,
    pub fine: f64,
}

impl ScaleWeights {
    pub fn as_array(&self) -> [f64; 3] {
        [self.coarse, self.mid, self.fine]
    }
}

/// Fraction of the run over which weight moves from the coarse to the middle texture.
pub const COARSE_PHASE: f64 = 0.3;
/// Final share of the fine texture.
pub const FINE_END_WEIGHT: f64 = 0.6;

/// Multi-scale blend schedule for a run `progress ∈ [0, 1]` complete.
///
/// All weight starts on the coarse texture and moves linearly to the middle one
/// by 0.3; afterwards it moves linearly toward the fine texture, ending at
/// (0, 0.4, 0.6).
pub fn scale_weights(progress: f64) -> Result<ScaleWeights> {
    if !(0.0..=1.0).contains(&progress) {
        return Err(Error::OutOfRange {
            name: "progress",
            value: progress,
        });
    }
    if progress <= COARSE_PHASE {
        let m = progress / COARSE_PHASE;
        Ok(ScaleWeights {
            coarse: 1.0 - m,
            mid: m,
            fine: 0.0,
        })
    } else {
        let f = FINE_END_WEIGHT * (progress - COARSE_PHASE) / (1.0 - COARSE_PHASE);
        Ok(ScaleWeights {
            coarse: 0.0,
            mid: 1.0 - f,
            fine: f,
        })
    }
}

fn check_levels(accumulators: &[UvAccumulator], weights: &[f64]) -> Result<()> {
    if accumulators.is_empty() || accumulators.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} accumulators for {} weights",
            accumulators.len(),
            weights.len()
        )));
    }
    Ok(())
}

/// Reads the fused textures back into every view (the fused per-view estimate).
///
/// Foreground pixels blend the bilinear lookups of each resolution by `weights`,
/// renormalized over the resolutions that have data near the pixel's UV;
/// background pixels, and pixels no resolution can serve, copy `fallback`.
pub fn unproject(
    accumulators: &[UvAccumulator],
    weights: &[f64],
    buffers: &[ViewBuffers],
    fallback: &[Image],
) -> Result<Vec<Image>> {
    check_levels(accumulators, weights)?;
    check_views(fallback, buffers)?;
    let levels: Vec<(Planar<f64>, Vec<bool>)> = accumulators
        .iter()
        .zip(weights)
        .map(|(a, &w)| {
            if w > 0.0 {
                a.fused_with_patches()
            } else {
                (Planar::zeros(0, 0, 0), Vec::new())
            }
        })
        .collect();
    let channels = accumulators[0].channels();
    let mut sample = vec![0.0f64; channels];
    let mut blend = vec![0.0f64; channels];
    let mut out = Vec::with_capacity(buffers.len());
    for (buf, base) in buffers.iter().zip(fallback) {
        let mut img = base.clone();
        for p in buf.foreground() {
            let uv = [buf.uv[p][0] as f64, buf.uv[p][1] as f64];
            let mut total = 0.0;
            blend.iter_mut().for_each(|b| *b = 0.0);
            for ((acc, (values, defined)), &w) in accumulators.iter().zip(&levels).zip(weights) {
                if w <= 0.0 {
                    continue;
                }
                let (x, y) = texel_coords(uv, acc.resolution());
                if sample_masked(values, Some(defined), x, y, &mut sample) {
                    total += w;
                    for (b, s) in blend.iter_mut().zip(&sample) {
                        *b += w * s;
                    }
                }
            }
            if total > 0.0 {
                for (c, b) in blend.iter().enumerate().take(img.channels()) {
                    img.plane_mut(c)[p] = (b / total) as f32;
                }
            }
        }
        out.push(img);
    }
    Ok(out)
}

/// Composite texture at the finest accumulator's resolution plus its hole mask.
///
/// Coarser levels are upsampled bilinearly (over their covered texels). Each
/// texel blends the levels that cover it by `weights`, renormalized; if only
/// zero-weight levels cover it they share equally. Texels covered at no level
/// are holes (value 0).
pub fn fused_texture(accumulators: &[UvAccumulator], weights: &[f64]) -> Result<(Image, Vec<bool>)> {
    check_levels(accumulators, weights)?;
    let finest = accumulators
        .iter()
        .map(UvAccumulator::resolution)
        .max()
        .unwrap_or(0);
    let channels = accumulators[0].channels();
    let levels: Vec<(Planar<f64>, Vec<bool>)> = accumulators.iter().map(|a| a.fused()).collect();
    let mut texture = Image::zeros(channels, finest, finest);
    let mut holes = vec![false; finest * finest];
    let mut sample = vec![0.0f64; channels];
    let mut blend = vec![0.0f64; channels];
    let mut uniform = vec![0.0f64; channels];
    for y in 0..finest {
        for x in 0..finest {
            let uv = texel_center(x, y, finest);
            let (mut total, mut count) = (0.0, 0usize);
            blend.iter_mut().for_each(|b| *b = 0.0);
            uniform.iter_mut().for_each(|b| *b = 0.0);
            for ((acc, (values, covered)), &w) in accumulators.iter().zip(&levels).zip(weights) {
                let r = acc.resolution();
                let (tx, ty) = nearest_texel([uv[0] as f32, uv[1] as f32], r);
                if !covered[ty * r + tx] {
                    continue;
                }
                let (sx, sy) = texel_coords(uv, r);
                if !sample_masked(values, Some(covered), sx, sy, &mut sample) {
                    continue;
                }
                count += 1;
                total += w;
                for c in 0..channels {
                    blend[c] += w * sample[c];
                    uniform[c] += sample[c];
                }
            }
            let idx = y * finest + x;
            if count == 0 {
                holes[idx] = true;
                continue;
            }
            for c in 0..channels {
                let v = if total > 0.0 {
                    blend[c] / total
                } else {
                    uniform[c] / count as f64
                };
                texture.plane_mut(c)[idx] = v as f32;
            }
        }
    }
    Ok((texture, holes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cameras::ViewRig;
    use crate::geometry::primitives::unit_cube;
    use crate::raster::rasterize;

    /// Buffers where pixel `i` carries the given uv and score.
    fn synthetic(size: usize, pixels: &[(usize, [f32; 2], f32)]) -> ViewBuffers {
        let mut b = ViewBuffers::empty(size);
        for &(i, uv, s) in pixels {
            b.mask[i] = true;
            b.uv[i] = uv;
            b.score[i] = s;
            b.depth[i] = 1.0;
            b.face_id[i] = 0;
            b.normal[i] = [0.0, 0.0, 1.0];
        }
        b
    }

    fn gray(size: usize, v: f32) -> Image {
        Image::filled(3, size, size, v)
    }

    #[test]
    fn equal_scores_average_plainly() {
        let uv = [0.3, 0.3];
        let b = synthetic(2, &[(0, uv, 0.4), (1, uv, 0.4), (3, uv, 0.4)]);
        let img = Image::from_fn(3, 2, 2, |_, y, x| (y * 2 + x) as f32);
        let acc = splat(&[img], &[b], 8, 1.0).unwrap();
        let (x, y) = nearest_texel(uv, 8);
        let v = acc.fused_value(0, y * 8 + x).unwrap();
        assert!((v - (0.0 + 1.0 + 3.0) / 3.0).abs() < 1e-12);
        assert_eq!(acc.covered_count(), 1);
    }

    #[test]
    fn softmax_of_two_views() {
        let uv = [0.5, 0.5];
        let a = synthetic(1, &[(0, uv, 0.0)]);
        let b = synthetic(1, &[(0, uv, libm::logf(3.0))]);
        let acc = splat(&[gray(1, 0.0), gray(1, 1.0)], &[a, b], 4, 1.0).unwrap();
        let (x, y) = nearest_texel(uv, 4);
        let v = acc.fused_value(1, y * 4 + x).unwrap();
        assert!((v - 0.75).abs() < 1e-6);
    }

    #[test]
    fn background_contributes_nothing() {
        let mut b = synthetic(2, &[(0, [0.1, 0.1], 1.0)]);
        b.uv[3] = [0.9, 0.9];
        let acc = splat(&[gray(2, 1.0)], &[b], 4, 1.0).unwrap();
        assert_eq!(acc.covered_count(), 1);
    }

    #[test]
    fn schedule_endpoints_and_midpoints() {
        assert_eq!(scale_weights(0.0).unwrap().as_array(), [1.0, 0.0, 0.0]);
        assert_eq!(scale_weights(0.3).unwrap().as_array(), [0.0, 1.0, 0.0]);
        let end = scale_weights(1.0).unwrap();
        assert_eq!(end.coarse, 0.0);
        assert!((end.mid - 0.4).abs() < 1e-15 && (end.fine - 0.6).abs() < 1e-15);
        let mid = scale_weights(0.65).unwrap();
        assert!((mid.mid - 0.7).abs() < 1e-12 && (mid.fine - 0.3).abs() < 1e-12);
        assert!(scale_weights(1.1).is_err());
        assert!(scale_weights(-0.1).is_err());
    }

    #[test]
    fn constant_views_are_a_fixed_point() {
        let mesh = unit_cube();
        let rig = ViewRig::default_uniform(32).unwrap();
        let views: Vec<_> = rig.poses.iter().map(|p| rasterize(&mesh, p)).collect();
        let images: Vec<_> = views.iter().map(|_| gray(32, 0.3)).collect();
        let accs: Vec<_> = [8, 16, 32]
            .iter()
            .map(|&r| splat(&images, &views, r, 1.0).unwrap())
            .collect();
        let w = scale_weights(0.5).unwrap().as_array();
        let out = unproject(&accs, &w, &views, &images).unwrap();
        for (o, i) in out.iter().zip(&images) {
            for (a, b) in o.as_slice().iter().zip(i.as_slice()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_view_identity_at_texel_centres() {
        // one pixel per texel, each at its texel centre; brute-force bookkeeping
        // tracks which texel received which pixel
        let size = 4;
        let res = 8;
        let mut pixels = Vec::new();
        let mut owner = vec![None; res * res];
        for i in 0..size * size {
            let (tx, ty) = ((i * 3) % res, (i * 5 + 1) % res);
            if owner[ty * res + tx].is_some() {
                continue;
            }
            owner[ty * res + tx] = Some(i);
            let c = texel_center(tx, ty, res);
            pixels.push((i, [c[0] as f32, c[1] as f32], 0.3 + 0.01 * i as f32));
        }
        let b = synthetic(size, &pixels);
        let img = Image::from_fn(3, size, size, |c, y, x| (c * 16 + y * 4 + x) as f32 * 0.01);
        let acc = splat(&[img.clone()], &[b.clone()], res, 1.0).unwrap();
        let out = unproject(&[acc], &[1.0], &[b.clone()], &[gray(size, -1.0)]).unwrap();
        for (i, _, _) in &pixels {
            for c in 0..3 {
                assert!((out[0].plane(c)[*i] - img.plane(c)[*i]).abs() < 1e-6);
            }
        }
        let untouched = (0..size * size).find(|i| !b.mask[*i]).unwrap();
        assert_eq!(out[0].plane(0)[untouched], -1.0);
    }

    #[test]
    fn shared_texels_unproject_identically() {
        let uv = [0.51, 0.49];
        let a = synthetic(2, &[(1, uv, 0.9)]);
        let b = synthetic(2, &[(2, uv, 0.2)]);
        let ia = gray(2, 0.1);
        let ib = gray(2, 0.8);
        let acc = splat(&[ia.clone(), ib.clone()], &[a.clone(), b.clone()], 16, 1.0).unwrap();
        let out = unproject(&[acc], &[1.0], &[a, b], &[ia, ib]).unwrap();
        assert_eq!(out[0].plane(0)[1], out[1].plane(0)[2]);
    }

    #[test]
    fn composite_blends_scales() {
        let uvs: Vec<_> = (0..64 * 64)
            .map(|i| {
                let c = texel_center(i % 64, i / 64, 64);
                (i, [c[0] as f32, c[1] as f32], 0.5f32)
            })
            .collect();
        let b = synthetic(64, &uvs);
        let img = Image::from_fn(3, 64, 64, |_, y, x| ((x + 2 * y) % 7) as f32 * 0.1);
        let views = [b];
        let accs: Vec<_> = [16, 32, 64]
            .iter()
            .map(|&r| splat(core::slice::from_ref(&img), &views, r, 1.0).unwrap())
            .collect();
        let (tex, holes) = fused_texture(&accs, &[0.0, 0.4, 0.6]).unwrap();
        assert!(holes.iter().all(|&h| !h));
        let (mid, mid_cov) = accs[1].fused();
        let mut s = [0.0; 3];
        for y in 0..64 {
            for x in 0..64 {
                let (sx, sy) = texel_coords(texel_center(x, y, 64), 32);
                sample_masked(&mid, Some(&mid_cov), sx, sy, &mut s);
                let fine = accs[2].fused_value(0, y * 64 + x).unwrap();
                let expect = 0.4 * s[0] + 0.6 * fine;
                assert!((tex.get(0, y, x) as f64 - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn composite_falls_back_to_covering_level() {
        // a single pixel covers one coarse texel but only one of its fine texels
        let b = synthetic(1, &[(0, [0.1, 0.9], 1.0)]);
        let img = gray(1, 0.7);
        let accs: Vec<_> = [4, 16]
            .iter()
            .map(|&r| splat(core::slice::from_ref(&img), core::slice::from_ref(&b), r, 1.0).unwrap())
            .collect();
        let (tex, holes) = fused_texture(&accs, &[0.0, 1.0]).unwrap();
        let covered_by_coarse = holes.iter().filter(|&&h| !h).count();
        assert_eq!(covered_by_coarse, 16);
        for (i, &h) in holes.iter().enumerate() {
            if !h {
                assert!((tex.plane(0)[i] - 0.7).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn coarse_coverage_contains_fine_coverage() {
        let mesh = unit_cube();
        let rig = ViewRig::default_uniform(48).unwrap();
        let views: Vec<_> = rig.poses.iter().map(|p| rasterize(&mesh, p)).collect();
        let images: Vec<_> = views.iter().map(|_| gray(48, 0.0)).collect();
        let fine = splat(&images, &views, 128, 1.0).unwrap();
        let coarse = splat(&images, &views, 32, 1.0).unwrap();
        for y in 0..128 {
            for x in 0..128 {
                if fine.is_covered(y * 128 + x) {
                    assert!(coarse.is_covered((y / 4) * 32 + x / 4));
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_weights_normalize_and_fusion_matches_brute_force(
                scores in proptest::collection::vec(0.0f32..1.0, 2..9),
                colors in proptest::collection::vec(-1.0f32..1.0, 9),
            ) {
                let n = scores.len();
                let uv = [0.37f32, 0.61];
                let views: Vec<_> = scores.iter().map(|&s| synthetic(1, &[(0, uv, s)])).collect();
                let imgs: Vec<_> = (0..n).map(|i| gray(1, colors[i])).collect();
                let acc = splat(&imgs, &views, 8, 1.0).unwrap();
                let (x, y) = nearest_texel(uv, 8);
                let idx = y * 8 + x;
                let z: f64 = scores.iter().map(|&s| libm::exp(s as f64)).sum();
                let brute: f64 = (0..n).map(|i| libm::exp(scores[i] as f64) / z * colors[i] as f64).sum();
                prop_assert!((acc.fused_value(0, idx).unwrap() - brute).abs() < 1e-6);
                let wsum: f64 = scores.iter().map(|&s| libm::exp(s as f64) / acc.weight_total()[idx]).sum();
                prop_assert!((wsum - 1.0).abs() < 1e-6);

                // raising one score pulls the fused value toward that colour
                let mut raised = scores.clone();
                raised[0] = (raised[0] + 0.5).min(1.0);
                prop_assume!(raised[0] > scores[0] && (colors[0] as f64 - brute).abs() > 1e-6);
                let views2: Vec<_> = raised.iter().map(|&s| synthetic(1, &[(0, uv, s)])).collect();
                let v2 = splat(&imgs, &views2, 8, 1.0).unwrap().fused_value(0, idx).unwrap();
                prop_assert!((colors[0] as f64 - v2).abs() < (colors[0] as f64 - brute).abs());

                // shuffled view order agrees up to reassociation
                let mut rev_v = views.clone();
                rev_v.reverse();
                let mut rev_i = imgs.clone();
                rev_i.reverse();
                let v3 = splat(&rev_i, &rev_v, 8, 1.0).unwrap().fused_value(0, idx).unwrap();
                prop_assert!((v3 - brute).abs() < 1e-5);
            }
        }
    }
}
