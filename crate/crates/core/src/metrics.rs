//! Image quality and cross-view agreement measures.
//!
//! Colours are compared on a `[0, 1]` scale (half the `[-1, 1]` difference).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::ViewBuffers;
use crate::tensor::Image;
use crate::texture::{nearest_texel, render_texture};

/// Peak signal-to-noise ratio in dB over texels where `mask` holds (all if `None`).
/// Identical inputs give `+∞`; an empty mask gives `NaN`.
pub fn psnr(a: &Image, b: &Image, mask: Option<&[bool]>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(alloc::format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let n = a.plane_len();
    if mask.is_some_and(|m| m.len() != n) {
        return Err(Error::ShapeMismatch("mask size".into()));
    }
    let (mut se, mut count) = (0.0f64, 0usize);
    for c in 0..a.channels() {
        for (i, (x, y)) in a.plane(c).iter().zip(b.plane(c)).enumerate() {
            if mask.is_none_or(|m| m[i]) {
                let d = (*x as f64 - *y as f64) * 0.5;
                se += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok(f64::NAN);
    }
    Ok(-10.0 * libm::log10(se / count as f64))
}

/// Mean absolute colour difference between pairs of views over the surface
/// both see.
///
/// Surface points are matched through UV: each view's pixels are averaged per
/// texel at `resolution`, and every pair of views is compared on the texels
/// both reach. The result averages over all (pair, texel, channel) entries; no
/// shared texels give 0.
pub fn view_consistency(images: &[Image], views: &[ViewBuffers], resolution: usize) -> Result<f64> {
    if images.len() != views.len() {
        return Err(Error::ShapeMismatch("images and views differ in count".into()));
    }
    let n = resolution * resolution;
    let per_view: Vec<(Vec<[f64; 3]>, Vec<bool>)> = images
        .iter()
        .zip(views)
        .map(|(img, b)| {
            let mut sum = vec![[0.0f64; 3]; n];
            let mut count = vec![0u32; n];
            for p in b.foreground() {
                let (x, y) = nearest_texel(b.uv[p], resolution);
                let idx = y * resolution + x;
                count[idx] += 1;
                for (c, s) in sum[idx].iter_mut().enumerate().take(img.channels()) {
                    *s += img.plane(c)[p] as f64;
                }
            }
            for (s, &k) in sum.iter_mut().zip(&count) {
                if k > 0 {
                    s.iter_mut().for_each(|v| *v /= k as f64);
                }
            }
            (sum, count.iter().map(|&k| k > 0).collect())
        })
        .collect();
    let channels = images.first().map_or(3, |i| i.channels().min(3));
    let (mut total, mut entries) = (0.0f64, 0usize);
    for a in 0..per_view.len() {
        for b in a + 1..per_view.len() {
            let (va, ca) = &per_view[a];
            let (vb, cb) = &per_view[b];
            for i in 0..n {
                if ca[i] && cb[i] {
                    for c in 0..channels {
                        total += (va[i][c] - vb[i][c]).abs() * 0.5;
                    }
                    entries += channels;
                }
            }
        }
    }
    Ok(if entries == 0 { 0.0 } else { total / entries as f64 })
}

/// Cross-view agreement of a finished texture rendered into every view.
pub fn consistency_metric(texture: &Image, holes: &[bool], views: &[ViewBuffers]) -> Result<f64> {
    let remaining = holes.iter().filter(|&&h| h).count();
    if remaining > 0 {
        return Err(Error::HolesPresent(remaining));
    }
    let renders: Vec<Image> = views.iter().map(|b| render_texture(texture, b, 0.0)).collect();
    view_consistency(&renders, views, texture.width())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cameras::ViewRig;
    use crate::geometry::primitives::unit_cube;
    use crate::oracle::checkerboard;
    use crate::raster::rasterize;

    #[test]
    fn psnr_known_values() {
        let a = Image::filled(3, 4, 4, 0.0);
        let b = Image::filled(3, 4, 4, 0.2);
        // [0,1]-scale error 0.1 → 20 dB
        assert!((psnr(&a, &b, None).unwrap() - 20.0).abs() < 1e-6);
        assert_eq!(psnr(&a, &a, None).unwrap(), f64::INFINITY);
        let mut mask = vec![false; 16];
        assert!(psnr(&a, &b, Some(&mask)).unwrap().is_nan());
        mask[3] = true;
        let mut c = a.clone();
        c.set(1, 0, 3, 0.2);
        // one channel of three differs on the only masked texel
        let expect = -10.0 * libm::log10(0.01 / 3.0);
        assert!((psnr(&a, &c, Some(&mask)).unwrap() - expect).abs() < 1e-4);
    }

    #[test]
    fn single_view_is_vacuous() {
        let mesh = unit_cube();
        let rig = ViewRig::default_uniform(32).unwrap();
        let b = rasterize(&mesh, &rig.poses[0]);
        let tex = checkerboard(64, 8, false);
        assert_eq!(consistency_metric(&tex, &vec![false; 64 * 64], &[b]).unwrap(), 0.0);
    }

    #[test]
    fn holes_are_rejected() {
        let mut holes = vec![false; 16];
        holes[2] = true;
        holes[5] = true;
        let tex = Image::zeros(3, 4, 4);
        assert_eq!(consistency_metric(&tex, &holes, &[]), Err(Error::HolesPresent(2)));
    }

    #[test]
    fn independent_views_disagree() {
        let mesh = unit_cube();
        let rig = ViewRig::default_uniform(48).unwrap();
        let views: Vec<_> = rig.poses.iter().take(4).map(|p| rasterize(&mesh, p)).collect();
        let images: Vec<_> = (0..4).map(|i| Image::filled(3, 48, 48, i as f32 * 0.2)).collect();
        // pair differences of 0.2k on the [-1,1] scale; every pair that shares
        // texels contributes its own constant
        let m = view_consistency(&images, &views, 64).unwrap();
        assert!(m > 0.09 && m < 0.31, "{m}");
    }
}
