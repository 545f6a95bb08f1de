//! UV texel addressing and texture sampling.
//!
//! Texture row 0 is the top of the image (`v = 1`). Texel `(x, y)` of an `R×R`
//! texture covers `u ∈ [x/R, (x+1)/R)` and `v ∈ (1 − (y+1)/R, 1 − y/R]`; its
//! center sits at continuous texel coordinates `(x, y)`.

use crate::raster::ViewBuffers;
use crate::tensor::{Image, Planar};

/// Texel containing `uv`.
#[inline]
pub fn nearest_texel(uv: [f32; 2], resolution: usize) -> (usize, usize) {
    let r = resolution as f64;
    let x = libm::floor(uv[0] as f64 * r).clamp(0.0, r - 1.0) as usize;
    let y = libm::floor((1.0 - uv[1] as f64) * r).clamp(0.0, r - 1.0) as usize;
    (x, y)
}

/// UV of the center of texel `(x, y)`.
#[inline]
pub fn texel_center(x: usize, y: usize, resolution: usize) -> [f64; 2] {
    let r = resolution as f64;
    [(x as f64 + 0.5) / r, 1.0 - (y as f64 + 0.5) / r]
}

/// Continuous texel coordinates of `uv` (texel centers at integers).
#[inline]
pub fn texel_coords(uv: [f64; 2], resolution: usize) -> (f64, f64) {
    let r = resolution as f64;
    (uv[0] * r - 0.5, (1.0 - uv[1]) * r - 0.5)
}

/// Bilinear lookup at continuous texel coordinates over the taps for which
/// `defined` holds, renormalizing the tap weights. Writes one value per channel
/// into `out` and returns `false` if no tap is defined.
pub fn sample_masked<T: Copy + Default + Into<f64>>(
    values: &Planar<T>,
    defined: Option<&[bool]>,
    x: f64,
    y: f64,
    out: &mut [f64],
) -> bool {
    let (w, h) = (values.width(), values.height());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = libm::floor(x) as usize;
    let y0 = libm::floor(y) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ];
    let mut total = 0.0;
    out.iter_mut().for_each(|o| *o = 0.0);
    for &(tx, ty, tw) in &taps {
        let idx = ty * w + tx;
        if tw == 0.0 || defined.is_some_and(|d| !d[idx]) {
            continue;
        }
        total += tw;
        for (c, o) in out.iter_mut().enumerate() {
            *o += tw * values.plane(c)[idx].into();
        }
    }
    if total <= 0.0 {
        // all non-zero-weight taps undefined; fall back to any defined tap
        for &(tx, ty, _) in &taps {
            let idx = ty * w + tx;
            if defined.map_or(true, |d| d[idx]) {
                for (c, o) in out.iter_mut().enumerate() {
                    *o = values.plane(c)[idx].into();
                }
                return true;
            }
        }
        return false;
    }
    out.iter_mut().for_each(|o| *o /= total);
    true
}

/// Bilinear texture lookup at `uv` with clamp-to-edge addressing.
pub fn sample_bilinear(texture: &Image, uv: [f32; 2], out: &mut [f64]) {
    let (x, y) = texel_coords([uv[0] as f64, uv[1] as f64], texture.width());
    sample_masked(texture, None, x, y, out);
}

/// Renders a UV texture through a view's UV buffer; background pixels get `background`.
pub fn render_texture(texture: &Image, buffers: &ViewBuffers, background: f32) -> Image {
    let channels = texture.channels();
    let mut img = Image::filled(channels, buffers.size, buffers.size, background);
    let mut px = [0.0f64; 8];
    let px = &mut px[..channels];
    for i in buffers.foreground() {
        sample_bilinear(texture, buffers.uv[i], px);
        for (c, v) in px.iter().enumerate() {
            img.plane_mut(c)[i] = *v as f32;
        }
    }
    img
}
