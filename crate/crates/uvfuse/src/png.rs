//! PNG encoding of textures, masks and debug buffers.
//!
//! Colour values in `[-1, 1]` map linearly onto 8-bit `[0, 255]`.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use uvfuse_core::raster::ViewBuffers;
use uvfuse_core::Image;

use crate::error::{Error, Result};

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.into(),
        source,
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(crate::error::io_err(dir))?;
    }
    Ok(())
}

#[inline]
pub fn to_u8(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

#[inline]
pub fn from_u8(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Writes the first three channels as RGB (a single channel is replicated).
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    ensure_parent(path)?;
    let (w, h) = (img.width() as u32, img.height() as u32);
    let c = img.channels();
    let out = RgbImage::from_fn(w, h, |x, y| {
        let i = (y * w + x) as usize;
        Rgb([0, 1, 2].map(|k| to_u8(img.plane(k.min(c - 1))[i])))
    });
    out.save(path).map_err(image_err(path))
}

pub fn load_image(path: &Path) -> Result<Image> {
    let rgb = image::open(path).map_err(image_err(path))?.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(Image::from_fn(3, h as usize, w as usize, |c, y, x| {
        from_u8(rgb.get_pixel(x as u32, y as u32)[c])
    }))
}

/// White where `mask` holds.
pub fn save_mask(path: &Path, mask: &[bool], width: usize, height: usize) -> Result<()> {
    ensure_parent(path)?;
    let out = GrayImage::from_fn(width as u32, height as u32, |x, y| {
        Luma([if mask[y as usize * width + x as usize] { 255 } else { 0 }])
    });
    out.save(path).map_err(image_err(path))
}

/// 16-bit grayscale of `values` mapped from `[lo, hi]`; non-finite values are 0.
pub fn save_gray16(path: &Path, values: &[f32], size: usize, lo: f32, hi: f32) -> Result<()> {
    ensure_parent(path)?;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let out: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(size as u32, size as u32, |x, y| {
            let v = values[y as usize * size + x as usize];
            let q = if v.is_finite() {
                (((v - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16
            } else {
                0
            };
            Luma([q])
        });
    out.save(path).map_err(image_err(path))
}

/// Depth (near is bright), view score and camera-space normals of one view.
pub fn save_view_buffers(dir: &Path, view: usize, b: &ViewBuffers) -> Result<()> {
    let fg: Vec<f32> = b.foreground().map(|i| b.depth[i]).collect();
    let (lo, hi) = fg
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &d| (l.min(d), h.max(d)));
    let inverted: Vec<f32> = b
        .depth
        .iter()
        .map(|&d| if d.is_finite() { hi + lo - d } else { f32::NAN })
        .collect();
    save_gray16(&dir.join(format!("view_{view:02}_depth.png")), &inverted, b.size, lo.min(hi), hi)?;
    save_gray16(&dir.join(format!("view_{view:02}_score.png")), &b.score, b.size, 0.0, 1.0)?;
    let path = dir.join(format!("view_{view:02}_normal.png"));
    ensure_parent(&path)?;
    let s = b.size as u32;
    let normals = RgbImage::from_fn(s, s, |x, y| {
        let i = (y * s + x) as usize;
        if b.mask[i] {
            Rgb(b.normal[i].map(to_u8))
        } else {
            Rgb([0, 0, 0])
        }
    });
    normals.save(&path).map_err(image_err(&path))
}
