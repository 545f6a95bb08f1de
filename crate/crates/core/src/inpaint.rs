//! Hole filling for texels no view reached.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Image;

/// Background value for islands with no valid texel reachable.
pub const DEFAULT_BACKGROUND: f32 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InpaintStats {
    pub holes_before: usize,
    /// Passes until every reachable hole was filled.
    pub passes: usize,
    /// Holes that had no valid texel connected to them.
    pub unreachable: usize,
}

/// Fills texels where `hole` is set by repeated 8-neighbour averaging.
///
/// Each pass sets every hole with at least one valid neighbour to the mean of
/// those neighbours and only then marks them valid, so the result does not
/// depend on scan order. Valid texels are never written. Holes that cannot be
/// reached from any valid texel receive `background`.
pub fn fill_holes(texture: &Image, hole: &[bool], background: f32) -> Result<(Image, InpaintStats)> {
    let (h, w) = (texture.height(), texture.width());
    if hole.len() != h * w {
        return Err(Error::ShapeMismatch(alloc::format!(
            "mask of {} for {}x{} texture",
            hole.len(),
            h,
            w
        )));
    }
    let channels = texture.channels();
    let mut out = texture.clone();
    let mut valid: Vec<bool> = hole.iter().map(|&x| !x).collect();
    let holes_before = hole.iter().filter(|&&x| x).count();
    let mut pending: Vec<usize> = (0..h * w).filter(|&i| hole[i]).collect();
    let mut passes = 0;
    let mut updates: Vec<(usize, [f64; 4], usize)> = Vec::new();
    while !pending.is_empty() {
        updates.clear();
        for &i in &pending {
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            let mut sum = [0.0f64; 4];
            let mut n = 0;
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (ny, nx) = (y + dy, x + dx);
                    if (dy, dx) == (0, 0) || ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if valid[j] {
                        n += 1;
                        for (c, s) in sum.iter_mut().enumerate().take(channels.min(4)) {
                            *s += out.plane(c)[j] as f64;
                        }
                    }
                }
            }
            if n > 0 {
                updates.push((i, sum, n));
            }
        }
        if updates.is_empty() {
            break;
        }
        passes += 1;
        for &(i, sum, n) in &updates {
            for (c, s) in sum.iter().enumerate().take(channels.min(4)) {
                out.plane_mut(c)[i] = (s / n as f64) as f32;
            }
            valid[i] = true;
        }
        pending.retain(|&i| !valid[i]);
    }
    for &i in &pending {
        for c in 0..channels {
            out.plane_mut(c)[i] = background;
        }
    }
    Ok((
        out,
        InpaintStats {
            holes_before,
            passes,
            unreachable: pending.len(),
        },
    ))
}
