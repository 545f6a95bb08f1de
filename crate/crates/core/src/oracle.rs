//! Known-answer scenes for closed-loop runs of the mock backend.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::ViewBuffers;
use crate::rng::{substream, DOMAIN_PERTURB};
use crate::tensor::Image;
use crate::texture::{nearest_texel, render_texture};

/// The two checker colours, in `[-1, 1]`.
pub const CHECKER_A: [f32; 3] = [0.70, -0.20, 0.30];
pub const CHECKER_B: [f32; 3] = [-0.50, 0.40, -0.60];

/// Checkerboard with `cells × cells` squares over UV space.
///
/// With `smooth` set, the square wave is replaced by its fundamental
/// `sin(π·cells·u)·sin(π·cells·v)`, which keeps the colours and the cell layout
/// but has no content above the cell frequency.
pub fn checkerboard(resolution: usize, cells: usize, smooth: bool) -> Image {
    let r = resolution as f64;
    let k = cells as f64;
    Image::from_fn(3, resolution, resolution, |c, y, x| {
        let u = (x as f64 + 0.5) / r;
        let v = 1.0 - (y as f64 + 0.5) / r;
        let s = libm::sin(PI * k * u) * libm::sin(PI * k * v);
        let t = if smooth {
            0.5 + 0.5 * s
        } else if s >= 0.0 {
            1.0
        } else {
            0.0
        };
        (CHECKER_A[c] as f64 * t + CHECKER_B[c] as f64 * (1.0 - t)) as f32
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTarget {
    pub ground_truth: Image,
    /// `ground_truth` rendered into each view.
    pub per_view_targets: Vec<Image>,
    pub perturbations: Option<Vec<Image>>,
}

impl OracleTarget {
    pub fn render(ground_truth: Image, views: &[ViewBuffers], background: f32) -> Self {
        let per_view_targets = views
            .iter()
            .map(|b| render_texture(&ground_truth, b, background))
            .collect();
        Self {
            ground_truth,
            per_view_targets,
            perturbations: None,
        }
    }

    pub fn with_perturbations(mut self, deltas: Vec<Image>) -> Result<Self> {
        if deltas.len() != self.per_view_targets.len()
            || deltas
                .iter()
                .zip(&self.per_view_targets)
                .any(|(d, t)| d.shape() != t.shape())
        {
            return Err(Error::ShapeMismatch("perturbations do not match targets".into()));
        }
        self.perturbations = Some(deltas);
        Ok(self)
    }

    /// Targets with perturbations added.
    pub fn view_images(&self) -> Vec<Image> {
        match &self.perturbations {
            None => self.per_view_targets.clone(),
            Some(deltas) => self
                .per_view_targets
                .iter()
                .zip(deltas)
                .map(|(t, d)| {
                    let mut out = t.clone();
                    for (o, dv) in out.as_mut_slice().iter_mut().zip(d.as_slice()) {
                        *o += dv;
                    }
                    out
                })
                .collect(),
        }
    }
}

/// Smooth per-view colour offsets that cancel under fusion.
///
/// Each view draws a low-frequency field `g_v(u, v)` of peak `amplitude`. The
/// delta at a pixel is `g_v` minus the fusion-weighted mean of all fields at
/// the pixel's texel (at `resolution`, weights `exp(score / temperature)`), so
/// splatting the deltas at that resolution yields exactly zero on every texel.
pub fn zero_mean_perturbations(
    views: &[ViewBuffers],
    resolution: usize,
    amplitude: f64,
    temperature: f64,
    seed: u64,
) -> Vec<Image> {
    let fields: Vec<[[f64; 5]; 3]> = (0..views.len())
        .map(|v| {
            let mut rng = substream(seed, DOMAIN_PERTURB, v as u64, 0);
            core::array::from_fn(|_| {
                [
                    rng.random_range(1..=3) as f64,
                    rng.random_range(1..=3) as f64,
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    if rng.random::<bool>() { 1.0 } else { -1.0 },
                ]
            })
        })
        .collect();
    let eval = |v: usize, c: usize, uv: [f32; 2]| {
        let [fu, fv, pu, pv, sign] = fields[v][c];
        let (u, w) = (uv[0] as f64, uv[1] as f64);
        sign * amplitude * libm::sin(2.0 * PI * (fu * u + pu)) * libm::cos(2.0 * PI * (fv * w + pv))
    };

    let n = resolution * resolution;
    let mut sum = vec![0.0f64; 3 * n];
    let mut weight = vec![0.0f64; n];
    for (v, b) in views.iter().enumerate() {
        for p in b.foreground() {
            let (x, y) = nearest_texel(b.uv[p], resolution);
            let idx = y * resolution + x;
            let w = libm::exp(b.score[p] as f64 / temperature);
            weight[idx] += w;
            for c in 0..3 {
                sum[c * n + idx] += w * eval(v, c, b.uv[p]);
            }
        }
    }
    views
        .iter()
        .enumerate()
        .map(|(v, b)| {
            let mut img = Image::zeros(3, b.size, b.size);
            for p in b.foreground() {
                let (x, y) = nearest_texel(b.uv[p], resolution);
                let idx = y * resolution + x;
                for c in 0..3 {
                    let mean = sum[c * n + idx] / weight[idx];
                    img.plane_mut(c)[p] = (eval(v, c, b.uv[p]) - mean) as f32;
                }
            }
            img
        })
        .collect()
}
