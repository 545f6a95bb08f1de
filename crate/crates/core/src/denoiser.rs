//! The noise-prediction interface and a deterministic mock backend.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::scheduler::NoiseSchedule;
use crate::tensor::{Image, Latent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatentShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DenoiserError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("timestep {0} outside the schedule")]
    InvalidTimestep(usize),
    #[error("mock oracle has no target images")]
    OracleUnset,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("service returned {status}: {message}")]
    Service { status: u16, message: String },
}

/// A latent noise predictor with its image codec.
///
/// Batches are indexed by view: the `i`-th latent passed to
/// [`predict_noise`](Denoiser::predict_noise) belongs to view `i`.
pub trait Denoiser {
    fn latent_shape(&self) -> LatentShape;

    /// Side length of decoded images.
    fn image_size(&self) -> usize;

    fn encode(&mut self, images: &[Image]) -> Result<Vec<Latent>, DenoiserError>;

    fn decode(&mut self, latents: &[Latent]) -> Result<Vec<Image>, DenoiserError>;

    /// Predicted noise `ε̂` for each view at timestep `t`.
    fn predict_noise(&mut self, z_t: &[Latent], t: usize) -> Result<Vec<Latent>, DenoiserError>;
}

fn downsample_factor(image: usize, latent: usize) -> Result<usize, DenoiserError> {
    if latent == 0 || image % latent != 0 {
        return Err(DenoiserError::ShapeMismatch(format!(
            "image size {image} is not a multiple of latent size {latent}"
        )));
    }
    Ok(image / latent)
}

/// Box-filter downsample; latent channel `c` reads image channel `c mod channels`.
pub fn mock_encode(image: &Image, shape: LatentShape) -> Result<Latent, DenoiserError> {
    if image.height() != image.width() || shape.height != shape.width {
        return Err(DenoiserError::ShapeMismatch("non-square input".into()));
    }
    let f = downsample_factor(image.width(), shape.width)?;
    let norm = 1.0 / (f * f) as f64;
    let ic = image.channels();
    Ok(Latent::from_fn(shape.channels, shape.height, shape.width, |c, y, x| {
        let plane = image.plane(c % ic);
        let mut sum = 0.0;
        for yy in y * f..(y + 1) * f {
            let row = &plane[yy * image.width()..];
            for v in &row[x * f..(x + 1) * f] {
                sum += *v as f64;
            }
        }
        sum * norm
    }))
}

/// Bilinear upsample with half-pixel alignment to a 3-channel image.
pub fn mock_decode(latent: &Latent, image_size: usize) -> Result<Image, DenoiserError> {
    if latent.height() != latent.width() {
        return Err(DenoiserError::ShapeMismatch("non-square latent".into()));
    }
    let f = downsample_factor(image_size, latent.width())? as f64;
    let n = latent.width();
    let lc = latent.channels();
    let coord = |i: usize| {
        let s = ((i as f64 + 0.5) / f - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = libm::floor(s) as usize;
        (i0, (i0 + 1).min(n - 1), s - i0 as f64)
    };
    let coords: Vec<_> = (0..image_size).map(coord).collect();
    Ok(Image::from_fn(3, image_size, image_size, |c, y, x| {
        let p = latent.plane(c % lc);
        let (y0, y1, fy) = coords[y];
        let (x0, x1, fx) = coords[x];
        let top = p[y0 * n + x0] * (1.0 - fx) + p[y0 * n + x1] * fx;
        let bot = p[y1 * n + x0] * (1.0 - fx) + p[y1 * n + x1] * fx;
        (top * (1.0 - fy) + bot * fy) as f32
    }))
}

/// Backend whose clean-latent estimate is fixed per view.
///
/// With targets `μ_v = encode(x_v)` the mock answers `ε̂ = (z_t − α_t ẑ₀)/σ_t`.
/// When `coupling` is 0, `ẑ₀ = μ_v` regardless of `z_t`. A positive coupling
/// `τ` models a denoiser that is unsure of the answer: `ẑ₀` is the posterior
/// mean of a Gaussian prior `N(μ_v, τ²)` given `z_t`, which leans toward the
/// noisy input at high noise and reaches `μ_v` as `σ_t → 0`.
#[derive(Debug, Clone)]
pub struct MockOracle {
    shape: LatentShape,
    image_size: usize,
    schedule: NoiseSchedule,
    targets: Option<Vec<Latent>>,
    coupling: f64,
}

impl MockOracle {
    pub fn new(shape: LatentShape, image_size: usize, schedule: NoiseSchedule) -> Self {
        Self {
            shape,
            image_size,
            schedule,
            targets: None,
            coupling: 0.0,
        }
    }

    /// Latent of side `image_size / 8` with 3 channels.
    pub fn with_default_shape(image_size: usize, schedule: NoiseSchedule) -> Self {
        Self::new(LatentShape::new(3, image_size / 8, image_size / 8), image_size, schedule)
    }

    /// Sets per-view target images (view order).
    pub fn set_targets(&mut self, images: &[Image]) -> Result<(), DenoiserError> {
        let latents = images
            .iter()
            .map(|i| mock_encode(i, self.shape))
            .collect::<Result<Vec<_>, _>>()?;
        self.targets = Some(latents);
        Ok(())
    }

    pub fn with_targets(mut self, images: &[Image]) -> Result<Self, DenoiserError> {
        self.set_targets(images)?;
        Ok(self)
    }

    pub fn with_coupling(mut self, tau: f64) -> Self {
        self.coupling = tau.max(0.0);
        self
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn targets(&self) -> Option<&[Latent]> {
        self.targets.as_deref()
    }

    /// Clean-latent estimate for view `view` at timestep `t`.
    pub fn predict_z0(&self, z_t: &Latent, view: usize, t: usize) -> Result<Latent, DenoiserError> {
        let targets = self.targets.as_ref().ok_or(DenoiserError::OracleUnset)?;
        let mu = targets.get(view).ok_or_else(|| {
            DenoiserError::ShapeMismatch(format!("no target for view {view}"))
        })?;
        if z_t.shape() != mu.shape() {
            return Err(DenoiserError::ShapeMismatch(format!(
                "latent {:?}, expected {:?}",
                z_t.shape(),
                mu.shape()
            )));
        }
        if t > self.schedule.total_steps() {
            return Err(DenoiserError::InvalidTimestep(t));
        }
        if self.coupling == 0.0 {
            return Ok(mu.clone());
        }
        let (a, s) = (self.schedule.alpha(t), self.schedule.sigma(t));
        let tau2 = self.coupling * self.coupling;
        let k = a * tau2 / (a * a * tau2 + s * s);
        let mut out = mu.clone();
        for (o, z) in out.as_mut_slice().iter_mut().zip(z_t.as_slice()) {
            *o += k * (z - a * *o);
        }
        Ok(out)
    }
}

impl Denoiser for MockOracle {
    fn latent_shape(&self) -> LatentShape {
        self.shape
    }

    fn image_size(&self) -> usize {
        self.image_size
    }

    fn encode(&mut self, images: &[Image]) -> Result<Vec<Latent>, DenoiserError> {
        images.iter().map(|i| mock_encode(i, self.shape)).collect()
    }

    fn decode(&mut self, latents: &[Latent]) -> Result<Vec<Image>, DenoiserError> {
        latents.iter().map(|l| mock_decode(l, self.image_size)).collect()
    }

    fn predict_noise(&mut self, z_t: &[Latent], t: usize) -> Result<Vec<Latent>, DenoiserError> {
        let n = self.targets.as_ref().ok_or(DenoiserError::OracleUnset)?.len();
        if z_t.len() != n {
            return Err(DenoiserError::ShapeMismatch(format!(
                "{} latents for {n} targets",
                z_t.len()
            )));
        }
        let (a, s) = (self.schedule.alpha(t.min(self.schedule.total_steps())), self.schedule.sigma(t.min(self.schedule.total_steps())));
        z_t.iter()
            .enumerate()
            .map(|(v, z)| {
                let mut eps = self.predict_z0(z, v, t)?;
                for (e, zz) in eps.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    *e = (zz - a * *e) / s;
                }
                Ok(eps)
            })
            .collect()
    }
}
