//! The multi-view denoising loop with UV-space fusion at every step.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::inpaint::{fill_holes, InpaintStats};
use crate::raster::ViewBuffers;
use crate::rng::{normal_latent, substream, DOMAIN_INIT, DOMAIN_NAIVE};
use crate::scheduler::{modified_step, naive_step, predict_z0, subsample_timesteps, NoiseSchedule};
use crate::tensor::{Image, Latent};
use crate::uvfusion::{fused_texture, scale_weights, splat, unproject, UvAccumulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMode {
    /// Re-noise along the noise direction implied by the fused estimate.
    #[default]
    Modified,
    /// Re-noise with fresh Gaussian noise every step.
    Naive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationParams {
    pub steps: usize,
    pub truncation: f64,
    /// One resolution, or coarse/middle/fine, strictly increasing.
    pub resolutions: Vec<usize>,
    pub seed: u64,
    pub step_mode: StepMode,
    /// Softmax temperature on view scores.
    pub temperature: f64,
    /// Value of texels no view reaches and nothing can be inpainted from.
    pub background: f32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            steps: 20,
            truncation: 0.7,
            resolutions: vec![128, 256, 512],
            seed: 0,
            step_mode: StepMode::Modified,
            temperature: 1.0,
            background: crate::inpaint::DEFAULT_BACKGROUND,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParams("steps must be at least 1"));
        }
        if !(self.truncation > 0.0 && self.truncation <= 1.0) {
            return Err(Error::OutOfRange {
                name: "truncation",
                value: self.truncation,
            });
        }
        if !(self.temperature > 0.0) {
            return Err(Error::OutOfRange {
                name: "temperature",
                value: self.temperature,
            });
        }
        if !matches!(self.resolutions.len(), 1 | 3) {
            return Err(Error::InvalidParams("expected one or three resolutions"));
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) || self.resolutions[0] == 0 {
            return Err(Error::InvalidParams("resolutions must be strictly increasing"));
        }
        Ok(())
    }

    /// Blend weights per resolution at `progress ∈ [0, 1]`.
    pub fn level_weights(&self, progress: f64) -> Result<Vec<f64>> {
        if self.resolutions.len() == 1 {
            return Ok(vec![1.0]);
        }
        Ok(scale_weights(progress)?.as_array().to_vec())
    }
}

/// Intermediate state handed to a [`StepObserver`] after fusion.
pub struct StepSnapshot<'a> {
    pub index: usize,
    pub t: usize,
    /// Next timestep, `None` on the final step.
    pub t_prev: Option<usize>,
    pub weights: &'a [f64],
    /// Decoded per-view estimates before fusion.
    pub x0: &'a [Image],
    /// Per-view estimates read back from the fused textures.
    pub fused_views: &'a [Image],
    pub accumulators: &'a [UvAccumulator],
    /// Re-encoded fused estimates; `None` on the final step.
    pub z0_prime: Option<&'a [Latent]>,
}

pub trait StepObserver {
    fn on_step(&mut self, step: &StepSnapshot<'_>) -> Result<()>;
}

impl<F: FnMut(&StepSnapshot<'_>) -> Result<()>> StepObserver for F {
    fn on_step(&mut self, step: &StepSnapshot<'_>) -> Result<()> {
        self(step)
    }
}

#[derive(Debug, Clone)]
pub struct GenerationOutput {
    /// Fused texture at the finest resolution; holes hold 0.
    pub texture: Image,
    pub hole_mask: Vec<bool>,
    /// `texture` with holes inpainted.
    pub filled: Image,
    pub inpaint: InpaintStats,
    pub timesteps: Vec<usize>,
    /// Number of `predict_noise` calls (each covers every view).
    pub denoiser_calls: usize,
    /// Decoded per-view estimates before the final fusion.
    pub final_x0: Vec<Image>,
    pub final_fused_views: Vec<Image>,
    /// Per-element variance of the re-encoded estimates `z₀′` across steps,
    /// averaged over elements and views. 0 with fewer than two such steps.
    pub trajectory_variance: f64,
}

/// Running per-element mean and variance (Welford).
struct TrajectoryStats {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl TrajectoryStats {
    fn new() -> Self {
        Self {
            count: 0,
            mean: Vec::new(),
            m2: Vec::new(),
        }
    }

    fn push(&mut self, latents: &[Latent]) {
        let n: usize = latents.iter().map(|l| l.as_slice().len()).sum();
        if self.mean.is_empty() {
            self.mean = vec![0.0; n];
            self.m2 = vec![0.0; n];
        }
        self.count += 1;
        let k = self.count as f64;
        let values = latents.iter().flat_map(|l| l.as_slice().iter());
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let d = x - *m;
            *m += d / k;
            *s += d * (x - *m);
        }
    }

    fn variance(&self) -> f64 {
        if self.count < 2 || self.m2.is_empty() {
            return 0.0;
        }
        let total: f64 = self.m2.iter().sum();
        total / ((self.count - 1) as f64 * self.m2.len() as f64)
    }
}

/// Runs the fused denoising loop over pre-rasterized views.
///
/// Per timestep: predict noise, form the clean estimate, decode, splat every
/// view into each resolution, read the blended textures back into the views,
/// re-encode, and step to the next timestep. The last step stops after fusion
/// and its textures become the output.
pub fn generate(
    views: &[ViewBuffers],
    denoiser: &mut dyn Denoiser,
    schedule: &NoiseSchedule,
    params: &GenerationParams,
    mut observer: Option<&mut dyn StepObserver>,
) -> Result<GenerationOutput> {
    params.validate()?;
    if views.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(b) = views.iter().find(|b| b.size != denoiser.image_size()) {
        return Err(Error::ShapeMismatch(format!(
            "{} px view for a {} px denoiser",
            b.size,
            denoiser.image_size()
        )));
    }
    let timesteps = subsample_timesteps(schedule, params.steps, params.truncation)?;
    let shape = denoiser.latent_shape();
    let mut z: Vec<Latent> = (0..views.len())
        .map(|v| {
            let mut rng = substream(params.seed, DOMAIN_INIT, v as u64, 0);
            normal_latent(shape.channels, shape.height, shape.width, &mut rng)
        })
        .collect();

    let n = timesteps.len();
    let mut stats = TrajectoryStats::new();
    let mut calls = 0;
    for (i, &t) in timesteps.iter().enumerate() {
        let eps = denoiser.predict_noise(&z, t)?;
        calls += 1;
        if eps.len() != z.len() {
            return Err(Error::ShapeMismatch(format!("{} predictions for {} views", eps.len(), z.len())));
        }
        let z0 = z
            .iter()
            .zip(&eps)
            .map(|(zt, e)| predict_z0(zt, e, t, schedule))
            .collect::<Result<Vec<_>>>()?;
        let x0 = denoiser.decode(&z0)?;
        let progress = if n == 1 { 1.0 } else { i as f64 / (n - 1) as f64 };
        let weights = params.level_weights(progress)?;
        let accs = params
            .resolutions
            .iter()
            .map(|&r| splat(&x0, views, r, params.temperature))
            .collect::<Result<Vec<_>>>()?;
        let fused_views = unproject(&accs, &weights, views, &x0)?;

        let Some(&t_prev) = timesteps.get(i + 1) else {
            if let Some(obs) = observer.as_deref_mut() {
                obs.on_step(&StepSnapshot {
                    index: i,
                    t,
                    t_prev: None,
                    weights: &weights,
                    x0: &x0,
                    fused_views: &fused_views,
                    accumulators: &accs,
                    z0_prime: None,
                })?;
            }
            let (texture, hole_mask) = fused_texture(&accs, &weights)?;
            let (filled, inpaint) = fill_holes(&texture, &hole_mask, params.background)?;
            return Ok(GenerationOutput {
                texture,
                hole_mask,
                filled,
                inpaint,
                timesteps,
                denoiser_calls: calls,
                final_x0: x0,
                final_fused_views: fused_views,
                trajectory_variance: stats.variance(),
            });
        };

        let z0_prime = denoiser.encode(&fused_views)?;
        stats.push(&z0_prime);
        if let Some(obs) = observer.as_deref_mut() {
            obs.on_step(&StepSnapshot {
                index: i,
                t,
                t_prev: Some(t_prev),
                weights: &weights,
                x0: &x0,
                fused_views: &fused_views,
                accumulators: &accs,
                z0_prime: Some(&z0_prime),
            })?;
        }
        z = match params.step_mode {
            StepMode::Modified => z
                .iter()
                .zip(&z0_prime)
                .map(|(zt, x)| modified_step(zt, x, t, t_prev, schedule))
                .collect::<Result<Vec<_>>>()?,
            StepMode::Naive => z0_prime
                .iter()
                .enumerate()
                .map(|(v, x)| {
                    let mut rng = substream(params.seed, DOMAIN_NAIVE, i as u64, v as u64);
                    naive_step(x, t_prev, schedule, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?,
        };
    }
    Err(Error::EmptyInput)
}
