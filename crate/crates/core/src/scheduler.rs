//! Diffusion trajectory arithmetic in first-order `(α, σ, ε)` form.
//!
//! A noisy latent is `z_t = α_t z_0 + σ_t ε` with `α_t = √(1 − σ_t²)`. The clean
//! estimate is `(z_t − σ_t ε̂) / α_t`. Moving to an earlier timestep either
//! reuses the noise direction implied by the fused estimate (the guided step)
//! or draws fresh Gaussian noise (the naive step).

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::normal_latent;
use crate::tensor::Latent;

/// Default training-scale horizon.
pub const DEFAULT_TOTAL_STEPS: usize = 1000;
pub const DEFAULT_SIGMA_MIN: f64 = 0.005;
/// √(1 − 0.0047): the terminal noise level of the common scaled-linear schedule.
pub const DEFAULT_SIGMA_MAX: f64 = 0.997_642;

/// Per-timestep noise levels `σ_t` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigma: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        make_schedule(DEFAULT_TOTAL_STEPS, DEFAULT_SIGMA_MIN, DEFAULT_SIGMA_MAX)
            .expect("default schedule parameters are valid")
    }
}

impl NoiseSchedule {
    /// Adopts an externally supplied table (index = timestep) verbatim.
    pub fn from_sigmas(sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() < 3 {
            return Err(Error::InvalidSchedule("need at least T = 2"));
        }
        if sigma.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return Err(Error::InvalidSchedule("sigma must lie in (0, 1)"));
        }
        if sigma.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSchedule("sigma must increase strictly"));
        }
        Ok(Self { sigma })
    }

    /// `T`, the largest timestep.
    pub fn total_steps(&self) -> usize {
        self.sigma.len() - 1
    }

    #[inline]
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    #[inline]
    pub fn alpha(&self, t: usize) -> f64 {
        let s = self.sigma[t];
        libm::sqrt(1.0 - s * s)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    fn check(&self, t: usize) -> Result<()> {
        if t > self.total_steps() {
            return Err(Error::OutOfRange {
                name: "timestep",
                value: t as f64,
            });
        }
        Ok(())
    }
}

/// Scaled-linear variance schedule over `t = 0..=T`.
///
/// `β` ramps linearly in `√β` from `sigma_min²` at `t = 0` to the value that
/// makes `σ_T = sigma_max`, found by bisection. `σ_t = √(1 − Π_{s≤t}(1 − β_s))`.
pub fn make_schedule(total_steps: usize, sigma_min: f64, sigma_max: f64) -> Result<NoiseSchedule> {
    if total_steps < 2 {
        return Err(Error::InvalidSchedule("T must be at least 2"));
    }
    if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max < 1.0) {
        return Err(Error::InvalidSchedule("need 0 < sigma_min < sigma_max < 1"));
    }
    let sqrt_b0 = sigma_min;
    let build = |sqrt_b1: f64| -> Vec<f64> {
        let mut keep = 1.0;
        (0..=total_steps)
            .map(|s| {
                let r = sqrt_b0 + (sqrt_b1 - sqrt_b0) * s as f64 / total_steps as f64;
                keep *= 1.0 - r * r;
                libm::sqrt(1.0 - keep)
            })
            .collect()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if *build(lo).last().unwrap() >= sigma_max {
        return Err(Error::InvalidSchedule("sigma_max is below the reachable minimum"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if *build(mid).last().unwrap() < sigma_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    NoiseSchedule::from_sigmas(build(0.5 * (lo + hi)))
}

/// `n_steps` descending timesteps evenly spaced from `T` to `T·(1 − truncation)`
/// (never below 1), rounded to the nearest integer.
pub fn subsample_timesteps(
    schedule: &NoiseSchedule,
    n_steps: usize,
    truncation: f64,
) -> Result<Vec<usize>> {
    if n_steps == 0 {
        return Err(Error::InvalidParams("at least one sampling step is required"));
    }
    if !(truncation > 0.0 && truncation <= 1.0) {
        return Err(Error::OutOfRange {
            name: "truncation",
            value: truncation,
        });
    }
    let total = schedule.total_steps() as f64;
    let end = libm::round(total * (1.0 - truncation)).max(1.0);
    if n_steps == 1 {
        return Ok(alloc::vec![schedule.total_steps()]);
    }
    if (n_steps as f64) > total - end + 1.0 {
        return Err(Error::InvalidParams("more steps than distinct timesteps"));
    }
    let stride = (total - end) / (n_steps - 1) as f64;
    Ok((0..n_steps)
        .map(|i| libm::round(total - stride * i as f64) as usize)
        .collect())
}

fn zip_map(a: &Latent, b: &Latent, f: impl Fn(f64, f64) -> f64) -> Result<Latent> {
    a.check_same_shape(b)?;
    let (c, h, w) = a.shape();
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Latent::from_vec(c, h, w, data)
}

/// Clean-latent estimate `(z_t − σ_t ε̂) / α_t`.
pub fn predict_z0(z_t: &Latent, eps: &Latent, t: usize, schedule: &NoiseSchedule) -> Result<Latent> {
    schedule.check(t)?;
    let (a, s) = (schedule.alpha(t), schedule.sigma(t));
    zip_map(z_t, eps, |z, e| (z - s * e) / a)
}

/// Noise direction implied by a fused clean estimate: `(z_t − α_t z₀′) / σ_t`.
pub fn guided_noise(z_t: &Latent, z0: &Latent, t: usize, schedule: &NoiseSchedule) -> Result<Latent> {
    schedule.check(t)?;
    let (a, s) = (schedule.alpha(t), schedule.sigma(t));
    zip_map(z_t, z0, |z, x| (z - a * x) / s)
}

/// `α_prev z₀′ + σ_prev (z_t − α_t z₀′) / σ_t` for arbitrary noise levels;
/// `(alpha_prev, sigma_prev) = (1, 0)` lands on the clean endpoint.
pub fn modified_update(
    z_t: &Latent,
    z0: &Latent,
    (alpha_t, sigma_t): (f64, f64),
    (alpha_prev, sigma_prev): (f64, f64),
) -> Result<Latent> {
    zip_map(z_t, z0, |z, x| {
        let eps = (z - alpha_t * x) / sigma_t;
        alpha_prev * x + sigma_prev * eps
    })
}

/// Guided step from `t` to `t_prev` re-using the noise direction of `z_t`.
pub fn modified_step(
    z_t: &Latent,
    z0: &Latent,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
) -> Result<Latent> {
    schedule.check(t)?;
    if t_prev >= t {
        return Err(Error::InvalidParams("t_prev must precede t"));
    }
    modified_update(
        z_t,
        z0,
        (schedule.alpha(t), schedule.sigma(t)),
        (schedule.alpha(t_prev), schedule.sigma(t_prev)),
    )
}

/// Re-noising with fresh standard-normal noise: `α_prev z₀′ + σ_prev ε`.
pub fn naive_step(
    z0: &Latent,
    t_prev: usize,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<Latent> {
    schedule.check(t_prev)?;
    let (c, h, w) = z0.shape();
    let noise = normal_latent(c, h, w, rng);
    let (a, s) = (schedule.alpha(t_prev), schedule.sigma(t_prev));
    zip_map(z0, &noise, |x, e| a * x + s * e)
}
