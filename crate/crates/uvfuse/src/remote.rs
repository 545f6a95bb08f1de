//! HTTP client for a remote denoiser service.

use std::thread;
use std::time::Duration;

use log::debug;
use serde::de::DeserializeOwned;
use serde::Serialize;
use uvfuse_core::denoiser::{Denoiser, DenoiserError, LatentShape};
use uvfuse_core::raster::ConditionImages;
use uvfuse_core::scheduler::NoiseSchedule;
use uvfuse_core::{Image, Latent};

use crate::wire::*;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Service root, e.g. `http://127.0.0.1:8600`.
    pub url: String,
    pub prompt: String,
    pub seed: u64,
    pub image_size: usize,
    pub controlnet_weights: [f64; 2],
    /// Views per request.
    pub batch_size: usize,
    /// Maximum concurrent requests.
    pub window: usize,
    pub timeout: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8600".into(),
            prompt: String::new(),
            seed: 0,
            image_size: 512,
            controlnet_weights: [0.5, 0.5],
            batch_size: 4,
            window: 2,
            timeout: Duration::from_secs(300),
        }
    }
}

pub struct RemoteDenoiser {
    agent: ureq::Agent,
    base: String,
    session_id: String,
    shape: LatentShape,
    image_size: usize,
    schedule: NoiseSchedule,
    depth: Vec<Image>,
    lineart: Vec<Image>,
    batch_size: usize,
    window: usize,
}

fn transport(e: ureq::Error) -> DenoiserError {
    match e {
        ureq::Error::Timeout(t) => DenoiserError::Timeout(t.to_string()),
        other => DenoiserError::Transport(other.to_string()),
    }
}

fn post<Req: Serialize, Resp: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    body: &Req,
) -> Result<Resp, DenoiserError> {
    let mut resp = agent.post(url).send_json(body).map_err(transport)?;
    let status = resp.status().as_u16();
    let body = resp.body_mut().with_config().limit(u64::MAX);
    if status != 200 {
        let text = body.read_to_string().unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        return Err(DenoiserError::Service { status, message });
    }
    body.read_json().map_err(transport)
}

/// Converts a served `(t, σ_t)` table into a schedule; timesteps must cover
/// `0..=T` exactly once.
pub fn schedule_from_table(table: &[(usize, f64)]) -> Result<NoiseSchedule, DenoiserError> {
    let mut rows = table.to_vec();
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(DenoiserError::ShapeMismatch(
            "sigma table must list every timestep from 0".into(),
        ));
    }
    NoiseSchedule::from_sigmas(rows.into_iter().map(|r| r.1).collect())
        .map_err(|e| DenoiserError::ShapeMismatch(format!("sigma table: {e}")))
}

impl RemoteDenoiser {
    /// Opens a session for one generation; `conditions` are per view.
    pub fn connect(config: &RemoteConfig, conditions: &[ConditionImages]) -> Result<Self, DenoiserError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let base = config.url.trim_end_matches('/').to_string();
        let req = SessionRequest {
            prompt: config.prompt.clone(),
            image_size: config.image_size,
            n_views: conditions.len(),
            controlnet_weights: config.controlnet_weights,
            seed: config.seed,
        };
        let resp: SessionResponse = post(&agent, &format!("{base}/v1/session"), &req)?;
        let [c, h, w] = resp.latent_shape;
        let schedule = schedule_from_table(&resp.sigma_table)?;
        debug!(
            "session {} latent {:?}, T = {}",
            resp.session_id,
            resp.latent_shape,
            schedule.total_steps()
        );
        Ok(Self {
            agent,
            base,
            session_id: resp.session_id,
            shape: LatentShape::new(c, h, w),
            image_size: config.image_size,
            schedule,
            depth: conditions.iter().map(|c| c.depth.clone()).collect(),
            lineart: conditions.iter().map(|c| c.lineart.clone()).collect(),
            batch_size: config.batch_size.max(1),
            window: config.window.max(1),
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    /// The noise schedule reported by the service.
    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Runs `call` on consecutive batches of `0..n`, at most `window` at a
    /// time, and concatenates the results in order.
    fn batched<T: Send>(
        &self,
        n: usize,
        call: impl Fn(std::ops::Range<usize>) -> Result<Vec<T>, DenoiserError> + Sync,
    ) -> Result<Vec<T>, DenoiserError> {
        let ranges: Vec<_> = (0..n)
            .step_by(self.batch_size)
            .map(|s| s..(s + self.batch_size).min(n))
            .collect();
        let mut out = Vec::with_capacity(n);
        for wave in ranges.chunks(self.window) {
            let results: Vec<_> = thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|r| s.spawn(|| call(r.clone()))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(DenoiserError::Transport("worker panicked".into()))))
                    .collect()
            });
            for (range, r) in wave.iter().zip(results) {
                let part = r?;
                if part.len() != range.len() {
                    return Err(DenoiserError::ShapeMismatch(format!(
                        "service returned {} items for {} views",
                        part.len(),
                        range.len()
                    )));
                }
                out.extend(part);
            }
        }
        Ok(out)
    }

    fn check_latents(&self, latents: &[Latent]) -> Result<(), DenoiserError> {
        match latents.iter().find(|l| l.shape() != self.shape.as_tuple()) {
            Some(l) => Err(DenoiserError::ShapeMismatch(format!(
                "latent {:?}, session expects {:?}",
                l.shape(),
                self.shape.as_tuple()
            ))),
            None => Ok(()),
        }
    }
}

impl Denoiser for RemoteDenoiser {
    fn latent_shape(&self) -> LatentShape {
        self.shape
    }

    fn image_size(&self) -> usize {
        self.image_size
    }

    fn encode(&mut self, images: &[Image]) -> Result<Vec<Latent>, DenoiserError> {
        let url = format!("{}/v1/encode", self.base);
        let latents = self.batched(images.len(), |r| {
            let req = EncodeRequest {
                session_id: self.session_id.clone(),
                images: WireTensor::from_images(&images[r]),
            };
            post::<_, EncodeResponse>(&self.agent, &url, &req)?.z.to_latents()
        })?;
        self.check_latents(&latents)?;
        Ok(latents)
    }

    fn decode(&mut self, latents: &[Latent]) -> Result<Vec<Image>, DenoiserError> {
        self.check_latents(latents)?;
        let url = format!("{}/v1/decode", self.base);
        self.batched(latents.len(), |r| {
            let req = DecodeRequest {
                session_id: self.session_id.clone(),
                z: WireTensor::from_latents(&latents[r]),
            };
            post::<_, DecodeResponse>(&self.agent, &url, &req)?.images.to_images()
        })
    }

    fn predict_noise(&mut self, z_t: &[Latent], t: usize) -> Result<Vec<Latent>, DenoiserError> {
        if t > self.schedule.total_steps() {
            return Err(DenoiserError::InvalidTimestep(t));
        }
        if z_t.len() != self.depth.len() {
            return Err(DenoiserError::ShapeMismatch(format!(
                "{} latents for a {}-view session",
                z_t.len(),
                self.depth.len()
            )));
        }
        self.check_latents(z_t)?;
        let url = format!("{}/v1/predict_noise", self.base);
        let eps = self.batched(z_t.len(), |r| {
            let req = PredictNoiseRequest {
                session_id: self.session_id.clone(),
                t,
                view_ids: r.clone().collect(),
                z_t: WireTensor::from_latents(&z_t[r.clone()]),
                depth: WireTensor::from_images(&self.depth[r.clone()]),
                lineart: WireTensor::from_images(&self.lineart[r]),
            };
            post::<_, PredictNoiseResponse>(&self.agent, &url, &req)?.eps.to_latents()
        })?;
        self.check_latents(&eps)?;
        Ok(eps)
    }
}
