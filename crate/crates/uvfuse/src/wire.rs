//! JSON messages and tensor encoding shared with the denoiser service.
//!
//! Tensors travel as `{shape, dtype: "float32", data}` where `data` is the
//! base64 of the little-endian f32 values in row-major, channels-first order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use uvfuse_core::denoiser::DenoiserError;
use uvfuse_core::{Image, Latent};

pub const DTYPE_F32: &str = "float32";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTensor {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub data: String,
}

fn mismatch(msg: impl Into<String>) -> DenoiserError {
    DenoiserError::ShapeMismatch(msg.into())
}

impl WireTensor {
    pub fn from_f32(shape: Vec<usize>, values: &[f32]) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Self {
            shape,
            dtype: DTYPE_F32.to_string(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn to_f32(&self) -> Result<Vec<f32>, DenoiserError> {
        if self.dtype != DTYPE_F32 {
            return Err(mismatch(format!("unsupported dtype {}", self.dtype)));
        }
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| DenoiserError::Transport(format!("bad tensor payload: {e}")))?;
        let n: usize = self.shape.iter().product();
        if bytes.len() != n * 4 {
            return Err(mismatch(format!(
                "{} bytes for shape {:?}",
                bytes.len(),
                self.shape
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }

    /// Stacks equally shaped latents into `[n, c, h, w]`.
    pub fn from_latents(latents: &[Latent]) -> Self {
        let (c, h, w) = latents.first().map_or((0, 0, 0), |l| l.shape());
        let values: Vec<f32> = latents
            .iter()
            .flat_map(|l| l.as_slice().iter().map(|&v| v as f32))
            .collect();
        Self::from_f32(vec![latents.len(), c, h, w], &values)
    }

    pub fn from_images(images: &[Image]) -> Self {
        let (c, h, w) = images.first().map_or((0, 0, 0), |i| i.shape());
        let values: Vec<f32> = images.iter().flat_map(|i| i.as_slice().iter().copied()).collect();
        Self::from_f32(vec![images.len(), c, h, w], &values)
    }

    fn split(&self) -> Result<(usize, usize, usize, usize, Vec<f32>), DenoiserError> {
        let [n, c, h, w] = self.shape[..] else {
            return Err(mismatch(format!("expected a 4-d tensor, got {:?}", self.shape)));
        };
        Ok((n, c, h, w, self.to_f32()?))
    }

    pub fn to_latents(&self) -> Result<Vec<Latent>, DenoiserError> {
        let (n, c, h, w, values) = self.split()?;
        let per = c * h * w;
        (0..n)
            .map(|i| {
                let data = values[i * per..(i + 1) * per].iter().map(|&v| v as f64).collect();
                Latent::from_vec(c, h, w, data).map_err(|e| mismatch(e.to_string()))
            })
            .collect()
    }

    pub fn to_images(&self) -> Result<Vec<Image>, DenoiserError> {
        let (n, c, h, w, values) = self.split()?;
        let per = c * h * w;
        (0..n)
            .map(|i| {
                Image::from_vec(c, h, w, values[i * per..(i + 1) * per].to_vec())
                    .map_err(|e| mismatch(e.to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub prompt: String,
    pub image_size: usize,
    pub n_views: usize,
    pub controlnet_weights: [f64; 2],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session_id: String,
    pub latent_shape: [usize; 3],
    /// `(t, σ_t)` for every timestep of the model's schedule.
    pub sigma_table: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictNoiseRequest {
    pub session_id: String,
    pub t: usize,
    pub view_ids: Vec<usize>,
    pub z_t: WireTensor,
    pub depth: WireTensor,
    pub lineart: WireTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictNoiseResponse {
    pub eps: WireTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub session_id: String,
    pub images: WireTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub z: WireTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRequest {
    pub session_id: String,
    pub z: WireTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResponse {
    pub images: WireTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_latents_through_f32() {
        let zs: Vec<Latent> = (0..3)
            .map(|k| Latent::from_fn(4, 2, 3, |c, y, x| (k * 100 + c * 10 + y * 3 + x) as f64 * 0.25))
            .collect();
        let t = WireTensor::from_latents(&zs);
        assert_eq!(t.shape, vec![3, 4, 2, 3]);
        let json = serde_json::to_string(&t).unwrap();
        let back: WireTensor = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_latents().unwrap(), zs);
    }

    #[test]
    fn rejects_wrong_sizes_and_dtypes() {
        let mut t = WireTensor::from_f32(vec![1, 1, 1, 2], &[1.0, 2.0]);
        t.shape = vec![1, 1, 1, 3];
        assert!(matches!(t.to_f32(), Err(DenoiserError::ShapeMismatch(_))));
        let mut u = WireTensor::from_f32(vec![2], &[1.0, 2.0]);
        assert!(u.to_latents().is_err());
        u.dtype = "float16".into();
        assert!(u.to_f32().is_err());
    }
}
