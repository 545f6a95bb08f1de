//! Generation settings, read from `key = value` files and command-line flags.

use std::path::PathBuf;
use std::str::FromStr;

use uvfuse_core::StepMode;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigMode {
    /// Evenly spaced azimuths over four elevations (one ring if the view count
    /// is not a multiple of four).
    Uniform,
    /// Cameras along clustered face normals.
    Select,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserMode {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    /// OBJ path, or `builtin:cube`, `builtin:tetrahedron`, `builtin:sphere`.
    pub mesh: PathBuf,
    pub prompt: String,
    pub rig: RigMode,
    pub n_views: usize,
    pub image_size: usize,
    pub steps: usize,
    pub truncation: f64,
    pub resolutions: Vec<usize>,
    pub seed: u64,
    pub denoiser: DenoiserMode,
    pub service_url: String,
    pub step_mode: StepMode,
    pub out: PathBuf,
    pub temperature: f64,
    pub debug: bool,
    pub turntable: bool,
    /// Ground-truth texture for the mock backend; a checkerboard if unset.
    pub oracle_texture: Option<PathBuf>,
    pub checker_cells: usize,
    /// Peak of the per-view zero-mean colour offsets given to the mock.
    pub perturbation: f64,
    /// Trajectory coupling of the mock backend (0 ignores `z_t`).
    pub coupling: f64,
    /// Optional `t sigma` table replacing the default schedule in mock mode.
    pub schedule: Option<PathBuf>,
    pub batch_size: usize,
    pub window: usize,
    pub timeout_secs: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            mesh: PathBuf::from("builtin:cube"),
            prompt: String::new(),
            rig: RigMode::Uniform,
            n_views: 36,
            image_size: 512,
            steps: 20,
            truncation: 0.7,
            resolutions: vec![128, 256, 512],
            seed: 0,
            denoiser: DenoiserMode::Mock,
            service_url: "http://127.0.0.1:8600".into(),
            step_mode: StepMode::Modified,
            out: PathBuf::from("out"),
            temperature: 1.0,
            debug: false,
            turntable: true,
            oracle_texture: None,
            checker_cells: 4,
            perturbation: 0.0,
            coupling: 0.0,
            schedule: None,
            batch_size: 4,
            window: 2,
            timeout_secs: 300,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl GenerationConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "mesh" => self.mesh = v.into(),
            "prompt" => self.prompt = v.into(),
            "rig" => {
                self.rig = match v {
                    "uniform" | "uniform36" => RigMode::Uniform,
                    "select" | "kmeans_select" => RigMode::Select,
                    _ => return Err(Error::Config(format!("rig: unknown mode {v:?}"))),
                }
            }
            "select_views" => {
                self.rig = if parse_bool(key, v)? { RigMode::Select } else { RigMode::Uniform }
            }
            "views" | "n_views" => self.n_views = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "truncation" => self.truncation = parse(key, v)?,
            "resolutions" => {
                self.resolutions = v
                    .split(',')
                    .map(|r| parse(key, r.trim()))
                    .collect::<Result<_>>()?
            }
            "seed" => self.seed = parse(key, v)?,
            "denoiser" => {
                self.denoiser = match v {
                    "mock" | "mock_oracle" => DenoiserMode::Mock,
                    "remote" => DenoiserMode::Remote,
                    _ => return Err(Error::Config(format!("denoiser: unknown mode {v:?}"))),
                }
            }
            "service_url" => self.service_url = v.into(),
            "step_mode" => {
                self.step_mode = match v {
                    "modified" => StepMode::Modified,
                    "naive" => StepMode::Naive,
                    _ => return Err(Error::Config(format!("step_mode: unknown mode {v:?}"))),
                }
            }
            "out" => self.out = v.into(),
            "temperature" => self.temperature = parse(key, v)?,
            "debug" => self.debug = parse_bool(key, v)?,
            "turntable" => self.turntable = parse_bool(key, v)?,
            "oracle_texture" => self.oracle_texture = (!v.is_empty()).then(|| v.into()),
            "checker_cells" => self.checker_cells = parse(key, v)?,
            "perturbation" => self.perturbation = parse(key, v)?,
            "coupling" => self.coupling = parse(key, v)?,
            "schedule" => self.schedule = (!v.is_empty()).then(|| v.into()),
            "batch_size" => self.batch_size = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "timeout_secs" => self.timeout_secs = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.n_views == 0 {
            return fail("views must be at least 1");
        }
        if self.steps == 0 {
            return fail("steps must be at least 1");
        }
        if !(self.truncation > 0.0 && self.truncation <= 1.0) {
            return fail("truncation must lie in (0, 1]");
        }
        if self.resolutions.is_empty() || self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return fail("resolutions must be strictly increasing");
        }
        if !matches!(self.resolutions.len(), 1 | 3) {
            return fail("give one resolution or three");
        }
        if self.image_size == 0 || self.image_size % 8 != 0 {
            return fail("image_size must be a positive multiple of 8");
        }
        if self.perturbation < 0.0 || self.coupling < 0.0 {
            return fail("perturbation and coupling must be non-negative");
        }
        Ok(())
    }
}
