//! UV-space multi-view diffusion fusion.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numeric piece of the
//! texturing loop: mesh geometry, camera rigs and normal clustering, a software
//! rasterizer, the diffusion trajectory arithmetic, the denoiser abstraction
//! with a closed-loop mock, UV fusion and hole filling. File formats, the CLI
//! and the remote service client live in the `uvfuse` crate.
#![no_std]
#![forbid(unsafe_code)]
extern crate alloc;

pub mod cameras;
pub mod denoiser;
pub mod error;
pub mod generate;
pub mod geometry;
pub mod inpaint;
pub mod kmeans;
pub mod metrics;
pub mod oracle;
pub mod raster;
pub mod rng;
pub mod scheduler;
pub mod tensor;
pub mod texture;
pub mod uvfusion;

pub use cameras::{uniform_rig, CameraPose, ViewRig};
pub use denoiser::{Denoiser, DenoiserError, LatentShape, MockOracle};
pub use error::Error;
pub use generate::{generate, GenerationOutput, GenerationParams, StepMode, StepObserver};
pub use geometry::TexturedMesh;
pub use raster::{rasterize, ViewBuffers};
pub use scheduler::NoiseSchedule;
pub use tensor::{Image, Latent, Planar};

pub use glam::{DVec2, DVec3};
