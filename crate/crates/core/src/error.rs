use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("face {face} has no texture coordinates")]
    MissingUv { face: usize },
    #[error("face {face} references vertex or uv index {index} out of range")]
    IndexOutOfRange { face: usize, index: usize },
    #[error("uv coordinate {u}, {v} of face {face} lies outside the unit square")]
    UvOutOfRange { face: usize, u: f64, v: f64 },
    #[error("face {face} has {corners} corners, need at least 3")]
    TooFewCorners { face: usize, corners: usize },
    #[error("every face of the mesh has zero area")]
    DegenerateMesh,
    #[error("camera radius {0} must exceed the unit bounding sphere")]
    InvalidRadius(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(&'static str),
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("texture still has {0} holes")]
    HolesPresent(usize),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Denoiser(#[from] crate::denoiser::DenoiserError),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
