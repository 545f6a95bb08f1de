//! End-to-end generation runs: scene setup, the denoising loop, and outputs.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::info;
use serde::Serialize;
use uvfuse_core::cameras::{select_views, DEFAULT_ELEVATIONS_DEG, DEFAULT_FOV_DEG, DEFAULT_RADIUS};
use uvfuse_core::geometry::primitives;
use uvfuse_core::metrics::{consistency_metric, psnr, view_consistency};
use uvfuse_core::oracle::{checkerboard, zero_mean_perturbations, OracleTarget};
use uvfuse_core::raster::make_condition_images;
use uvfuse_core::texture::{render_texture, sample_bilinear, texel_center};
use uvfuse_core::uvfusion::fused_texture;
use uvfuse_core::{
    generate, rasterize, uniform_rig, Denoiser, GenerationOutput, GenerationParams, Image, MockOracle,
    NoiseSchedule, StepMode, TexturedMesh, ViewBuffers, ViewRig,
};
use uvfuse_core::generate::StepSnapshot;

use crate::config::{DenoiserMode, GenerationConfig, RigMode};
use crate::error::{io_err, Error, Result};
use crate::remote::{RemoteConfig, RemoteDenoiser};

/// Summary written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationReport {
    pub texture_path: String,
    pub hole_mask_path: String,
    /// Uncovered texels inside the mesh's UV footprint before inpainting.
    pub holes_before: usize,
    /// Texels inpainting could not reach.
    pub holes_after: usize,
    /// Fraction of UV-footprint texels covered by some view.
    pub coverage: f64,
    /// Cross-view colour disagreement of the final texture; absent if holes remain.
    pub consistency_metric: Option<f64>,
    /// The same measure on the last per-view estimates before fusion.
    pub pre_fusion_consistency: f64,
    pub step_times_ms: Vec<f64>,
    pub total_time_ms: f64,
    pub timesteps: Vec<usize>,
    pub n_views: usize,
    pub seed: u64,
    pub step_mode: String,
    pub denoiser: String,
    pub trajectory_variance: f64,
    /// Mock runs: PSNR (dB) of the fused texture against the known texture on
    /// covered texels, after each step and at the end.
    pub step_psnr: Vec<f64>,
    pub psnr: Option<f64>,
}

/// A finished run with the data behind the report.
pub struct Run {
    pub report: GenerationReport,
    pub output: GenerationOutput,
    pub rig: ViewRig,
    pub views: Vec<ViewBuffers>,
    pub ground_truth: Option<Image>,
}

pub fn load_mesh(source: &Path) -> Result<TexturedMesh> {
    match source.to_str() {
        Some("builtin:cube") => Ok(primitives::unit_cube()),
        Some("builtin:tetrahedron") => Ok(primitives::tetrahedron()),
        Some("builtin:sphere") => Ok(primitives::uv_sphere(16, 32)),
        _ => crate::obj::load_obj(source),
    }
}

pub fn build_rig(mesh: &TexturedMesh, cfg: &GenerationConfig) -> Result<ViewRig> {
    let fov = DEFAULT_FOV_DEG.to_radians();
    Ok(match cfg.rig {
        RigMode::Uniform if cfg.n_views % 4 == 0 => uniform_rig(
            cfg.n_views / 4,
            &DEFAULT_ELEVATIONS_DEG.map(f64::to_radians),
            DEFAULT_RADIUS,
            fov,
            cfg.image_size,
        )?,
        RigMode::Uniform => uniform_rig(cfg.n_views, &[0.0], DEFAULT_RADIUS, fov, cfg.image_size)?,
        RigMode::Select => select_views(mesh, cfg.n_views, DEFAULT_RADIUS, fov, cfg.image_size, cfg.seed)?,
    })
}

/// Bilinear resample of a texture to `resolution²`.
pub fn resample(texture: &Image, resolution: usize) -> Image {
    if texture.width() == resolution && texture.height() == resolution {
        return texture.clone();
    }
    let mut px = vec![0.0f64; texture.channels()];
    let mut out = Image::zeros(texture.channels(), resolution, resolution);
    for y in 0..resolution {
        for x in 0..resolution {
            let uv = texel_center(x, y, resolution);
            sample_bilinear(texture, [uv[0] as f32, uv[1] as f32], &mut px);
            for (c, v) in px.iter().enumerate() {
                out.set(c, y, x, *v as f32);
            }
        }
    }
    out
}

fn mode_name(m: StepMode) -> &'static str {
    match m {
        StepMode::Modified => "modified",
        StepMode::Naive => "naive",
    }
}

fn covered_psnr(texture: &Image, holes: &[bool], gt: &Image) -> Result<f64> {
    let covered: Vec<bool> = holes.iter().map(|h| !h).collect();
    Ok(psnr(texture, gt, Some(&covered))?)
}

/// Runs one generation and writes its outputs under `cfg.out`.
pub fn run_generation(cfg: &GenerationConfig) -> Result<Run> {
    cfg.validate()?;
    let started = Instant::now();
    let mesh = load_mesh(&cfg.mesh)?;
    let rig = build_rig(&mesh, cfg)?;
    let views: Vec<ViewBuffers> = rig.poses.iter().map(|p| rasterize(&mesh, p)).collect();
    let finest = *cfg.resolutions.last().expect("validated");
    info!("{} views at {} px, texture {finest}²", views.len(), cfg.image_size);

    let mut ground_truth = None;
    let (mut denoiser, schedule): (Box<dyn Denoiser>, NoiseSchedule) = match cfg.denoiser {
        DenoiserMode::Mock => {
            let schedule = match &cfg.schedule {
                Some(p) => crate::schedule::parse_schedule(&std::fs::read_to_string(p).map_err(io_err(p))?)?,
                None => NoiseSchedule::default(),
            };
            let gt = match &cfg.oracle_texture {
                Some(p) => resample(&crate::png::load_image(p)?, finest),
                None => checkerboard(finest, cfg.checker_cells, true),
            };
            let mut target = OracleTarget::render(gt.clone(), &views, 0.0);
            if cfg.perturbation > 0.0 {
                let deltas = zero_mean_perturbations(&views, finest, cfg.perturbation, cfg.temperature, cfg.seed);
                target = target.with_perturbations(deltas)?;
            }
            ground_truth = Some(gt);
            let mock = MockOracle::with_default_shape(cfg.image_size, schedule.clone())
                .with_targets(&target.view_images())?
                .with_coupling(cfg.coupling);
            (Box::new(mock), schedule)
        }
        DenoiserMode::Remote => {
            let conditions: Vec<_> = views.iter().map(make_condition_images).collect();
            let remote = RemoteDenoiser::connect(
                &RemoteConfig {
                    url: cfg.service_url.clone(),
                    prompt: cfg.prompt.clone(),
                    seed: cfg.seed,
                    image_size: cfg.image_size,
                    batch_size: cfg.batch_size,
                    window: cfg.window,
                    timeout: Duration::from_secs(cfg.timeout_secs),
                    ..RemoteConfig::default()
                },
                &conditions,
            )?;
            let schedule = remote.schedule().clone();
            (Box::new(remote), schedule)
        }
    };

    let debug_dir = cfg.out.join("debug");
    if cfg.debug {
        for (i, b) in views.iter().enumerate() {
            crate::png::save_view_buffers(&debug_dir, i, b)?;
            let cond = make_condition_images(b);
            crate::png::save_image(&debug_dir.join(format!("view_{i:02}_lineart.png")), &cond.lineart)?;
        }
    }

    let params = GenerationParams {
        steps: cfg.steps,
        truncation: cfg.truncation,
        resolutions: cfg.resolutions.clone(),
        seed: cfg.seed,
        step_mode: cfg.step_mode,
        temperature: cfg.temperature,
        ..GenerationParams::default()
    };
    let mut step_times = Vec::new();
    let mut step_psnr = Vec::new();
    let mut debug_error: Option<Error> = None;
    let mut last = Instant::now();
    let mut observer = |s: &StepSnapshot<'_>| -> uvfuse_core::error::Result<()> {
        step_times.push(last.elapsed().as_secs_f64() * 1e3);
        if cfg.debug || ground_truth.is_some() {
            let (tex, holes) = fused_texture(s.accumulators, s.weights)?;
            if let Some(gt) = &ground_truth {
                let covered: Vec<bool> = holes.iter().map(|h| !h).collect();
                step_psnr.push(psnr(&tex, gt, Some(&covered))?);
            }
            if cfg.debug {
                let path = debug_dir.join(format!("step_{:02}_t{:04}.png", s.index, s.t));
                if let Err(e) = crate::png::save_image(&path, &tex) {
                    debug_error.get_or_insert(e);
                }
            }
        }
        last = Instant::now();
        Ok(())
    };
    let output = generate(&views, denoiser.as_mut(), &schedule, &params, Some(&mut observer))?;
    if let Some(e) = debug_error {
        return Err(e);
    }

    let texture_path = cfg.out.join("texture.png");
    let mask_path = cfg.out.join("texture_hole_mask.png");
    crate::png::save_image(&texture_path, &output.filled)?;
    crate::png::save_mask(&mask_path, &output.hole_mask, finest, finest)?;

    let footprint = mesh.uv_footprint(finest);
    let in_footprint = footprint.iter().filter(|&&f| f).count();
    let holes_before = footprint
        .iter()
        .zip(&output.hole_mask)
        .filter(|(f, h)| **f && **h)
        .count();
    let coverage = if in_footprint == 0 {
        0.0
    } else {
        1.0 - holes_before as f64 / in_footprint as f64
    };
    let consistency = if output.inpaint.unreachable == 0 {
        Some(consistency_metric(&output.filled, &vec![false; finest * finest], &views)?)
    } else {
        None
    };
    let pre_fusion = view_consistency(&output.final_x0, &views, finest)?;

    if cfg.turntable {
        let turn = ViewRig::default_uniform(cfg.image_size)?;
        for (i, pose) in turn.poses.iter().enumerate() {
            let frame = render_texture(&output.filled, &rasterize(&mesh, pose), 1.0);
            crate::png::save_image(&cfg.out.join(format!("turntable/frame_{i:02}.png")), &frame)?;
        }
    }

    let psnr_final = match &ground_truth {
        Some(gt) => Some(covered_psnr(&output.texture, &output.hole_mask, gt)?),
        None => None,
    };
    let report = GenerationReport {
        texture_path: texture_path.display().to_string(),
        hole_mask_path: mask_path.display().to_string(),
        holes_before,
        holes_after: output.inpaint.unreachable,
        coverage,
        consistency_metric: consistency,
        pre_fusion_consistency: pre_fusion,
        step_times_ms: step_times,
        total_time_ms: started.elapsed().as_secs_f64() * 1e3,
        timesteps: output.timesteps.clone(),
        n_views: views.len(),
        seed: cfg.seed,
        step_mode: mode_name(cfg.step_mode).into(),
        denoiser: match cfg.denoiser {
            DenoiserMode::Mock => "mock".into(),
            DenoiserMode::Remote => "remote".into(),
        },
        trajectory_variance: output.trajectory_variance,
        step_psnr,
        psnr: psnr_final,
    };
    write_report(&cfg.out.join("report.json"), &report)?;
    Ok(Run {
        report,
        output,
        rig,
        views,
        ground_truth,
    })
}

pub fn write_report(path: &Path, report: &GenerationReport) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text).map_err(io_err(path))
}

/// Renders `texture` from every pose of `rig` into `out/frame_%02d.png`.
pub fn render_frames(mesh: &TexturedMesh, rig: &ViewRig, texture: &Image, out: &Path) -> Result<Vec<PathBuf>> {
    rig.poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let frame = render_texture(texture, &rasterize(mesh, pose), 1.0);
            let path = out.join(format!("frame_{i:02}.png"));
            crate::png::save_image(&path, &frame)?;
            Ok(path)
        })
        .collect()
}
