use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uvfuse::config::GenerationConfig;
use uvfuse::core::cameras::{coverage_score, select_views, DEFAULT_FOV_DEG, DEFAULT_RADIUS, DEFAULT_SELECT_K};
use uvfuse::core::ViewRig;
use uvfuse::pipeline::{load_mesh, render_frames, run_generation};

#[derive(Parser)]
#[command(name = "uvfuse", version, about = "Multi-view consistent mesh texturing by UV-space fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a texture for a mesh.
    Generate(GenerateArgs),
    /// Print camera directions chosen from the mesh's face normals.
    Views {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SELECT_K)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the directions to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a textured mesh from the 36-view rig.
    Render {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        texture: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        image_size: usize,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// OBJ file, or builtin:cube / builtin:tetrahedron / builtin:sphere.
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    prompt: Option<String>,
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    views: Option<usize>,
    /// Place cameras along clustered face normals instead of a uniform rig.
    #[arg(long)]
    select_views: bool,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    truncation: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// mock | remote
    #[arg(long)]
    denoiser: Option<String>,
    #[arg(long)]
    service_url: Option<String>,
    /// modified | naive
    #[arg(long)]
    step_mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    image_size: Option<usize>,
    /// Comma-separated texture resolutions, e.g. 128,256,512.
    #[arg(long)]
    resolutions: Option<String>,
    /// Write per-step textures and view buffers under OUT/debug.
    #[arg(long)]
    debug: bool,
    /// Known texture the mock backend renders its targets from.
    #[arg(long)]
    oracle_texture: Option<PathBuf>,
    /// Peak per-view colour offset given to the mock backend.
    #[arg(long)]
    perturbation: Option<f64>,
    /// Trajectory coupling of the mock backend.
    #[arg(long)]
    coupling: Option<f64>,
    /// Extra `key=value` settings (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl GenerateArgs {
    fn into_config(self) -> uvfuse::Result<GenerationConfig> {
        let mut cfg = GenerationConfig::default();
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p).map_err(|source| uvfuse::Error::Io {
                path: p.clone(),
                source,
            })?;
            cfg.apply_text(&text)?;
        }
        let path = |p: PathBuf| p.display().to_string();
        let flags: [(&str, Option<String>); 16] = [
            ("mesh", self.mesh),
            ("prompt", self.prompt),
            ("views", self.views.map(|v| v.to_string())),
            ("select_views", self.select_views.then(|| "true".into())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("truncation", self.truncation.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("denoiser", self.denoiser),
            ("service_url", self.service_url),
            ("step_mode", self.step_mode),
            ("out", self.out.map(path)),
            ("image_size", self.image_size.map(|v| v.to_string())),
            ("resolutions", self.resolutions),
            ("debug", self.debug.then(|| "true".into())),
            ("oracle_texture", self.oracle_texture.map(path)),
            ("perturbation", self.perturbation.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        if let Some(c) = self.coupling {
            cfg.set("coupling", &c.to_string())?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| uvfuse::Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> uvfuse::Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.into_config()?;
            let run = run_generation(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&run.report)?);
        }
        Command::Views { mesh, k, seed, out } => {
            let mesh = load_mesh(&mesh)?;
            let rig = select_views(&mesh, k, DEFAULT_RADIUS, DEFAULT_FOV_DEG.to_radians(), 512, seed)?;
            let dirs = rig.directions();
            let mut text = String::new();
            for d in &dirs {
                text.push_str(&format!("{:.6} {:.6} {:.6}\n", d.x, d.y, d.z));
            }
            print!("{text}");
            eprintln!("{} views, coverage score {:.4}", dirs.len(), coverage_score(&mesh, &dirs));
            if let Some(p) = out {
                std::fs::write(&p, text).map_err(|source| uvfuse::Error::Io { path: p, source })?;
            }
        }
        Command::Render {
            mesh,
            texture,
            out,
            image_size,
        } => {
            let mesh = load_mesh(&mesh)?;
            let tex = uvfuse::png::load_image(&texture)?;
            let rig = ViewRig::default_uniform(image_size)?;
            let frames = render_frames(&mesh, &rig, &tex, &out)?;
            eprintln!("wrote {} frames to {}", frames.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
