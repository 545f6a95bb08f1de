//! Whole runs through the library entry point and the command-line binary.

use std::process::Command;

use uvfuse::config::{GenerationConfig, RigMode};
use uvfuse::core::geometry::primitives::tetrahedron;

fn small(out: &std::path::Path) -> GenerationConfig {
    GenerationConfig {
        image_size: 64,
        resolutions: vec![16, 32, 64],
        n_views: 8,
        steps: 5,
        out: out.into(),
        ..GenerationConfig::default()
    }
}

#[test]
fn writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GenerationConfig { debug: true, ..small(dir.path()) };
    let run = uvfuse::pipeline::run_generation(&cfg).unwrap();
    let out = dir.path();
    for f in ["texture.png", "texture_hole_mask.png", "report.json", "turntable/frame_35.png", "debug/step_04_t0300.png", "debug/view_07_depth.png"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let tex = image::open(out.join("texture.png")).unwrap();
    assert_eq!((tex.width(), tex.height()), (64, 64));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let obj = report.as_object().unwrap();
    assert!(obj.values().all(|v| !v.is_object()), "report must be flat");
    assert_eq!(obj["timesteps"].as_array().unwrap().len(), 5);
    assert_eq!(obj["timesteps"][4], 300);
    assert_eq!(obj["step_times_ms"].as_array().unwrap().len(), 5);
    let c = obj["coverage"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&c));
    assert!(obj["consistency_metric"].as_f64().unwrap() >= 0.0);
    assert_eq!(run.output.denoiser_calls, 5);
}

#[test]
fn obj_mesh_with_selected_views() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("tet.obj");
    std::fs::write(&obj, uvfuse::obj::write_obj(&tetrahedron())).unwrap();
    let cfg = GenerationConfig {
        mesh: obj,
        rig: RigMode::Select,
        n_views: 16,
        turntable: false,
        ..small(&dir.path().join("o"))
    };
    let run = uvfuse::pipeline::run_generation(&cfg).unwrap();
    assert_eq!(run.rig.len(), 4);
    assert_eq!(run.report.n_views, 4);
    assert!(run.report.coverage > 0.9, "{}", run.report.coverage);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = GenerationConfig { mesh: dir.path().join("nope.obj"), ..small(dir.path()) };
    assert!(matches!(uvfuse::pipeline::run_generation(&missing), Err(uvfuse::Error::Io { .. })));
    let no_uv = dir.path().join("no_uv.obj");
    std::fs::write(&no_uv, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    let cfg = GenerationConfig { mesh: no_uv, ..small(dir.path()) };
    assert!(matches!(
        uvfuse::pipeline::run_generation(&cfg),
        Err(uvfuse::Error::Core(uvfuse::core::Error::MissingUv { face: 0 }))
    ));
    let bad = GenerationConfig { resolutions: vec![64, 32, 16], ..small(dir.path()) };
    assert!(matches!(uvfuse::pipeline::run_generation(&bad), Err(uvfuse::Error::Config(_))));
}

#[test]
fn cli_generate_views_and_render() {
    let exe = env!("CARGO_BIN_EXE_uvfuse");
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "image_size = 64\nresolutions = 16,32,64\nviews = 8\nsteps = 9\nturntable = false\n").unwrap();
    let out = dir.path().join("gen");
    let status = Command::new(exe)
        .args(["generate", "--mesh", "builtin:cube", "--prompt", "a crate", "--steps", "4"])
        .arg("--config")
        .arg(&conf)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    // the flag overrides the file
    assert_eq!(report["timesteps"].as_array().unwrap().len(), 4);

    let views = Command::new(exe).args(["views", "--mesh", "builtin:cube"]).output().unwrap();
    assert!(views.status.success());
    assert_eq!(String::from_utf8(views.stdout).unwrap().lines().count(), 6);

    let frames = dir.path().join("frames");
    let status = Command::new(exe)
        .args(["render", "--mesh", "builtin:cube", "--image-size", "32", "--texture"])
        .arg(out.join("texture.png"))
        .arg("--out")
        .arg(&frames)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(frames.join("frame_35.png").is_file());

    let bad = Command::new(exe).args(["generate", "--steps", "0", "--out"]).arg(&out).output().unwrap();
    assert!(!bad.status.success());
}
