//! The HTTP client against an in-process stand-in for the denoiser service.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use uvfuse::core::denoiser::{mock_decode, mock_encode, Denoiser, DenoiserError, LatentShape, MockOracle};
use uvfuse::core::geometry::primitives::unit_cube;
use uvfuse::core::oracle::{checkerboard, OracleTarget};
use uvfuse::core::raster::make_condition_images;
use uvfuse::core::rng::{normal_latent, substream};
use uvfuse::core::{generate, rasterize, uniform_rig, GenerationParams, Image, NoiseSchedule, ViewBuffers};
use uvfuse::remote::{schedule_from_table, RemoteConfig, RemoteDenoiser};
use uvfuse::wire::*;

struct Fake {
    url: String,
    max_in_flight: Arc<AtomicUsize>,
    predict_calls: Arc<AtomicUsize>,
}

/// Serves the mock backend over HTTP. Every request is handled on its own
/// thread after `delay`, so overlapping requests can be observed.
fn serve(targets: Vec<Image>, image_size: usize, delay: Duration) -> Fake {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let schedule = NoiseSchedule::default();
    let oracle = Arc::new(
        MockOracle::with_default_shape(image_size, schedule.clone())
            .with_targets(&targets)
            .unwrap(),
    );
    let shape = oracle.latent_shape();
    let in_flight = Arc::new(AtomicUsize::new(0));
    let max_in_flight = Arc::new(AtomicUsize::new(0));
    let predict_calls = Arc::new(AtomicUsize::new(0));
    let out = Fake {
        url,
        max_in_flight: max_in_flight.clone(),
        predict_calls: predict_calls.clone(),
    };
    let sessions = Arc::new(Mutex::new(Vec::<String>::new()));
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let (oracle, schedule, sessions) = (oracle.clone(), schedule.clone(), sessions.clone());
            let (in_flight, max_in_flight, predict_calls) =
                (in_flight.clone(), max_in_flight.clone(), predict_calls.clone());
            thread::spawn(move || {
                let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                max_in_flight.fetch_max(now, Ordering::SeqCst);
                thread::sleep(delay);
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let known = |id: &str| sessions.lock().unwrap().iter().any(|s| s == id);
                let reply: Result<String, (u16, String)> = match req.url() {
                    "/v1/session" => {
                        let r: SessionRequest = serde_json::from_str(&body).unwrap();
                        let id = format!("s{}", r.seed);
                        sessions.lock().unwrap().push(id.clone());
                        Ok(serde_json::to_string(&SessionResponse {
                            session_id: id,
                            latent_shape: [shape.channels, shape.height, shape.width],
                            sigma_table: schedule.sigmas().iter().copied().enumerate().collect(),
                        })
                        .unwrap())
                    }
                    "/v1/predict_noise" => {
                        predict_calls.fetch_add(1, Ordering::SeqCst);
                        let r: PredictNoiseRequest = serde_json::from_str(&body).unwrap();
                        let z = r.z_t.to_latents().unwrap();
                        let depth = r.depth.to_images().unwrap();
                        if !known(&r.session_id) {
                            Err((404, "unknown session".into()))
                        } else if depth.len() != z.len() || r.view_ids.len() != z.len() {
                            Err((400, "batch sizes differ".into()))
                        } else {
                            let (a, s) = (schedule.alpha(r.t), schedule.sigma(r.t));
                            let eps: Vec<_> = r
                                .view_ids
                                .iter()
                                .zip(&z)
                                .map(|(&v, zt)| {
                                    let mut e = oracle.predict_z0(zt, v, r.t).unwrap();
                                    for (ev, zv) in e.as_mut_slice().iter_mut().zip(zt.as_slice()) {
                                        *ev = (zv - a * *ev) / s;
                                    }
                                    e
                                })
                                .collect();
                            Ok(serde_json::to_string(&PredictNoiseResponse {
                                eps: WireTensor::from_latents(&eps),
                            })
                            .unwrap())
                        }
                    }
                    "/v1/encode" => {
                        let r: EncodeRequest = serde_json::from_str(&body).unwrap();
                        let imgs = r.images.to_images().unwrap();
                        match imgs.iter().map(|i| mock_encode(i, shape)).collect::<Result<Vec<_>, _>>() {
                            Ok(z) => Ok(serde_json::to_string(&EncodeResponse { z: WireTensor::from_latents(&z) }).unwrap()),
                            Err(e) => Err((400, e.to_string())),
                        }
                    }
                    "/v1/decode" => {
                        let r: DecodeRequest = serde_json::from_str(&body).unwrap();
                        let z = r.z.to_latents().unwrap();
                        let imgs: Vec<_> = z.iter().map(|l| mock_decode(l, image_size).unwrap()).collect();
                        Ok(serde_json::to_string(&DecodeResponse { images: WireTensor::from_images(&imgs) }).unwrap())
                    }
                    _ => Err((404, "no such endpoint".into())),
                };
                in_flight.fetch_sub(1, Ordering::SeqCst);
                let (code, text) = match reply {
                    Ok(t) => (200, t),
                    Err((c, m)) => (c, serde_json::to_string(&ErrorBody { error: m }).unwrap()),
                };
                let _ = req.respond(tiny_http::Response::from_string(text).with_status_code(code));
            });
        }
    });
    out
}

fn scene(size: usize) -> (Vec<ViewBuffers>, Vec<Image>) {
    let mesh = unit_cube();
    let rig = uniform_rig(4, &[0.0, 0.6], 2.5, 45f64.to_radians(), size).unwrap();
    let views: Vec<_> = rig.poses.iter().map(|p| rasterize(&mesh, p)).collect();
    let targets = OracleTarget::render(checkerboard(64, 4, true), &views, 0.0).view_images();
    (views, targets)
}

fn config(url: &str, size: usize, batch_size: usize, window: usize) -> RemoteConfig {
    RemoteConfig {
        url: url.into(),
        image_size: size,
        batch_size,
        window,
        timeout: Duration::from_secs(20),
        ..RemoteConfig::default()
    }
}

#[test]
fn golden_tensor_bytes() {
    let golden: WireTensor =
        serde_json::from_str(include_str!("golden/tensor_f32_le.json")).unwrap();
    let raw = include_bytes!("golden/tensor_f32_le.bin");
    let values = [1.0f32, -2.5, 0.15625, 3.0e-8, 65504.0, -0.0];
    let ours = WireTensor::from_f32(vec![1, 2, 1, 3], &values);
    assert_eq!(ours, golden);
    let decoded = golden.to_f32().unwrap();
    for (a, b) in decoded.iter().zip(&values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let from_bin: Vec<u8> = decoded.iter().flat_map(|v| v.to_le_bytes()).collect();
    assert_eq!(&from_bin[..], &raw[..]);
    let latents = golden.to_latents().unwrap();
    assert_eq!(latents[0].shape(), (2, 1, 3));
    assert_eq!(latents[0].get(1, 0, 0), 3.0e-8f32 as f64);
}

#[test]
fn remote_run_matches_local_mock() {
    let size = 64;
    let (views, targets) = scene(size);
    let fake = serve(targets.clone(), size, Duration::ZERO);
    let conditions: Vec<_> = views.iter().map(make_condition_images).collect();
    let mut remote = RemoteDenoiser::connect(&config(&fake.url, size, 3, 2), &conditions).unwrap();
    assert_eq!(remote.latent_shape(), LatentShape::new(3, 8, 8));
    assert_eq!(remote.schedule(), &NoiseSchedule::default());
    let sched = remote.schedule().clone();
    let params = GenerationParams { steps: 4, resolutions: vec![32], ..GenerationParams::default() };
    let over_wire = generate(&views, &mut remote, &sched, &params, None).unwrap();
    assert_eq!(fake.predict_calls.load(Ordering::SeqCst), 4 * 3);

    let mut local = MockOracle::with_default_shape(size, sched.clone()).with_targets(&targets).unwrap();
    let direct = generate(&views, &mut local, &sched, &params, None).unwrap();
    assert_eq!(over_wire.hole_mask, direct.hole_mask);
    let worst = over_wire
        .texture
        .as_slice()
        .iter()
        .zip(direct.texture.as_slice())
        .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
    assert!(worst < 1e-4, "max difference {worst}");
}

#[test]
fn batching_is_transparent_and_windowed() {
    let size = 32;
    let (views, targets) = scene(size);
    let fake = serve(targets, size, Duration::from_millis(60));
    let conditions: Vec<_> = views.iter().map(make_condition_images).collect();
    let mut rng = substream(1, 99, 0, 0);
    let z: Vec<_> = (0..views.len()).map(|_| normal_latent(3, 4, 4, &mut rng)).collect();

    let mut one = RemoteDenoiser::connect(&config(&fake.url, size, 1, 3), &conditions).unwrap();
    let a = one.predict_noise(&z, 700).unwrap();
    let peak = fake.max_in_flight.load(Ordering::SeqCst);
    assert!(peak > 1 && peak <= 3, "peak in-flight {peak}");

    let mut all = RemoteDenoiser::connect(&config(&fake.url, size, 8, 1), &conditions).unwrap();
    let b = all.predict_noise(&z, 700).unwrap();
    for (x, y) in a.iter().zip(&b) {
        for (p, q) in x.as_slice().iter().zip(y.as_slice()) {
            assert!((p - q).abs() < 1e-4);
        }
    }
    // decode/encode go through the same batching
    let imgs = all.decode(&z).unwrap();
    assert_eq!(imgs.len(), z.len());
    assert_eq!(all.encode(&imgs).unwrap().len(), z.len());
}

#[test]
fn error_surface() {
    let size = 32;
    let (views, targets) = scene(size);
    let fake = serve(targets, size, Duration::ZERO);
    let conditions: Vec<_> = views.iter().map(make_condition_images).collect();
    let mut r = RemoteDenoiser::connect(&config(&fake.url, size, 4, 1), &conditions).unwrap();

    let wrong = vec![uvfuse::core::Latent::zeros(3, 5, 5); views.len()];
    assert!(matches!(r.predict_noise(&wrong, 10), Err(DenoiserError::ShapeMismatch(_))));
    assert!(matches!(r.predict_noise(&wrong[..1], 10), Err(DenoiserError::ShapeMismatch(_))));
    assert_eq!(
        r.predict_noise(&vec![uvfuse::core::Latent::zeros(3, 4, 4); views.len()], 5000),
        Err(DenoiserError::InvalidTimestep(5000))
    );
    // 30 px does not divide into the 4-texel latent; the fake answers 400
    match r.encode(&[Image::zeros(3, 30, 30)]) {
        Err(DenoiserError::Service { status: 400, .. }) => {}
        other => panic!("expected a 400, got {other:?}"),
    }

    let closed = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let err = RemoteDenoiser::connect(&config(&format!("http://{closed}"), size, 4, 1), &conditions)
        .err()
        .unwrap();
    assert!(matches!(err, DenoiserError::Transport(_)), "{err:?}");

    let slow = serve(vec![Image::zeros(3, 32, 32)], size, Duration::from_millis(800));
    let cfg = RemoteConfig { timeout: Duration::from_millis(200), ..config(&slow.url, size, 4, 1) };
    let err = RemoteDenoiser::connect(&cfg, &conditions).err().unwrap();
    assert!(matches!(err, DenoiserError::Timeout(_)), "{err:?}");
}

#[test]
fn sigma_tables_must_be_complete() {
    assert!(schedule_from_table(&[(0, 0.1), (1, 0.5), (2, 0.9)]).is_ok());
    assert!(schedule_from_table(&[(2, 0.9), (0, 0.1), (1, 0.5)]).is_ok());
    assert!(schedule_from_table(&[(0, 0.1), (2, 0.9), (3, 0.95)]).is_err());
    assert!(schedule_from_table(&[(0, 0.1), (1, 0.5), (2, 1.5)]).is_err());
}
