use calfoa_core::attention::{density_support, DensityKind, DensitySpec, GazeParams, Rect};
use calfoa_core::evaluation::{cross_density_table, evaluate_mi, gaze_replay, MiAccumulator};
use calfoa_core::network::{forward, init_params, Architecture, ParamVector};
use calfoa_core::rng::stream_rng;
use calfoa_core::stream::{open_stream, Blob, BlobLayout, StreamKind};
use calfoa_core::StreamSpec;
use rand::Rng;

fn blob_stream(frames: usize) -> calfoa_core::stream::FrameStream {
    let spec = StreamSpec {
        kind: StreamKind::MovingBlobs {
            layout: BlobLayout::Explicit(vec![
                Blob { x: 8.0, y: 10.0, vx: 0.7, vy: 0.3, sigma: 2.5, amplitude: 0.9 },
                Blob { x: 25.0, y: 20.0, vx: -0.5, vy: 0.4, sigma: 3.0, amplitude: 0.7 },
            ]),
            texture: 0.2,
        },
        width: 32,
        height: 24,
        total_frames: frames,
        seed: 5,
    };
    open_stream(&spec).unwrap()
}

fn arch() -> Architecture {
    Architecture::custom(&[(3, 4)], 3, 3).unwrap()
}

fn perturbed(seed: u64) -> ParamVector {
    let a = arch();
    let mut p = init_params(&a, seed).unwrap();
    let mut rng = stream_rng(seed, "test/perturb");
    for v in &mut p.values {
        *v += rng.gen_range(-1.0..1.0);
    }
    p
}

#[test]
fn zero_params_give_zero_mi_everywhere() {
    let stream = blob_stream(12);
    let p = ParamVector::zeros(&arch());
    let rows = cross_density_table(&p, &stream, 4, 12, GazeParams::default(), 0.3).unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r.mi.abs() < 1e-12, "{r:?}");
        assert_eq!(r.frames_evaluated, 8);
    }
}

#[test]
fn focused_evaluation_equals_full_frame_lookup() {
    let stream = blob_stream(10);
    let p = perturbed(3);
    let gp = GazeParams::default();
    let gaze = gaze_replay(&stream, 2, 10, gp).unwrap();
    for kind in [DensityKind::Foa, DensityKind::Foaw, DensityKind::Rnd] {
        let spec = DensitySpec { kind, window_fraction: 0.3, seed: 11 };
        let fast = evaluate_mi(&p, &stream, 2, 10, &spec, Some(&gaze)).unwrap();
        let mut acc = MiAccumulator::new(3);
        for t in 2..10 {
            let frame = stream.frame(t).unwrap();
            let full = forward(&p, &frame, Rect::full(32, 24)).unwrap();
            let support = density_support(&spec, Some(&gaze[t - 2]), 32, 24, t).unwrap();
            acc.add(&full.outputs(), &support).unwrap();
        }
        let (hc, ho, mi) = acc.values().unwrap();
        assert!((fast.h_cond - hc).abs() < 1e-9 && (fast.h_out - ho).abs() < 1e-9 && (fast.mi - mi).abs() < 1e-9);
    }
}

#[test]
fn tables_are_deterministic_and_within_bounds() {
    let stream = blob_stream(9);
    let p = perturbed(7);
    let a = cross_density_table(&p, &stream, 3, 9, GazeParams::default(), 0.3).unwrap();
    let b = cross_density_table(&p, &stream, 3, 9, GazeParams::default(), 0.3).unwrap();
    assert_eq!(a, b);
    for r in &a {
        assert!(r.mi >= -1e-9 && r.mi <= 1.0 + 1e-9);
        assert!(r.h_out >= r.h_cond - 1e-9);
    }
}

#[test]
fn invalid_segments_and_missing_gaze_are_errors() {
    let stream = blob_stream(5);
    let p = ParamVector::zeros(&arch());
    let uni = DensitySpec::new(DensityKind::Uni);
    assert!(evaluate_mi(&p, &stream, 3, 3, &uni, None).is_err());
    assert!(evaluate_mi(&p, &stream, 0, 6, &uni, None).is_err());
    let foa = DensitySpec::new(DensityKind::Foa);
    assert!(evaluate_mi(&p, &stream, 0, 5, &foa, None).is_err());
}
