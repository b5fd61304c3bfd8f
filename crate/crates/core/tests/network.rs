use calfoa_core::attention::Rect;
use calfoa_core::network::{backward, crop, forward, init_params, Architecture, ParamVector};
use calfoa_core::rng::stream_rng;
use calfoa_core::Frame;
use rand::Rng;

fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
    let mut rng = stream_rng(seed, "test/frame");
    Frame::new(w, h, 0, (0..w * h).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn random_params(arch: &Architecture, seed: u64, bias: f64) -> ParamVector {
    let mut p = init_params(arch, seed).unwrap();
    let mut rng = stream_rng(seed, "test/bias");
    for (l, s) in arch.layers.iter().zip(arch.layout().slots) {
        let _ = l;
        for b in &mut p.values[s.bias..s.end] {
            *b = rng.gen_range(-bias..bias);
        }
    }
    p
}

fn tiny() -> Architecture {
    Architecture::custom(&[(3, 4)], 3, 3).unwrap()
}

#[test]
fn zero_params_give_uniform_outputs() {
    let arch = Architecture::small();
    let p = ParamVector::zeros(&arch);
    let f = random_frame(20, 16, 1);
    let c = forward(&p, &f, Rect::full(20, 16)).unwrap();
    assert!(c.probs().iter().all(|&v| (v - 0.1).abs() < 1e-15));
}

#[test]
fn per_pixel_outputs_are_distributions() {
    let arch = tiny();
    let p = random_params(&arch, 2, 0.5);
    let f = random_frame(9, 9, 2);
    let c = forward(&p, &f, Rect::full(9, 9)).unwrap();
    for px in c.probs().chunks(3) {
        assert!(px.iter().all(|&v| v >= 0.0));
        assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn loss(p: &ParamVector, f: &Frame, out: Rect, coef: &[f64]) -> f64 {
    let c = forward(p, f, out).unwrap();
    c.probs().iter().zip(coef).map(|(a, b)| a * b).sum()
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3 * scale))
        .fold(0.0, f64::max)
}

#[test]
fn gradient_matches_central_differences() {
    for (arch, w, h, out) in [
        (tiny(), 9, 9, Rect::full(9, 9)),
        (tiny(), 9, 7, Rect::new(0, 2, 4, 3)),
        (Architecture::custom(&[(3, 3), (5, 2)], 3, 4).unwrap(), 8, 8, Rect::new(6, 6, 2, 2)),
    ] {
        let p = random_params(&arch, 5, 0.3);
        let f = random_frame(w, h, 5);
        let cache = forward(&p, &f, out).unwrap();
        let mut rng = stream_rng(9, "coef");
        let coef: Vec<f64> = (0..cache.probs().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let analytic = backward(&p, &cache, &coef).unwrap();
        let step = 1e-5;
        let numeric: Vec<f64> = (0..p.n())
            .map(|i| {
                let mut plus = p.clone();
                plus.values[i] += step;
                let mut minus = p.clone();
                minus.values[i] -= step;
                (loss(&plus, &f, out, &coef) - loss(&minus, &f, out, &coef)) / (2.0 * step)
            })
            .collect();
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "{arch}: max relative error {err:e}");
    }
}

#[test]
fn zero_upstream_gradient() {
    let arch = tiny();
    let p = random_params(&arch, 1, 0.2);
    let f = random_frame(6, 6, 1);
    let c = forward(&p, &f, Rect::full(6, 6)).unwrap();
    let g = backward(&p, &c, &vec![0.0; c.probs().len()]).unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn last_layer_bias_gradient_is_the_softmax_jacobian() {
    let arch = tiny();
    let p = random_params(&arch, 4, 0.7);
    let f = random_frame(1, 1, 4);
    let c = forward(&p, &f, Rect::full(1, 1)).unwrap();
    let probs = c.probs().to_vec();
    let bias = arch.layout().slots[1].bias;
    for target in 0..3 {
        let mut onehot = vec![0.0; 3];
        onehot[target] = 1.0;
        let g = backward(&p, &c, &onehot).unwrap();
        for j in 0..3 {
            let delta = if j == target { 1.0 } else { 0.0 };
            let jac = probs[target] * (delta - probs[j]);
            assert!((g[bias + j] - jac).abs() < 1e-15);
        }
    }
}

#[test]
fn region_evaluation_matches_full_frame() {
    // Includes border pixels, where intermediate padding matters.
    let arch = Architecture::small();
    let p = random_params(&arch, 8, 0.3);
    let f = random_frame(30, 24, 8);
    let full = forward(&p, &f, Rect::full(30, 24)).unwrap();
    for (x, y) in [(0, 0), (29, 23), (15, 12), (3, 20), (7, 7)] {
        let one = forward(&p, &f, Rect::point(x, y)).unwrap();
        for (a, b) in one.probs_at(x, y).iter().zip(full.probs_at(x, y)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let win = forward(&p, &f, Rect::new(20, 1, 9, 6)).unwrap();
    for y in 1..7 {
        for x in 20..29 {
            for (a, b) in win.probs_at(x, y).iter().zip(full.probs_at(x, y)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn crop_forward_matches_frame_forward_in_the_interior() {
    let arch = Architecture::small();
    let p = random_params(&arch, 6, 0.3);
    let f = random_frame(40, 40, 6);
    let full = forward(&p, &f, Rect::full(40, 40)).unwrap();
    let rf = arch.receptive_field();
    for (x, y) in [(7, 7), (20, 11), (32, 32)] {
        let patch = crop(&f, x, y, rf).unwrap();
        let (cx, cy) = patch.center();
        let pc = forward(&p, &patch.frame, Rect::full(rf, rf)).unwrap();
        for (a, b) in pc.probs_at(cx, cy).iter().zip(full.probs_at(x, y)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn mismatched_cache_is_rejected() {
    let a = tiny();
    let b = Architecture::custom(&[(3, 5)], 3, 3).unwrap();
    let pa = random_params(&a, 1, 0.1);
    let pb = random_params(&b, 1, 0.1);
    let f = random_frame(5, 5, 1);
    let c = forward(&pa, &f, Rect::full(5, 5)).unwrap();
    assert!(backward(&pb, &c, &vec![0.0; c.probs().len()]).is_err());
    assert!(backward(&pa, &c, &[0.0; 2]).is_err());
    let short = ParamVector { arch: a.clone(), values: vec![0.0; 3] };
    assert!(forward(&short, &f, Rect::full(5, 5)).is_err());
    assert!(forward(&pa, &f, Rect::new(3, 3, 4, 4)).is_err());
}
