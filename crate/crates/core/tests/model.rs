use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssnl::autodiff::{softplus, Activation, Stencil, Tape, Tensor};
use ssnl::data::{Patch, Sample};
use ssnl::model::*;
use ssnl::train::{train_on_samples, TrainConfig};

fn small(ch: usize, p: usize, d: usize, s: usize, hc: usize, k: usize) -> ModelConfig {
    let mut c = ModelConfig::new(ch, p, k);
    c.hidden = d;
    c.spatial_channels = s;
    c.classifier_hidden = hc;
    c
}

fn gradcheck_config() -> ModelConfig {
    small(6, 3, 4, 3, 8, 3)
}

fn random_patch(rng: &mut ChaCha8Rng, p: usize, ch: usize) -> Patch {
    Patch::new(p, ch, (0..p * p * ch).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

/// Same pixels in reverse sequence order.
fn reversed(patch: &Patch) -> Patch {
    let pixels: Vec<&[f64]> = patch.data.chunks(patch.bands).rev().collect();
    Patch::new(patch.size, patch.bands, pixels.concat()).unwrap()
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for seed in 0..20 {
        let r = gradient_check(&gradcheck_config(), seed, 1e-3, Stencil::FivePoint).unwrap();
        assert!(r.max_rel_error < 1e-5, "seed {seed}: {:e} at {:?}", r.max_rel_error, r.worst_at);
    }
}

#[test]
fn ablated_models_have_correct_gradients() {
    for (f, b, s) in [(true, false, true), (false, true, true), (true, true, false), (false, false, true)] {
        let mut c = gradcheck_config();
        (c.forward_on, c.backward_on, c.spatial_on) = (f, b, s);
        c.activation = Activation::Tanh;
        let r = gradient_check(&c, 5, 1e-3, Stencil::FivePoint).unwrap();
        assert!(r.max_rel_error < 1e-5, "{f} {b} {s}: {:e}", r.max_rel_error);
    }
}

#[test]
fn layer_norm_examples() {
    let c = small(2, 1, 2, 1, 2, 2);
    let params = ModelParams::init(&c, 0).unwrap();
    let x = normalize_patch(&Patch::new(1, 2, vec![0.0, 2.0]).unwrap(), &params, &c).unwrap();
    let expected = 1.0 / (1.0 + LAYER_NORM_EPS).sqrt();
    assert!((x.data()[0] + expected).abs() < 1e-15 && (x.data()[1] - expected).abs() < 1e-15);
    assert!((x.data()[1] - 1.0).abs() < 1e-5);

    let c = small(3, 3, 2, 1, 2, 2);
    let params = ModelParams::init(&c, 0).unwrap();
    for v in [0.5, 0.7, -3.1] {
        let x = normalize_patch(&Patch::new(3, 3, vec![v; 27]).unwrap(), &params, &c).unwrap();
        assert_eq!(x.shape(), &[9, 3]);
        // the mean of equal values may be off by an ulp
        assert!(x.data().iter().all(|&y| y.abs() < 1e-9), "{v}: {:?}", x.data());
    }
}

#[test]
fn projection_examples() {
    let mut c = small(2, 1, 2, 1, 2, 2);
    c.conv1d_kernel = 1;
    let mut params = ModelParams::init(&c, 0).unwrap();
    params.w_x = Tensor::matrix(&[&[2.0, 0.0], &[0.0, 3.0]]).unwrap();
    params.w_z = Tensor::identity(2);
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, &params);
    let x = tape.leaf(Tensor::matrix(&[&[1.0, 0.0]]).unwrap());
    let (xp, zp) = project(&mut tape, x, &pv).unwrap();
    assert_eq!(tape.value(xp).data(), &[2.0, 0.0]);
    assert_eq!(tape.value(zp), tape.value(x));
    let zero = tape.leaf(Tensor::zeros(&[1, 2]));
    let (xp, zp) = project(&mut tape, zero, &pv).unwrap();
    assert!(tape.value(xp).data().iter().chain(tape.value(zp).data()).all(|&v| v == 0.0));
}

#[test]
fn reversal_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::matrix(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap());
    let r = reverse_spectral(&mut tape, x).unwrap();
    assert_eq!(tape.value(r).data(), &[5.0, 6.0, 3.0, 4.0, 1.0, 2.0]);
    let rr = reverse_spectral(&mut tape, r).unwrap();
    assert_eq!(tape.value(rr), tape.value(x));
    let one = tape.leaf(Tensor::matrix(&[&[7.0, 8.0]]).unwrap());
    let r1 = reverse_spectral(&mut tape, one).unwrap();
    assert_eq!(tape.value(r1), tape.value(one));
}

#[test]
fn scalar_chain_through_both_directions() {
    // L = 1, CH = D = 1, k1 = 1: each direction is tanh(f(w·u) + a·d)
    let mut c = small(1, 1, 1, 1, 2, 2);
    c.conv1d_kernel = 1;
    for (w, u, a, delta_raw, act) in [
        (0.7, 1.3, -0.4, 0.2, Activation::Silu),
        (-1.1, 0.5, 0.9, -1.5, Activation::Silu),
        (0.3, -2.0, 0.25, 0.0, Activation::Tanh),
    ] {
        c.activation = act;
        let mut params = ModelParams::init(&c, 0).unwrap();
        params.w_x = Tensor::matrix(&[&[1.0]]).unwrap();
        params.w_z = Tensor::matrix(&[&[1.0]]).unwrap();
        params.conv_forward = Tensor::matrix(&[&[w]]).unwrap();
        params.conv_backward = Tensor::matrix(&[&[w]]).unwrap();
        params.a = Tensor::matrix(&[&[a]]).unwrap();
        params.b = Tensor::matrix(&[&[a]]).unwrap();
        params.delta_raw = Tensor::vector(vec![delta_raw]);
        let x_norm = Tensor::matrix(&[&[u]]).unwrap();
        let h = bi_network_forward(&x_norm, &params, &c).unwrap();
        let f = |v: f64| match act {
            Activation::Silu => v / (1.0 + (-v).exp()),
            Activation::Tanh => v.tanh(),
        };
        let d = (1.0 + delta_raw.exp()).ln();
        let expected = (f(w * u) + a * d).tanh() * 2.0;
        assert!((h.item() - expected).abs() < 1e-15, "{} vs {expected}", h.item());
    }
}

#[test]
fn bi_network_degenerate_cases() {
    let c = small(3, 3, 4, 2, 5, 3);
    let mut params = ModelParams::init(&c, 1).unwrap();
    params.conv_forward = Tensor::zeros(&[4, 3]);
    params.conv_backward = Tensor::zeros(&[4, 3]);
    params.a = Tensor::zeros(&[4, 4]);
    params.b = Tensor::zeros(&[4, 4]);
    let h = bi_network_forward(&Tensor::zeros(&[9, 3]), &params, &c).unwrap();
    assert!(h.data().iter().all(|&v| v == 0.0));

    // with A = B = 0 the modulation vanishes
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = ModelParams::init(&c, 2).unwrap();
    params.a = Tensor::zeros(&[4, 4]);
    params.b = Tensor::zeros(&[4, 4]);
    let patch = random_patch(&mut rng, 3, 3);
    let (_, trace) = model_forward(&patch, &params, &c).unwrap();
    let mean_tanh = |t: &Tensor| -> Vec<f64> {
        t.data()
            .chunks(9)
            .map(|row| row.iter().map(|v| v.tanh()).sum::<f64>() / 9.0)
            .collect()
    };
    let expected: Vec<f64> = mean_tanh(trace.x_forward.as_ref().unwrap())
        .iter()
        .zip(mean_tanh(trace.x_backward.as_ref().unwrap()))
        .map(|(a, b)| a + b)
        .collect();
    for (h, e) in trace.h_combined.data().iter().zip(expected) {
        assert!((h - e).abs() < 1e-15);
    }
}

#[test]
fn spatial_branch_examples() {
    let mut c = small(3, 3, 2, 4, 3, 2);
    let params = ModelParams::init(&c, 0).unwrap();
    let h = spatial_forward(&Tensor::zeros(&[9, 3]), &params, &c).unwrap();
    assert_eq!(h.data(), &[0.0; 4]);

    // 1×1 patch and kernels: f(W_s·spectrum + bias)
    let mut c1 = small(2, 1, 2, 3, 3, 2);
    c1.conv2d_kernel = 1;
    let mut params = ModelParams::init(&c1, 3).unwrap();
    params.spatial_bias = Tensor::vector(vec![0.1, -0.2, 0.3]);
    let spectrum = [0.4, -0.9];
    let h = spatial_forward(&Tensor::matrix(&[&spectrum]).unwrap(), &params, &c1).unwrap();
    let k = params.spatial_kernels.data();
    for s in 0..3 {
        let z = k[2 * s] * spectrum[0] + k[2 * s + 1] * spectrum[1] + params.spatial_bias.data()[s];
        let expected = z / (1.0 + (-z).exp());
        assert!((h.data()[s] - expected).abs() < 1e-15);
    }

    // constant patch, all-ones 3×3 kernel, CH = S = 1, p = 1: only the center tap sees data
    let mut c2 = small(1, 1, 1, 1, 1, 2);
    c2.activation = Activation::Tanh;
    let mut params = ModelParams::init(&c2, 0).unwrap();
    params.spatial_kernels = Tensor::ones(&[1, 1, 3, 3]);
    let h = spatial_forward(&Tensor::matrix(&[&[0.5]]).unwrap(), &params, &c2).unwrap();
    assert_eq!(h.item(), 0.5f64.tanh());

    c.spatial_on = false;
    assert!(matches!(
        spatial_forward(&Tensor::zeros(&[9, 3]), &params, &c),
        Err(ModelError::Contract(_))
    ));
}

#[test]
fn probabilities_form_a_distribution() {
    let c = small(5, 3, 6, 3, 8, 4);
    let params = ModelParams::init(&c, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let (probs, _) = model_forward(&random_patch(&mut rng, 3, 5), &params, &c).unwrap();
        assert!(probs.data().iter().all(|&p| p > 0.0));
        assert!((probs.data().iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn forced_logits_and_tie_breaking() {
    let c = small(3, 3, 2, 2, 4, 2);
    let mut params = ModelParams::init(&c, 0).unwrap();
    params.w2 = Tensor::zeros(&[2, 4]);
    params.b2 = Tensor::vector(vec![1.7, 1.7]);
    let patch = random_patch(&mut ChaCha8Rng::seed_from_u64(0), 3, 3);
    let (probs, _) = model_forward(&patch, &params, &c).unwrap();
    assert_eq!(probs.data(), &[0.5, 0.5]);
    assert_eq!(predict(&patch, &params, &c).unwrap(), 1);
    params.b2 = Tensor::vector(vec![0.0, 10.0]);
    assert_eq!(predict(&patch, &params, &c).unwrap(), 2);
    assert_eq!(argmax_class(&[0.1, 3.0, 3.0]), 2);
    assert_eq!(argmax_class(&[0.1 + 5.0, 3.0 + 5.0, 3.0 + 5.0]), 2);
}

#[test]
fn forward_is_deterministic() {
    let c = small(4, 5, 6, 3, 8, 3);
    let params = ModelParams::init(&c, 4).unwrap();
    let patch = random_patch(&mut ChaCha8Rng::seed_from_u64(4), 5, 4);
    let (p1, t1) = model_forward(&patch, &params, &c).unwrap();
    let (p2, t2) = model_forward(&patch, &params, &c).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(t1, t2);
    assert_eq!(ModelParams::init(&c, 4).unwrap(), params);
}

#[test]
fn mismatched_patch_is_rejected() {
    let c = small(4, 5, 6, 3, 8, 3);
    let params = ModelParams::init(&c, 4).unwrap();
    let patch = random_patch(&mut ChaCha8Rng::seed_from_u64(4), 3, 4);
    assert!(matches!(predict(&patch, &params, &c), Err(ModelError::PatchMismatch { .. })));
}

#[test]
fn ablation_shrinks_the_classifier_input() {
    let mut c = small(4, 3, 6, 5, 8, 3);
    let full = ModelParams::init(&c, 0).unwrap();
    assert_eq!(full.w1.shape(), &[8, 11]);
    c.spatial_on = false;
    assert_eq!(ModelParams::init(&c, 0).unwrap().w1.shape(), &[8, 6]);
    c.spatial_on = true;
    c.forward_on = false;
    c.backward_on = false;
    let p = ModelParams::init(&c, 0).unwrap();
    assert_eq!(p.w1.shape(), &[8, 5]);
    let (_, trace) = model_forward(&random_patch(&mut ChaCha8Rng::seed_from_u64(1), 3, 4), &p, &c).unwrap();
    assert_eq!(trace.h_combined.data(), &[0.0; 6]);
    assert!(trace.h_forward.is_none() && trace.h_backward.is_none());
    assert_eq!(trace.h_final.len(), 5);
}

fn tied(c: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(c, seed).unwrap();
    p.w_z = p.w_x.clone();
    p.conv_backward = p.conv_forward.clone();
    p.b = p.a.clone();
    p.delta_raw = Tensor::vector((0..c.hidden).map(|i| i as f64 * 0.1 - 0.2).collect());
    p
}

#[test]
fn reversing_the_sequence_swaps_the_directions() {
    let mut c = small(4, 3, 5, 2, 6, 3);
    c.spatial_on = false;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..50 {
        // delta kernels, untied weights: each direction is order-free up to rounding
        let mut p = ModelParams::init(&c, seed).unwrap();
        let delta = Tensor::new(&[5, 3], (0..15).map(|i| if i % 3 == 1 { 1.0 } else { 0.0 }).collect()).unwrap();
        p.conv_forward = delta.clone();
        p.conv_backward = delta;
        let patch = random_patch(&mut rng, 3, 4);
        let (_, a) = model_forward(&patch, &p, &c).unwrap();
        let (_, b) = model_forward(&reversed(&patch), &p, &c).unwrap();
        for (x, y) in a.h_combined.data().iter().zip(b.h_combined.data()) {
            assert!((x - y).abs() < 1e-14);
        }

        // tied directions: the swap is exact, whatever the kernels
        let p = tied(&c, seed);
        let (_, a) = model_forward(&patch, &p, &c).unwrap();
        let (_, b) = model_forward(&reversed(&patch), &p, &c).unwrap();
        assert_eq!(a.h_forward, b.h_backward);
        assert_eq!(a.h_combined, b.h_combined);
    }
}

#[test]
fn palindromic_sequences_give_equal_directions() {
    let c = small(3, 3, 4, 2, 6, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for seed in 0..50 {
        let p = tied(&c, seed);
        let half: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        // pixel t equals pixel L−1−t
        let seq: Vec<f64> = (0..9).flat_map(|t| half[t.min(8 - t)].clone()).collect();
        let patch = Patch::new(3, 3, seq).unwrap();
        let (_, trace) = model_forward(&patch, &p, &c).unwrap();
        let mean = |t: &Tensor| -> Vec<f64> { t.data().chunks(9).map(|r| r.iter().sum::<f64>() / 9.0).collect() };
        assert_eq!(
            mean(trace.h_forward.as_ref().unwrap()),
            mean(trace.h_backward.as_ref().unwrap())
        );
    }
}

#[test]
fn softplus_is_the_modulation() {
    assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
}

fn toy_samples(c: &ModelConfig, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Sample {
            patch: random_patch(&mut rng, c.patch, c.bands),
            label: (i % c.classes) as u16 + 1,
        })
        .collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let c = small(4, 3, 5, 2, 6, 3);
    let samples = toy_samples(&c, 10, 1);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 3,
        batch_size: 4,
        seed: 5,
        ..TrainConfig::default()
    };
    let (params, report) = train_on_samples(&samples, &c, &cfg).unwrap();
    assert_eq!(params, ModelParams::init(&c, 5).unwrap());
    assert_eq!(report.epochs(), 3);
    assert!(report.epoch_loss.iter().all(|l| l.is_finite()));
}

#[test]
fn training_is_reproducible() {
    let c = small(4, 3, 5, 2, 6, 3);
    let samples = toy_samples(&c, 13, 2);
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 5,
        learning_rate: 1e-2,
        seed: 8,
        ..TrainConfig::default()
    };
    let (p1, r1) = train_on_samples(&samples, &c, &cfg).unwrap();
    let (p2, r2) = train_on_samples(&samples, &c, &cfg).unwrap();
    assert_eq!(p1, p2);
    assert!(r1.same_outcome(&r2));
    assert_eq!(encode_checkpoint(&c, &p1), encode_checkpoint(&c, &p2));
    assert!(r1.epoch_loss.last().unwrap() < &r1.epoch_loss[0]);
}

#[test]
fn checkpoints_round_trip_through_files() {
    let c = small(4, 3, 5, 2, 6, 3);
    let p = ModelParams::init(&c, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_model(&path, &c, &p).unwrap();
    let (c2, p2) = load_model(&path).unwrap();
    assert_eq!((c2, &p2), (c, &p));
    save_model(dir.path().join("again.ckpt"), &c2, &p2).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(dir.path().join("again.ckpt")).unwrap()
    );
    assert!(matches!(ensure_compatible(&c2, 5), Err(ModelError::BandMismatch { .. })));
}
