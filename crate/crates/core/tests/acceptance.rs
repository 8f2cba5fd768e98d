//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! cargo test --release --test acceptance

use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssnl::autodiff::Stencil;
use ssnl::cli::gradcheck_config;
use ssnl::complexity::{estimate_flops, family_comparison};
use ssnl::data::*;
use ssnl::metrics::ConfusionMatrix;
use ssnl::model::{gradient_check, ModelConfig};
use ssnl::train::{collect_samples, evaluate_samples, train, train_on_samples, TrainConfig, TrainReport};

type Outcome = Result<String, String>;
type Runs = BTreeMap<(Variant, u64), Run>;
type Criterion = Box<dyn FnOnce(&mut Runs) -> Outcome>;

const GRADCHECK_TOL: f64 = 1e-5;
const GRADCHECK_SECONDS: f64 = 60.0;
const MIN_OA: f64 = 0.95;
const MIN_KAPPA: f64 = 0.93;
const SYNTH_SECONDS: f64 = 600.0;
const SEEDS: [u64; 3] = [1, 2, 3];
const METRIC_TOL: f64 = 1e-12;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_integrity() -> Outcome {
    let started = Instant::now();
    let r = gradient_check(&gradcheck_config(), 0, 1e-3, Stencil::FivePoint).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    check(
        r.max_rel_error < GRADCHECK_TOL && secs < GRADCHECK_SECONDS,
        format!(
            "{} coordinates, max relative error {:.2e} (< {GRADCHECK_TOL:e}), {secs:.1}s (< {GRADCHECK_SECONDS}s)",
            r.coordinates, r.max_rel_error
        ),
    )
}

fn synthetic_scene(seed: u64) -> (HsiCube, LabelRaster) {
    let (cube, labels) = synthesize_cube(&SynthSpec {
        rows: 48,
        cols: 48,
        bands: 24,
        classes: 4,
        noise_sigma: 0.05,
        seed,
    })
    .expect("valid scene");
    (cube.scale_bands(), labels)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Variant {
    Full,
    ForwardSpatial,
    BackwardSpatial,
    NoSpatial,
}

impl Variant {
    fn configure(self, c: &mut ModelConfig) {
        (c.forward_on, c.backward_on, c.spatial_on) = match self {
            Variant::Full => (true, true, true),
            Variant::ForwardSpatial => (true, false, true),
            Variant::BackwardSpatial => (false, true, true),
            Variant::NoSpatial => (true, true, false),
        };
    }
}

struct Run {
    oa: f64,
    kappa: f64,
    report: TrainReport,
}

fn synthetic_run(seed: u64, variant: Variant) -> Result<Run, String> {
    let (cube, labels) = synthetic_scene(seed);
    let split = split_samples(&labels, 0.10, seed).map_err(|e| e.to_string())?;
    let mut model = ModelConfig::new(cube.bands(), 5, 4);
    variant.configure(&mut model);
    let cfg = TrainConfig {
        epochs: 30,
        seed,
        ..TrainConfig::default()
    };
    let (_, report) = train(&cube, &labels, &split, &model, &cfg).map_err(|e| e.to_string())?;
    let cm = report.test_confusion.as_ref().ok_or("empty test split")?;
    Ok(Run {
        oa: cm.overall_accuracy().map_err(|e| e.to_string())?,
        kappa: cm.kappa().map_err(|e| e.to_string())?,
        report,
    })
}

fn synthetic_classification(runs: &mut Runs) -> Outcome {
    let started = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in SEEDS {
        let run = synthetic_run(seed, Variant::Full)?;
        ok &= run.oa >= MIN_OA && run.kappa >= MIN_KAPPA;
        parts.push(format!("seed {seed}: OA {:.4} kappa {:.4}", run.oa, run.kappa));
        runs.insert((Variant::Full, seed), run);
    }
    let secs = started.elapsed().as_secs_f64();
    parts.push(format!("{secs:.0}s (< {SYNTH_SECONDS}s)"));
    check(ok && secs < SYNTH_SECONDS, parts.join(", "))
}

fn ablation_ordering(runs: &mut Runs) -> Outcome {
    for variant in [Variant::ForwardSpatial, Variant::BackwardSpatial, Variant::NoSpatial] {
        for seed in SEEDS {
            runs.insert((variant, seed), synthetic_run(seed, variant)?);
        }
    }
    let mean_oa = |v: Variant| SEEDS.iter().map(|&s| runs[&(v, s)].oa).sum::<f64>() / SEEDS.len() as f64;
    let full = mean_oa(Variant::Full);
    let mut ok = true;
    let mut parts = vec![format!("full {full:.4}")];
    for v in [Variant::ForwardSpatial, Variant::BackwardSpatial, Variant::NoSpatial] {
        let oa = mean_oa(v);
        let trains = SEEDS.iter().all(|&s| {
            let loss = &runs[&(v, s)].report.epoch_loss;
            loss.last() < loss.first()
        });
        ok &= full >= oa && trains;
        parts.push(format!("{v:?} {oa:.4}{}", if trains { "" } else { " (loss did not decrease)" }));
    }
    check(ok, format!("mean test OA: {}", parts.join(", ")))
}

fn metric_oracles() -> Outcome {
    let cm = ConfusionMatrix::from_rows(&[vec![45, 5], vec![15, 35]]).map_err(|e| e.to_string())?;
    let (oa, aa, kappa) = (
        cm.overall_accuracy().unwrap(),
        cm.average_accuracy().unwrap(),
        cm.kappa().unwrap(),
    );
    let triple = (oa - 0.80).abs() <= METRIC_TOL && (aa - 0.80).abs() <= METRIC_TOL && (kappa - 0.60).abs() <= METRIC_TOL;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut outer_zero = 0;
    let mut diag_one = 0;
    for _ in 0..10_000 {
        let k = rng.random_range(2..=8);
        let r: Vec<u64> = (0..k).map(|_| rng.random_range(1..=40)).collect();
        let c: Vec<u64> = (0..k).map(|_| rng.random_range(1..=40)).collect();
        let rows: Vec<Vec<u64>> = r.iter().map(|&a| c.iter().map(|&b| a * b).collect()).collect();
        if ConfusionMatrix::from_rows(&rows).and_then(|m| m.kappa()).ok() == Some(0.0) {
            outer_zero += 1;
        }
        let mut diag = vec![vec![0u64; k]; k];
        for (i, row) in diag.iter_mut().enumerate() {
            row[i] = rng.random_range(1..=500);
        }
        if ConfusionMatrix::from_rows(&diag).and_then(|m| m.kappa()).ok() == Some(1.0) {
            diag_one += 1;
        }
    }
    check(
        triple && outer_zero == 10_000 && diag_one == 10_000,
        format!("OA {oa} AA {aa} kappa {kappa}; outer products kappa==0: {outer_zero}/10000; diagonals kappa==1: {diag_one}/10000"),
    )
}

fn overfit_capacity() -> Outcome {
    let (cube, labels) = synthetic_scene(7);
    let split = split_samples(&labels, 0.10, 7).map_err(|e| e.to_string())?;
    let coords: Vec<_> = split.classes.iter().flat_map(|c| c.train.iter().take(5).map(move |&p| (p, c.class))).collect();
    let model = ModelConfig::new(cube.bands(), 5, 4);
    let samples = collect_samples(&cube, &labels, &coords, model.patch).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 200,
        augment: false,
        seed: 7,
        ..TrainConfig::default()
    };
    let (params, report) = train_on_samples(&samples, &model, &cfg).map_err(|e| e.to_string())?;
    let oa = evaluate_samples(&params, &model, &samples)
        .and_then(|cm| Ok(cm.overall_accuracy()?))
        .map_err(|e| e.to_string())?;
    check(
        samples.len() == 20 && oa == 1.0,
        format!(
            "{} patches, final loss {:.2e}, train OA {oa}",
            samples.len(),
            report.epoch_loss.last().unwrap()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let run = |args: &[&str]| {
        let code = ssnl::cli::run(
            std::iter::once("ssnl").chain(args.iter().copied()),
            &mut std::io::sink(),
            &mut std::io::sink(),
        );
        if code == 0 {
            Ok(())
        } else {
            Err(format!("`ssnl {}` exited {code}", args.join(" ")))
        }
    };
    let (cube, labels) = (path("s.cube"), path("s.labels"));
    run(&["synth", "--rows", "24", "--cols", "24", "--out-cube", &cube, "--out-labels", &labels])?;
    for tag in ["a", "b"] {
        run(&[
            "train", "--cube", &cube, "--labels", &labels, "--set", "epochs=3", "--out-model", &path(&format!("{tag}.ckpt")),
            "--out-report", &path(&format!("{tag}.txt")),
        ])?;
        run(&["map", "--cube", &cube, "--model", &path("a.ckpt"), "--out", &path(&format!("{tag}.ppm"))])?;
    }
    let read = |name: &str| fs::read(path(name)).map_err(|e| e.to_string());
    let (ca, cb, ma, mb) = (read("a.ckpt")?, read("b.ckpt")?, read("a.ppm")?, read("b.ppm")?);
    check(
        ca == cb && ma == mb,
        format!(
            "checkpoints {} ({} bytes), maps {} ({} bytes)",
            if ca == cb { "identical" } else { "differ" },
            ca.len(),
            if ma == mb { "identical" } else { "differ" },
            ma.len()
        ),
    )
}

/// Per-class sample counts of the 15-class urban benchmark.
const URBAN_CLASS_SIZES: [usize; 15] = [1251, 1254, 697, 1244, 1242, 325, 1268, 1244, 1252, 1227, 1235, 1233, 469, 428, 660];

fn split_fidelity() -> Outcome {
    let total: usize = URBAN_CLASS_SIZES.iter().sum();
    let cols = 128;
    let rows = total.div_ceil(cols) + 3;
    let mut labels = vec![0u16; rows * cols];
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut free: Vec<usize> = (0..labels.len()).collect();
    for (c, &n) in URBAN_CLASS_SIZES.iter().enumerate() {
        for _ in 0..n {
            let at = free.swap_remove(rng.random_range(0..free.len()));
            labels[at] = c as u16 + 1;
        }
    }
    let raster = LabelRaster::new(rows, cols, labels).map_err(|e| e.to_string())?;
    let split = split_samples(&raster, 0.10, 0).map_err(|e| e.to_string())?;
    let mut ok = split.classes.len() == 15;
    for (cs, &n) in split.classes.iter().zip(&URBAN_CLASS_SIZES) {
        ok &= cs.train.len() == (n / 10).max(1) && cs.train.len() + cs.test.len() == n;
    }
    let first = &split.classes[0];
    ok &= first.train.len() == 125 && first.test.len() == 1126;
    check(
        ok,
        format!(
            "{total} pixels, {} train / {} test; class 1: {} -> {} / {}",
            split.train_len(),
            split.test_len(),
            URBAN_CLASS_SIZES[0],
            first.train.len(),
            first.test.len()
        ),
    )
}

fn complexity_scaling() -> Outcome {
    let mut ok = true;
    let mut configs = 0;
    for ch in [3usize, 24, 144] {
        for (d, s, hc) in [(8usize, 4usize, 16usize), (32, 16, 64)] {
            let flops_at = |p: usize, batch: u64| {
                let mut c = ModelConfig::new(ch, p, 7);
                (c.hidden, c.spatial_channels, c.classifier_hidden) = (d, s, hc);
                estimate_flops(&c, batch).unwrap() as i128
            };
            for p in [1, 3, 5, 7, 9, 11] {
                let one = flops_at(p, 1);
                ok &= [2u64, 3, 32, 1000].iter().all(|&b| flops_at(p, b) == b as i128 * one);
            }
            // equal increments per unit of p²
            let ps = [1i128, 3, 5, 7, 9, 11, 13, 15];
            let slope_num = flops_at(3, 1) - flops_at(1, 1);
            let slope_den = 9 - 1;
            for w in ps.windows(2) {
                let num = flops_at(w[1] as usize, 1) - flops_at(w[0] as usize, 1);
                let den = w[1] * w[1] - w[0] * w[0];
                ok &= num * slope_den == slope_num * den;
            }
            configs += 1;
        }
    }
    let mut ratios = 0;
    for ch in [1u64, 24, 103, 144, 200] {
        for k in [1u64, 3, 5, 7] {
            for (b, h, w) in [(1u64, 1u64, 1u64), (32, 5, 5), (64, 349, 1905)] {
                let f = family_comparison(b, h, w, ch, k).map_err(|e| e.to_string())?;
                let base = (b * h * w) as u128;
                ok &= f.state_update == base * ch as u128
                    && f.transformer == f.state_update * ch as u128
                    && f.cnn == f.state_update * (k * k) as u128
                    && f.transformer_ratio() == ch as u128
                    && f.cnn_ratio() == (k * k) as u128;
                ratios += 1;
            }
        }
    }
    check(
        ok,
        format!("{configs} configs linear in batch and p^2 exactly; {ratios} operating points with ratios CH and k^2 exact"),
    )
}

fn augmentation_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cases = 0;
    for p in [1usize, 3, 5, 7, 9] {
        for bands in [1usize, 3, 24] {
            let patch = Patch::new(p, bands, (0..p * p * bands).map(|_| rng.random_range(-1.0..1.0)).collect())
                .map_err(|e| e.to_string())?;
            let ok = rot90(&rot90(&rot90(&rot90(&patch)))) == patch
                && flip_horizontal(&flip_horizontal(&patch)) == patch
                && flip_vertical(&flip_vertical(&patch)) == patch
                && [true, false].iter().all(|&diagonal_rotations| {
                    let out = augment(&patch, AugmentOptions { diagonal_rotations });
                    out.len() == 6 && out[0] == patch
                });
            if !ok {
                return Err(format!("law broken at p={p}, bands={bands}"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} patches: rot90^4 = id, flips involutive, 6 outputs"))
}

fn main() {
    let mut runs = BTreeMap::new();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("gradient integrity", Box::new(|_| gradient_integrity())),
        ("synthetic classification", Box::new(synthetic_classification)),
        ("ablation ordering", Box::new(ablation_ordering)),
        ("metric oracles", Box::new(|_| metric_oracles())),
        ("overfit capacity", Box::new(|_| overfit_capacity())),
        ("determinism", Box::new(|_| determinism())),
        ("split fidelity", Box::new(|_| split_fidelity())),
        ("complexity scaling", Box::new(|_| complexity_scaling())),
        ("augmentation laws", Box::new(|_| augmentation_laws())),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run(&mut runs) {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
