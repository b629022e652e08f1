//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Set `LIBIQ_STREAM_SECONDS` to shorten the per-window streaming runs
//! while iterating locally; the default is the full three minutes.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::thread;
use std::time::{Duration, Instant};

use libiq::analyzer::{fft, parse_bin, parse_csv, write_bin, write_csv};
use libiq::classifier::gradcheck::gradient_check;
use libiq::classifier::network::softmax;
use libiq::classifier::{
    cnn_test, cnn_train, cnn_train_with, forward, EvalReport, ModelBundle, ModelConfig, Network, TrainHistory,
};
use libiq::preprocessor::{
    build_features, create_dataset_from_bin, detect_peak, features_from_vectors, load_dataset, normalize,
    save_dataset, DatasetMeta, DatasetSpec, FeatureTensor, Label, LabeledDataset, CHANNELS,
};
use libiq::siggen::{corpus_scene, generate, CorpusConfig, SceneConfig, SceneGenerator};
use libiq::stream::{classify_stream, latency_report, LatencyStats, ServeOptions, Server};
use libiq::{IqVector, TimeSeries};
use num_complex::{Complex32, Complex64};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WINDOWS: [usize; 4] = [1, 5, 10, 15];
const TRAIN_BINS: [usize; 2] = [576, 960];
const TEST_BINS: [usize; 2] = [192, 1344];
/// Target training series per window. With the 20 % validation holdout,
/// 1200 series give 30 updates per epoch. Short series carry less evidence
/// each, so K <= 5 gets twice as many.
fn train_series(k: usize) -> usize {
    if k <= 5 {
        2400
    } else {
        1200
    }
}
const TEST_SERIES_PER_CLASS: usize = 400;
const SNR_DB: f64 = 15.0;
const SNR_SPREAD_DB: f64 = 5.0;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct WindowRun {
    k: usize,
    model: ModelBundle,
    history: TrainHistory,
    report: EvalReport,
    test_per_class: [usize; Label::COUNT],
}

// Oracles

/// Direct O(N^2) DFT in f64.
fn naive_dft(x: &[Complex32]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, s)| {
                    let ang = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    Complex64::new(s.re as f64, s.im as f64) * Complex64::from_polar(1.0, ang)
                })
                .sum()
        })
        .collect()
}

/// Every window start scored from scratch; earliest maximum wins.
fn brute_force_slice(v: &[Complex32], w: usize, out_len: usize) -> (usize, usize) {
    let n = v.len();
    let mut best = 0;
    let mut best_e = f64::NEG_INFINITY;
    for i in 0..=n - w {
        let e: f64 = v[i..i + w]
            .iter()
            .map(|s| (s.re as f64).powi(2) + (s.im as f64).powi(2))
            .sum();
        if e > best_e {
            best_e = e;
            best = i;
        }
    }
    let center = best + w / 2;
    let start = (center as i64 - (out_len / 2) as i64).clamp(0, (n - out_len) as i64) as usize;
    (start, start + out_len)
}

fn random_samples(rng: &mut impl Rng, n: usize) -> Vec<Complex32> {
    (0..n)
        .map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn random_vectors(rng: &mut impl Rng, count: usize, n: usize) -> Vec<IqVector> {
    (0..count).map(|_| IqVector::new(random_samples(rng, n)).unwrap()).collect()
}

// Synthetic corpus

fn corpus(bins: &[usize], per_cell: usize, seed: u64) -> CorpusConfig {
    CorpusConfig {
        bins: bins.to_vec(),
        per_cell,
        seed,
        snr_db: SNR_DB,
        snr_spread_db: SNR_SPREAD_DB,
        ..CorpusConfig::default()
    }
}

/// Features for every file of `cfg`, built in memory.
fn corpus_dataset(cfg: &CorpusConfig, spec: &DatasetSpec) -> LabeledDataset {
    let mut ds = LabeledDataset::empty(spec.meta());
    for &label in &cfg.labels {
        for &bin in &cfg.bins {
            for i in 0..cfg.per_cell {
                let vectors = generate(&corpus_scene(cfg, label, bin, i)).unwrap();
                let tensors = features_from_vectors(vectors, spec).unwrap();
                let n = tensors.len();
                ds.extend(LabeledDataset::new(tensors, vec![label; n], spec.meta()).unwrap())
                    .unwrap();
            }
        }
    }
    ds
}

fn spec_for(k: usize) -> DatasetSpec {
    DatasetSpec {
        window: k,
        ..DatasetSpec::default()
    }
}

fn run_window(k: usize) -> WindowRun {
    let per_file = libiq::DEFAULT_VECTORS_PER_FILE / k;
    let train_cells = Label::COUNT * TRAIN_BINS.len();
    let train_per_cell = train_series(k).div_ceil(train_cells * per_file);
    let test_per_cell = TEST_SERIES_PER_CLASS.div_ceil(TEST_BINS.len() * per_file);
    let spec = spec_for(k);

    let t0 = Instant::now();
    let full = corpus_dataset(&corpus(&TRAIN_BINS, train_per_cell, 1), &spec);
    let (train, val) = full.stratified_split(0.2, 0).unwrap();
    drop(full);
    let config = ModelConfig::new(spec.out_len * k);
    println!(
        "  K={k}: training on {} series, validating on {} ({} epochs)",
        train.len(),
        val.len(),
        config.epochs
    );
    let (model, history) = cnn_train_with(train, val, &config, |e| {
        println!(
            "    epoch {:>2}: train loss {:.4} acc {:.4} | val loss {:.4} acc {:.4} | {:.0} s",
            e.epoch,
            e.train_loss,
            e.train_acc,
            e.val_loss,
            e.val_acc,
            t0.elapsed().as_secs_f64()
        )
    })
    .unwrap();

    let test = corpus_dataset(&corpus(&TEST_BINS, test_per_cell, 2), &spec);
    let test_per_class = test.class_counts();
    let report = cnn_test(&model, &test).unwrap();
    println!(
        "  K={k}: test accuracy {:.4}, macro-F1 {:.4} on {} series ({:.0} s)",
        report.accuracy,
        report.macro_f1,
        report.total,
        t0.elapsed().as_secs_f64()
    );
    WindowRun {
        k,
        model,
        history,
        report,
        test_per_class,
    }
}

// Criteria

fn criterion_1(runs: &[WindowRun]) -> Outcome {
    let r = runs.iter().find(|r| r.k == 5).unwrap();
    let min_support = *r.test_per_class.iter().min().unwrap();
    let pass = min_support >= TEST_SERIES_PER_CLASS && r.report.accuracy >= 0.95 && r.report.macro_f1 >= 0.95;
    Outcome::new(
        pass,
        format!(
            "K=5 held-out bins {TEST_BINS:?}: accuracy {:.4}, macro-F1 {:.4}, min series/class {min_support} (need >= 0.95, >= 0.95, >= {TEST_SERIES_PER_CLASS})",
            r.report.accuracy, r.report.macro_f1
        ),
    )
}

fn criterion_2(runs: &[WindowRun]) -> Outcome {
    let accs: Vec<String> = runs.iter().map(|r| format!("K={} {:.4}", r.k, r.report.accuracy)).collect();
    let pass = runs.iter().all(|r| r.report.accuracy >= 0.93);
    Outcome::new(pass, format!("{} (need each >= 0.93)", accs.join(", ")))
}

fn stream_seconds() -> f64 {
    std::env::var("LIBIQ_STREAM_SECONDS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(180.0)
}

fn stream_latency(run: &WindowRun, seconds: f64) -> (LatencyStats, usize, f64) {
    let server = Server::bind("127.0.0.1:0").unwrap();
    let addr = server.local_addr().unwrap();
    let scene = SceneConfig {
        snr_db: 20.0,
        seed: 77,
        vectors: usize::MAX,
        ..SceneConfig::new(Label::Radar, 960)
    };
    let opts = ServeOptions {
        duration: Some(Duration::from_secs_f64(seconds)),
        ..ServeOptions::default()
    };
    let producer = thread::spawn(move || {
        server
            .run(SceneGenerator::new(scene).unwrap(), &opts, &AtomicBool::new(false))
            .unwrap()
    });
    let mut latencies = Vec::new();
    let mut radar = 0usize;
    classify_stream(addr, &run.model, run.k, |rec| {
        latencies.push(rec.latency_ms);
        radar += usize::from(rec.label == Label::Radar);
        true
    })
    .unwrap();
    producer.join().unwrap();
    let stats = latency_report(&latencies).unwrap();
    let share = radar as f64 / latencies.len() as f64;
    (stats, latencies.len(), share)
}

fn criterion_3(runs: &[WindowRun]) -> Outcome {
    let seconds = stream_seconds();
    let mut parts = Vec::new();
    let mut pass = seconds >= 180.0;
    for run in runs {
        let (stats, records, share) = stream_latency(run, seconds);
        println!(
            "  K={}: {records} windows, latency {:.3} +- {:.3} ms ({} outliers removed), Radar share {:.3}",
            run.k, stats.mean_ms, stats.std_ms, stats.outliers_removed, share
        );
        pass &= stats.mean_ms < 10.0;
        parts.push(format!("K={} {:.3}+-{:.3} ms", run.k, stats.mean_ms, stats.std_ms));
    }
    Outcome::new(
        pass,
        format!("{} over {seconds:.0} s per K (need each mean < 10 ms, 180 s runs)", parts.join(", ")),
    )
}

fn criterion_4() -> Outcome {
    let len = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let make = |rng: &mut ChaCha8Rng, n: usize| {
        let tensors = (0..n)
            .map(|_| FeatureTensor::from_raw(len, (0..len * CHANNELS).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let labels = (0..n).map(|i| Label::ALL[i % Label::COUNT]).collect();
        LabeledDataset::new(tensors, labels, DatasetMeta::new(len, 1, len, len)).unwrap()
    };
    let train = make(&mut rng, 17_600);
    let val = make(&mut rng, 64);
    let config = ModelConfig {
        filters: 2,
        conv_blocks: 1,
        kernel_size: 3,
        ..ModelConfig::new(len)
    };
    let (_, history) = cnn_train(train, val, &config).unwrap();
    let per_epoch: Vec<usize> = history.epochs.iter().map(|e| e.updates).collect();
    let pass = history.epochs.len() == 10 && per_epoch.iter().all(|&u| u == 550) && history.total_updates() == 5500;
    Outcome::new(
        pass,
        format!(
            "N=17600, batch 32: {} updates/epoch over {} epochs, {} total (need 550 and 5500)",
            per_epoch[0],
            per_epoch.len(),
            history.total_updates()
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = IqVector::new(random_samples(&mut rng, 1536)).unwrap();
        let got = fft(&v);
        let want = naive_dft(v.samples());
        let scale = want.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, b) in got.bins.iter().zip(&want) {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    Outcome::new(
        worst < 1e-4,
        format!("100 vectors of 1536: max relative error {worst:.2e} (need < 1e-4)"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 1536;
    let mut mismatches = 0;
    for case in 0..1000 {
        let mut v = random_samples(&mut rng, n);
        match case % 4 {
            0 => {}
            1 => {
                let pos = rng.random_range(0..n);
                v[pos] = Complex32::new(rng.random_range(2.0..30.0), 0.0);
            }
            2 => {
                // Spike at the very start or end of the vector.
                let pos = if rng.random_bool(0.5) {
                    rng.random_range(0..4)
                } else {
                    n - 1 - rng.random_range(0..4)
                };
                v[pos] = Complex32::new(0.0, 25.0);
            }
            _ => {
                // Equal spikes at both edges: the tie goes to the earliest window.
                v[0] = Complex32::new(20.0, 0.0);
                v[n - 1] = Complex32::new(20.0, 0.0);
            }
        }
        let w = [1, 16, 64, 128, 600][case % 5];
        let out_len = [600, 64, 1536][case % 3];
        let got = detect_peak(&v, w, out_len).unwrap();
        if (got.start, got.end) != brute_force_slice(&v, w, out_len) {
            mismatches += 1;
        }
    }
    Outcome::new(
        mismatches == 0,
        format!("1000 random inputs incl. edge spikes: {mismatches} mismatches (need 0)"),
    )
}

fn criterion_7() -> Outcome {
    let config = ModelConfig {
        filters: 4,
        classes: 2,
        seed: 17,
        ..ModelConfig::new(32)
    };
    let r = gradient_check(&config);
    Outcome::new(
        r.max_rel_error < 1e-3,
        format!(
            "{} parameters: max relative error {:.2e} at {}[{}] (need < 1e-3)",
            r.checked, r.max_rel_error, r.worst_tensor, r.worst_index
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // Softmax rows, both standalone and from a full model forward.
    let mut worst_sum: f64 = 0.0;
    for _ in 0..1000 {
        let logits: Vec<f64> = (0..6).map(|_| rng.random_range(-50.0..50.0)).collect();
        worst_sum = worst_sum.max((softmax(&logits).iter().sum::<f64>() - 1.0).abs());
    }
    let model = ModelBundle::init(ModelConfig { seed: 8, ..ModelConfig::new(600) }, spec_for(1)).unwrap();
    let batch: Vec<FeatureTensor> = (0..16)
        .map(|_| FeatureTensor::from_raw(600, (0..2400).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap())
        .collect();
    for row in forward(&model, &batch).unwrap() {
        worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    if worst_sum > 1e-6 {
        failures.push(format!("softmax row sum off by {worst_sum:.2e}"));
    }

    // Every conv block keeps the time length, odd and even kernels alike.
    for kernel in [3, 4, 7] {
        for len in [1, 5, 600] {
            let config = ModelConfig {
                kernel_size: kernel,
                filters: 8,
                ..ModelConfig::new(len)
            };
            let net: Network<f32> = Network::init(config.architecture(), &mut rng);
            let inputs: Vec<Vec<f32>> = (0..2).map(|_| (0..4 * len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let cache = net.forward_train(&inputs, len);
            if cache.layers.iter().any(|l| l.act.iter().any(|a| a.len() != 8 * len)) {
                failures.push(format!("conv changed length {len} with kernel {kernel}"));
            }
        }
    }

    // Feature channel identities.
    let vectors = random_vectors(&mut rng, 5, 1536);
    let t = build_features(&TimeSeries::new(vectors).unwrap(), 64, 600).unwrap();
    let identities_hold = (0..t.len()).all(|i| {
        let r = t.sample(i);
        let mag = (r[0] * r[0] + r[1] * r[1]).sqrt();
        (r[2] - mag).abs() <= 1e-5 * mag.max(1.0) && r[3] > -std::f32::consts::PI && r[3] <= std::f32::consts::PI
    });
    if t.len() != 3000 || !identities_hold {
        failures.push("feature channel identities violated".into());
    }

    // N = sum over files of floor(vectors / K), under property testing.
    let dir = tempfile::tempdir().unwrap();
    let mut runner = TestRunner::new(PropConfig {
        cases: 64,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let accounting = runner.run(
        &(prop::collection::vec(0usize..30, 1..5), 1usize..8, any::<u64>()),
        |(counts, k, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let paths: Vec<_> = counts
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let p = dir.path().join(format!("n{i}.bin"));
                    write_bin(&p, &random_vectors(&mut rng, c, 32)).unwrap();
                    p
                })
                .collect();
            let spec = DatasetSpec {
                vector_len: 32,
                window: k,
                detect_window: 4,
                out_len: 12,
            };
            let labels = vec![Label::Lte; paths.len()];
            let ds = create_dataset_from_bin(&paths, &labels, &spec).unwrap();
            prop_assert_eq!(ds.len(), counts.iter().map(|c| c / k).sum::<usize>());
            prop_assert!(ds.tensors.iter().all(|t| t.len() == 12 * k));
            Ok(())
        },
    );
    if let Err(e) = accounting {
        failures.push(format!("N accounting: {e}"));
    }

    let pass = failures.is_empty();
    let detail = if pass {
        format!("softmax max |sum-1| {worst_sum:.1e}; conv lengths, channel identities and N accounting (64 cases) hold")
    } else {
        failures.join("; ")
    };
    Outcome::new(pass, detail)
}

fn criterion_9() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir = tempfile::tempdir().unwrap();
    let bits = |v: &[IqVector]| -> Vec<(u32, u32)> {
        v.iter()
            .flat_map(|x| x.samples().iter().map(|s| (s.re.to_bits(), s.im.to_bits())))
            .collect()
    };

    let vectors = random_vectors(&mut rng, 50, 1536);
    let bin = dir.path().join("rt.bin");
    write_bin(&bin, &vectors).unwrap();
    if bits(&parse_bin(&bin, 1536).unwrap()) != bits(&vectors) {
        failures.push("binary round trip not bitwise".to_string());
    }
    let csv = dir.path().join("rt.csv");
    write_csv(&csv, &vectors[..10]).unwrap();
    if bits(&parse_csv(&csv).unwrap()) != bits(&vectors[..10]) {
        failures.push("CSV round trip not exact".to_string());
    }

    let spec = spec_for(5);
    let ds = create_dataset_from_bin(&[&bin], &[Label::Square], &spec).unwrap();
    let (ds, _) = normalize(ds).unwrap();
    let ds_dir = dir.path().join("ds");
    save_dataset(&ds, &ds_dir).unwrap();
    if load_dataset(&ds_dir).unwrap() != ds {
        failures.push("dataset save/load differs".to_string());
    }

    let mut model = ModelBundle::init(ModelConfig { seed: 9, ..ModelConfig::new(3000) }, spec).unwrap();
    model.norm_stats = ds.meta.norm.unwrap();
    let path = dir.path().join("m.liqm");
    model.save(&path).unwrap();
    let back = ModelBundle::load(&path).unwrap();
    let mut worst: f64 = 0.0;
    for t in &ds.tensors {
        for (a, b) in model.predict(t).unwrap().iter().zip(back.predict(t).unwrap()) {
            worst = worst.max((a - b).abs());
        }
    }
    if worst > 1e-6 {
        failures.push(format!("model round trip prediction drift {worst:.2e}"));
    }

    let pass = failures.is_empty();
    let detail = if pass {
        format!("binary and CSV bitwise, dataset exact, model predictions within {worst:.1e}")
    } else {
        failures.join("; ")
    };
    Outcome::new(pass, detail)
}

fn criterion_10(runs: &[WindowRun]) -> Outcome {
    let r = runs.iter().find(|r| r.k == 5).unwrap();
    let first = r.history.epochs.first().unwrap();
    let last = r.history.epochs.last().unwrap();
    let pass = r.history.epochs.len() == 10 && last.train_loss < first.train_loss && last.val_acc >= 0.90;
    Outcome::new(
        pass,
        format!(
            "K=5 train loss {:.4} -> {:.4} over {} epochs, final val accuracy {:.4} (need decrease, >= 0.90)",
            first.train_loss,
            last.train_loss,
            r.history.epochs.len(),
            last.val_acc
        ),
    )
}

fn criterion_11(runs: &[WindowRun]) -> Outcome {
    let r = runs.iter().find(|r| r.k == 5).unwrap();
    let shares: Vec<(Label, f64)> = Label::ALL.iter().map(|&l| (l, r.report.diagonal_share(l))).collect();
    let (worst_label, worst) = shares.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    Outcome::new(
        worst >= 0.90,
        format!("K=5 lowest diagonal share {worst:.4} ({worst_label}) (need every class >= 0.90)"),
    )
}

fn main() -> ExitCode {
    // Ignore libtest arguments such as --nocapture or a name filter.
    let started = Instant::now();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut record = |n: usize, o: Outcome| {
        println!("criterion {n:>2}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };

    record(4, criterion_4());
    record(5, criterion_5());
    record(6, criterion_6());
    record(7, criterion_7());
    record(8, criterion_8());
    record(9, criterion_9());

    println!("training one model per window K in {WINDOWS:?}");
    let runs: Vec<WindowRun> = WINDOWS.iter().map(|&k| run_window(k)).collect();
    record(1, criterion_1(&runs));
    record(2, criterion_2(&runs));
    record(10, criterion_10(&runs));
    record(11, criterion_11(&runs));
    record(3, criterion_3(&runs));

    results.sort_by_key(|r| r.0);
    println!("\nacceptance summary ({:.0} s)", started.elapsed().as_secs_f64());
    for (n, o) in &results {
        println!("criterion {n:>2}: {}", if o.pass { "PASS" } else { "FAIL" });
    }
    if results.iter().all(|r| r.1.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
