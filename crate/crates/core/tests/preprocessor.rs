use std::f32::consts::PI;

use libiq::analyzer::{write_bin, write_csv};
use libiq::preprocessor::{
    build_features, create_dataset_from_bin, create_dataset_from_csv, detect_peak, energy_peak_detector,
    load_dataset, normalize, save_dataset, DatasetSpec, Label, CHANNELS,
};
use libiq::{Error, IqVector, TimeSeries};
use num_complex::Complex32;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive O(N·w) detector: every window summed from scratch.
fn brute_force(v: &[Complex32], w: usize, out_len: usize) -> (usize, usize) {
    let n = v.len();
    let mut best = 0;
    let mut best_e = f64::NEG_INFINITY;
    for i in 0..=n - w {
        let e: f64 = v[i..i + w]
            .iter()
            .map(|s| (s.re as f64) * (s.re as f64) + (s.im as f64) * (s.im as f64))
            .sum();
        if e > best_e {
            best_e = e;
            best = i;
        }
    }
    let c = best + w / 2;
    let s = (c as i64 - (out_len / 2) as i64).clamp(0, (n - out_len) as i64) as usize;
    (s, s + out_len)
}

fn noisy_vector(rng: &mut impl Rng, n: usize, spikes: &[(usize, f32)]) -> Vec<Complex32> {
    let mut v: Vec<Complex32> = (0..n)
        .map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    for &(pos, mag) in spikes {
        v[pos] = Complex32::new(mag, mag * 0.5);
    }
    v
}

fn spike(n: usize, pos: usize) -> Vec<Complex32> {
    let mut v = vec![Complex32::new(0.0, 0.0); n];
    v[pos] = Complex32::new(10.0, 0.0);
    v
}

#[test]
fn spike_example_slices() {
    let s = detect_peak(&spike(1536, 700), 16, 600).unwrap();
    // Every window containing bin 700 has equal energy; the lowest start wins.
    assert_eq!(s.window_start, 685);
    assert_eq!(s.range(), 393..993);
    assert_eq!(brute_force(&spike(1536, 700), 16, 600), (393, 993));
    assert_eq!(detect_peak(&spike(1536, 10), 16, 600).unwrap().range(), 0..600);
    assert_eq!(detect_peak(&spike(1536, 1530), 16, 600).unwrap().range(), 936..1536);
}

#[test]
fn detector_matches_brute_force_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..300 {
        let n = 1536;
        let spikes: Vec<(usize, f32)> = match case % 3 {
            0 => vec![],
            1 => vec![(rng.random_range(0..n), rng.random_range(1.0..20.0))],
            _ => vec![(rng.random_range(0..8), 15.0), (n - 1 - rng.random_range(0..8), 15.0)],
        };
        let v = noisy_vector(&mut rng, n, &spikes);
        let w = rng.random_range(1..=128);
        let s = detect_peak(&v, w, 600).unwrap();
        assert_eq!((s.start, s.end), brute_force(&v, w, 600), "case {case}");
    }
}

#[test]
fn detector_output_is_the_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let v = IqVector::new(noisy_vector(&mut rng, 1536, &[(1000, 30.0)])).unwrap();
    let out = energy_peak_detector(&v, 64, 600).unwrap();
    let s = detect_peak(v.samples(), 64, 600).unwrap();
    assert_eq!(out.samples(), &v.samples()[s.range()]);
}

#[test]
fn features_shapes_and_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let vs: Vec<IqVector> = (0..15)
        .map(|_| IqVector::new(noisy_vector(&mut rng, 1536, &[(500, 8.0)])).unwrap())
        .collect();
    let one = build_features(&TimeSeries::new(vs[..1].to_vec()).unwrap(), 64, 600).unwrap();
    assert_eq!(one.len(), 600);
    let t = build_features(&TimeSeries::new(vs.clone()).unwrap(), 64, 600).unwrap();
    assert_eq!(t.len(), 9000);
    assert_eq!(t.data().len(), 9000 * CHANNELS);
    let crop = energy_peak_detector(&vs[3], 64, 600).unwrap();
    for i in 0..600 {
        let row = t.sample(3 * 600 + i);
        let s = crop.samples()[i];
        assert_eq!((row[0], row[1]), (s.re, s.im));
        assert!((row[2] - (row[0] * row[0] + row[1] * row[1]).sqrt()).abs() <= 1e-5 * row[2].max(1.0));
        assert!(row[3] > -PI && row[3] <= PI);
    }
}

fn write_files(dir: &std::path::Path, counts: &[usize], len: usize, seed: u64) -> Vec<std::path::PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let vs: Vec<IqVector> = (0..c)
                .map(|_| IqVector::new(noisy_vector(&mut rng, len, &[(len / 2, 5.0)])).unwrap())
                .collect();
            let p = dir.join(format!("f{i}.bin"));
            write_bin(&p, &vs).unwrap();
            p
        })
        .collect()
}

fn small_spec(k: usize) -> DatasetSpec {
    DatasetSpec {
        vector_len: 64,
        window: k,
        detect_window: 8,
        out_len: 24,
    }
}

#[test]
fn dataset_counts_match_examples() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_files(dir.path(), &[100, 100], 64, 1);
    let ds = create_dataset_from_bin(&paths[..1], &[Label::Radar], &small_spec(5)).unwrap();
    assert_eq!(ds.len(), 20);
    let ds = create_dataset_from_bin(&paths[..1], &[Label::Radar], &small_spec(15)).unwrap();
    assert_eq!(ds.len(), 6);
    let ds = create_dataset_from_bin(&paths, &[Label::Radar, Label::Jammer], &small_spec(1)).unwrap();
    assert_eq!(ds.len(), 200);
    let counts = ds.class_counts();
    assert_eq!(counts[Label::Radar.code() as usize], 100);
    assert_eq!(counts[Label::Jammer.code() as usize], 100);
    assert_eq!(ds.labels[..100], [Label::Radar; 100]);
}

#[test]
fn csv_and_binary_datasets_agree() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_files(dir.path(), &[12], 64, 2);
    let vs = libiq::analyzer::parse_bin(&paths[0], 64).unwrap();
    let csv = dir.path().join("f0.csv");
    write_csv(&csv, &vs).unwrap();
    let a = create_dataset_from_bin(&paths, &[Label::Lte], &small_spec(3)).unwrap();
    let b = create_dataset_from_csv(&[csv], &[Label::Lte], &small_spec(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dataset_argument_errors() {
    let none: [&str; 0] = [];
    let empty = create_dataset_from_csv(&none, &[], &small_spec(1)).unwrap();
    assert!(empty.is_empty());
    let err = create_dataset_from_bin(&["a.bin"], &[], &small_spec(1)).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
    let err = create_dataset_from_bin(&none, &[], &small_spec(0)).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn normalized_channels_are_standardized() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_files(dir.path(), &[40, 40], 64, 3);
    let ds = create_dataset_from_bin(&paths, &[Label::Square, Label::Triangular], &small_spec(2)).unwrap();
    let (norm, stats) = normalize(ds).unwrap();
    assert_eq!(norm.meta.norm, Some(stats));
    for c in 0..CHANNELS {
        let vals: Vec<f64> = norm.tensors.iter().flat_map(|t| t.channel(c)).map(f64::from).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 1e-6, "channel {c} mean {mean}");
        assert!((std - 1.0).abs() <= 1e-4, "channel {c} std {std}");
    }
}

#[test]
fn dataset_save_load_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_files(dir.path(), &[30, 20], 64, 4);
    let ds = create_dataset_from_bin(&paths, &[Label::NoRfi, Label::Radar], &small_spec(4)).unwrap();
    let (ds, _) = normalize(ds).unwrap();
    let out = dir.path().join("ds");
    save_dataset(&ds, &out).unwrap();
    let back = load_dataset(&out).unwrap();
    assert_eq!(back, ds);
    for (a, b) in ds.tensors.iter().zip(&back.tensors) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detector_is_phase_blind(seed in any::<u64>(), theta in -3.0f32..3.0, w in 1usize..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = rng.random_range(0..1536);
        let v = noisy_vector(&mut rng, 1536, &[(pos, 12.0)]);
        let r = Complex32::from_polar(1.0, theta);
        let rotated: Vec<Complex32> = v.iter().map(|s| s * r).collect();
        let a = detect_peak(&v, w, 600).unwrap();
        let b = detect_peak(&rotated, w, 600).unwrap();
        prop_assert_eq!(a.range(), b.range());
    }

    #[test]
    fn slice_always_fits(pos in 0usize..1536, w in 1usize..=1536, out_len in 1usize..=1536) {
        let s = detect_peak(&spike(1536, pos), w, out_len).unwrap();
        prop_assert_eq!(s.end - s.start, out_len);
        prop_assert!(s.end <= 1536);
    }

    #[test]
    fn dataset_n_accounting(counts in prop::collection::vec(0usize..40, 1..5), k in 1usize..8) {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_files(dir.path(), &counts, 64, 5);
        let labels = vec![Label::Jammer; paths.len()];
        let ds = create_dataset_from_bin(&paths, &labels, &small_spec(k)).unwrap();
        prop_assert_eq!(ds.len(), counts.iter().map(|c| c / k).sum::<usize>());
        prop_assert!(ds.tensors.iter().all(|t| t.len() == 24 * k));
    }
}
