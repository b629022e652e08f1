use std::f64::consts::PI;

use libiq::analyzer::{
    self, extract_component, fft, ifft, parse_bin, parse_csv, psd, write_bin, write_csv, Component,
};
use libiq::{Error, IqVector};
use num_complex::{Complex32, Complex64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vector(rng: &mut impl Rng, len: usize) -> IqVector {
    IqVector::new(
        (0..len)
            .map(|_| Complex32::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
            .collect(),
    )
    .unwrap()
}

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

#[test]
fn binary_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.bin");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let vectors: Vec<IqVector> = (0..50).map(|_| random_vector(&mut rng, 1536)).collect();
    write_bin(&path, &vectors).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 50 * 1536 * 8);
    let back = parse_bin(&path, 1536).unwrap();
    assert_eq!(back.len(), 50);
    for (a, b) in vectors.iter().zip(&back) {
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }
}

#[test]
fn hundred_vector_file_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("capture.bin");
    // 100 vectors x 1536 samples x 8 bytes.
    std::fs::write(&path, vec![0u8; 1_228_800]).unwrap();
    let vs = parse_bin(&path, 1536).unwrap();
    assert_eq!(vs.len(), 100);
    assert!(vs.iter().all(|v| v.len() == 1536));
    // Half that size holds half as many records.
    std::fs::write(&path, vec![0u8; 614_400]).unwrap();
    assert_eq!(parse_bin(&path, 1536).unwrap().len(), 50);
}

#[test]
fn empty_file_gives_no_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.bin");
    std::fs::write(&path, b"").unwrap();
    assert!(parse_bin(&path, 1536).unwrap().is_empty());
}

#[test]
fn missing_file_is_io_error() {
    let err = parse_bin("/nonexistent/capture.bin", 1536).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn partial_record_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");
    std::fs::write(&path, vec![0u8; 1536 * 8 + 4]).unwrap();
    assert!(matches!(parse_bin(&path, 1536), Err(Error::Format(_))));
}

#[test]
fn csv_round_trip_from_binary() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vectors: Vec<IqVector> = (0..3).map(|_| random_vector(&mut rng, 64)).collect();
    let bin = dir.path().join("a.bin");
    let csv = dir.path().join("a.csv");
    write_bin(&bin, &vectors).unwrap();
    let parsed = parse_bin(&bin, 64).unwrap();
    write_csv(&csv, &parsed).unwrap();
    let back = parse_csv(&csv).unwrap();
    assert_eq!(back, parsed);
}

#[test]
fn csv_text_in_column_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "vector,idx,i,q\n0,0,1.0,2.0\n0,1,abc,2.0\n").unwrap();
    let msg = parse_csv(&path).unwrap_err().to_string();
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn magnitude_identity_on_random_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = random_vector(&mut rng, 1000);
    let re = extract_component(&v, Component::Real);
    let im = extract_component(&v, Component::Imag);
    let mag = extract_component(&v, Component::Magnitude);
    for i in 0..1000 {
        let lhs = (mag[i] as f64).powi(2);
        let rhs = (re[i] as f64).powi(2) + (im[i] as f64).powi(2);
        assert!((lhs - rhs).abs() <= 1e-6 * rhs.max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn fft_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let v = random_vector(&mut rng, 1536);
        let got = fft(&v);
        let want = naive_dft(v.samples());
        let scale = want.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, b) in got.bins.iter().zip(&want) {
            assert!((a - b).norm() / scale < 1e-4);
        }
    }
}

#[test]
fn ifft_recovers_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = random_vector(&mut rng, 1536);
    let back = ifft(&fft(&v));
    for (a, b) in v.samples().iter().zip(&back) {
        let a = Complex64::new(a.re as f64, a.im as f64);
        assert!((a - b).norm() <= 1e-4 * a.norm().max(1.0));
    }
}

#[test]
fn parseval_holds_for_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let v = random_vector(&mut rng, 1536);
        let fs = 40e6;
        let p = psd(&v, fs).unwrap();
        let lhs = p.values.iter().sum::<f64>() * fs / v.len() as f64;
        let rhs = v.mean_power();
        assert!((lhs - rhs).abs() / rhs < 1e-4);
    }
}

fn rotate(v: &IqVector, theta: f32) -> IqVector {
    let r = Complex32::from_polar(1.0, theta);
    IqVector::new(v.samples().iter().map(|s| s * r).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn magnitude_is_rotation_invariant(seed in any::<u64>(), theta in -3.0f32..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_vector(&mut rng, 128);
        let a = extract_component(&v, Component::Magnitude);
        let b = extract_component(&rotate(&v, theta), Component::Magnitude);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-5 * x.max(1.0));
        }
    }

    #[test]
    fn psd_is_rotation_invariant(seed in any::<u64>(), theta in -3.0f32..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_vector(&mut rng, 96);
        let a = psd(&v, 1.0).unwrap();
        let b = psd(&rotate(&v, theta), 1.0).unwrap();
        let scale = a.values.iter().copied().fold(0.0, f64::max);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn phase_stays_in_half_open_range(re in -1e3f32..1e3, im in -1e3f32..1e3) {
        let p = analyzer::phase_of(re, im);
        prop_assert!(p > -std::f32::consts::PI && p <= std::f32::consts::PI);
    }
}
