//! Synthetic frequency-domain captures for the six signal classes.
//!
//! Each vector is complex Gaussian noise plus a class signature built
//! directly in the frequency domain around `center_bin`:
//!
//! | class      | signature                                                  |
//! |------------|------------------------------------------------------------|
//! | Radar      | one tone with a random sub-bin offset (1 to 3 bins)        |
//! | Triangular | odd harmonics at `center ± n·spacing`, amplitude `1/n²`     |
//! | Square     | odd harmonics at `center ± n·spacing`, amplitude `1/n`      |
//! | Jammer     | complex Gaussian plateau over `signal_bw_bins`             |
//! | LTE        | constant-modulus random-phase plateau with a DC null       |
//! | NoRFI      | nothing                                                    |
//!
//! `snr_db` is the ratio between the total signature power and the noise
//! power inside `signal_bw_bins`, so every class carries the same energy
//! at a given SNR regardless of how it is spread.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzer::{write_bin, IqVector};
use crate::error::{format_err, invalid, Error, Result};
use crate::preprocessor::Label;

/// Sensed bandwidth.
pub const BAND_HZ: f64 = 40e6;
/// Interferer center offsets from the band center.
pub const CENTER_OFFSETS_HZ: [f64; 4] = [-15e6, -5e6, 5e6, 15e6];
/// About 1 MHz of occupied spectrum at 40 MHz / 1536 bins.
pub const DEFAULT_SIGNAL_BW_BINS: usize = 38;
/// Spacing of the fundamental from the center for the harmonic combs.
pub const COMB_SPACING_BINS: usize = 3;

/// Bin index of `offset_hz` for a `vector_len`-point capture of the band.
pub fn center_bin(vector_len: usize, offset_hz: f64) -> usize {
    let bin = (vector_len as f64 / 2.0 + offset_hz / (BAND_HZ / vector_len as f64)).round();
    bin.clamp(0.0, vector_len as f64 - 1.0) as usize
}

/// Bins of the four interferer center frequencies in a 1536-point capture.
pub fn default_center_bins() -> [usize; 4] {
    CENTER_OFFSETS_HZ.map(|off| center_bin(crate::DEFAULT_VECTOR_LEN, off))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub label: Label,
    pub vector_len: usize,
    pub center_bin: usize,
    pub signal_bw_bins: usize,
    pub snr_db: f64,
    /// Noise power per bin.
    pub noise_floor_db: f64,
    pub seed: u64,
    pub vectors: usize,
}

impl SceneConfig {
    pub fn new(label: Label, center_bin: usize) -> Self {
        Self {
            label,
            vector_len: crate::DEFAULT_VECTOR_LEN,
            center_bin,
            signal_bw_bins: DEFAULT_SIGNAL_BW_BINS,
            snr_db: 15.0,
            noise_floor_db: 0.0,
            seed: 0,
            vectors: crate::DEFAULT_VECTORS_PER_FILE,
        }
    }

    /// Bins the signature may touch, as `(lowest, one past highest)` in
    /// signed arithmetic so out-of-range signatures can be reported.
    fn footprint(&self) -> (i64, i64) {
        let c = self.center_bin as i64;
        let bw = self.signal_bw_bins as i64;
        match self.label {
            Label::NoRfi => (c, c + 1),
            Label::Radar => (c - 1, c + 2),
            Label::Square | Label::Triangular => {
                let reach = comb_orders(self.signal_bw_bins).last().copied().unwrap_or(1) * COMB_SPACING_BINS;
                (c - reach as i64, c + reach as i64 + 1)
            }
            Label::Jammer | Label::Lte => (c - bw / 2, c - bw / 2 + bw),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vector_len == 0 {
            return Err(invalid!("vector length must be positive"));
        }
        if self.signal_bw_bins == 0 {
            return Err(invalid!("signal bandwidth must be at least one bin"));
        }
        if !self.snr_db.is_finite() || !self.noise_floor_db.is_finite() {
            return Err(invalid!("SNR and noise floor must be finite"));
        }
        if self.label == Label::NoRfi {
            return Ok(());
        }
        if self.center_bin >= self.vector_len {
            return Err(invalid!(
                "center bin {} outside 0..{}",
                self.center_bin,
                self.vector_len
            ));
        }
        let (lo, hi) = self.footprint();
        if lo < 0 || hi > self.vector_len as i64 {
            return Err(invalid!(
                "{} signature spans bins {lo}..{hi}, outside 0..{}",
                self.label,
                self.vector_len
            ));
        }
        Ok(())
    }
}

/// Odd harmonic orders whose offset fits within half the bandwidth; at
/// least the fundamental.
fn comb_orders(signal_bw_bins: usize) -> Vec<usize> {
    let half = signal_bw_bins / 2;
    let orders: Vec<usize> = (1..)
        .step_by(2)
        .take_while(|n| n * COMB_SPACING_BINS <= half)
        .collect();
    if orders.is_empty() {
        vec![1]
    } else {
        orders
    }
}

fn gaussian(rng: &mut ChaCha8Rng, power: f64) -> (f64, f64) {
    let s = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    (re * s, im * s)
}

fn phasor(rng: &mut ChaCha8Rng, amplitude: f64) -> (f64, f64) {
    let phi = rng.random_range(0.0..2.0 * PI);
    (amplitude * phi.cos(), amplitude * phi.sin())
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Endless, deterministic source of vectors for one scene.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    cfg: SceneConfig,
    rng: ChaCha8Rng,
    noise_power: f64,
    signal_power: f64,
}

impl SceneGenerator {
    pub fn new(cfg: SceneConfig) -> Result<Self> {
        cfg.validate()?;
        let noise_power = 10f64.powf(cfg.noise_floor_db / 10.0);
        let signal_power = noise_power * cfg.signal_bw_bins as f64 * 10f64.powf(cfg.snr_db / 10.0);
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            noise_power,
            signal_power,
        })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.cfg
    }

    pub fn next_vector(&mut self) -> IqVector {
        let n = self.cfg.vector_len;
        let mut bins: Vec<(f64, f64)> = (0..n).map(|_| gaussian(&mut self.rng, self.noise_power)).collect();
        self.add_signature(&mut bins);
        let samples = bins
            .into_iter()
            .map(|(re, im)| Complex32::new(re as f32, im as f32))
            .collect();
        IqVector::new(samples).expect("generated samples are finite")
    }

    fn add_signature(&mut self, bins: &mut [(f64, f64)]) {
        let c = self.cfg.center_bin;
        let bw = self.cfg.signal_bw_bins;
        let total = self.signal_power;
        let rng = &mut self.rng;
        let mut add = |bin: usize, (re, im): (f64, f64)| {
            bins[bin].0 += re;
            bins[bin].1 += im;
        };
        match self.cfg.label {
            Label::NoRfi => {}
            Label::Radar => {
                let offset: f64 = rng.random_range(-0.5..0.5);
                let weights: Vec<f64> = (-1..=1).map(|k| sinc(k as f64 - offset)).collect();
                let norm: f64 = weights.iter().map(|w| w * w).sum();
                let phi = rng.random_range(0.0..2.0 * PI);
                for (k, w) in weights.iter().enumerate() {
                    // Adjacent bins of a tone alternate in sign.
                    let a = w * (total / norm).sqrt();
                    add(c + k - 1, (a * phi.cos(), a * phi.sin()));
                }
            }
            Label::Square | Label::Triangular => {
                let power_law = if self.cfg.label == Label::Square { 1 } else { 2 };
                let orders = comb_orders(bw);
                let amps: Vec<f64> = orders.iter().map(|&n| 1.0 / (n as f64).powi(power_law)).collect();
                let norm: f64 = 2.0 * amps.iter().map(|a| a * a).sum::<f64>();
                let scale = (total / norm).sqrt();
                for (&n, a) in orders.iter().zip(&amps) {
                    let off = n * COMB_SPACING_BINS;
                    add(c - off, phasor(rng, a * scale));
                    add(c + off, phasor(rng, a * scale));
                }
            }
            Label::Jammer => {
                let start = c - bw / 2;
                for bin in start..start + bw {
                    add(bin, gaussian(rng, total / bw as f64));
                }
            }
            Label::Lte => {
                let start = c - bw / 2;
                let active = if bw > 1 { bw - 1 } else { 1 };
                let amp = (total / active as f64).sqrt();
                for bin in start..start + bw {
                    // The DC subcarrier stays empty.
                    if bin == c && bw > 1 {
                        continue;
                    }
                    let q = rng.random_range(0..4u8) as f64;
                    let phi = PI / 4.0 + q * PI / 2.0;
                    add(bin, (amp * phi.cos(), amp * phi.sin()));
                }
            }
        }
    }
}

impl Iterator for SceneGenerator {
    type Item = IqVector;

    fn next(&mut self) -> Option<IqVector> {
        Some(self.next_vector())
    }
}

/// `cfg.vectors` independent realizations of a scene.
pub fn generate(cfg: &SceneConfig) -> Result<Vec<IqVector>> {
    let vectors = cfg.vectors;
    Ok(SceneGenerator::new(cfg.clone())?.take(vectors).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub labels: Vec<Label>,
    pub bins: Vec<usize>,
    /// Files per (label, bin) cell.
    pub per_cell: usize,
    pub vector_len: usize,
    pub vectors_per_file: usize,
    pub signal_bw_bins: usize,
    pub snr_db: f64,
    /// Each file's SNR is drawn uniformly from `snr_db ± snr_spread_db`.
    pub snr_spread_db: f64,
    pub noise_floor_db: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            labels: Label::ALL.to_vec(),
            bins: default_center_bins().to_vec(),
            per_cell: 2,
            vector_len: crate::DEFAULT_VECTOR_LEN,
            vectors_per_file: crate::DEFAULT_VECTORS_PER_FILE,
            signal_bw_bins: DEFAULT_SIGNAL_BW_BINS,
            snr_db: 15.0,
            snr_spread_db: 0.0,
            noise_floor_db: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFile {
    /// File name relative to the corpus directory.
    pub file: String,
    pub label: Label,
    pub center_bin: usize,
    pub index: usize,
    pub seed: u64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: String,
    pub version: u32,
    pub config: CorpusConfig,
    pub files: Vec<CorpusFile>,
}

impl CorpusManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    /// Files of the given labels whose center bin is in `bins`.
    pub fn select(&self, bins: &[usize]) -> Vec<&CorpusFile> {
        self.files.iter().filter(|f| bins.contains(&f.center_bin)).collect()
    }
}

/// `<label>_<bin>_<idx>.bin`.
pub fn corpus_file_name(label: Label, bin: usize, index: usize) -> String {
    format!("{}_{bin}_{index}.bin", label.name())
}

/// Inverse of [`corpus_file_name`].
pub fn parse_corpus_file_name(name: &str) -> Result<(Label, usize, usize)> {
    let stem = name
        .strip_suffix(".bin")
        .ok_or_else(|| invalid!("corpus file {name:?} lacks the .bin extension"))?;
    let mut parts = stem.rsplitn(3, '_');
    let (idx, bin, label) = match (parts.next(), parts.next(), parts.next()) {
        (Some(i), Some(b), Some(l)) => (i, b, l),
        _ => return Err(invalid!("corpus file {name:?} is not <label>_<bin>_<idx>.bin")),
    };
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| invalid!("corpus file {name:?}: {s:?} is not an integer"))
    };
    Ok((label.parse()?, parse(bin)?, parse(idx)?))
}

/// Well-mixed per-file seed (SplitMix64 finalizer over the cell id).
fn file_seed(base: u64, label: Label, bin: usize, index: usize) -> u64 {
    let mut z = base
        ^ ((label.code() as u64) << 56)
        ^ ((bin as u64) << 28)
        ^ index as u64;
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scene for one corpus file; the same cell always yields the same scene.
pub fn corpus_scene(cfg: &CorpusConfig, label: Label, bin: usize, index: usize) -> SceneConfig {
    let seed = file_seed(cfg.seed, label, bin, index);
    let jitter = if cfg.snr_spread_db > 0.0 {
        ChaCha8Rng::seed_from_u64(!seed).random_range(-cfg.snr_spread_db..=cfg.snr_spread_db)
    } else {
        0.0
    };
    SceneConfig {
        label,
        vector_len: cfg.vector_len,
        center_bin: bin,
        signal_bw_bins: cfg.signal_bw_bins,
        snr_db: cfg.snr_db + jitter,
        noise_floor_db: cfg.noise_floor_db,
        seed,
        vectors: cfg.vectors_per_file,
    }
}

/// Writes `labels × bins × per_cell` capture files plus `manifest.json`.
pub fn generate_corpus(cfg: &CorpusConfig, out_dir: impl AsRef<Path>) -> Result<CorpusManifest> {
    let out_dir = out_dir.as_ref();
    if cfg.labels.is_empty() || cfg.bins.is_empty() {
        return Err(invalid!("corpus needs at least one label and one bin"));
    }
    if cfg.vectors_per_file == 0 {
        return Err(invalid!("vectors per file must be positive"));
    }
    let mut cells = Vec::new();
    for &label in &cfg.labels {
        for &bin in &cfg.bins {
            for index in 0..cfg.per_cell {
                let scene = corpus_scene(cfg, label, bin, index);
                scene.validate()?;
                cells.push(scene_file(scene, index));
            }
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    cells.par_iter().try_for_each(|(scene, entry)| {
        write_bin(out_dir.join(&entry.file), &generate(scene)?)
    })?;
    let manifest = CorpusManifest {
        format: "libiq-corpus".into(),
        version: 1,
        config: cfg.clone(),
        files: cells.into_iter().map(|(_, entry)| entry).collect(),
    };
    let path = out_dir.join(CorpusManifest::FILE_NAME);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| format_err!("manifest: {e}"))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn scene_file(scene: SceneConfig, index: usize) -> (SceneConfig, CorpusFile) {
    let entry = CorpusFile {
        file: corpus_file_name(scene.label, scene.center_bin, index),
        label: scene.label,
        center_bin: scene.center_bin,
        index,
        seed: scene.seed,
        snr_db: scene.snr_db,
    };
    (scene, entry)
}

pub fn load_corpus_manifest(dir: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = dir.as_ref().join(CorpusManifest::FILE_NAME);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let m: CorpusManifest =
        serde_json::from_slice(&bytes).map_err(|e| format_err!("{}: {e}", path.display()))?;
    if m.format != "libiq-corpus" || m.version != 1 {
        return Err(format_err!(
            "{}: unsupported corpus manifest {} v{}",
            path.display(),
            m.format,
            m.version
        ));
    }
    Ok(m)
}

/// Paths and labels of the corpus files at `bins`, in manifest order.
pub fn corpus_selection(dir: impl AsRef<Path>, bins: &[usize]) -> Result<(Vec<PathBuf>, Vec<Label>)> {
    let dir = dir.as_ref();
    let manifest = load_corpus_manifest(dir)?;
    let chosen = manifest.select(bins);
    if chosen.is_empty() {
        return Err(invalid!("corpus {} has no files at bins {bins:?}", dir.display()));
    }
    Ok(chosen.iter().map(|f| (dir.join(&f.file), f.label)).unzip())
}
