//! Dataset construction and the energy peak detector.
//!
//! Every snapshot is cropped independently to `out_len` samples centred on
//! its strongest sliding-window energy, then the `K` crops of a series are
//! concatenated and expanded into four channels: real, imaginary, magnitude
//! and phase.

use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzer::{self, magnitude_of, phase_of, IqVector, TimeSeries};
use crate::error::{format_err, invalid, Error, Result};

/// Channels per feature sample.
pub const CHANNELS: usize = 4;

/// Signal classes with their stable integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Lte = 0,
    Jammer = 1,
    NoRfi = 2,
    Square = 3,
    Triangular = 4,
    Radar = 5,
}

impl Label {
    pub const COUNT: usize = 6;
    pub const ALL: [Label; 6] = [
        Label::Lte,
        Label::Jammer,
        Label::NoRfi,
        Label::Square,
        Label::Triangular,
        Label::Radar,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Label::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| format_err!("label code {code} out of range"))
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Lte => "LTE",
            Label::Jammer => "Jammer",
            Label::NoRfi => "NoRFI",
            Label::Square => "Square",
            Label::Triangular => "Triangular",
            Label::Radar => "Radar",
        }
    }

    /// The `(code, name)` table written next to datasets and models.
    pub fn class_map() -> Vec<ClassEntry> {
        Label::ALL
            .iter()
            .map(|l| ClassEntry {
                code: l.code(),
                name: l.name().to_string(),
            })
            .collect()
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', '-', ' '], "");
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.name().to_ascii_lowercase() == key)
            .ok_or_else(|| invalid!("unknown label '{s}'"))
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub code: u8,
    pub name: String,
}

/// Checks a serialized class table against the built-in one.
pub fn check_class_map(map: &[ClassEntry]) -> Result<()> {
    if map != Label::class_map().as_slice() {
        return Err(format_err!("class map {map:?} does not match this build"));
    }
    Ok(())
}

/// Location chosen by the peak detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeakSlice {
    /// Start of the highest-energy sliding window.
    pub window_start: usize,
    /// Centre of that window, `window_start + w/2`.
    pub center: usize,
    /// Output range, always `out_len` long and inside the vector.
    pub start: usize,
    pub end: usize,
}

impl PeakSlice {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

#[inline]
fn energy(s: &Complex32) -> f64 {
    let (re, im) = (s.re as f64, s.im as f64);
    re * re + im * im
}

/// Energy of the window starting at `start`, summed in index order.
fn window_energy(samples: &[Complex32], start: usize, w: usize) -> f64 {
    samples[start..start + w].iter().map(energy).sum()
}

/// Locates the maximum-energy window of width `detect_window` and the
/// `out_len` crop centred on it.
///
/// Window energies are scanned with a running sum; windows within rounding
/// distance of the maximum are re-summed in index order so the chosen start
/// is exactly the lowest index attaining the maximum of
/// `Σ_{j=i}^{i+w-1} |v[j]|²`.
pub fn detect_peak(samples: &[Complex32], detect_window: usize, out_len: usize) -> Result<PeakSlice> {
    let n = samples.len();
    if detect_window == 0 || detect_window > n {
        return Err(invalid!(
            "detect window {detect_window} must be in 1..={n}"
        ));
    }
    if out_len == 0 || out_len > n {
        return Err(invalid!("output length {out_len} must be in 1..={n}"));
    }
    let w = detect_window;
    let positions = n - w + 1;

    let mut running = window_energy(samples, 0, w);
    let mut approx = Vec::with_capacity(positions);
    approx.push(running);
    let mut mass = running;
    for i in 1..positions {
        let incoming = energy(&samples[i + w - 1]);
        running += incoming - energy(&samples[i - 1]);
        mass += incoming;
        approx.push(running);
    }
    let top = approx.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Running-sum drift is bounded by a few ulps of the total mass per step.
    let slack = (mass + top.abs()) * 4.0 * f64::EPSILON * positions as f64;

    let mut best = usize::MAX;
    let mut best_energy = f64::NEG_INFINITY;
    for (i, &e) in approx.iter().enumerate() {
        if e >= top - slack {
            let exact = window_energy(samples, i, w);
            if exact > best_energy {
                best_energy = exact;
                best = i;
            }
        }
    }

    let center = best + w / 2;
    let start = center.saturating_sub(out_len / 2).min(n - out_len);
    Ok(PeakSlice {
        window_start: best,
        center,
        start,
        end: start + out_len,
    })
}

/// Crops `v` to the `out_len` samples around its dominant energy peak.
pub fn energy_peak_detector(v: &IqVector, detect_window: usize, out_len: usize) -> Result<IqVector> {
    let slice = detect_peak(v.samples(), detect_window, out_len)?;
    IqVector::new(v.samples()[slice.range()].to_vec())
}

/// `(len, 4)` feature matrix, row-major, channels `[real, imag, magnitude, phase]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    len: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn from_raw(len: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != len * CHANNELS {
            return Err(Error::Shape(format!(
                "feature data has {} values, expected {len}x{CHANNELS}",
                data.len()
            )));
        }
        Ok(Self { len, data })
    }

    /// Expands complex samples into the four feature channels.
    pub fn from_samples(samples: &[Complex32]) -> Self {
        let mut data = Vec::with_capacity(samples.len() * CHANNELS);
        push_features(samples, &mut data);
        Self {
            len: samples.len(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn sample(&self, t: usize) -> &[f32] {
        &self.data[t * CHANNELS..(t + 1) * CHANNELS]
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f32> + '_ {
        self.data.iter().skip(c).step_by(CHANNELS).copied()
    }
}

pub(crate) fn push_features(samples: &[Complex32], out: &mut Vec<f32>) {
    for s in samples {
        out.extend_from_slice(&[s.re, s.im, magnitude_of(s.re, s.im), phase_of(s.re, s.im)]);
    }
}

/// Runs the detector on every vector of `ts` and concatenates the crops.
pub fn build_features(ts: &TimeSeries, detect_window: usize, out_len: usize) -> Result<FeatureTensor> {
    let mut data = Vec::with_capacity(ts.window() * out_len * CHANNELS);
    for v in ts.vectors() {
        let slice = detect_peak(v.samples(), detect_window, out_len)?;
        push_features(&v.samples()[slice.range()], &mut data);
    }
    Ok(FeatureTensor {
        len: ts.window() * out_len,
        data,
    })
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }

    /// Population mean and standard deviation of every channel over all
    /// samples of all tensors. A zero deviation is stored as 1.
    pub fn compute(tensors: &[FeatureTensor]) -> Result<Self> {
        let count: usize = tensors.iter().map(FeatureTensor::len).sum();
        if count == 0 {
            return Err(invalid!("cannot compute statistics of an empty dataset"));
        }
        let mut sum = [0.0f64; CHANNELS];
        for t in tensors {
            for s in t.data.chunks_exact(CHANNELS) {
                for c in 0..CHANNELS {
                    sum[c] += s[c] as f64;
                }
            }
        }
        let mean = sum.map(|s| s / count as f64);
        let mut sq = [0.0f64; CHANNELS];
        for t in tensors {
            for s in t.data.chunks_exact(CHANNELS) {
                for c in 0..CHANNELS {
                    let d = s[c] as f64 - mean[c];
                    sq[c] += d * d;
                }
            }
        }
        let std = sq.map(|s| {
            let sd = (s / count as f64).sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        });
        Ok(Self { mean, std })
    }

    /// Normalizes interleaved `[t][channel]` data in place.
    pub fn apply_to(&self, data: &mut [f32]) {
        let scale = self.std.map(|s| 1.0 / s);
        for s in data.chunks_exact_mut(CHANNELS) {
            for c in 0..CHANNELS {
                s[c] = ((s[c] as f64 - self.mean[c]) * scale[c]) as f32;
            }
        }
    }
}

/// Parameters shared by every tensor of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub vector_len: usize,
    pub detect_window: usize,
    /// Detector output length `J`.
    pub out_len: usize,
    /// Vectors per series `K`.
    pub window: usize,
    pub class_map: Vec<ClassEntry>,
    /// Set once the tensors have been z-scored with these statistics.
    pub norm: Option<NormStats>,
}

impl DatasetMeta {
    pub fn new(vector_len: usize, window: usize, detect_window: usize, out_len: usize) -> Self {
        Self {
            vector_len,
            detect_window,
            out_len,
            window,
            class_map: Label::class_map(),
            norm: None,
        }
    }

    /// Samples per tensor, `J × K`.
    pub fn input_len(&self) -> usize {
        self.out_len * self.window
    }

    fn same_shape(&self, other: &DatasetMeta) -> bool {
        self.vector_len == other.vector_len
            && self.detect_window == other.detect_window
            && self.out_len == other.out_len
            && self.window == other.window
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub tensors: Vec<FeatureTensor>,
    pub labels: Vec<Label>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(tensors: Vec<FeatureTensor>, labels: Vec<Label>, meta: DatasetMeta) -> Result<Self> {
        if tensors.len() != labels.len() {
            return Err(invalid!(
                "{} tensors but {} labels",
                tensors.len(),
                labels.len()
            ));
        }
        let len = meta.input_len();
        if let Some((i, t)) = tensors.iter().enumerate().find(|(_, t)| t.len() != len) {
            return Err(Error::Shape(format!(
                "tensor {i} has length {}, expected {len}",
                t.len()
            )));
        }
        Ok(Self {
            tensors,
            labels,
            meta,
        })
    }

    pub fn empty(meta: DatasetMeta) -> Self {
        Self {
            tensors: Vec::new(),
            labels: Vec::new(),
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.meta.input_len()
    }

    pub fn class_counts(&self) -> [usize; Label::COUNT] {
        let mut counts = [0; Label::COUNT];
        for l in &self.labels {
            counts[l.code() as usize] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            tensors: indices.iter().map(|&i| self.tensors[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            meta: self.meta.clone(),
        }
    }

    /// Appends `other`, which must share shape and normalization.
    pub fn extend(&mut self, other: LabeledDataset) -> Result<()> {
        if !self.meta.same_shape(&other.meta) || self.meta.norm != other.meta.norm {
            return Err(Error::Shape("cannot merge datasets with different metadata".into()));
        }
        self.tensors.extend(other.tensors);
        self.labels.extend(other.labels);
        Ok(())
    }

    /// Splits off `holdout` (a fraction) of every class into a second
    /// dataset. Per-class membership is shuffled with `seed`; both halves
    /// keep the original relative order.
    pub fn stratified_split(&self, holdout: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&holdout) {
            return Err(invalid!("holdout fraction {holdout} must be in [0, 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut held = vec![false; self.len()];
        for label in Label::ALL {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
            idx.shuffle(&mut rng);
            let take = (idx.len() as f64 * holdout).round() as usize;
            for &i in &idx[..take] {
                held[i] = true;
            }
        }
        let keep: Vec<usize> = (0..self.len()).filter(|&i| !held[i]).collect();
        let hold: Vec<usize> = (0..self.len()).filter(|&i| held[i]).collect();
        Ok((self.subset(&keep), self.subset(&hold)))
    }

    pub(crate) fn check_compatible(&self, other: &LabeledDataset) -> Result<()> {
        if !self.meta.same_shape(&other.meta) {
            return Err(Error::Shape(format!(
                "dataset shapes differ: J={} K={} vs J={} K={}",
                self.meta.out_len, self.meta.window, other.meta.out_len, other.meta.window
            )));
        }
        Ok(())
    }
}

/// Capture geometry and detector settings for dataset construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub vector_len: usize,
    /// Vectors per series `K`.
    pub window: usize,
    pub detect_window: usize,
    pub out_len: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            vector_len: crate::DEFAULT_VECTOR_LEN,
            window: 1,
            detect_window: crate::DEFAULT_DETECT_WINDOW,
            out_len: crate::DEFAULT_OUT_LEN,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(invalid!("time window K must be at least 1"));
        }
        if self.vector_len == 0 {
            return Err(invalid!("vector length must be positive"));
        }
        if self.detect_window == 0 || self.detect_window > self.vector_len {
            return Err(invalid!(
                "detect window {} must be in 1..={}",
                self.detect_window,
                self.vector_len
            ));
        }
        if self.out_len == 0 || self.out_len > self.vector_len {
            return Err(invalid!(
                "output length {} must be in 1..={}",
                self.out_len,
                self.vector_len
            ));
        }
        Ok(())
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta::new(self.vector_len, self.window, self.detect_window, self.out_len)
    }
}

/// Groups vectors into consecutive non-overlapping series of `k`, dropping
/// the remainder.
pub fn group_series(vectors: Vec<IqVector>, k: usize) -> Result<Vec<TimeSeries>> {
    if k == 0 {
        return Err(invalid!("time window K must be at least 1"));
    }
    let usable = vectors.len() / k * k;
    let mut it = vectors.into_iter().take(usable);
    (0..usable / k)
        .map(|_| TimeSeries::new(it.by_ref().take(k).collect()))
        .collect()
}

/// Features of one file's vectors; series never span files.
pub fn features_from_vectors(vectors: Vec<IqVector>, spec: &DatasetSpec) -> Result<Vec<FeatureTensor>> {
    if let Some(v) = vectors.iter().find(|v| v.len() != spec.vector_len) {
        return Err(Error::Shape(format!(
            "vector has {} samples, expected {}",
            v.len(),
            spec.vector_len
        )));
    }
    group_series(vectors, spec.window)?
        .iter()
        .map(|ts| build_features(ts, spec.detect_window, spec.out_len))
        .collect()
}

fn create_dataset<P, F>(paths: &[P], labels: &[Label], spec: &DatasetSpec, parse: F) -> Result<LabeledDataset>
where
    P: AsRef<Path> + Sync,
    F: Fn(&Path) -> Result<Vec<IqVector>> + Sync,
{
    if paths.len() != labels.len() {
        return Err(invalid!(
            "{} paths but {} labels",
            paths.len(),
            labels.len()
        ));
    }
    spec.validate()?;
    let per_file: Vec<Vec<FeatureTensor>> = paths
        .par_iter()
        .map(|p| features_from_vectors(parse(p.as_ref())?, spec))
        .collect::<Result<_>>()?;

    let mut tensors = Vec::new();
    let mut out_labels = Vec::new();
    for (file_tensors, &label) in per_file.into_iter().zip(labels) {
        out_labels.extend(std::iter::repeat_n(label, file_tensors.len()));
        tensors.extend(file_tensors);
    }
    LabeledDataset::new(tensors, out_labels, spec.meta())
}

/// Builds a dataset from binary captures, one label per file.
pub fn create_dataset_from_bin<P: AsRef<Path> + Sync>(
    paths: &[P],
    labels: &[Label],
    spec: &DatasetSpec,
) -> Result<LabeledDataset> {
    create_dataset(paths, labels, spec, |p| analyzer::parse_bin(p, spec.vector_len))
}

/// Builds a dataset from CSV captures, one label per file.
pub fn create_dataset_from_csv<P: AsRef<Path> + Sync>(
    paths: &[P],
    labels: &[Label],
    spec: &DatasetSpec,
) -> Result<LabeledDataset> {
    create_dataset(paths, labels, spec, |p| analyzer::parse_csv(p))
}

/// Z-scores `ds` with statistics computed from `ds` itself.
pub fn normalize(ds: LabeledDataset) -> Result<(LabeledDataset, NormStats)> {
    if ds.is_empty() {
        return Err(invalid!("cannot normalize an empty dataset"));
    }
    let stats = NormStats::compute(&ds.tensors)?;
    let ds = apply_norm(ds, &stats)?;
    Ok((ds, stats))
}

/// Applies previously computed statistics. Fails if the dataset was
/// already normalized, so statistics are never applied twice.
pub fn apply_norm(mut ds: LabeledDataset, stats: &NormStats) -> Result<LabeledDataset> {
    if let Some(existing) = &ds.meta.norm {
        return Err(invalid!(
            "dataset is already normalized (mean {:?})",
            existing.mean
        ));
    }
    ds.tensors
        .par_iter_mut()
        .for_each(|t| stats.apply_to(&mut t.data));
    ds.meta.norm = Some(*stats);
    Ok(ds)
}

const DATASET_FORMAT: &str = "libiq-dataset";
const DATASET_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.json";
const TENSOR_FILE: &str = "tensors.f32";
const LABEL_FILE: &str = "labels.u8";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    format: String,
    version: u32,
    count: usize,
    /// `[N, J×K, 4]`.
    shape: [usize; 3],
    tensor_file: String,
    label_file: String,
    meta: DatasetMeta,
}

/// Writes `dir/manifest.json`, `dir/tensors.f32` (little-endian) and
/// `dir/labels.u8`.
pub fn save_dataset(ds: &LabeledDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        count: ds.len(),
        shape: [ds.len(), ds.input_len(), CHANNELS],
        tensor_file: TENSOR_FILE.into(),
        label_file: LABEL_FILE.into(),
        meta: ds.meta.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| format_err!("{e}"))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(TENSOR_FILE);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for t in &ds.tensors {
            for x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(&path, e))?;

    let path = dir.join(LABEL_FILE);
    let codes: Vec<u8> = ds.labels.iter().map(|l| l.code()).collect();
    fs::write(&path, codes).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let read = |name: &str| -> Result<(PathBuf, Vec<u8>)> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok((path, bytes))
    };
    let (path, bytes) = read(MANIFEST_FILE)?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes)
        .map_err(|e| format_err!("{}: {e}", path.display()))?;
    if manifest.format != DATASET_FORMAT || manifest.version != DATASET_VERSION {
        return Err(format_err!(
            "{}: expected {DATASET_FORMAT} v{DATASET_VERSION}, found {} v{}",
            path.display(),
            manifest.format,
            manifest.version
        ));
    }
    check_class_map(&manifest.meta.class_map)?;
    let [n, len, ch] = manifest.shape;
    if n != manifest.count || ch != CHANNELS || len != manifest.meta.input_len() {
        return Err(format_err!("{}: inconsistent shape {:?}", path.display(), manifest.shape));
    }

    let (path, blob) = read(&manifest.tensor_file)?;
    let expect = n * len * CHANNELS * 4;
    if blob.len() != expect {
        return Err(format_err!(
            "{}: {} bytes, expected {expect}",
            path.display(),
            blob.len()
        ));
    }
    let (path, codes) = read(&manifest.label_file)?;
    if codes.len() != n {
        return Err(format_err!("{}: {} labels, expected {n}", path.display(), codes.len()));
    }
    let labels = codes.into_iter().map(Label::from_code).collect::<Result<Vec<_>>>()?;
    let per_tensor = len * CHANNELS * 4;
    let tensors = if per_tensor == 0 {
        Vec::new()
    } else {
        blob.chunks_exact(per_tensor)
            .map(|chunk| FeatureTensor {
                len,
                data: chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect(),
            })
            .collect()
    };
    LabeledDataset::new(tensors, labels, manifest.meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros_with_spike(n: usize, at: usize, mag: f32) -> Vec<Complex32> {
        let mut v = vec![Complex32::new(0.0, 0.0); n];
        v[at] = Complex32::new(mag, 0.0);
        v
    }

    #[test]
    fn label_codes_round_trip() {
        for l in Label::ALL {
            assert_eq!(Label::from_code(l.code()).unwrap(), l);
            assert_eq!(l.name().parse::<Label>().unwrap(), l);
        }
        assert_eq!("no_rfi".parse::<Label>().unwrap(), Label::NoRfi);
        assert!(Label::from_code(6).is_err());
        assert!("wifi".parse::<Label>().is_err());
    }

    #[test]
    fn spike_is_centred() {
        let v = zeros_with_spike(1536, 700, 10.0);
        let s = detect_peak(&v, 16, 600).unwrap();
        // Every window covering the spike ties; the earliest starts at 685.
        assert_eq!(s.window_start, 685);
        assert_eq!(s.range(), 393..993);
        assert!(s.range().contains(&700));
    }

    #[test]
    fn spike_near_left_edge_is_clamped() {
        let v = zeros_with_spike(1536, 10, 10.0);
        assert_eq!(detect_peak(&v, 16, 600).unwrap().range(), 0..600);
        let v = zeros_with_spike(1536, 1530, 10.0);
        assert_eq!(detect_peak(&v, 16, 600).unwrap().range(), 936..1536);
    }

    #[test]
    fn equal_energies_pick_first_window() {
        let v = vec![Complex32::new(0.1, -0.3); 200];
        let s = detect_peak(&v, 8, 50).unwrap();
        assert_eq!(s.window_start, 0);
        assert_eq!(s.range(), 0..50);
    }

    #[test]
    fn detector_argument_errors() {
        let v = vec![Complex32::new(1.0, 0.0); 10];
        assert!(matches!(detect_peak(&v, 11, 5), Err(Error::InvalidArgument(_))));
        assert!(matches!(detect_peak(&v, 0, 5), Err(Error::InvalidArgument(_))));
        assert!(matches!(detect_peak(&v, 3, 11), Err(Error::InvalidArgument(_))));
        let s = detect_peak(&v, 10, 10).unwrap();
        assert_eq!(s.range(), 0..10);
    }

    #[test]
    fn feature_shapes() {
        let v = IqVector::new(zeros_with_spike(1536, 300, 5.0)).unwrap();
        let one = TimeSeries::new(vec![v.clone()]).unwrap();
        assert_eq!(build_features(&one, 64, 600).unwrap().len(), 600);
        let fifteen = TimeSeries::new(vec![v; 15]).unwrap();
        let t = build_features(&fifteen, 64, 600).unwrap();
        assert_eq!(t.len(), 9000);
        assert_eq!(t.data().len(), 9000 * CHANNELS);
    }

    #[test]
    fn grouping_drops_remainder() {
        let v = IqVector::new(vec![Complex32::new(1.0, 0.0); 4]).unwrap();
        assert_eq!(group_series(vec![v.clone(); 100], 5).unwrap().len(), 20);
        assert_eq!(group_series(vec![v.clone(); 100], 15).unwrap().len(), 6);
        assert!(group_series(vec![v], 0).is_err());
    }

    #[test]
    fn constant_channel_keeps_unit_std() {
        let t = FeatureTensor::from_raw(2, vec![1.0, 2.0, 3.0, 0.5, 1.0, 4.0, 3.0, 0.5]).unwrap();
        let ds = LabeledDataset::new(vec![t], vec![Label::Radar], DatasetMeta::new(2, 1, 1, 2)).unwrap();
        let (norm, stats) = normalize(ds).unwrap();
        assert_eq!(stats.std[0], 1.0);
        assert_eq!(stats.std[3], 1.0);
        assert_eq!(norm.tensors[0].data()[0], 0.0);
        assert_eq!(norm.tensors[0].data()[3], 0.0);
        assert!(matches!(apply_norm(norm, &stats), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn second_application_shifts_mean() {
        let data: Vec<f32> = (0..40).map(|i| i as f32 * 0.5 + 3.0).collect();
        let t = FeatureTensor::from_raw(10, data).unwrap();
        let stats = NormStats::compute(std::slice::from_ref(&t)).unwrap();
        let mut once = t.data().to_vec();
        stats.apply_to(&mut once);
        let mut twice = once.clone();
        stats.apply_to(&mut twice);
        let mean = |d: &[f32]| d.iter().step_by(CHANNELS).map(|&x| x as f64).sum::<f64>() / 10.0;
        assert!(mean(&once).abs() < 1e-6);
        assert!((mean(&twice) + stats.mean[0] / stats.std[0]).abs() < 1e-4);
    }

    #[test]
    fn split_is_stratified() {
        let meta = DatasetMeta::new(4, 1, 1, 1);
        let mut tensors = Vec::new();
        let mut labels = Vec::new();
        for l in Label::ALL {
            for i in 0..20 {
                tensors.push(FeatureTensor::from_raw(1, vec![i as f32; 4]).unwrap());
                labels.push(l);
            }
        }
        let ds = LabeledDataset::new(tensors, labels, meta).unwrap();
        let (train, val) = ds.stratified_split(0.1, 3).unwrap();
        assert_eq!(train.class_counts(), [18; 6]);
        assert_eq!(val.class_counts(), [2; 6]);
    }
}
