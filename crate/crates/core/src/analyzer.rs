//! Parsing of raw I/Q captures and frequency-domain utilities.
//!
//! Binary captures are headerless runs of interleaved `f32` little-endian
//! pairs (`re0 im0 re1 im1 ...`), `vector_len` complex samples per vector.
//! CSV captures carry one complex sample per row under the header
//! `vector,idx,i,q`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::{Complex32, Complex64};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{format_err, invalid, Error, Result};

/// Bytes taken by one complex `f32` sample on disk.
pub const SAMPLE_BYTES: usize = 8;

/// Header line of the CSV capture format.
pub const CSV_HEADER: [&str; 4] = ["vector", "idx", "i", "q"];

/// One spectrum-sensing snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct IqVector {
    samples: Vec<Complex32>,
}

impl IqVector {
    /// Wraps `samples`, rejecting empty vectors and non-finite components.
    pub fn new(samples: Vec<Complex32>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid!("an I/Q vector needs at least one sample"));
        }
        if let Some(pos) = samples.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at index {pos}")));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<Complex32> {
        self.samples
    }

    /// Mean of `|x|²` over the vector, accumulated in `f64`.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| c64(*s).norm_sqr()).sum::<f64>() / self.len() as f64
    }
}

/// `K` consecutive vectors of equal length forming one classification input.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    vectors: Vec<IqVector>,
}

impl TimeSeries {
    pub fn new(vectors: Vec<IqVector>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(invalid!("a time series needs at least one vector"));
        };
        let len = first.len();
        if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != len) {
            return Err(Error::Shape(format!(
                "vector {i} has {} samples, expected {len}",
                v.len()
            )));
        }
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &[IqVector] {
        &self.vectors
    }

    /// Number of vectors `K`.
    pub fn window(&self) -> usize {
        self.vectors.len()
    }

    pub fn vector_len(&self) -> usize {
        self.vectors[0].len()
    }

    /// All samples in time order.
    pub fn flatten(&self) -> Vec<Complex32> {
        self.vectors.iter().flat_map(|v| v.samples.iter().copied()).collect()
    }
}

/// DFT of an [`IqVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    /// Hz per bin, known only when the capture bandwidth was supplied.
    pub bin_resolution: Option<f64>,
}

impl Spectrum {
    pub fn with_band_width(mut self, band_width_hz: f64) -> Self {
        self.bin_resolution = Some(band_width_hz / self.bins.len() as f64);
        self
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Periodogram power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdVector {
    pub values: Vec<f64>,
    pub sample_rate: f64,
}

impl PsdVector {
    /// Total power recovered from the density, `Σ values · fs / N`.
    pub fn total_power(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.sample_rate / self.values.len() as f64
    }
}

/// Scalar view of a complex sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Real,
    Imag,
    Magnitude,
    Phase,
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Component::Real),
            "imag" => Ok(Component::Imag),
            "magnitude" => Ok(Component::Magnitude),
            "phase" => Ok(Component::Phase),
            other => Err(invalid!("unknown component '{other}'")),
        }
    }
}

#[inline]
fn c64(s: Complex32) -> Complex64 {
    Complex64::new(s.re as f64, s.im as f64)
}

/// Phase in `(-π, π]`, zero for the origin.
#[inline]
pub fn phase_of(re: f32, im: f32) -> f32 {
    if re == 0.0 && im == 0.0 {
        return 0.0;
    }
    let p = (im as f64).atan2(re as f64);
    // atan2 returns -π for a negative-zero imaginary part on the negative axis
    if p <= -PI {
        PI as f32
    } else {
        p as f32
    }
}

#[inline]
pub fn magnitude_of(re: f32, im: f32) -> f32 {
    (re as f64).hypot(im as f64) as f32
}

/// Elementwise real, imaginary, magnitude or phase of `v`.
pub fn extract_component(v: &IqVector, which: Component) -> Vec<f32> {
    let it = v.samples.iter();
    match which {
        Component::Real => it.map(|s| s.re).collect(),
        Component::Imag => it.map(|s| s.im).collect(),
        Component::Magnitude => it.map(|s| magnitude_of(s.re, s.im)).collect(),
        Component::Phase => it.map(|s| phase_of(s.re, s.im)).collect(),
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT, unnormalized: `X[k] = Σ x[n] e^{-2πi kn/N}`.
pub fn fft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// In-place inverse DFT scaled by `1/N`.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for x in buf.iter_mut() {
        *x *= scale;
    }
}

pub fn fft(v: &IqVector) -> Spectrum {
    let mut bins: Vec<Complex64> = v.samples.iter().map(|s| c64(*s)).collect();
    fft_in_place(&mut bins);
    Spectrum {
        bins,
        bin_resolution: None,
    }
}

/// Inverse of [`fft`]; returns `f64` samples.
pub fn ifft(spectrum: &Spectrum) -> Vec<Complex64> {
    let mut out = spectrum.bins.clone();
    ifft_in_place(&mut out);
    out
}

/// Periodogram `|X[k]|² / (N · fs)`.
pub fn psd(v: &IqVector, sample_rate: f64) -> Result<PsdVector> {
    if !(sample_rate > 0.0) || !sample_rate.is_finite() {
        return Err(invalid!("sample rate must be positive, got {sample_rate}"));
    }
    let n = v.len() as f64;
    let values = fft(v)
        .bins
        .iter()
        .map(|x| x.norm_sqr() / (n * sample_rate))
        .collect();
    Ok(PsdVector {
        values,
        sample_rate,
    })
}

/// Decodes an in-memory binary capture.
pub fn decode_bin(bytes: &[u8], vector_len: usize) -> Result<Vec<IqVector>> {
    if vector_len == 0 {
        return Err(invalid!("vector_len must be positive"));
    }
    let record = vector_len * SAMPLE_BYTES;
    if bytes.len() % record != 0 {
        return Err(format_err!(
            "{} bytes is not a whole number of {vector_len}-sample records ({record} bytes each); {} trailing bytes",
            bytes.len(),
            bytes.len() % record
        ));
    }
    bytes
        .chunks_exact(record)
        .enumerate()
        .map(|(i, rec)| {
            let samples = rec
                .chunks_exact(SAMPLE_BYTES)
                .map(|p| {
                    Complex32::new(
                        f32::from_le_bytes([p[0], p[1], p[2], p[3]]),
                        f32::from_le_bytes([p[4], p[5], p[6], p[7]]),
                    )
                })
                .collect();
            IqVector::new(samples).map_err(|e| match e {
                Error::Data(msg) => Error::Data(format!("vector {i}: {msg}")),
                other => other,
            })
        })
        .collect()
}

pub fn encode_bin(vectors: &[IqVector]) -> Vec<u8> {
    let total: usize = vectors.iter().map(|v| v.len()).sum();
    let mut out = Vec::with_capacity(total * SAMPLE_BYTES);
    for s in vectors.iter().flat_map(|v| v.samples.iter()) {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

/// Reads a binary capture of `vector_len`-sample vectors.
pub fn parse_bin(path: impl AsRef<Path>, vector_len: usize) -> Result<Vec<IqVector>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bin(&bytes, vector_len).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_bin(path: impl AsRef<Path>, vectors: &[IqVector]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_bin(vectors)).map_err(|e| Error::io(path, e))
}

/// Reads a CSV capture. Rows must list vectors in order, each with
/// consecutive `idx` values starting at zero, and all vectors must share
/// one length.
pub fn parse_csv(path: impl AsRef<Path>) -> Result<Vec<IqVector>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// CSV decoding over any reader; see [`parse_csv`].
pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<IqVector>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| format_err!("line 1: unreadable header: {e}"))?
        .clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(format_err!(
            "line 1: expected header '{}', found '{}'",
            CSV_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        ));
    }

    let mut vectors: Vec<IqVector> = Vec::new();
    let mut current: Vec<Complex32> = Vec::new();
    let mut current_index = 0usize;

    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            format_err!("line {line}: {e}")
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize| -> Result<&str> {
            record
                .get(col)
                .ok_or_else(|| format_err!("line {line}: missing column '{}'", CSV_HEADER[col]))
        };
        let int = |col: usize| -> Result<usize> {
            let raw = field(col)?;
            raw.parse::<usize>()
                .map_err(|_| format_err!("line {line}: column '{}' is not an index: '{raw}'", CSV_HEADER[col]))
        };
        let float = |col: usize| -> Result<f32> {
            let raw = field(col)?;
            let x = raw
                .parse::<f32>()
                .map_err(|_| format_err!("line {line}: column '{}' is not numeric: '{raw}'", CSV_HEADER[col]))?;
            if !x.is_finite() {
                return Err(Error::Data(format!(
                    "line {line}: non-finite value in column '{}'",
                    CSV_HEADER[col]
                )));
            }
            Ok(x)
        };

        let vector = int(0)?;
        let idx = int(1)?;
        let i = float(2)?;
        let q = float(3)?;

        if vector != current_index {
            if vector != current_index + 1 || current.is_empty() {
                return Err(format_err!(
                    "line {line}: vector index {vector} out of order (current {current_index})"
                ));
            }
            vectors.push(IqVector::new(std::mem::take(&mut current))?);
            current_index = vector;
        }
        if idx != current.len() {
            return Err(format_err!(
                "line {line}: sample index {idx} out of order in vector {vector} (expected {})",
                current.len()
            ));
        }
        current.push(Complex32::new(i, q));
    }
    if !current.is_empty() {
        vectors.push(IqVector::new(current)?);
    }
    if let Some(first) = vectors.first() {
        let len = first.len();
        if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != len) {
            return Err(format_err!(
                "vector {i} has {} samples while vector 0 has {len}",
                v.len()
            ));
        }
    }
    Ok(vectors)
}

/// Writes vectors in the CSV capture format. Floats use the shortest
/// representation that parses back to the same `f32`.
pub fn write_csv(path: impl AsRef<Path>, vectors: &[IqVector]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "{}", CSV_HEADER.join(","))?;
        for (vi, v) in vectors.iter().enumerate() {
            for (si, s) in v.samples.iter().enumerate() {
                writeln!(w, "{vi},{si},{},{}", s.re, s.im)?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}
