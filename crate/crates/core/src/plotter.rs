//! Spectrograms, scatter tables and their PNG/CSV renderings.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzer::{self, magnitude_of, phase_of, IqVector, TimeSeries};
use crate::error::{invalid, Error, Result};

/// Added to linear power before taking `10·log10`.
pub const DB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    #[serde(rename = "db")]
    Decibel,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Scale::Linear),
            "db" => Ok(Scale::Decibel),
            other => Err(invalid!("unknown scale '{other}' (expected linear or db)")),
        }
    }
}

/// Time-frequency power matrix, one row per window, bins in natural DFT
/// order unless [`SpectrogramMatrix::fftshift`] was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub values: Vec<f64>,
    pub window_size: usize,
    pub overlap: usize,
    pub scale: Scale,
}

impl SpectrogramMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    /// Moves DC to the middle column of every row, for display.
    pub fn fftshift(&mut self) {
        let half = self.cols.div_ceil(2);
        for row in self.values.chunks_exact_mut(self.cols) {
            row.rotate_left(half);
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged spectrogram rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values: rows.into_iter().flatten().collect(),
            window_size: cols,
            overlap: 0,
            scale: Scale::Linear,
        })
    }
}

/// Number of full windows of `window_size` samples stepping by
/// `window_size - overlap` over `total` samples.
pub fn spectrogram_rows(total: usize, window_size: usize, overlap: usize) -> usize {
    if total < window_size || overlap >= window_size {
        return 0;
    }
    (total - window_size) / (window_size - overlap) + 1
}

/// Rectangular-window short-time power spectrum of the flattened series.
/// Samples past the last full window are dropped.
pub fn spectrogram(
    ts: &TimeSeries,
    window_size: usize,
    overlap: usize,
    scale: Scale,
) -> Result<SpectrogramMatrix> {
    if window_size < 2 {
        return Err(invalid!("window size must be at least 2, got {window_size}"));
    }
    if overlap >= window_size {
        return Err(invalid!(
            "overlap {overlap} must be smaller than the window size {window_size}"
        ));
    }
    let samples = ts.flatten();
    if samples.len() < window_size {
        return Err(invalid!(
            "window size {window_size} exceeds the {} available samples",
            samples.len()
        ));
    }
    let hop = window_size - overlap;
    let rows = spectrogram_rows(samples.len(), window_size, overlap);

    let values: Vec<f64> = (0..rows)
        .into_par_iter()
        .flat_map_iter(|r| {
            let start = r * hop;
            let mut buf: Vec<Complex64> = samples[start..start + window_size]
                .iter()
                .map(|s| Complex64::new(s.re as f64, s.im as f64))
                .collect();
            analyzer::fft_in_place(&mut buf);
            buf.into_iter().map(move |x| {
                let p = x.norm_sqr();
                match scale {
                    Scale::Linear => p,
                    Scale::Decibel => 10.0 * (p + DB_FLOOR).log10(),
                }
            })
        })
        .collect();

    Ok(SpectrogramMatrix {
        rows,
        cols: window_size,
        values,
        window_size,
        overlap,
        scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterMode {
    /// `(re, im)` pairs.
    Components,
    /// `(magnitude, phase)` pairs.
    MagnitudePhase,
}

impl std::str::FromStr for ScatterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "components" => Ok(ScatterMode::Components),
            "magnitude_phase" | "magnitude-phase" => Ok(ScatterMode::MagnitudePhase),
            other => Err(invalid!("unknown scatter mode '{other}'")),
        }
    }
}

pub fn scatter_data(v: &IqVector, mode: ScatterMode) -> Vec<(f32, f32)> {
    v.samples()
        .iter()
        .map(|s| match mode {
            ScatterMode::Components => (s.re, s.im),
            ScatterMode::MagnitudePhase => (magnitude_of(s.re, s.im), phase_of(s.re, s.im)),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderFormat {
    Png,
    Csv,
}

impl std::str::FromStr for RenderFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "png" => Ok(RenderFormat::Png),
            "csv" => Ok(RenderFormat::Csv),
            other => Err(invalid!("unknown format '{other}' (expected png or csv)")),
        }
    }
}

// Perceptually ordered dark-blue to yellow ramp (viridis anchors).
const COLORMAP: [[f64; 3]; 6] = [
    [68.0, 1.0, 84.0],
    [65.0, 68.0, 135.0],
    [42.0, 120.0, 142.0],
    [34.0, 168.0, 132.0],
    [122.0, 209.0, 81.0],
    [253.0, 231.0, 37.0],
];

/// Maps `t ∈ [0, 1]` onto the colormap.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (COLORMAP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(COLORMAP.len() - 2);
    let f = pos - i as f64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (COLORMAP[i][c] + f * (COLORMAP[i + 1][c] - COLORMAP[i][c])).round() as u8;
    }
    out
}

/// Writes the matrix as a PNG (one pixel per cell, row 0 on top, min-max
/// normalized) or as CSV (one matrix row per line).
pub fn render(matrix: &SpectrogramMatrix, path: impl AsRef<Path>, format: RenderFormat) -> Result<()> {
    let path = path.as_ref();
    if matrix.rows == 0 || matrix.cols == 0 {
        return Err(invalid!("cannot render an empty matrix"));
    }
    match format {
        RenderFormat::Csv => write_matrix_csv(matrix, path),
        RenderFormat::Png => write_matrix_png(matrix, path),
    }
}

fn write_matrix_csv(matrix: &SpectrogramMatrix, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for r in 0..matrix.rows {
            let line = matrix
                .row(r)
                .iter()
                .map(|v| format!("{v:.8e}"))
                .collect::<Vec<_>>()
                .join(",");
            writeln!(w, "{line}")?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

fn write_matrix_png(matrix: &SpectrogramMatrix, path: &Path) -> Result<()> {
    let (lo, hi) = matrix
        .values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img: RgbImage = ImageBuffer::from_fn(matrix.cols as u32, matrix.rows as u32, |x, y| {
        let v = matrix.get(y as usize, x as usize);
        Rgb(colormap((v - lo) / span))
    });
    save_png(&img, path)
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    })
}

/// Reads back a matrix written by [`render`] in CSV form.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        Error::Format(format!("{}: line {}: bad value '{f}'", path.display(), i + 1))
                    })
                })
                .collect()
        })
        .collect()
}

/// Writes scatter pairs as CSV (`x,y` header named after the mode) or as a
/// square PNG point cloud of side `size`.
pub fn render_scatter(
    pairs: &[(f32, f32)],
    mode: ScatterMode,
    path: impl AsRef<Path>,
    format: RenderFormat,
    size: u32,
) -> Result<()> {
    let path = path.as_ref();
    if pairs.is_empty() {
        return Err(invalid!("cannot render an empty scatter"));
    }
    match format {
        RenderFormat::Csv => {
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            let header = match mode {
                ScatterMode::Components => "i,q",
                ScatterMode::MagnitudePhase => "magnitude,phase",
            };
            let res: std::io::Result<()> = (|| {
                writeln!(w, "{header}")?;
                for (x, y) in pairs {
                    writeln!(w, "{x},{y}")?;
                }
                w.flush()
            })();
            res.map_err(|e| Error::io(path, e))
        }
        RenderFormat::Png => {
            let size = size.max(8);
            let bounds = |f: fn(&(f32, f32)) -> f32| {
                let (lo, hi) = pairs
                    .iter()
                    .map(f)
                    .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                (lo, if hi > lo { hi - lo } else { 1.0 })
            };
            let (x0, xs) = bounds(|p| p.0);
            let (y0, ys) = bounds(|p| p.1);
            let mut img: RgbImage = ImageBuffer::from_pixel(size, size, Rgb([255, 255, 255]));
            let ink = Rgb(colormap(0.0));
            let last = (size - 1) as f32;
            for (x, y) in pairs {
                let px = (((x - x0) / xs) * last).round() as u32;
                let py = last as u32 - (((y - y0) / ys) * last).round() as u32;
                img.put_pixel(px.min(size - 1), py.min(size - 1), ink);
            }
            save_png(&img, path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex32;

    fn tone(n: usize, bin: f64, amp: f32) -> IqVector {
        IqVector::new(
            (0..n)
                .map(|i| {
                    let ph = 2.0 * std::f64::consts::PI * bin * i as f64 / n as f64;
                    Complex32::new(amp * ph.cos() as f32, amp * ph.sin() as f32)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn row_count_example() {
        let ts = TimeSeries::new(vec![tone(1536, 12.0, 1.0)]).unwrap();
        let m = spectrogram(&ts, 256, 128, Scale::Linear).unwrap();
        assert_eq!((m.rows, m.cols), (11, 256));
    }

    #[test]
    fn stationary_tone_has_fixed_argmax() {
        // 96 cycles over 1536 samples lands on bin 16 of every 256-sample window.
        let ts = TimeSeries::new(vec![tone(1536, 96.0, 1.0)]).unwrap();
        let m = spectrogram(&ts, 256, 128, Scale::Decibel).unwrap();
        for r in 0..m.rows {
            let row = m.row(r);
            let arg = (0..m.cols).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(arg, 16);
        }
    }

    #[test]
    fn invalid_windows() {
        let ts = TimeSeries::new(vec![tone(64, 1.0, 1.0)]).unwrap();
        assert!(matches!(spectrogram(&ts, 16, 16, Scale::Linear), Err(Error::InvalidArgument(_))));
        assert!(matches!(spectrogram(&ts, 128, 0, Scale::Linear), Err(Error::InvalidArgument(_))));
        assert!(matches!(spectrogram(&ts, 1, 0, Scale::Linear), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn scatter_examples() {
        let v = IqVector::new(vec![Complex32::new(1.0, 1.0)]).unwrap();
        assert_eq!(scatter_data(&v, ScatterMode::Components), vec![(1.0, 1.0)]);
        let v = IqVector::new(vec![Complex32::new(0.0, 2.0)]).unwrap();
        assert_eq!(
            scatter_data(&v, ScatterMode::MagnitudePhase),
            vec![(2.0, std::f32::consts::FRAC_PI_2)]
        );
    }

    #[test]
    fn fftshift_moves_dc_to_center() {
        let mut m = SpectrogramMatrix::from_rows(vec![vec![0.0, 1.0, 2.0, 3.0]]).unwrap();
        m.fftshift();
        assert_eq!(m.row(0), &[2.0, 3.0, 0.0, 1.0]);
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [68, 1, 84]);
        assert_eq!(colormap(1.0), [253, 231, 37]);
        assert_eq!(colormap(f64::NAN), [68, 1, 84]);
    }
}
