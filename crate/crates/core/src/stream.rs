//! The periodic sensing loop over a local TCP socket.
//!
//! A producer ([`Server`]) emits one [`Frame`] per sensing period; a
//! consumer ([`classify_stream`]) groups `K` consecutive frames into
//! non-overlapping windows and classifies each one. A window that would
//! span a sequence gap is discarded.
//!
//! Frame wire format, all integers little-endian:
//!
//! ```text
//! "LIQF" | seq: u64 | timestamp_ns: u64 | vector_len: u32 | vector_len × (re: f32, im: f32)
//! ```

use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, TrySendError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::analyzer::IqVector;
use crate::classifier::{argmax, IncrementalForward, ModelBundle};
use crate::error::{format_err, invalid, Error, Result};
use crate::preprocessor::{detect_peak, FeatureTensor, Label};

pub const FRAME_MAGIC: &[u8; 4] = b"LIQF";
pub const FRAME_HEADER_LEN: usize = 24;
/// Default sensing period.
pub const DEFAULT_PERIOD_MS: f64 = 8.0;
/// Header of the record CSV.
pub const RECORD_CSV_HEADER: &str = "first_seq,last_seq,label,prob,latency_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub seq: u64,
    pub timestamp_ns: u64,
    pub samples: Vec<Complex32>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.samples.len() * 8);
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.timestamp_ns.to_le_bytes());
        out.extend_from_slice(&(self.samples.len() as u32).to_le_bytes());
        for s in &self.samples {
            out.extend_from_slice(&s.re.to_le_bytes());
            out.extend_from_slice(&s.im.to_le_bytes());
        }
        out
    }

    /// Reads one frame. `Ok(None)` means the stream ended cleanly at a frame
    /// boundary; ending mid-frame is an error.
    pub fn read_from(r: &mut impl Read) -> Result<Option<Frame>> {
        let mut header = [0u8; FRAME_HEADER_LEN];
        let mut got = 0;
        while got < header.len() {
            match r.read(&mut header[got..]) {
                Ok(0) if got == 0 => return Ok(None),
                Ok(0) => return Err(format_err!("stream ended inside a frame header")),
                Ok(n) => got += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::Stream(e)),
            }
        }
        if &header[..4] != FRAME_MAGIC {
            return Err(format_err!("bad frame magic {:?}", &header[..4]));
        }
        let seq = u64::from_le_bytes(header[4..12].try_into().expect("8 bytes"));
        let timestamp_ns = u64::from_le_bytes(header[12..20].try_into().expect("8 bytes"));
        let len = u32::from_le_bytes(header[20..24].try_into().expect("4 bytes")) as usize;
        if len == 0 {
            return Err(format_err!("frame {seq} has no samples"));
        }
        let mut payload = vec![0u8; len * 8];
        r.read_exact(&mut payload).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => format_err!("stream ended inside frame {seq}"),
            _ => Error::Stream(e),
        })?;
        let samples = payload
            .chunks_exact(8)
            .map(|b| {
                Complex32::new(
                    f32::from_le_bytes(b[..4].try_into().expect("4 bytes")),
                    f32::from_le_bytes(b[4..].try_into().expect("4 bytes")),
                )
            })
            .collect();
        Ok(Some(Frame {
            seq,
            timestamp_ns,
            samples,
        }))
    }
}

/// Per-prediction latency summary after single-pass `|z| > 3` removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub mean_ms: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 when `n == 1`.
    pub std_ms: f64,
    pub outliers_removed: usize,
}

pub const OUTLIER_Z: f64 = 3.0;

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Drops values whose z-score (sample standard deviation) exceeds 3 in
/// magnitude, once, then summarizes the rest.
pub fn latency_report(latencies_ms: &[f64]) -> Result<LatencyStats> {
    if latencies_ms.len() < 2 {
        return Err(invalid!(
            "latency report needs at least 2 records, got {}",
            latencies_ms.len()
        ));
    }
    if latencies_ms.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("latencies must be finite"));
    }
    let (mean, std) = mean_std(latencies_ms);
    let kept: Vec<f64> = if std > 0.0 {
        latencies_ms
            .iter()
            .copied()
            .filter(|v| ((v - mean) / std).abs() <= OUTLIER_Z)
            .collect()
    } else {
        latencies_ms.to_vec()
    };
    let (mean_ms, std_ms) = mean_std(&kept);
    Ok(LatencyStats {
        n: kept.len(),
        mean_ms,
        std_ms,
        outliers_removed: latencies_ms.len() - kept.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOptions {
    pub period: Duration,
    /// Stop after this many frames (sent or dropped).
    pub max_frames: Option<u64>,
    /// Stop once this much time has elapsed since the first frame.
    pub duration: Option<Duration>,
    /// Frames that may wait for the socket before new ones are dropped.
    pub queue: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            period: Duration::from_secs_f64(DEFAULT_PERIOD_MS / 1e3),
            max_frames: None,
            duration: None,
            queue: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServeStats {
    /// Frames handed to the socket.
    pub sent: u64,
    /// Frames dropped because the consumer fell behind.
    pub dropped: u64,
}

/// A bound producer endpoint waiting for its consumer.
#[derive(Debug)]
pub struct Server {
    listener: TcpListener,
}

impl Server {
    pub fn bind(endpoint: impl ToSocketAddrs) -> Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(endpoint)?,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts one consumer and streams `source` to it, one vector per
    /// period, until the source ends, a limit in `opts` is reached, `stop`
    /// is raised or the consumer disconnects.
    ///
    /// Sequence numbers count every produced frame, so drops show up as
    /// gaps on the consumer side.
    pub fn run(
        self,
        source: impl Iterator<Item = IqVector>,
        opts: &ServeOptions,
        stop: &AtomicBool,
    ) -> Result<ServeStats> {
        if opts.period.is_zero() {
            return Err(invalid!("sensing period must be positive"));
        }
        let (stream, _) = self.listener.accept()?;
        stream.set_nodelay(true)?;
        let (tx, rx) = mpsc::sync_channel::<Vec<u8>>(opts.queue.max(1));
        let disconnected = Arc::new(AtomicBool::new(false));
        let writer = {
            let disconnected = Arc::clone(&disconnected);
            thread::spawn(move || -> io::Result<u64> {
                let mut out = BufWriter::new(stream);
                let mut sent = 0;
                for bytes in rx {
                    let res = out.write_all(&bytes).and_then(|_| out.flush());
                    if let Err(e) = res {
                        disconnected.store(true, Ordering::SeqCst);
                        return match e.kind() {
                            ErrorKind::BrokenPipe | ErrorKind::ConnectionReset => Ok(sent),
                            _ => Err(e),
                        };
                    }
                    sent += 1;
                }
                Ok(sent)
            })
        };

        let mut dropped = 0;
        let start = Instant::now();
        for (seq, v) in (0u64..).zip(source) {
            if opts.max_frames.is_some_and(|m| seq >= m) {
                break;
            }
            let offset = opts.period.mul_f64(seq as f64);
            if opts.duration.is_some_and(|d| offset >= d) {
                break;
            }
            let due = start + offset;
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
            if stop.load(Ordering::SeqCst) || disconnected.load(Ordering::SeqCst) {
                break;
            }
            let frame = Frame {
                seq,
                timestamp_ns: unix_nanos(),
                samples: v.into_samples(),
            };
            match tx.try_send(frame.encode()) {
                Ok(()) => {}
                Err(TrySendError::Full(_)) => dropped += 1,
                Err(TrySendError::Disconnected(_)) => break,
            }
        }
        drop(tx);
        let sent = writer
            .join()
            .map_err(|_| invalid!("frame writer thread panicked"))??;
        Ok(ServeStats { sent, dropped })
    }
}

fn unix_nanos() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

/// Vectors of the given capture files, repeated forever in order.
pub fn corpus_source(vectors: Vec<IqVector>) -> Result<impl Iterator<Item = IqVector>> {
    if vectors.is_empty() {
        return Err(invalid!("frame source has no vectors"));
    }
    Ok(vectors.into_iter().cycle())
}

/// One classified window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub first_seq: u64,
    pub last_seq: u64,
    pub label: Label,
    pub prob: f64,
    pub latency_ms: f64,
}

impl StreamRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.first_seq, self.last_seq, self.label, self.prob, self.latency_ms
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub frames: u64,
    pub records: u64,
    /// Windows abandoned because of a sequence gap.
    pub windows_discarded: u64,
    /// Frames of the partial window pending at disconnect.
    pub trailing_frames: u64,
}

/// Turns frames into window classifications.
///
/// Each frame is cropped, expanded and normalized on arrival and its
/// segment pushed through the network incrementally, so completing a
/// window only costs the last segment.
#[derive(Debug)]
pub struct StreamClassifier<'a> {
    model: &'a ModelBundle,
    k: usize,
    forward: IncrementalForward<'a>,
    first_seq: Option<u64>,
    last_seq: Option<u64>,
    pending: usize,
    summary: StreamSummary,
}

impl<'a> StreamClassifier<'a> {
    pub fn new(model: &'a ModelBundle, k: usize) -> Result<Self> {
        let f = &model.features;
        if k == 0 {
            return Err(invalid!("time window K must be at least 1"));
        }
        if f.window != k || f.out_len * k != model.config.input_len {
            return Err(Error::Shape(format!(
                "model expects K={} (input {} = {} x {}), stream uses K={k}",
                f.window, model.config.input_len, f.out_len, f.window
            )));
        }
        Ok(Self {
            model,
            k,
            forward: IncrementalForward::new(&model.network, model.config.input_len),
            first_seq: None,
            last_seq: None,
            pending: 0,
            summary: StreamSummary::default(),
        })
    }

    fn discard(&mut self) {
        if self.pending > 0 {
            self.summary.windows_discarded += 1;
        }
        self.forward.reset();
        self.pending = 0;
        self.first_seq = None;
    }

    /// Feeds one frame received at `received`. Returns a record when the
    /// frame completes a window.
    pub fn push(&mut self, frame: &Frame, received: Instant) -> Result<Option<StreamRecord>> {
        let f = &self.model.features;
        if frame.samples.len() != f.vector_len {
            return Err(Error::Shape(format!(
                "frame {} has {} samples, model expects {}",
                frame.seq,
                frame.samples.len(),
                f.vector_len
            )));
        }
        if let Some(last) = self.last_seq {
            if frame.seq <= last {
                return Err(format_err!(
                    "frame sequence went from {last} to {}",
                    frame.seq
                ));
            }
            if frame.seq != last + 1 {
                self.discard();
            }
        }
        self.summary.frames += 1;
        self.last_seq = Some(frame.seq);
        if self.pending == 0 {
            self.first_seq = Some(frame.seq);
        }

        let slice = detect_peak(&frame.samples, f.detect_window, f.out_len)?;
        let mut seg = FeatureTensor::from_samples(&frame.samples[slice.range()]);
        self.model.norm_stats.apply_to(seg.data_mut());
        self.pending += 1;
        let Some(probs) = self.forward.push(&seg)? else {
            return Ok(None);
        };
        let code = argmax(&probs);
        let record = StreamRecord {
            first_seq: self.first_seq.take().expect("window has a first frame"),
            last_seq: frame.seq,
            label: Label::from_code(code as u8)?,
            prob: probs[code],
            latency_ms: received.elapsed().as_secs_f64() * 1e3,
        };
        self.pending = 0;
        self.summary.records += 1;
        Ok(Some(record))
    }

    pub fn window(&self) -> usize {
        self.k
    }

    /// Counters so far, including the current partial window.
    pub fn summary(&self) -> StreamSummary {
        StreamSummary {
            trailing_frames: self.pending as u64,
            ..self.summary.clone()
        }
    }
}

/// Classifies every frame read from `reader` until it ends. `on_record`
/// returns `false` to stop early.
pub fn classify_frames(
    reader: &mut impl Read,
    model: &ModelBundle,
    k: usize,
    mut on_record: impl FnMut(&StreamRecord) -> bool,
) -> Result<StreamSummary> {
    let mut clf = StreamClassifier::new(model, k)?;
    loop {
        let frame = match Frame::read_from(reader) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(Error::Stream(e)) if is_disconnect(&e) => break,
            Err(e) => return Err(e),
        };
        let received = Instant::now();
        if let Some(rec) = clf.push(&frame, received)? {
            if !on_record(&rec) {
                break;
            }
        }
    }
    Ok(clf.summary())
}

fn is_disconnect(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted | ErrorKind::BrokenPipe
    )
}

/// Connects to `endpoint`, retrying for up to `patience` while the producer
/// starts.
pub fn connect(endpoint: impl ToSocketAddrs + Copy, patience: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + patience;
    loop {
        match TcpStream::connect(endpoint) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) if Instant::now() < deadline && e.kind() == ErrorKind::ConnectionRefused => {
                thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(Error::Stream(e)),
        }
    }
}

/// Consumer side of the loop: checks the model against `k`, connects and
/// classifies windows until the producer disconnects (a partial trailing
/// window is discarded) or `on_record` returns `false`.
pub fn classify_stream(
    endpoint: impl ToSocketAddrs + Copy,
    model: &ModelBundle,
    k: usize,
    on_record: impl FnMut(&StreamRecord) -> bool,
) -> Result<StreamSummary> {
    StreamClassifier::new(model, k)?;
    let stream = connect(endpoint, Duration::from_secs(10))?;
    let mut reader = BufReader::with_capacity(1 << 16, stream);
    classify_frames(&mut reader, model, k, on_record)
}
