//! Real-time RF spectrum classification from I/Q snapshots.
//!
//! The pipeline mirrors how a sensing application at the radio unit would
//! use it:
//!
//! * [`analyzer`] parses binary/CSV captures and provides FFT and PSD helpers.
//! * [`plotter`] turns time series into spectrogram matrices, scatter tables,
//!   PNG and CSV files.
//! * [`preprocessor`] crops each snapshot around its dominant energy peak and
//!   builds labeled feature datasets.
//! * [`classifier`] is a small 1D CNN (conv/batch-norm/ReLU blocks, global
//!   average pooling, dense + softmax) with training, evaluation and
//!   serialization.
//! * [`siggen`] synthesizes frequency-domain captures for the six signal
//!   classes.
//! * [`stream`] emulates the periodic sensing loop over a local socket and
//!   classifies windows of frames as they arrive.

pub mod analyzer;
pub mod classifier;
pub mod error;
pub mod plotter;
pub mod preprocessor;
pub mod siggen;
pub mod stream;

pub use analyzer::{IqVector, TimeSeries};
pub use error::{Error, Result};
pub use preprocessor::{FeatureTensor, Label, LabeledDataset};

/// Default number of complex samples per sensing snapshot.
pub const DEFAULT_VECTOR_LEN: usize = 1536;
/// Default number of snapshots packed into one capture file.
pub const DEFAULT_VECTORS_PER_FILE: usize = 100;
/// Default detector output length per snapshot.
pub const DEFAULT_OUT_LEN: usize = 600;
/// Default sliding window of the energy peak detector, in bins.
pub const DEFAULT_DETECT_WINDOW: usize = 64;
/// Time windows evaluated by default.
pub const DEFAULT_WINDOWS: [usize; 4] = [1, 5, 10, 15];
