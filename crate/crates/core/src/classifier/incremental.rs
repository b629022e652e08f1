//! Streaming inference that processes a `K`-vector window as its vectors
//! arrive.
//!
//! In inference mode every conv/batch-norm/ReLU output depends only on a
//! bounded neighbourhood of the input and global average pooling is a sum,
//! so the pooled sums for positions whose receptive field is complete can
//! be accumulated as soon as their inputs exist. When the last segment
//! arrives only its own positions (plus the right halo of the previous
//! one) remain to compute.

use super::network::Network;
use crate::error::{invalid, Result};
use crate::preprocessor::{FeatureTensor, CHANNELS};

#[derive(Debug)]
pub struct IncrementalForward<'a> {
    net: &'a Network<f32>,
    len: usize,
    /// Channel-major input, `[CHANNELS][len]`.
    input: Vec<f32>,
    filled: usize,
    done: usize,
    sums: Vec<f64>,
}

impl<'a> IncrementalForward<'a> {
    pub fn new(net: &'a Network<f32>, len: usize) -> Self {
        Self {
            net,
            len,
            input: vec![0.0; CHANNELS * len],
            filled: 0,
            done: 0,
            sums: vec![0.0; net.arch.filters],
        }
    }

    pub fn filled(&self) -> usize {
        self.filled
    }

    pub fn reset(&mut self) {
        self.input.fill(0.0);
        self.filled = 0;
        self.done = 0;
        self.sums.fill(0.0);
    }

    /// Appends a normalized segment. Returns the class probabilities once
    /// the whole input has been supplied, after which the state resets.
    pub fn push(&mut self, segment: &FeatureTensor) -> Result<Option<Vec<f64>>> {
        let n = segment.len();
        if self.filled + n > self.len {
            return Err(invalid!(
                "segment of {n} samples overflows input of {} ({} filled)",
                self.len,
                self.filled
            ));
        }
        for (i, s) in segment.data().chunks_exact(CHANNELS).enumerate() {
            for (c, &v) in s.iter().enumerate() {
                self.input[c * self.len + self.filled + i] = v;
            }
        }
        self.filled += n;

        let ready = if self.filled == self.len {
            self.len
        } else {
            self.filled.saturating_sub(self.net.right_halo())
        };
        if ready > self.done {
            let part = self.net.infer_span_sums(&self.input, self.len, self.done..ready);
            for (acc, v) in self.sums.iter_mut().zip(part) {
                *acc += v;
            }
            self.done = ready;
        }
        if self.filled < self.len {
            return Ok(None);
        }
        let probs = self.net.head(&self.sums, self.len);
        self.reset();
        Ok(Some(probs))
    }
}
