//! Running per-sample cumulative average of received pulses, used as the
//! desired/reference signal d.
//!
//! After K pulses every element of d is the arithmetic mean of the K
//! corresponding samples:
//!
//! ```text
//! d_new[n] = (d_old[n] * k + x_new[n]) / (k + 1)
//! ```
//!
//! The average is always maintained in binary64 regardless of the filter
//! engine; a fixed-engine chain quantizes d only at the point of emission
//! into the datapath.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Frame;

/// Per-sample running mean plus the count of pulses absorbed so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAverage {
    d: Vec<f64>,
    pulses_absorbed: u64,
}

impl EnsembleAverage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pulses_absorbed(&self) -> u64 {
        self.pulses_absorbed
    }

    pub fn current(&self) -> &[f64] {
        &self.d
    }

    /// Fold one received frame into the average and emit the updated d as a
    /// frame carrying the same pulse index. The d frame is released only
    /// once the whole x frame has been absorbed, so nothing downstream can
    /// observe a partially updated average.
    pub fn absorb(&mut self, x_frame: &Frame) -> Result<Frame> {
        if self.pulses_absorbed == 0 {
            self.d = vec![0.0; x_frame.len()];
        } else if self.d.len() != x_frame.len() {
            return Err(Error::LengthMismatch {
                left: self.d.len(),
                right: x_frame.len(),
            });
        }
        let k = self.pulses_absorbed as f64;
        for (dn, &xn) in self.d.iter_mut().zip(&x_frame.samples) {
            *dn = (*dn * k + xn) / (k + 1.0);
        }
        self.pulses_absorbed += 1;
        Ok(Frame::new(self.d.clone(), x_frame.pulse_index))
    }
}
