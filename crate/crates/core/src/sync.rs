//! Frame-level stream synchronization: pairs the d and y sides into
//! lockstep using end-of-frame markers, and optionally compensates a fixed
//! group delay between the two streams.
//!
//! Frames are consumed strictly in arrival order on each side. A pair is
//! emitted only when both sides hold a complete frame; a length or
//! pulse-index mismatch means the stream is corrupted and aborts the run.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Frame;

pub const DEFAULT_QUEUE_CAP: usize = 16;

/// Pending-frame queues for both sides of the synchronizer.
#[derive(Debug, Clone)]
pub struct FrameSynchronizer {
    pending_d: VecDeque<Frame>,
    pending_y: VecDeque<Frame>,
    emitted: u64,
    cap: usize,
}

impl Default for FrameSynchronizer {
    fn default() -> Self {
        Self::with_cap(DEFAULT_QUEUE_CAP)
    }
}

impl FrameSynchronizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queue cap per side; overflow is an explicit error, never silent loss.
    pub fn with_cap(cap: usize) -> Self {
        FrameSynchronizer {
            pending_d: VecDeque::new(),
            pending_y: VecDeque::new(),
            emitted: 0,
            cap,
        }
    }

    pub fn pending_d(&self) -> usize {
        self.pending_d.len()
    }

    pub fn pending_y(&self) -> usize {
        self.pending_y.len()
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn push_d(&mut self, frame: Frame) -> Result<Vec<(Frame, Frame)>> {
        Self::admit(&mut self.pending_d, frame, "d", self.cap)?;
        self.drain()
    }

    pub fn push_y(&mut self, frame: Frame) -> Result<Vec<(Frame, Frame)>> {
        Self::admit(&mut self.pending_y, frame, "y", self.cap)?;
        self.drain()
    }

    fn admit(
        queue: &mut VecDeque<Frame>,
        frame: Frame,
        side: &'static str,
        cap: usize,
    ) -> Result<()> {
        if !frame.last {
            return Err(Error::Alignment {
                pair: 0,
                reason: format!("incomplete frame pushed on side {side} (missing end-of-frame marker)"),
            });
        }
        if queue.len() >= cap {
            return Err(Error::QueueOverflow { side, cap });
        }
        queue.push_back(frame);
        Ok(())
    }

    fn drain(&mut self) -> Result<Vec<(Frame, Frame)>> {
        let mut pairs = Vec::new();
        while !self.pending_d.is_empty() && !self.pending_y.is_empty() {
            let d = self.pending_d.pop_front().unwrap();
            let y = self.pending_y.pop_front().unwrap();
            if d.len() != y.len() {
                return Err(Error::Alignment {
                    pair: self.emitted,
                    reason: format!("frame lengths {} vs {}", d.len(), y.len()),
                });
            }
            if d.pulse_index != y.pulse_index {
                return Err(Error::Alignment {
                    pair: self.emitted,
                    reason: format!("pulse indices {} vs {}", d.pulse_index, y.pulse_index),
                });
            }
            self.emitted += 1;
            pairs.push((d, y));
        }
        Ok(pairs)
    }
}

/// Shifts one side of an aligned pair stream by a fixed sample offset,
/// carrying the remainder across frame boundaries and zero-filling the
/// first `|offset|` samples of the run. Positive offsets delay the y side;
/// negative offsets delay the d side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupDelayCompensator {
    offset: i64,
    carry: VecDeque<f64>,
}

impl GroupDelayCompensator {
    pub fn new(offset: i64) -> Self {
        let mut carry = VecDeque::new();
        for _ in 0..offset.unsigned_abs() {
            carry.push_back(0.0);
        }
        GroupDelayCompensator { offset, carry }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// In-flight carry samples, oldest first (for state export).
    pub fn carry_samples(&self) -> Vec<f64> {
        self.carry.iter().copied().collect()
    }

    /// Replace the carry contents (for resuming an exported run).
    pub fn restore_carry(&mut self, samples: &[f64]) {
        self.carry = samples.iter().copied().collect();
    }

    /// Apply the offset to one (d, y) pair.
    pub fn apply(&mut self, pair: (Frame, Frame)) -> Result<(Frame, Frame)> {
        let (d, y) = pair;
        if self.offset == 0 {
            return Ok((d, y));
        }
        if self.offset.unsigned_abs() as usize >= d.len() {
            return Err(Error::OffsetTooLarge {
                offset: self.offset,
                frame_len: d.len(),
            });
        }
        if self.offset > 0 {
            let y = self.shift(y);
            Ok((d, y))
        } else {
            let d = self.shift(d);
            Ok((d, y))
        }
    }

    fn shift(&mut self, frame: Frame) -> Frame {
        let len = frame.len();
        let mut out = Vec::with_capacity(len);
        for s in frame.samples {
            self.carry.push_back(s);
            out.push(self.carry.pop_front().unwrap());
        }
        debug_assert_eq!(out.len(), len);
        Frame::new(out, frame.pulse_index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(samples: &[f64], k: u64) -> Frame {
        Frame::new(samples.to_vec(), k)
    }

    #[test]
    fn pair_emitted_when_both_sides_ready() {
        let mut sync = FrameSynchronizer::new();
        assert!(sync.push_d(frame(&[1.0, 2.0], 0)).unwrap().is_empty());
        let pairs = sync.push_y(frame(&[3.0, 4.0], 0)).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].0.samples, vec![1.0, 2.0]);
        assert_eq!(pairs[0].1.samples, vec![3.0, 4.0]);
        assert_eq!(sync.emitted(), 1);
    }

    #[test]
    fn one_sided_pushes_just_pend() {
        let mut sync = FrameSynchronizer::new();
        for k in 0..3 {
            assert!(sync.push_d(frame(&[0.0], k)).unwrap().is_empty());
        }
        assert_eq!(sync.pending_d(), 3);
        assert_eq!(sync.pending_y(), 0);
    }

    #[test]
    fn length_mismatch_is_an_alignment_error() {
        let mut sync = FrameSynchronizer::new();
        sync.push_d(Frame::new(vec![0.0; 3932], 0)).unwrap();
        let err = sync.push_y(Frame::new(vec![0.0; 3931], 0)).unwrap_err();
        assert!(matches!(err, Error::Alignment { .. }));
    }

    #[test]
    fn pulse_index_mismatch_is_an_alignment_error() {
        let mut sync = FrameSynchronizer::new();
        sync.push_d(frame(&[0.0], 0)).unwrap();
        let err = sync.push_y(frame(&[0.0], 1)).unwrap_err();
        assert!(matches!(err, Error::Alignment { .. }));
    }

    #[test]
    fn queue_cap_overflows_loudly() {
        let mut sync = FrameSynchronizer::with_cap(2);
        sync.push_d(frame(&[0.0], 0)).unwrap();
        sync.push_d(frame(&[0.0], 1)).unwrap();
        let err = sync.push_d(frame(&[0.0], 2)).unwrap_err();
        assert!(matches!(err, Error::QueueOverflow { side: "d", cap: 2 }));
    }

    #[test]
    fn incomplete_frame_rejected() {
        let mut sync = FrameSynchronizer::new();
        let mut f = frame(&[0.0], 0);
        f.last = false;
        assert!(sync.push_d(f).is_err());
    }

    #[test]
    fn zero_offset_is_identity() {
        let mut comp = GroupDelayCompensator::new(0);
        let pair = (frame(&[1.0, 2.0], 0), frame(&[3.0, 4.0], 0));
        let out = comp.apply(pair.clone()).unwrap();
        assert_eq!(out, pair);
    }

    #[test]
    fn positive_offset_delays_y_with_carry() {
        let mut comp = GroupDelayCompensator::new(2);
        let d = frame(&[9.0; 4], 0);
        let (_, y1) = comp
            .apply((d.clone(), frame(&[1.0, 2.0, 3.0, 4.0], 0)))
            .unwrap();
        assert_eq!(y1.samples, vec![0.0, 0.0, 1.0, 2.0]);
        let (_, y2) = comp
            .apply((d, frame(&[5.0, 6.0, 7.0, 8.0], 1)))
            .unwrap();
        // 3, 4 carried over from the first frame
        assert_eq!(y2.samples, vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn negative_offset_delays_d_side() {
        let mut comp = GroupDelayCompensator::new(-1);
        let (d, y) = comp
            .apply((frame(&[1.0, 2.0, 3.0], 0), frame(&[7.0, 8.0, 9.0], 0)))
            .unwrap();
        assert_eq!(d.samples, vec![0.0, 1.0, 2.0]);
        assert_eq!(y.samples, vec![7.0, 8.0, 9.0]);
    }

    #[test]
    fn oversized_offset_errors() {
        let mut comp = GroupDelayCompensator::new(5);
        let err = comp
            .apply((frame(&[0.0; 4], 0), frame(&[0.0; 4], 0)))
            .unwrap_err();
        assert!(matches!(err, Error::OffsetTooLarge { .. }));
    }
}
