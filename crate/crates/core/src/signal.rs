//! Mock readout-pulse synthesis and the loopback channel model.
//!
//! Pulses are sinusoidal bursts with optional additive white Gaussian noise.
//! Noise generation is fully deterministic: each `(seed, pulse_index)` pair
//! keys its own ChaCha8 stream (key derived with SplitMix64), and Gaussian
//! variates come from Box-Muller on 53-bit uniforms, so distinct pulses draw
//! from independent streams and a run is reproducible bit-for-bit.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{quantize, QFormat, Rounding};
use crate::error::{Error, Result};

/// Pulse envelope shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Envelope {
    #[default]
    Rectangular,
    /// Flat top with raised-cosine ramps covering `ramp_fraction` of the
    /// frame on each end.
    FlatTopCosineRamp { ramp_fraction: f64 },
}

/// Parametric description of one mock readout pulse and its noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Carrier frequency in Hz (post digital down-conversion).
    pub carrier_freq: f64,
    /// Pulse duration in seconds.
    pub duration: f64,
    /// Peak amplitude in normalized units.
    pub amplitude: f64,
    #[serde(default)]
    pub envelope: Envelope,
    /// Standard deviation of the additive white Gaussian noise.
    pub noise_sigma: f64,
    /// Sample rate in Hz.
    pub sample_rate: f64,
    /// Initial carrier phase in radians.
    #[serde(default)]
    pub phase0: f64,
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::invalid_config("sample_rate", "must be finite and > 0"));
        }
        if !(self.carrier_freq >= 0.0 && self.carrier_freq < self.sample_rate / 2.0) {
            return Err(Error::invalid_config(
                "carrier_freq",
                format!(
                    "{} must lie in [0, sample_rate/2 = {})",
                    self.carrier_freq,
                    self.sample_rate / 2.0
                ),
            ));
        }
        if self.duration * self.sample_rate < 1.0 {
            return Err(Error::invalid_config(
                "duration",
                "duration * sample_rate must cover at least 1 sample",
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid_config("noise_sigma", "must be finite and >= 0"));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid_config("amplitude", "must be finite and >= 0"));
        }
        if let Envelope::FlatTopCosineRamp { ramp_fraction } = self.envelope {
            if !(0.0..=0.5).contains(&ramp_fraction) {
                return Err(Error::invalid_config("envelope.ramp_fraction", "must be in [0, 0.5]"));
            }
        }
        Ok(())
    }

    /// Number of samples in one generated frame.
    pub fn frame_len(&self) -> usize {
        (self.duration * self.sample_rate).floor() as usize
    }

    fn envelope_at(&self, n: usize, len: usize) -> f64 {
        match self.envelope {
            Envelope::Rectangular => 1.0,
            Envelope::FlatTopCosineRamp { ramp_fraction } => {
                let ramp = (ramp_fraction * len as f64).floor();
                if ramp < 1.0 {
                    return 1.0;
                }
                let n = n as f64;
                let tail = (len - 1) as f64 - n;
                if n < ramp {
                    0.5 * (1.0 - (std::f64::consts::PI * (1.0 - n / ramp)).cos())
                } else if tail < ramp {
                    0.5 * (1.0 - (std::f64::consts::PI * (1.0 - tail / ramp)).cos())
                } else {
                    1.0
                }
            }
        }
    }
}

/// One pulse worth of samples plus its end-of-frame marker and index in the
/// pulse train. Samples are carried as binary64; fixed-point stages quantize
/// at their own boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub samples: Vec<f64>,
    /// End-of-frame marker (the TLAST analog); true once the frame is
    /// complete, which is always the case for constructed frames.
    pub last: bool,
    pub pulse_index: u64,
}

impl Frame {
    pub fn new(samples: Vec<f64>, pulse_index: u64) -> Self {
        Frame {
            samples,
            last: true,
            pulse_index,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared amplitude over the frame.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Parametric stand-in for the DAC -> cable -> ADC loopback: a gain, an
/// integer delay, and optional quantization to the ADC sample format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub gain: f64,
    /// Delay in whole samples, zero-filled at the head of each frame.
    pub delay: usize,
    /// Quantize to the sample Q-format on the way through (14-bit converter
    /// behavior). Off means the channel is transparent.
    pub adc_quantize: bool,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            gain: 1.0,
            delay: 0,
            adc_quantize: true,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !self.gain.is_finite() {
            return Err(Error::invalid_config("channel.gain", "must be finite"));
        }
        Ok(())
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 32-byte ChaCha key for the noise stream of pulse `k` under `seed`.
fn stream_key(seed: u64, k: u64) -> [u8; 32] {
    let mut state = seed ^ splitmix64(&mut { k });
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Deterministic Gaussian stream for one pulse.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64, pulse_index: u64) -> Self {
        GaussianStream {
            rng: ChaCha8Rng::from_seed(stream_key(seed, pulse_index)),
            spare: None,
        }
    }

    /// Uniform in (0, 1]: 53-bit mantissa, never zero so ln() is safe.
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate via Box-Muller.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Synthesize pulse `k`: the noiseless waveform and the same waveform with
/// additive white Gaussian noise from the `(seed, k)` stream. The clean
/// shape is identical for every `k`; only the noise differs.
pub fn generate_pulse(spec: &PulseSpec, seed: u64, k: u64) -> Result<(Frame, Frame)> {
    spec.validate()?;
    let len = spec.frame_len();
    let omega = 2.0 * std::f64::consts::PI * spec.carrier_freq / spec.sample_rate;
    let mut clean = Vec::with_capacity(len);
    for n in 0..len {
        let env = spec.envelope_at(n, len);
        clean.push(spec.amplitude * env * (omega * n as f64 + spec.phase0).sin());
    }
    let noisy = if spec.noise_sigma == 0.0 {
        clean.clone()
    } else {
        let mut rng = GaussianStream::new(seed, k);
        clean
            .iter()
            .map(|c| c + spec.noise_sigma * rng.next_normal())
            .collect()
    };
    Ok((Frame::new(clean, k), Frame::new(noisy, k)))
}

/// Pass a frame through the channel model. Returns the output frame and the
/// number of samples that hit the quantizer's saturation rails.
pub fn apply_channel(
    frame: &Frame,
    ch: &ChannelModel,
    sample_format: QFormat,
    rounding: Rounding,
) -> (Frame, u64) {
    let mut sat_count = 0u64;
    let out: Vec<f64> = (0..frame.len())
        .map(|n| {
            let v = if n < ch.delay {
                0.0
            } else {
                ch.gain * frame.samples[n - ch.delay]
            };
            if ch.adc_quantize {
                let code = quantize(v, sample_format, rounding);
                if code == sample_format.max_code() || code == sample_format.min_code() {
                    // count rail hits only when the input was actually outside
                    if v > sample_format.max_value() || v < sample_format.min_value() {
                        sat_count += 1;
                    }
                }
                sample_format.decode(code)
            } else {
                v
            }
        })
        .collect();
    (Frame::new(out, frame.pulse_index), sat_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_30mhz() -> PulseSpec {
        PulseSpec {
            carrier_freq: 30e6,
            duration: 8e-6,
            amplitude: 0.9,
            envelope: Envelope::Rectangular,
            noise_sigma: 1.0,
            sample_rate: 491.52e6,
            phase0: 0.0,
        }
    }

    #[test]
    fn demo_frame_length_is_3932() {
        // floor(8e-6 * 491.52e6) = floor(3932.16)
        assert_eq!(spec_30mhz().frame_len(), 3932);
    }

    #[test]
    fn zero_sigma_noisy_equals_clean() {
        let mut spec = spec_30mhz();
        spec.noise_sigma = 0.0;
        let (clean, noisy) = generate_pulse(&spec, 7, 0).unwrap();
        assert_eq!(clean, noisy);
    }

    #[test]
    fn nyquist_violation_rejected() {
        let mut spec = spec_30mhz();
        spec.carrier_freq = 300e6;
        assert!(generate_pulse(&spec, 0, 0).is_err());
    }

    #[test]
    fn zero_amplitude_noise_variance_near_unity() {
        let mut spec = spec_30mhz();
        spec.amplitude = 0.0;
        spec.duration = 300e-6; // > 1e5 samples
        let (clean, noisy) = generate_pulse(&spec, 42, 0).unwrap();
        assert!(clean.samples.iter().all(|&s| s == 0.0));
        let var = noisy.power();
        assert!(noisy.len() >= 100_000);
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = spec_30mhz();
        let a = generate_pulse(&spec, 99, 3).unwrap();
        let b = generate_pulse(&spec, 99, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clean_shape_identical_across_pulse_indices() {
        let spec = spec_30mhz();
        let (c0, _) = generate_pulse(&spec, 1, 0).unwrap();
        let (c5, _) = generate_pulse(&spec, 1, 5).unwrap();
        assert_eq!(c0.samples, c5.samples);
    }

    #[test]
    fn noise_streams_independent_across_pulses() {
        let mut spec = spec_30mhz();
        spec.amplitude = 0.0;
        let (_, n0) = generate_pulse(&spec, 5, 0).unwrap();
        let (_, n1) = generate_pulse(&spec, 5, 1).unwrap();
        let len = n0.len() as f64;
        let corr: f64 = n0
            .samples
            .iter()
            .zip(&n1.samples)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / len;
        assert!(corr.abs() < 3.0 / len.sqrt(), "corr {corr}");
    }

    #[test]
    fn identity_channel_is_transparent() {
        let frame = Frame::new(vec![0.5, -0.25, 0.0], 0);
        let ch = ChannelModel {
            gain: 1.0,
            delay: 0,
            adc_quantize: false,
        };
        let fmt = QFormat::new(16, 14).unwrap();
        let (out, sats) = apply_channel(&frame, &ch, fmt, Rounding::RoundHalfEven);
        assert_eq!(out.samples, frame.samples);
        assert_eq!(sats, 0);
    }

    #[test]
    fn channel_delay_shifts_impulse() {
        let frame = Frame::new(vec![1.0, 0.0, 0.0, 0.0, 0.0], 0);
        let ch = ChannelModel {
            gain: 1.0,
            delay: 3,
            adc_quantize: true,
        };
        let fmt = QFormat::new(16, 14).unwrap();
        let (out, _) = apply_channel(&frame, &ch, fmt, Rounding::RoundHalfEven);
        let q1 = fmt.decode(quantize(1.0, fmt, Rounding::RoundHalfEven));
        assert_eq!(out.samples, vec![0.0, 0.0, 0.0, q1, 0.0]);
    }

    #[test]
    fn channel_gain_scales_constant() {
        let frame = Frame::new(vec![1.0; 4], 2);
        let ch = ChannelModel {
            gain: 0.5,
            delay: 0,
            adc_quantize: true,
        };
        let fmt = QFormat::new(16, 14).unwrap();
        let (out, _) = apply_channel(&frame, &ch, fmt, Rounding::RoundHalfEven);
        assert!(out.samples.iter().all(|&s| s == 0.5));
        assert_eq!(out.pulse_index, 2);
    }

    #[test]
    fn channel_counts_saturation() {
        let frame = Frame::new(vec![5.0, -5.0, 0.1], 0);
        let ch = ChannelModel::default();
        let fmt = QFormat::new(16, 14).unwrap();
        let (out, sats) = apply_channel(&frame, &ch, fmt, Rounding::RoundHalfEven);
        assert_eq!(sats, 2);
        assert_eq!(out.samples[0], fmt.max_value());
        assert_eq!(out.samples[1], fmt.min_value());
    }
}
