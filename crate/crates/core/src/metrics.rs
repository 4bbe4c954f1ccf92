//! SNR, cross-correlation lag, and convergence measurements.
//!
//! All metrics are pure functions over frames; nothing here mutates chain
//! state. SNR is measured against the known clean reference (a simulator
//! privilege), with an out-of-band noise-floor estimate available as a
//! secondary basis for setups where no clean reference exists.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Frame;

/// How the noise power was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrBasis {
    /// noise = measured - clean, per sample.
    VsCleanReference,
    /// Noise floor estimated from spectral bins away from the carrier.
    BandSplit,
}

/// SNR in dB, with the degenerate cases flagged explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrValue {
    Db(f64),
    /// Zero noise power.
    Infinite,
    /// Zero signal power.
    Undefined,
}

impl SnrValue {
    pub fn db(&self) -> Option<f64> {
        match self {
            SnrValue::Db(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrMeasurement {
    pub signal_power: f64,
    pub noise_power: f64,
    pub snr_db: SnrValue,
    pub basis: SnrBasis,
}

fn snr_from_powers(signal_power: f64, noise_power: f64, basis: SnrBasis) -> SnrMeasurement {
    let snr_db = if signal_power <= 0.0 {
        SnrValue::Undefined
    } else if noise_power <= 0.0 {
        SnrValue::Infinite
    } else {
        SnrValue::Db(10.0 * (signal_power / noise_power).log10())
    };
    SnrMeasurement {
        signal_power,
        noise_power,
        snr_db,
        basis,
    }
}

/// SNR of `measured` against the known clean reference: signal power is the
/// per-sample mean square of `clean`, noise is `measured - clean`.
pub fn snr_vs_reference(measured: &Frame, clean: &Frame) -> Result<SnrMeasurement> {
    if measured.len() != clean.len() {
        return Err(Error::LengthMismatch {
            left: measured.len(),
            right: clean.len(),
        });
    }
    let n = measured.len() as f64;
    let signal_power = clean.power();
    let noise_power = measured
        .samples
        .iter()
        .zip(&clean.samples)
        .map(|(m, c)| (m - c) * (m - c))
        .sum::<f64>()
        / n;
    Ok(snr_from_powers(signal_power, noise_power, SnrBasis::VsCleanReference))
}

/// Residual-based output SNR: clean-signal power over the power of the
/// residual error signal. An exactly-zero residual flags as infinite.
pub fn snr_residual(clean: &Frame, residual: &Frame) -> SnrMeasurement {
    snr_from_powers(clean.power(), residual.power(), SnrBasis::VsCleanReference)
}

/// Reference-free SNR estimate: a Goertzel bin at the carrier for signal
/// power, the median power of off-carrier bins as the per-bin noise floor.
pub fn snr_band_split(measured: &Frame, carrier_freq: f64, sample_rate: f64) -> SnrMeasurement {
    let n = measured.len();
    if n < 8 {
        return snr_from_powers(0.0, 0.0, SnrBasis::BandSplit);
    }
    let bin_power = |freq: f64| -> f64 {
        // Goertzel magnitude^2, normalized to a per-sample power.
        let omega = 2.0 * std::f64::consts::PI * freq / sample_rate;
        let (mut s_prev, mut s_prev2) = (0.0f64, 0.0f64);
        let coeff = 2.0 * omega.cos();
        for &x in &measured.samples {
            let s = x + coeff * s_prev - s_prev2;
            s_prev2 = s_prev;
            s_prev = s;
        }
        let mag2 = s_prev * s_prev + s_prev2 * s_prev2 - coeff * s_prev * s_prev2;
        2.0 * mag2 / (n as f64 * n as f64)
    };
    let signal_power = bin_power(carrier_freq);
    // sample the floor away from the carrier
    let mut floor_bins: Vec<f64> = (1..=16)
        .map(|i| {
            let f = sample_rate * i as f64 / 37.0;
            if (f - carrier_freq).abs() < sample_rate / (n as f64) {
                f64::NAN
            } else {
                bin_power(f.min(sample_rate * 0.49))
            }
        })
        .filter(|v| v.is_finite())
        .collect();
    floor_bins.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let noise_floor = if floor_bins.is_empty() {
        0.0
    } else {
        floor_bins[floor_bins.len() / 2] * n as f64 / 2.0
    };
    snr_from_powers(signal_power, noise_floor, SnrBasis::BandSplit)
}

/// Lag (in samples) of the peak of the normalized cross-correlation between
/// `a` and `b`, searched over `[-max_lag, +max_lag]`. Positive lag means
/// `b` trails `a` by that many samples. Ties break toward zero.
pub fn xcorr_lag(a: &Frame, b: &Frame, max_lag: usize) -> i64 {
    let len = a.len().min(b.len());
    let max_lag = max_lag.min(len.saturating_sub(1)) as i64;
    let mut best_lag = 0i64;
    let mut best = f64::NEG_INFINITY;
    // visit lags in order of increasing |lag| so ties keep the smaller shift
    for mag in 0..=max_lag {
        let lags: &[i64] = if mag == 0 { &[0] } else { &[mag, -mag] };
        for &lag in lags {
            let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
            for n in 0..len {
                let m = n as i64 + lag;
                if m < 0 || m >= b.len() as i64 {
                    continue;
                }
                let (av, bv) = (a.samples[n], b.samples[m as usize]);
                saa += av * av;
                sbb += bv * bv;
                sab += av * bv;
            }
            let denom = (saa * sbb).sqrt();
            let r = if denom > 0.0 { sab / denom } else { 0.0 };
            if r > best {
                best = r;
                best_lag = lag;
            }
        }
    }
    best_lag
}

/// Per-pulse error-power curve summary. `converged_at` is the first pulse
/// (1-based) whose error power is within 10% of the final pulse's, absent
/// when the tail is still moving by more than 10% per pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub error_power: Vec<f64>,
    pub converged_at: Option<usize>,
}

pub fn convergence_curve(error_power: &[f64]) -> ConvergenceCurve {
    let curve = error_power.to_vec();
    let converged_at = convergence_index(&curve);
    ConvergenceCurve {
        error_power: curve,
        converged_at,
    }
}

fn convergence_index(powers: &[f64]) -> Option<usize> {
    let k = powers.len();
    if k == 0 {
        return None;
    }
    let last = powers[k - 1];
    // A tail that is still moving by >10% per pulse has not converged.
    if k >= 2 && (powers[k - 2] - last).abs() > 0.1 * last {
        return None;
    }
    powers
        .iter()
        .position(|&p| (p - last).abs() <= 0.1 * last)
        .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_pulse, Envelope, PulseSpec};

    #[test]
    fn identical_frames_give_infinite_snr() {
        let f = Frame::new(vec![1.0, -1.0, 0.5], 0);
        let m = snr_vs_reference(&f, &f).unwrap();
        assert_eq!(m.snr_db, SnrValue::Infinite);
    }

    #[test]
    fn zero_clean_is_undefined() {
        let clean = Frame::new(vec![0.0; 4], 0);
        let noisy = Frame::new(vec![1.0; 4], 0);
        let m = snr_vs_reference(&noisy, &clean).unwrap();
        assert_eq!(m.snr_db, SnrValue::Undefined);
    }

    #[test]
    fn snr_length_mismatch() {
        let a = Frame::new(vec![0.0; 3], 0);
        let b = Frame::new(vec![0.0; 4], 0);
        assert!(snr_vs_reference(&a, &b).is_err());
    }

    #[test]
    fn half_power_signal_in_unit_noise_is_minus_3db() {
        // clean power 0.5 under unit-variance noise: 10*log10(0.5) = -3.01 dB
        let spec = PulseSpec {
            carrier_freq: 30e6,
            duration: 40e-6, // ~2e4 samples
            amplitude: 1.0,
            envelope: Envelope::Rectangular,
            noise_sigma: 1.0,
            sample_rate: 491.52e6,
            phase0: 0.0,
        };
        let (clean, noisy) = generate_pulse(&spec, 11, 0).unwrap();
        let m = snr_vs_reference(&noisy, &clean).unwrap();
        let db = m.snr_db.db().unwrap();
        assert!((db + 3.01).abs() < 0.5, "snr {db}");
    }

    #[test]
    fn scale_covariance() {
        let spec = PulseSpec {
            carrier_freq: 10e6,
            duration: 2e-6,
            amplitude: 0.7,
            envelope: Envelope::Rectangular,
            noise_sigma: 0.3,
            sample_rate: 491.52e6,
            phase0: 0.1,
        };
        let (clean, noisy) = generate_pulse(&spec, 3, 0).unwrap();
        let base = snr_vs_reference(&noisy, &clean).unwrap().snr_db.db().unwrap();
        for c in [0.25, -3.0, 17.5] {
            let sc = Frame::new(clean.samples.iter().map(|v| v * c).collect(), 0);
            let sn = Frame::new(noisy.samples.iter().map(|v| v * c).collect(), 0);
            let db = snr_vs_reference(&sn, &sc).unwrap().snr_db.db().unwrap();
            assert!((db - base).abs() < 1e-9, "c={c}: {db} vs {base}");
        }
    }

    #[test]
    fn xcorr_identical_is_zero_lag() {
        let a = Frame::new((0..128).map(|n| (n as f64 * 0.3).sin()).collect(), 0);
        assert_eq!(xcorr_lag(&a, &a, 16), 0);
    }

    #[test]
    fn xcorr_finds_constructed_shift() {
        let base: Vec<f64> = (0..256).map(|n| (n as f64 * 0.11).sin() + (n as f64 * 0.041).cos()).collect();
        for shift in [1usize, 5, 12] {
            let mut shifted = vec![0.0; shift];
            shifted.extend_from_slice(&base[..256 - shift]);
            let a = Frame::new(base.clone(), 0);
            let b = Frame::new(shifted, 0);
            assert_eq!(xcorr_lag(&a, &b, 16), shift as i64, "shift {shift}");
        }
    }

    #[test]
    fn xcorr_negative_shift() {
        let base: Vec<f64> = (0..256).map(|n| (n as f64 * 0.17).sin()).collect();
        let b = Frame::new(base[5..].to_vec(), 0);
        let a = Frame::new(base[..251].to_vec(), 0);
        assert_eq!(xcorr_lag(&a, &b, 16), -5);
    }

    #[test]
    fn constant_curve_converges_at_one() {
        let c = convergence_curve(&[2.0, 2.0, 2.0, 2.0]);
        assert_eq!(c.converged_at, Some(1));
    }

    #[test]
    fn diverging_curve_never_converges() {
        let c = convergence_curve(&[1.0, 2.0, 4.0, 8.0, 16.0]);
        assert_eq!(c.converged_at, None);
    }

    #[test]
    fn settling_curve_converges_midway() {
        let c = convergence_curve(&[10.0, 4.0, 1.5, 1.05, 1.0]);
        assert_eq!(c.converged_at, Some(4));
    }

    #[test]
    fn band_split_sees_clean_tone_above_floor() {
        let spec = PulseSpec {
            carrier_freq: 30e6,
            duration: 8e-6,
            amplitude: 1.0,
            envelope: Envelope::Rectangular,
            noise_sigma: 0.1,
            sample_rate: 491.52e6,
            phase0: 0.0,
        };
        let (_, noisy) = generate_pulse(&spec, 8, 0).unwrap();
        let m = snr_band_split(&noisy, 30e6, 491.52e6);
        assert!(m.snr_db.db().unwrap() > 5.0);
    }
}
