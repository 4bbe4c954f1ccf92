//! End-to-end simulator: pulse source -> loopback channel -> ensemble
//! averager -> frame synchronizer -> LMS core -> metrics, executed as one
//! deterministic run. Filter and ensemble state persist across all pulses;
//! the pulse train is one continuous sample stream.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{quantize, FixedConfig, QFormat, Rounding};
use crate::ensemble::EnsembleAverage;
use crate::error::{Error, Result};
use crate::lms::{check_stability, Engine, LmsConfig, LmsFilter, Stability};
use crate::metrics::{
    convergence_curve, snr_residual, snr_vs_reference, xcorr_lag, SnrValue,
};
use crate::signal::{apply_channel, generate_pulse, ChannelModel, Frame, PulseSpec};
use crate::sync::{FrameSynchronizer, GroupDelayCompensator, DEFAULT_QUEUE_CAP};
use crate::{PRNG_ID, SPEC_VERSION};

/// A recordable stream tap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tap {
    /// Noisy input after the channel.
    X,
    /// Ensemble-average reference.
    D,
    /// FIR output.
    Y,
    /// Error signal.
    E,
    /// Weight vector snapshot after each pulse.
    W,
}

impl Tap {
    pub fn name(&self) -> &'static str {
        match self {
            Tap::X => "x",
            Tap::D => "d",
            Tap::Y => "y",
            Tap::E => "e",
            Tap::W => "w",
        }
    }

    pub fn parse(s: &str) -> Result<Tap> {
        match s {
            "x" => Ok(Tap::X),
            "d" => Ok(Tap::D),
            "y" => Ok(Tap::Y),
            "e" => Ok(Tap::E),
            "w" => Ok(Tap::W),
            other => Err(Error::invalid_config(
                "record",
                format!("unknown tap '{other}' (expected one of x,d,y,e,w)"),
            )),
        }
    }
}

/// Complete description of one simulator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub pulse: PulseSpec,
    #[serde(default)]
    pub channel: ChannelModel,
    pub lms: LmsConfig,
    /// Number of pulses K in the train.
    pub pulses: u64,
    pub seed: u64,
    #[serde(default = "default_record")]
    pub record: BTreeSet<Tap>,
    /// Group-delay offset applied between the d and x streams.
    #[serde(default)]
    pub group_delay_offset: i64,
    #[serde(default = "default_queue_cap")]
    pub queue_cap: usize,
}

fn default_record() -> BTreeSet<Tap> {
    [Tap::X, Tap::E].into_iter().collect()
}

fn default_queue_cap() -> usize {
    DEFAULT_QUEUE_CAP
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.pulse.validate()?;
        self.channel.validate()?;
        self.lms.validate()?;
        if self.pulses < 1 {
            return Err(Error::invalid_config("pulses", "must be >= 1"));
        }
        if self.queue_cap < 1 {
            return Err(Error::invalid_config("queue_cap", "must be >= 1"));
        }
        Ok(())
    }

    /// Sample Q-format seen by the ADC quantizer: the fixed engine's sample
    /// format, or the default datapath format on the float engine.
    pub fn sample_format(&self) -> QFormat {
        match &self.lms.engine {
            Engine::Fixed(cfg) => cfg.sample_format,
            Engine::Float64 => FixedConfig::default().sample_format,
        }
    }

    pub fn rounding(&self) -> Rounding {
        match &self.lms.engine {
            Engine::Fixed(cfg) => cfg.rounding,
            Engine::Float64 => Rounding::RoundHalfEven,
        }
    }

    /// The demo preset: 30 MHz carrier over 8 us at 491.52 MS/s, unit-sigma
    /// white noise, 64 taps, mu = 0.0006, 10 pulses. Amplitude sits at 90%
    /// of the sample-format ceiling.
    pub fn fig4_preset() -> RunConfig {
        let sample_format = FixedConfig::default().sample_format;
        RunConfig {
            pulse: PulseSpec {
                carrier_freq: 30e6,
                duration: 8e-6,
                amplitude: 0.9 * sample_format.max_value(),
                envelope: Default::default(),
                noise_sigma: 1.0,
                sample_rate: 491.52e6,
                phase0: 0.0,
            },
            channel: ChannelModel::default(),
            lms: LmsConfig {
                taps: 64,
                mu: 0.0006,
                engine: Engine::Float64,
                output_tap: Default::default(),
                weight_init: Default::default(),
            },
            pulses: 10,
            seed: 3,
            record: default_record(),
            group_delay_offset: 0,
            queue_cap: DEFAULT_QUEUE_CAP,
        }
    }

    pub fn preset(name: &str) -> Result<RunConfig> {
        match name {
            "fig4" => Ok(Self::fig4_preset()),
            other => Err(Error::invalid_config(
                "preset",
                format!("unknown preset '{other}' (available: fig4)"),
            )),
        }
    }
}

/// Metrics for one processed pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub pulse_index: u64,
    /// Mean squared error-signal amplitude over the pulse.
    pub error_power: f64,
    /// Clean-signal power over residual error power, in dB.
    pub output_snr_db: SnrValue,
    /// SNR of the noisy input against the clean reference.
    pub input_snr_db: SnrValue,
    /// Reference-free band-split SNR estimate of the input.
    pub input_snr_band_db: SnrValue,
    /// Cross-correlation peak lag between x and e, in samples.
    pub xcorr_lag_samples: i64,
    /// Channel-quantizer plus fixed-datapath saturation events.
    pub saturation_count: u64,
    pub weight_l2_norm: f64,
}

/// Full record of one run: config echo, identifiers, per-pulse metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec_version: String,
    pub prng: String,
    pub config: RunConfig,
    pub stability: Stability,
    /// Measured mean-square input power used for the stability advisory.
    pub input_power_estimate: f64,
    pub pulses: Vec<PulseRecord>,
    pub converged_at: Option<usize>,
}

/// Resumable chain state (filter + ensemble + stream position).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub filter: LmsFilter,
    pub ensemble: EnsembleAverage,
    pub compensator_carry: Vec<f64>,
    pub next_pulse: u64,
}

/// Everything a run produces, in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub waveforms: BTreeMap<Tap, Vec<Frame>>,
    pub state: ChainState,
}

/// Execute a fresh run of `config.pulses` pulses.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    run_segment(config, None)
}

/// Execute `config.pulses` further pulses, resuming from `state` when
/// given. `run(K = a + b)` equals `run(a)` chained into a resumed `run(b)`
/// bit-exactly.
pub fn run_segment(config: &RunConfig, state: Option<ChainState>) -> Result<RunOutcome> {
    config.validate()?;
    let (mut filter, mut ensemble, mut compensator, start) = match state {
        Some(s) => {
            let mut comp = GroupDelayCompensator::new(config.group_delay_offset);
            comp.restore_carry(&s.compensator_carry);
            (s.filter, s.ensemble, comp, s.next_pulse)
        }
        None => (
            LmsFilter::new(&config.lms)?,
            EnsembleAverage::new(),
            GroupDelayCompensator::new(config.group_delay_offset),
            0,
        ),
    };
    let mut sync = FrameSynchronizer::with_cap(config.queue_cap);
    let sample_format = config.sample_format();
    let rounding = config.rounding();

    let mut records = Vec::with_capacity(config.pulses as usize);
    let mut waveforms: BTreeMap<Tap, Vec<Frame>> =
        config.record.iter().map(|&t| (t, Vec::new())).collect();
    let mut input_power_estimate = 0.0;

    for k in start..start + config.pulses {
        let (clean, noisy) = generate_pulse(&config.pulse, config.seed, k)?;
        let (x, channel_sats) = apply_channel(&noisy, &config.channel, sample_format, rounding);
        if k == start {
            input_power_estimate = x.power();
        }
        let d = ensemble.absorb(&x)?;

        let mut pairs = sync.push_d(d)?;
        pairs.extend(sync.push_y(x.clone())?);
        for pair in pairs {
            let (d_k, x_k) = compensator.apply(pair)?;
            // Fixed-engine chains see the reference through the sample
            // quantizer, like any other stream entering the datapath.
            let d_k = match &config.lms.engine {
                Engine::Fixed(fc) => Frame::new(
                    d_k.samples
                        .iter()
                        .map(|&v| fc.sample_format.decode(quantize(v, fc.sample_format, fc.rounding)))
                        .collect(),
                    d_k.pulse_index,
                ),
                Engine::Float64 => d_k,
            };
            let (y, e, stats) = filter.process_frame_full(&x_k, &d_k)?;

            let record = PulseRecord {
                pulse_index: x_k.pulse_index,
                error_power: e.power(),
                output_snr_db: snr_residual(&clean, &e).snr_db,
                input_snr_db: snr_vs_reference(&x_k, &clean)?.snr_db,
                input_snr_band_db: crate::metrics::snr_band_split(
                    &x_k,
                    config.pulse.carrier_freq,
                    config.pulse.sample_rate,
                )
                .snr_db,
                xcorr_lag_samples: xcorr_lag(&x_k, &e, 64),
                saturation_count: channel_sats + stats.saturation_count,
                weight_l2_norm: filter.weight_l2_norm(),
            };
            records.push(record);

            for (&tap, frames) in waveforms.iter_mut() {
                match tap {
                    Tap::X => frames.push(x_k.clone()),
                    Tap::D => frames.push(d_k.clone()),
                    Tap::Y => frames.push(y.clone()),
                    Tap::E => frames.push(e.clone()),
                    Tap::W => frames.push(Frame::new(filter.weights(), x_k.pulse_index)),
                }
            }
        }
    }

    let powers: Vec<f64> = records.iter().map(|r| r.error_power).collect();
    let converged_at = convergence_curve(&powers).converged_at;
    let report = RunReport {
        spec_version: SPEC_VERSION.to_string(),
        prng: PRNG_ID.to_string(),
        config: config.clone(),
        stability: check_stability(config.lms.taps, config.lms.mu, input_power_estimate),
        input_power_estimate,
        pulses: records,
        converged_at,
    };
    let state = ChainState {
        compensator_carry: compensator.carry_samples(),
        filter,
        ensemble,
        next_pulse: start + config.pulses,
    };
    Ok(RunOutcome {
        report,
        waveforms,
        state,
    })
}

// ---------------------------------------------------------------------------
// Parameter sweep
// ---------------------------------------------------------------------------

/// Grid of parameter values to sweep; empty axes fall back to the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub taps: Vec<usize>,
    #[serde(default)]
    pub noise_sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub taps: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub stability: Option<Stability>,
    pub final_error_power: Option<f64>,
    pub converged_at: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub base: RunConfig,
    pub rows: Vec<SweepRow>,
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over seed + index so grid points own
    // independent PRNG substreams.
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One independent run per grid point. Per-point failures are recorded in
/// the row and the sweep continues. Points execute in parallel on the
/// current rayon pool.
pub fn sweep(base: &RunConfig, grid: &SweepGrid) -> Result<SweepTable> {
    base.validate()?;
    let mus = if grid.mu.is_empty() { vec![base.lms.mu] } else { grid.mu.clone() };
    let taps = if grid.taps.is_empty() { vec![base.lms.taps] } else { grid.taps.clone() };
    let sigmas = if grid.noise_sigma.is_empty() {
        vec![base.pulse.noise_sigma]
    } else {
        grid.noise_sigma.clone()
    };
    if mus.is_empty() || taps.is_empty() || sigmas.is_empty() {
        return Err(Error::invalid_config("grid", "empty sweep grid"));
    }

    let mut points = Vec::new();
    for &mu in &mus {
        for &n in &taps {
            for &sigma in &sigmas {
                points.push((mu, n, sigma));
            }
        }
    }

    let rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, &(mu, n, sigma))| {
            let mut cfg = base.clone();
            cfg.lms.mu = mu;
            cfg.lms.taps = n;
            cfg.pulse.noise_sigma = sigma;
            cfg.seed = mix_seed(base.seed, i as u64);
            cfg.record.clear();
            let mut row = SweepRow {
                mu,
                taps: n,
                noise_sigma: sigma,
                seed: cfg.seed,
                stability: None,
                final_error_power: None,
                converged_at: None,
                error: None,
            };
            match run(&cfg) {
                Ok(outcome) => {
                    row.stability = Some(outcome.report.stability);
                    row.final_error_power =
                        outcome.report.pulses.last().map(|r| r.error_power);
                    row.converged_at = outcome.report.converged_at;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();

    Ok(SweepTable {
        base: base.clone(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Live filtering vs post-hoc ensemble averaging
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub pulse_index: u64,
    /// Residual SNR of the live LMS error signal against the clean pulse.
    pub lms_snr_db: SnrValue,
    /// SNR of the running ensemble average alone against the clean pulse.
    pub ensemble_snr_db: SnrValue,
    /// SNR of the raw single shot, for reference.
    pub single_shot_snr_db: SnrValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub config: RunConfig,
    pub points: Vec<ComparisonPoint>,
}

/// Emit per-pulse SNR curves for (a) the live LMS output and (b) the
/// running ensemble average alone, so the two convergence behaviors can be
/// compared directly.
pub fn compare_to_postprocessing(config: &RunConfig) -> Result<ComparisonRecord> {
    if config.pulses < 2 {
        return Err(Error::invalid_config("pulses", "comparison needs K >= 2"));
    }
    let mut cfg = config.clone();
    cfg.record = [Tap::X, Tap::D, Tap::E].into_iter().collect();
    let outcome = run(&cfg)?;
    let (clean, _) = generate_pulse(&cfg.pulse, cfg.seed, 0)?;
    let xs = &outcome.waveforms[&Tap::X];
    let ds = &outcome.waveforms[&Tap::D];
    let es = &outcome.waveforms[&Tap::E];
    let mut points = Vec::new();
    for i in 0..outcome.report.pulses.len() {
        points.push(ComparisonPoint {
            pulse_index: outcome.report.pulses[i].pulse_index,
            lms_snr_db: snr_residual(&clean, &es[i]).snr_db,
            ensemble_snr_db: snr_vs_reference(&ds[i], &clean)?.snr_db,
            single_shot_snr_db: snr_vs_reference(&xs[i], &clean)?.snr_db,
        });
    }
    Ok(ComparisonRecord {
        config: cfg,
        points,
    })
}
