//! The adaptive core: FIR filtering, error formation, and LMS weight
//! updates, streamed one sample at a time over either an exact `f64`
//! engine or the saturating fixed-point datapath from [`crate::arith`].
//!
//! Per sample the order is fixed: FIR output first, then the error against
//! the reference, then the simultaneous update of all taps using the
//! current delay line (a-priori error). Filter state persists across frame
//! boundaries, so a pulse train is processed as one continuous stream.
//!
//! ```text
//! y[n] = sum_i w[i] * x[n-i]
//! e[n] = d[n] - y[n]
//! w[i] <- w[i] + mu * e[n] * x[n-i]
//! ```

use serde::{Deserialize, Serialize};

use crate::arith::{quantize, requantize, requantize_wide, sat_add, sat_mul_acc, FixedConfig};
use crate::error::{Error, Result};
use crate::signal::Frame;

/// Which arithmetic the filter runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Float64,
    Fixed(FixedConfig),
}

/// Which stream the filter emits as its output frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputTap {
    /// The error signal e = d - y (the processed waveform).
    #[default]
    ErrorE,
    /// The FIR output y.
    FirY,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightInit {
    #[default]
    Zeros,
    /// w[0] = 1, rest 0 (identity filter).
    Impulse,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmsConfig {
    /// Number of FIR taps N.
    pub taps: usize,
    /// Learning rate mu.
    pub mu: f64,
    #[serde(default = "default_engine")]
    pub engine: Engine,
    #[serde(default)]
    pub output_tap: OutputTap,
    #[serde(default)]
    pub weight_init: WeightInit,
}

fn default_engine() -> Engine {
    Engine::Float64
}

impl LmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps < 1 {
            return Err(Error::invalid_config("taps", "must be >= 1"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid_config("mu", "must be finite and > 0"));
        }
        if let Engine::Fixed(cfg) = &self.engine {
            cfg.validate()?;
        }
        if let WeightInit::Explicit(w) = &self.weight_init {
            if w.len() != self.taps {
                return Err(Error::invalid_config(
                    "weight_init",
                    format!("explicit vector length {} != taps {}", w.len(), self.taps),
                ));
            }
        }
        Ok(())
    }
}

/// Stability advisory from the standard LMS step-size bound mu < 2/(N*Px).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Stable,
    /// Within 10% below the bound.
    Marginal,
    Unstable,
}

/// Advisory check of mu against the step-size bound for the measured input
/// power. Never blocks a run.
pub fn check_stability(taps: usize, mu: f64, input_power_estimate: f64) -> Stability {
    let bound = 2.0 / (taps as f64 * input_power_estimate);
    if mu >= bound {
        Stability::Unstable
    } else if mu >= 0.9 * bound {
        Stability::Marginal
    } else {
        Stability::Stable
    }
}

/// Per-frame statistics from `process_frame`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    /// Saturation events inside the fixed datapath (FIR output, error
    /// subtract, weight update). Always 0 on the float engine.
    pub saturation_count: u64,
}

// ---------------------------------------------------------------------------
// Float engine
// ---------------------------------------------------------------------------

/// Exact binary64 LMS state: weights, circular delay line, sample counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatLms {
    weights: Vec<f64>,
    delay: Vec<f64>,
    pos: usize,
    samples_seen: u64,
    mu: f64,
}

impl FloatLms {
    fn new(cfg: &LmsConfig) -> Self {
        let weights = match &cfg.weight_init {
            WeightInit::Zeros => vec![0.0; cfg.taps],
            WeightInit::Impulse => {
                let mut w = vec![0.0; cfg.taps];
                w[0] = 1.0;
                w
            }
            WeightInit::Explicit(w) => w.clone(),
        };
        FloatLms {
            weights,
            delay: vec![0.0; cfg.taps],
            pos: 0,
            samples_seen: 0,
            mu: cfg.mu,
        }
    }

    /// One sample: push x, compute y and e = d - y, update every tap.
    fn step(&mut self, x: f64, d: f64) -> (f64, f64) {
        let n = self.weights.len();
        self.delay[self.pos] = x;
        let mut y = 0.0;
        for i in 0..n {
            y += self.weights[i] * self.delay[(self.pos + n - i) % n];
        }
        let e = d - y;
        let mu_e = self.mu * e;
        for i in 0..n {
            self.weights[i] += mu_e * self.delay[(self.pos + n - i) % n];
        }
        self.pos = (self.pos + 1) % n;
        self.samples_seen += 1;
        (y, e)
    }
}

// ---------------------------------------------------------------------------
// Fixed engine
// ---------------------------------------------------------------------------

/// Fixed-point LMS state. Weights and delay-line entries are integer codes
/// in their respective Q formats; all products run through the wide
/// accumulator and every narrowing step saturates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedLms {
    cfg: FixedConfig,
    weights: Vec<i64>,
    delay: Vec<i64>,
    pos: usize,
    samples_seen: u64,
    mu_code: i64,
    saturations: u64,
}

impl FixedLms {
    fn new(cfg: &LmsConfig, fixed: FixedConfig) -> Self {
        let wf = fixed.weight_format;
        let r = fixed.rounding;
        let weights = match &cfg.weight_init {
            WeightInit::Zeros => vec![0i64; cfg.taps],
            WeightInit::Impulse => {
                let mut w = vec![0i64; cfg.taps];
                w[0] = quantize(1.0, wf, r);
                w
            }
            WeightInit::Explicit(w) => w.iter().map(|&v| quantize(v, wf, r)).collect(),
        };
        FixedLms {
            cfg: fixed,
            weights,
            delay: vec![0i64; cfg.taps],
            pos: 0,
            samples_seen: 0,
            mu_code: quantize(cfg.mu, fixed.mu_format, r),
            saturations: 0,
        }
    }

    fn step(&mut self, x: f64, d: f64) -> (f64, f64) {
        let sf = self.cfg.sample_format;
        let wf = self.cfg.weight_format;
        let r = self.cfg.rounding;
        let n = self.weights.len();

        let x_code = quantize(x, sf, r);
        self.delay[self.pos] = x_code;

        // FIR: accumulate sample*weight products at sf.frac + wf.frac
        // fractional bits, then requantize back to the sample format.
        let mut acc = 0i64;
        for i in 0..n {
            acc = sat_mul_acc(
                acc,
                self.weights[i],
                self.delay[(self.pos + n - i) % n],
                self.cfg.accumulator_bits,
            );
        }
        let y_code = requantize(acc, sf.frac_bits + wf.frac_bits, sf, r);
        if y_code == sf.max_code() || y_code == sf.min_code() {
            self.saturations += 1;
        }

        // e = d - y, saturating in the sample format.
        let d_code = quantize(d, sf, r);
        let e_code = sat_add(d_code, -y_code, sf);
        if e_code == sf.max_code() || e_code == sf.min_code() {
            self.saturations += 1;
        }

        // Pipeline order of the hardware datapath: x*e product, then
        // multiplication with the adaptation step, then saturating
        // accumulation into the weight register.
        let mu_e_frac = 2 * sf.frac_bits + self.cfg.mu_format.frac_bits;
        for i in 0..n {
            let xe = self.delay[(self.pos + n - i) % n] as i128 * e_code as i128;
            let scaled = xe * self.mu_code as i128;
            let dw = requantize_wide(scaled, mu_e_frac, wf, r);
            let w_new = sat_add(self.weights[i], dw, wf);
            if w_new == wf.max_code() || w_new == wf.min_code() {
                self.saturations += 1;
            }
            self.weights[i] = w_new;
        }

        self.pos = (self.pos + 1) % n;
        self.samples_seen += 1;
        (sf.decode(y_code), sf.decode(e_code))
    }
}

// ---------------------------------------------------------------------------
// Engine wrapper
// ---------------------------------------------------------------------------

/// An LMS filter over either engine. One stream owns one filter; samples
/// must be fed strictly in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LmsFilter {
    Float(FloatLms),
    Fixed(FixedLms),
}

impl LmsFilter {
    pub fn new(cfg: &LmsConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::new_unchecked(cfg))
    }

    /// Construction without config validation, for tests that freeze the
    /// weights with mu = 0.
    pub fn new_unchecked(cfg: &LmsConfig) -> Self {
        match &cfg.engine {
            Engine::Float64 => LmsFilter::Float(FloatLms::new(cfg)),
            Engine::Fixed(fixed) => LmsFilter::Fixed(FixedLms::new(cfg, *fixed)),
        }
    }

    /// Process one sample pair; returns (y, e).
    pub fn step(&mut self, x: f64, d: f64) -> (f64, f64) {
        match self {
            LmsFilter::Float(f) => f.step(x, d),
            LmsFilter::Fixed(f) => f.step(x, d),
        }
    }

    /// Current weights, decoded to real values.
    pub fn weights(&self) -> Vec<f64> {
        match self {
            LmsFilter::Float(f) => f.weights.clone(),
            LmsFilter::Fixed(f) => {
                let wf = f.cfg.weight_format;
                f.weights.iter().map(|&c| wf.decode(c)).collect()
            }
        }
    }

    pub fn weight_l2_norm(&self) -> f64 {
        self.weights().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn samples_seen(&self) -> u64 {
        match self {
            LmsFilter::Float(f) => f.samples_seen,
            LmsFilter::Fixed(f) => f.samples_seen,
        }
    }

    fn saturation_count(&self) -> u64 {
        match self {
            LmsFilter::Float(_) => 0,
            LmsFilter::Fixed(f) => f.saturations,
        }
    }

    /// Run one frame pair through the filter. Emits e or y per
    /// `output_tap`; state carries over to the next call.
    pub fn process_frame(
        &mut self,
        x_frame: &Frame,
        d_frame: &Frame,
        output_tap: OutputTap,
    ) -> Result<(Frame, FrameStats)> {
        let (y, e, stats) = self.process_frame_full(x_frame, d_frame)?;
        let out = match output_tap {
            OutputTap::ErrorE => e,
            OutputTap::FirY => y,
        };
        Ok((out, stats))
    }

    /// Like `process_frame` but returns both taps: (y_frame, e_frame, stats).
    pub fn process_frame_full(
        &mut self,
        x_frame: &Frame,
        d_frame: &Frame,
    ) -> Result<(Frame, Frame, FrameStats)> {
        if x_frame.len() != d_frame.len() {
            return Err(Error::LengthMismatch {
                left: x_frame.len(),
                right: d_frame.len(),
            });
        }
        let sats_before = self.saturation_count();
        let mut y = Vec::with_capacity(x_frame.len());
        let mut e = Vec::with_capacity(x_frame.len());
        for (&xn, &dn) in x_frame.samples.iter().zip(&d_frame.samples) {
            let (yn, en) = self.step(xn, dn);
            y.push(yn);
            e.push(en);
        }
        let stats = FrameStats {
            saturation_count: self.saturation_count() - sats_before,
        };
        let k = x_frame.pulse_index;
        Ok((Frame::new(y, k), Frame::new(e, k), stats))
    }
}
