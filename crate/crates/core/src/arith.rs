//! Saturating fixed-point arithmetic modeling a DSP-slice datapath.
//!
//! Everything here is a pure function on plain integers: quantize a real
//! value into a Q-format code, multiply-accumulate into a wide clipped
//! accumulator, and requantize the accumulator back into a narrow format.
//! Overflow always saturates, never wraps. Codes are carried as `i64`
//! (formats are capped at 48 bits) and products go through `i128` so the
//! integer arithmetic below the clip point is exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rounding mode applied when discarding fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// Drop the low bits (floor; what a plain hardware bit-slice does).
    Truncate,
    /// Round to nearest, ties to the even code. Default; unbiased, so
    /// rounding error does not build a DC offset in the weight integrator.
    #[default]
    RoundHalfEven,
}

/// Signed two's-complement fixed-point format: `total_bits` wide with
/// `frac_bits` fractional bits, so a code `c` represents `c / 2^frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
}

impl QFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        let fmt = QFormat {
            total_bits,
            frac_bits,
        };
        fmt.validate()?;
        Ok(fmt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=48).contains(&self.total_bits) {
            return Err(Error::invalid_config(
                "total_bits",
                format!("{} not in 2..=48", self.total_bits),
            ));
        }
        if self.frac_bits >= self.total_bits {
            return Err(Error::invalid_config(
                "frac_bits",
                format!("{} must be < total_bits {}", self.frac_bits, self.total_bits),
            ));
        }
        Ok(())
    }

    /// Largest representable code, `2^(total_bits-1) - 1`.
    pub fn max_code(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    /// Smallest representable code, `-2^(total_bits-1)`.
    pub fn min_code(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    /// `2^frac_bits` as a float, the code-per-unit scale.
    pub fn scale(&self) -> f64 {
        (1i64 << self.frac_bits) as f64
    }

    /// Largest representable real value.
    pub fn max_value(&self) -> f64 {
        self.max_code() as f64 / self.scale()
    }

    /// Smallest (most negative) representable real value.
    pub fn min_value(&self) -> f64 {
        self.min_code() as f64 / self.scale()
    }

    /// Decode a code into its exact real value (exact: codes fit in 48 bits,
    /// well inside f64's 53-bit significand).
    pub fn decode(&self, code: i64) -> f64 {
        code as f64 / self.scale()
    }
}

/// Complete width/rounding description of the fixed-point datapath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedConfig {
    pub sample_format: QFormat,
    pub weight_format: QFormat,
    pub mu_format: QFormat,
    pub accumulator_bits: u32,
    pub rounding: Rounding,
}

impl Default for FixedConfig {
    /// Samples Q1.14 in 16 bits (14-bit converter with one bit of headroom),
    /// weights Q2.15 in 18 bits, step size Q0.17 in 18 bits, 48-bit
    /// accumulator — the shape of a 27x18 hard-multiplier DSP slice.
    fn default() -> Self {
        FixedConfig {
            sample_format: QFormat {
                total_bits: 16,
                frac_bits: 14,
            },
            weight_format: QFormat {
                total_bits: 18,
                frac_bits: 15,
            },
            mu_format: QFormat {
                total_bits: 18,
                frac_bits: 17,
            },
            accumulator_bits: 48,
            rounding: Rounding::RoundHalfEven,
        }
    }
}

impl FixedConfig {
    pub fn validate(&self) -> Result<()> {
        self.sample_format.validate()?;
        self.weight_format.validate()?;
        self.mu_format.validate()?;
        if self.accumulator_bits < self.sample_format.total_bits + self.weight_format.total_bits {
            return Err(Error::invalid_config(
                "accumulator_bits",
                format!(
                    "{} < sample {} + weight {} bits; products could overflow",
                    self.accumulator_bits,
                    self.sample_format.total_bits,
                    self.weight_format.total_bits
                ),
            ));
        }
        if self.accumulator_bits > 63 {
            return Err(Error::invalid_config(
                "accumulator_bits",
                format!("{} exceeds 63", self.accumulator_bits),
            ));
        }
        Ok(())
    }
}

/// Quantize a real value into `fmt`, rounding per `rounding` and saturating
/// to the format range. Saturation is the defined behavior for out-of-range
/// input; non-finite input saturates (NaN maps to 0).
pub fn quantize(v: f64, fmt: QFormat, rounding: Rounding) -> i64 {
    if v.is_nan() {
        return 0;
    }
    let scaled = v * fmt.scale();
    // Guard the f64 -> i64 cast before clamping.
    if scaled >= fmt.max_code() as f64 {
        return fmt.max_code();
    }
    if scaled <= fmt.min_code() as f64 {
        return fmt.min_code();
    }
    let code = match rounding {
        Rounding::Truncate => scaled.floor(),
        Rounding::RoundHalfEven => scaled.round_ties_even(),
    } as i64;
    code.clamp(fmt.min_code(), fmt.max_code())
}

/// Symmetric accumulator clip bound, `2^(bits-1) - 1`.
pub fn acc_clip(accumulator_bits: u32) -> i64 {
    (1i64 << (accumulator_bits - 1)) - 1
}

/// `clip(acc + a*b)` with symmetric saturation at `±(2^(bits-1)-1)`.
/// The product and sum are exact in `i128`; only the clip loses information.
pub fn sat_mul_acc(acc: i64, a: i64, b: i64, accumulator_bits: u32) -> i64 {
    let clip = acc_clip(accumulator_bits) as i128;
    let sum = acc as i128 + a as i128 * b as i128;
    sum.clamp(-clip, clip) as i64
}

/// Saturating add of two codes in the same format.
pub fn sat_add(a: i64, b: i64, fmt: QFormat) -> i64 {
    (a + b).clamp(fmt.min_code(), fmt.max_code())
}

/// Shift a value with `src_frac` fractional bits into `dst`, rounding the
/// discarded bits per `rounding` and saturating to `dst`'s range.
pub fn requantize(acc: i64, src_frac: u32, dst: QFormat, rounding: Rounding) -> i64 {
    requantize_wide(acc as i128, src_frac, dst, rounding)
}

/// `requantize` over a full-width intermediate (for mu-product paths whose
/// fractional depth exceeds 63 bits of significance).
pub fn requantize_wide(acc: i128, src_frac: u32, dst: QFormat, rounding: Rounding) -> i64 {
    let code = if src_frac >= dst.frac_bits {
        let shift = src_frac - dst.frac_bits;
        shift_right_rounded(acc, shift, rounding)
    } else {
        acc << (dst.frac_bits - src_frac)
    };
    code.clamp(dst.min_code() as i128, dst.max_code() as i128) as i64
}

/// Arithmetic right shift with the selected rounding of the dropped bits.
fn shift_right_rounded(v: i128, shift: u32, rounding: Rounding) -> i128 {
    if shift == 0 {
        return v;
    }
    // Floor quotient and nonnegative remainder in [0, 2^shift).
    let q = v >> shift;
    match rounding {
        Rounding::Truncate => q,
        Rounding::RoundHalfEven => {
            let r = v - (q << shift);
            let half = 1i128 << (shift - 1);
            if r > half || (r == half && (q & 1) == 1) {
                q + 1
            } else {
                q
            }
        }
    }
}
