//! Fixed-point representation, symmetric quantization, and the emulated /
//! custom integer multiplication paths with per-operation instruction costs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FxpError {
    #[error("operand formats do not match: {0:?} vs {1:?}")]
    FormatMismatch(FixedFormat, FixedFormat),
    #[error("value {value} out of range for scale {scale} ({bits}-bit raw range)")]
    OutOfRange { value: f64, scale: f64, bits: u8 },
    #[error("raw value {0} does not fit format {1:?}")]
    RawOutOfRange(i64, FixedFormat),
    #[error("overflow beyond {0}-bit signed range")]
    Overflow(u8),
    #[error("operand raw value {0} exceeds 8-bit range")]
    Narrowing(i64),
    #[error("16-bit lane accumulation overflowed at element {0}")]
    LaneOverflow(usize),
    #[error("invalid format: frac_bits {frac_bits} must be < total_bits {total_bits}")]
    InvalidFormat { total_bits: u8, frac_bits: u8 },
}

/// Signed fixed-point format: `total_bits` raw width, `frac_bits` of fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedFormat {
    pub total_bits: u8,
    pub frac_bits: u8,
    pub signed: bool,
}

impl FixedFormat {
    pub const fn new(total_bits: u8, frac_bits: u8) -> Self {
        Self { total_bits, frac_bits, signed: true }
    }

    /// Q21.10: the 32-bit format used by the INT32 trainer variants.
    pub const Q21_10: FixedFormat = FixedFormat::new(32, 10);
    /// Q0.7-style 8-bit format for hybrid-precision inputs and weights.
    pub const Q0_7: FixedFormat = FixedFormat::new(8, 7);

    pub fn validate(&self) -> Result<(), FxpError> {
        if self.frac_bits >= self.total_bits {
            return Err(FxpError::InvalidFormat {
                total_bits: self.total_bits,
                frac_bits: self.frac_bits,
            });
        }
        Ok(())
    }

    pub fn raw_min(&self) -> i64 {
        if self.signed { -(1i64 << (self.total_bits - 1)) } else { 0 }
    }

    pub fn raw_max(&self) -> i64 {
        if self.signed { (1i64 << (self.total_bits - 1)) - 1 } else { (1i64 << self.total_bits) - 1 }
    }

    pub fn scale(&self) -> f64 {
        1.0 / (1u64 << self.frac_bits) as f64
    }
}

/// A fixed-point value. Real value = raw / 2^frac_bits, exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixed {
    raw: i64,
    format: FixedFormat,
}

impl Fixed {
    pub fn from_raw(raw: i64, format: FixedFormat) -> Result<Self, FxpError> {
        format.validate()?;
        if raw < format.raw_min() || raw > format.raw_max() {
            return Err(FxpError::RawOutOfRange(raw, format));
        }
        Ok(Self { raw, format })
    }

    /// Quantize a real value to this format, round-half-to-even.
    pub fn from_real(x: f64, format: FixedFormat, mode: OverflowMode) -> Result<Self, FxpError> {
        format.validate()?;
        let scaled = round_half_even(x * (1u64 << format.frac_bits) as f64);
        let raw = match clamp_raw(scaled, format.raw_min(), format.raw_max(), mode) {
            Some(r) => r,
            None => {
                return Err(FxpError::OutOfRange {
                    value: x,
                    scale: format.scale(),
                    bits: format.total_bits,
                })
            }
        };
        Ok(Self { raw, format })
    }

    pub fn zero(format: FixedFormat) -> Self {
        Self { raw: 0, format }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn to_real(&self) -> f64 {
        self.raw as f64 * self.format.scale()
    }
}

/// Saturate-vs-error policy for quantization and arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OverflowMode {
    #[default]
    Error,
    Saturate,
}

/// Symmetric quantization parameters: real units per raw unit, zero maps to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationParams {
    pub scale: f64,
    pub target_bits: u8,
}

impl QuantizationParams {
    pub fn new(scale: f64, target_bits: u8) -> Self {
        assert!(scale > 0.0, "scale must be positive");
        Self { scale, target_bits }
    }

    /// Scale that maps `max_abs` onto the top raw value (e.g. 32767 for 16 bits).
    pub fn from_max_abs(max_abs: f64, target_bits: u8) -> Self {
        let top = ((1i64 << (target_bits - 1)) - 1) as f64;
        let scale = if max_abs > 0.0 { max_abs / top } else { 1.0 };
        Self { scale, target_bits }
    }

    pub fn raw_min(&self) -> i64 {
        -(1i64 << (self.target_bits - 1))
    }

    pub fn raw_max(&self) -> i64 {
        (1i64 << (self.target_bits - 1)) - 1
    }
}

/// Round-to-nearest-even quantization of a real value.
pub fn quantize(x: f64, p: &QuantizationParams, mode: OverflowMode) -> Result<i64, FxpError> {
    let scaled = round_half_even(x / p.scale);
    clamp_raw(scaled, p.raw_min(), p.raw_max(), mode).ok_or(FxpError::OutOfRange {
        value: x,
        scale: p.scale,
        bits: p.target_bits,
    })
}

pub fn dequantize(raw: i64, p: &QuantizationParams) -> f64 {
    raw as f64 * p.scale
}

fn clamp_raw(scaled: f64, min: i64, max: i64, mode: OverflowMode) -> Option<i64> {
    if scaled >= min as f64 && scaled <= max as f64 {
        Some(scaled as i64)
    } else {
        match mode {
            OverflowMode::Saturate => Some(if scaled < min as f64 { min } else { max }),
            OverflowMode::Error => None,
        }
    }
}

fn round_half_even(x: f64) -> f64 {
    let floor = x.floor();
    let diff = x - floor;
    if diff > 0.5 {
        floor + 1.0
    } else if diff < 0.5 {
        floor
    } else if (floor as i64) % 2 == 0 {
        floor
    } else {
        floor + 1.0
    }
}

/// Instruction-cost constants for the multiplication paths. All are knobs of
/// the analytic cost model; the 4-vs-7 builtin/default split is fixed by the
/// target ISA, the emulated 32-bit constant approximates a shift-and-add
/// expansion (32 steps plus setup).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FxpCosts {
    pub mul_emulated32: u32,
    pub mul_default8: u32,
    pub mul_builtin8: u32,
    pub add32: u32,
    pub add64: u32,
}

impl Default for FxpCosts {
    fn default() -> Self {
        Self { mul_emulated32: 35, mul_default8: 7, mul_builtin8: 4, add32: 1, add64: 2 }
    }
}

/// Fixed-point multiply with post-shift by frac_bits, truncating toward zero.
/// Returns the product and the modeled instruction cost of the shift-and-add
/// emulation (data-independent).
pub fn mul_emulated32(
    a: Fixed,
    b: Fixed,
    costs: &FxpCosts,
) -> Result<(Fixed, u32), FxpError> {
    if a.format != b.format {
        return Err(FxpError::FormatMismatch(a.format, b.format));
    }
    let raw = mul_q_raw(a.raw, b.raw, a.format.frac_bits, a.format.total_bits)?;
    Ok((Fixed { raw, format: a.format }, costs.mul_emulated32))
}

/// Raw helper behind `mul_emulated32`, used by the trainer hot loops.
#[inline]
pub fn mul_q_raw(a: i64, b: i64, frac_bits: u8, total_bits: u8) -> Result<i64, FxpError> {
    let wide = a
        .checked_mul(b)
        .ok_or(FxpError::Overflow(total_bits))?;
    // Division truncates toward zero, unlike an arithmetic shift.
    let shifted = wide / (1i64 << frac_bits);
    let (lo, hi) = if total_bits >= 64 {
        (i64::MIN, i64::MAX)
    } else {
        (-(1i64 << (total_bits - 1)), (1i64 << (total_bits - 1)) - 1)
    };
    if shifted < lo || shifted > hi {
        return Err(FxpError::Overflow(total_bits));
    }
    Ok(shifted)
}

/// Custom 8-bit builtin multiplication: exact product of two 8-bit-range
/// operands widened to 16 bits. Costs exactly 4 instructions.
pub fn mul_custom_builtin(
    a: Fixed,
    b: Fixed,
    costs: &FxpCosts,
) -> Result<(Fixed, u32), FxpError> {
    let raw = mul8_exact(a.raw, b.raw)?;
    let format = FixedFormat::new(16, a.format.frac_bits + b.format.frac_bits);
    Ok((Fixed { raw, format }, costs.mul_builtin8))
}

/// Compiler-default 8-bit-decomposed multiplication path: same product, 7
/// instructions.
pub fn mul_default8(a: Fixed, b: Fixed, costs: &FxpCosts) -> Result<(Fixed, u32), FxpError> {
    let raw = mul8_exact(a.raw, b.raw)?;
    let format = FixedFormat::new(16, a.format.frac_bits + b.format.frac_bits);
    Ok((Fixed { raw, format }, costs.mul_default8))
}

#[inline]
pub fn mul8_exact(a: i64, b: i64) -> Result<i64, FxpError> {
    if !(-128..=127).contains(&a) {
        return Err(FxpError::Narrowing(a));
    }
    if !(-128..=127).contains(&b) {
        return Err(FxpError::Narrowing(b));
    }
    Ok(a * b)
}

/// Result of a hybrid-precision dot product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridDot {
    /// 32-bit result; fraction = input fraction sum minus `lane_shift`.
    pub sum: i32,
    /// Number of 16-bit lane saturation events (saturate mode only).
    pub saturation_events: u32,
}

/// Dot product of two 8-bit-range vectors. Per-element products are shifted
/// right by `lane_shift` (round-to-nearest) and accumulated in a 16-bit lane,
/// then widened to 32 bits. In strict mode a lane wrap is an error; in
/// saturate mode it clamps and is counted.
pub fn hybrid_dot_raw(
    xs: &[i8],
    ws: &[i8],
    lane_shift: u8,
    mode: OverflowMode,
) -> Result<HybridDot, FxpError> {
    assert_eq!(xs.len(), ws.len(), "hybrid_dot operands must have equal length");
    let mut lane: i16 = 0;
    let mut saturation_events = 0u32;
    for (i, (&x, &w)) in xs.iter().zip(ws).enumerate() {
        let product = x as i32 * w as i32;
        let term = shift_round(product, lane_shift);
        match lane.checked_add(term as i16) {
            Some(v) => lane = v,
            None => match mode {
                OverflowMode::Error => return Err(FxpError::LaneOverflow(i)),
                OverflowMode::Saturate => {
                    lane = if (lane as i32 + term) > 0 { i16::MAX } else { i16::MIN };
                    saturation_events += 1;
                }
            },
        }
    }
    Ok(HybridDot { sum: lane as i32, saturation_events })
}

#[inline]
fn shift_round(v: i32, shift: u8) -> i32 {
    if shift == 0 {
        return v;
    }
    let half = 1i32 << (shift - 1);
    (v + if v >= 0 { half } else { -half }) >> shift
}

/// Format-checked wrapper over `hybrid_dot_raw` for int8-range `Fixed` vectors.
/// The lane fraction is min(frac_x + frac_w, 10).
pub fn hybrid_dot(
    xs: &[Fixed],
    ws: &[Fixed],
    mode: OverflowMode,
) -> Result<(Fixed, u32), FxpError> {
    assert_eq!(xs.len(), ws.len());
    if xs.is_empty() {
        return Ok((Fixed::zero(FixedFormat::new(32, 0)), 0));
    }
    let fx = xs[0].format;
    let fw = ws[0].format;
    let mut xr = Vec::with_capacity(xs.len());
    let mut wr = Vec::with_capacity(ws.len());
    for v in xs {
        if v.format != fx {
            return Err(FxpError::FormatMismatch(v.format, fx));
        }
        xr.push(i8::try_from(v.raw).map_err(|_| FxpError::Narrowing(v.raw))?);
    }
    for v in ws {
        if v.format != fw {
            return Err(FxpError::FormatMismatch(v.format, fw));
        }
        wr.push(i8::try_from(v.raw).map_err(|_| FxpError::Narrowing(v.raw))?);
    }
    let product_frac = fx.frac_bits + fw.frac_bits;
    let lane_frac = product_frac.min(10);
    let dot = hybrid_dot_raw(&xr, &wr, product_frac - lane_frac, mode)?;
    let format = FixedFormat::new(32, lane_frac);
    Ok((Fixed { raw: dot.sum as i64, format }, dot.saturation_events))
}
