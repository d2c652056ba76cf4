//! Sigmoid activation three ways: exact (host reference), a quantized lookup
//! table, and a fixed-point Taylor expansion with range reduction.
//!
//! The LUT covers [0, 20) with 20 segments of 1024 entries in Q0.16; negative
//! inputs use the symmetry `sigmoid(-x) = 1 - sigmoid(x)` and inputs beyond
//! the boundary clamp to the last entry.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::machine::CostModel;

pub const LUT_SEGMENTS: usize = 20;
pub const LUT_ENTRIES_PER_SEGMENT: usize = 1024;
pub const LUT_ENTRIES: usize = LUT_SEGMENTS * LUT_ENTRIES_PER_SEGMENT;
/// Q0.16 value scale.
const LUT_VALUE_SCALE: f64 = 65536.0;
/// Entries per unit of input.
const LUT_INPUT_SCALE: f64 = LUT_ENTRIES_PER_SEGMENT as f64;

#[derive(Debug, Error)]
pub enum ActivationError {
    #[error("lut file: {0}")]
    BadLutFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn sigmoid_exact(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Where the table lives on a core; scratchpad residency costs 40 KiB of the
/// 64-KiB budget but avoids a per-access bank DMA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LutPlacement {
    Scratchpad,
    Bank,
}

/// Per-access cost of one table lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LutAccessCost {
    pub instructions: u32,
    pub dma_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmoidLut {
    entries: Vec<u16>,
}

impl SigmoidLut {
    pub fn build() -> Self {
        let entries = (0..LUT_ENTRIES)
            .map(|i| {
                let x = i as f64 / LUT_INPUT_SCALE;
                let v = (sigmoid_exact(x) * LUT_VALUE_SCALE).round();
                v.min(65535.0) as u16
            })
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[u16] {
        &self.entries
    }

    pub fn size_bytes(&self) -> usize {
        self.entries.len() * 2
    }

    /// Approximate `sigmoid(x)`. Exact Q0.16 symmetry for negative inputs,
    /// clamp at the table boundary.
    pub fn lookup(&self, x: f64) -> f64 {
        self.lookup_q16(x) as f64 / LUT_VALUE_SCALE
    }

    /// The raw Q0.16 value a kernel would read (and mirror, for x < 0).
    pub fn lookup_q16(&self, x: f64) -> u32 {
        if x < 0.0 {
            return 65536 - self.lookup_q16(-x);
        }
        let idx = ((x * LUT_INPUT_SCALE) as usize).min(LUT_ENTRIES - 1);
        self.entries[idx] as u32
    }

    pub fn access_cost(&self, placement: LutPlacement, cm: &CostModel) -> LutAccessCost {
        match placement {
            LutPlacement::Scratchpad => {
                LutAccessCost { instructions: cm.instr_lut_scratch_access, dma_bytes: 0 }
            }
            // Bank residency: each access fetches the 8-byte aligned line
            // holding the entry.
            LutPlacement::Bank => {
                LutAccessCost { instructions: cm.instr_lut_scratch_access, dma_bytes: 8 }
            }
        }
    }

    /// Serialize as a flat little-endian 16-bit array.
    pub fn write_le(&self, path: &Path) -> Result<(), ActivationError> {
        let mut f = std::fs::File::create(path)?;
        let mut bytes = Vec::with_capacity(self.size_bytes());
        for &e in &self.entries {
            bytes.extend_from_slice(&e.to_le_bytes());
        }
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_le(path: &Path) -> Result<Self, ActivationError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() != LUT_ENTRIES * 2 {
            return Err(ActivationError::BadLutFile(format!(
                "expected {} bytes, got {}",
                LUT_ENTRIES * 2,
                bytes.len()
            )));
        }
        let entries = bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        Ok(Self { entries })
    }
}

/// Result of the fixed-point Taylor sigmoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorResult {
    pub value: f64,
    /// Modeled instruction cost of the evaluation.
    pub instructions: u64,
    /// Intermediate exponential magnitudes that exceeded the 64-bit
    /// accumulator; the result saturates to 0 or 1 when nonzero.
    pub overflow_events: u32,
}

const TAYLOR_FRAC: u32 = 24;
const TAYLOR_ONE: i64 = 1 << TAYLOR_FRAC;

/// Sigmoid via a Maclaurin expansion of `exp` in 24-fraction-bit fixed point.
/// `x` is range-reduced by halving until `|x| <= 1`, the series is summed
/// with `terms` terms, and the result is squared back up:
/// `exp(x) = exp(x / 2^k)^(2^k)`.
pub fn sigmoid_taylor(x: f64, terms: u32, cm: &CostModel) -> TaylorResult {
    // sigmoid(x) = 1 / (1 + exp(-x)); the exponential is the modeled part.
    let u = -x;
    let mut k = 0u32;
    let mut r = u;
    while r.abs() > 1.0 {
        r /= 2.0;
        k += 1;
    }
    let r_raw = (r * TAYLOR_ONE as f64).round() as i64;

    // exp(r) = sum r^n / n!, all in frac-24.
    let mut sum: i64 = TAYLOR_ONE;
    let mut term: i64 = TAYLOR_ONE;
    for n in 1..=terms as i64 {
        term = (((term as i128 * r_raw as i128) >> TAYLOR_FRAC) / n as i128) as i64;
        sum += term;
    }

    // Square back up; the exponential can overflow the accumulator for large
    // positive u, in which case sigmoid saturates.
    let mut overflow_events = 0u32;
    let mut exp_raw: i64 = sum.max(0);
    for _ in 0..k {
        let sq = (exp_raw as i128 * exp_raw as i128) >> TAYLOR_FRAC;
        if sq > i64::MAX as i128 {
            overflow_events += 1;
            exp_raw = i64::MAX;
            break;
        }
        exp_raw = sq as i64;
    }

    let value = if overflow_events > 0 {
        // exp(-x) overflowed: sigmoid(x) -> 0.
        0.0
    } else {
        let raw = ((TAYLOR_ONE as i128) << TAYLOR_FRAC) / (TAYLOR_ONE as i128 + exp_raw as i128);
        raw as f64 / TAYLOR_ONE as f64
    };

    let instructions =
        terms as u64 * cm.taylor_instr_per_term_int as u64 + k as u64 * cm.fxp.mul_emulated32 as u64;
    TaylorResult { value, instructions, overflow_events }
}
