//! Synthetic dataset generators, CSV I/O, and dataset quantization.
//!
//! All generators are seeded ChaCha streams: the same seed yields the same
//! dataset on every platform.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fxp::{quantize, OverflowMode, QuantizationParams};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("csv line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("csv line {line}: expected {expected} columns, got {got}")]
    SchemaMismatch { line: usize, expected: usize, got: usize },
    #[error("empty dataset")]
    Empty,
    #[error("value {value} at row {row}, column {col} does not fit the quantization target")]
    Unquantizable { value: f64, row: usize, col: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Row-major numeric dataset; `y` holds the regression target, class id, or
/// generating-cluster id depending on provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_features: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        if self.n_features == 0 {
            0
        } else {
            self.x.len() / self.n_features
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }
}

fn round_decimals(x: f64, decimals: u32) -> f64 {
    let p = 10f64.powi(decimals as i32);
    (x * p).round() / p
}

/// Linear-regression task: features uniform on [0, 1) rounded to `decimals`
/// places, targets `x . w_true` plus uniform noise on [-0.05, 0.05).
/// Returns the dataset and the generating weights (each uniform on [-1, 1)).
pub fn gen_regression(
    n_rows: usize,
    n_features: usize,
    decimals: u32,
    seed: u64,
) -> (Dataset, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_true: Vec<f64> = (0..n_features).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut x = Vec::with_capacity(n_rows * n_features);
    let mut y = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let start = x.len();
        for _ in 0..n_features {
            x.push(round_decimals(rng.gen_range(0.0..1.0), decimals));
        }
        let dot: f64 = x[start..].iter().zip(&w_true).map(|(a, b)| a * b).sum();
        y.push(dot + rng.gen_range(-0.05..0.05));
    }
    (Dataset { n_features, x, y }, w_true)
}

/// Binary-classification task with 16 features: 4 informative (uniform on
/// [-1, 1), they carry the linearly separable signal), 4 redundant (random
/// linear combinations of the informative ones), 8 pure noise. The label is
/// the side of a hyperplane through the origin, so classes are balanced.
pub fn gen_classification(n_rows: usize, decimals: u32, seed: u64) -> (Dataset, Vec<f64>) {
    const INFORMATIVE: usize = 4;
    const REDUNDANT: usize = 4;
    const NOISE: usize = 8;
    let n_features = INFORMATIVE + REDUNDANT + NOISE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_true: Vec<f64> = (0..INFORMATIVE).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // Mixing coefficients for the redundant block.
    let mix: Vec<f64> =
        (0..REDUNDANT * INFORMATIVE).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut x = Vec::with_capacity(n_rows * n_features);
    let mut y = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let inf: Vec<f64> =
            (0..INFORMATIVE).map(|_| round_decimals(rng.gen_range(-1.0..1.0), decimals)).collect();
        let margin: f64 = inf.iter().zip(&w_true).map(|(a, b)| a * b).sum();
        x.extend_from_slice(&inf);
        for r in 0..REDUNDANT {
            let v: f64 = (0..INFORMATIVE).map(|j| mix[r * INFORMATIVE + j] * inf[j]).sum();
            x.push(round_decimals(v / INFORMATIVE as f64, decimals));
        }
        for _ in 0..NOISE {
            x.push(round_decimals(rng.gen_range(-1.0..1.0), decimals));
        }
        y.push(if margin > 0.0 { 1.0 } else { 0.0 });
    }
    (Dataset { n_features, x, y }, w_true)
}

/// Isotropic Gaussian blobs: `k` centers uniform on [-10, 10)^d, unit
/// variance. `y` records the generating cluster of each row.
pub fn gen_clusters(
    n_rows: usize,
    n_features: usize,
    k: usize,
    seed: u64,
) -> (Dataset, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f64> =
        (0..k * n_features).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let mut x = Vec::with_capacity(n_rows * n_features);
    let mut y = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let c = rng.gen_range(0..k);
        for j in 0..n_features {
            x.push(centers[c * n_features + j] + gauss(&mut rng));
        }
        y.push(c as f64);
    }
    (Dataset { n_features, x, y }, centers)
}

/// Box-Muller standard normal draw (two uniforms per sample).
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Load a headerless CSV where every column is numeric and the last column is
/// the target.
pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut n_features = 0usize;
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record?;
        if i == 0 {
            if record.len() < 2 {
                return Err(DataError::Parse {
                    line,
                    message: "need at least one feature column and one target column".into(),
                });
            }
            n_features = record.len() - 1;
        } else if record.len() != n_features + 1 {
            return Err(DataError::SchemaMismatch {
                line,
                expected: n_features + 1,
                got: record.len(),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| DataError::Parse {
                line,
                message: format!("column {}: not a number: {field:?}", c + 1),
            })?;
            if c < n_features {
                x.push(v);
            } else {
                y.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Dataset { n_features, x, y })
}

pub fn write_csv(path: &Path, ds: &Dataset) -> Result<(), DataError> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..ds.n_rows() {
        let mut record: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        record.push(ds.y[i].to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantTarget {
    /// 32-bit fixed point with 10 fraction bits.
    Int32Frac10,
    /// 8-bit; exact decimal scale when the data allows, Q0.7 otherwise.
    Int8,
    /// 16-bit symmetric per-attribute max-abs.
    Int16Sym,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantizedValues {
    I32 { raw: Vec<i32>, frac_bits: u32 },
    I8 { raw: Vec<i8>, scale: f64 },
    I16PerAttr { raw: Vec<i16>, scales: Vec<f64> },
}

/// Record of how a dataset was quantized, written alongside exported data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantProvenance {
    pub target: QuantTarget,
    pub scales: Vec<f64>,
    /// True when quantization was exact (zero representation error).
    pub exact: bool,
    pub max_abs_error: f64,
    pub n_rows: usize,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDataset {
    pub n_features: usize,
    pub values: QuantizedValues,
    pub provenance: QuantProvenance,
}

/// Smallest number of decimal places (up to `max_d`) that represents every
/// value exactly, if any.
fn detect_decimals(x: &[f64], max_d: u32) -> Option<u32> {
    (0..=max_d).find(|&d| {
        let p = 10f64.powi(d as i32);
        x.iter().all(|&v| {
            let scaled = v * p;
            (scaled - scaled.round()).abs() < 1e-9
        })
    })
}

pub fn quantize_dataset(ds: &Dataset, target: QuantTarget) -> Result<QuantizedDataset, DataError> {
    let nf = ds.n_features;
    if ds.x.is_empty() || nf == 0 {
        return Err(DataError::Empty);
    }
    let fail = |value: f64, idx: usize| DataError::Unquantizable {
        value,
        row: idx / nf,
        col: idx % nf,
    };
    let mut max_err = 0.0f64;
    let (values, scales, exact) = match target {
        QuantTarget::Int32Frac10 => {
            let p = QuantizationParams::new(1.0 / 1024.0, 32);
            let mut raw = Vec::with_capacity(ds.x.len());
            for (i, &v) in ds.x.iter().enumerate() {
                let r = quantize(v, &p, OverflowMode::Error).map_err(|_| fail(v, i))?;
                max_err = max_err.max((r as f64 * p.scale - v).abs());
                raw.push(r as i32);
            }
            (QuantizedValues::I32 { raw, frac_bits: 10 }, vec![p.scale], max_err == 0.0)
        }
        QuantTarget::Int8 => {
            // Fixed-decimal samples become integers at scale 10^-d,
            // saturating at the 8-bit range: 2-decimal data round-trips
            // exactly, while 4-decimal data clips hard (the reason the
            // hybrid trainer variants lose so much accuracy on it). Data
            // without short decimal structure uses the Q0.7 grid.
            let pow = detect_decimals(&ds.x, 4).map_or(128.0, |d| 10f64.powi(d as i32));
            let scale = 1.0 / pow;
            let p = QuantizationParams::new(scale, 8);
            let mut raw = Vec::with_capacity(ds.x.len());
            for (i, &v) in ds.x.iter().enumerate() {
                let r = quantize(v, &p, OverflowMode::Saturate).map_err(|_| fail(v, i))?;
                // Dequantize by dividing by the power so a fixed-decimal
                // value round-trips bit-exactly.
                max_err = max_err.max((r as f64 / pow - v).abs());
                raw.push(r as i8);
            }
            (QuantizedValues::I8 { raw, scale }, vec![scale], max_err == 0.0)
        }
        QuantTarget::Int16Sym => {
            let n_rows = ds.x.len() / nf;
            let mut params = Vec::with_capacity(nf);
            for j in 0..nf {
                let max_abs =
                    (0..n_rows).map(|i| ds.x[i * nf + j].abs()).fold(0.0f64, f64::max);
                params.push(QuantizationParams::from_max_abs(max_abs, 16));
            }
            let mut raw = Vec::with_capacity(ds.x.len());
            for (i, &v) in ds.x.iter().enumerate() {
                let p = &params[i % nf];
                let r = quantize(v, p, OverflowMode::Saturate).map_err(|_| fail(v, i))?;
                max_err = max_err.max((r as f64 * p.scale - v).abs());
                raw.push(r as i16);
            }
            let scales: Vec<f64> = params.iter().map(|p| p.scale).collect();
            (QuantizedValues::I16PerAttr { raw, scales: scales.clone() }, scales, false)
        }
    };
    Ok(QuantizedDataset {
        n_features: nf,
        values,
        provenance: QuantProvenance {
            target,
            scales,
            exact,
            max_abs_error: max_err,
            n_rows: ds.x.len() / nf,
            n_features: nf,
        },
    })
}
