//! Full-batch gradient descent for linear and logistic regression on the PIM
//! system, in four numeric variants:
//!
//! * `Fp32` — emulated binary32 throughout (no FPU on the cores),
//! * `Int32` — 32-bit fixed point with 10 fraction bits,
//! * `Hyb` — 8-bit operands, 16-bit dot-product lanes, 32-bit gradients,
//!   compiler-default multiply,
//! * `Bui` — same numerics as `Hyb` with the builtin 8-bit multiply; the two
//!   produce bit-identical values and differ only in cost.
//!
//! The host keeps wide (f64) master weights and re-quantizes them every
//! iteration, so low-precision updates cannot stall against the quantization
//! grid. Each iteration is one kernel launch followed by one host-mediated
//! exchange (gather partial gradients, scatter fresh weights). Kernels walk
//! their rows sequentially whatever the thread count, so learned values are
//! invariant to the threads setting; threads only change modeled time.

use thiserror::Error;

use crate::activation::{sigmoid_exact, sigmoid_taylor, LutPlacement, SigmoidLut};
use crate::data::{quantize_dataset, Dataset, DataError, QuantTarget, QuantizedValues};
use crate::fxp::{mul_q_raw, hybrid_dot_raw, FxpError, OverflowMode};
use crate::machine::{CostBreakdown, CostModel, MachineError, PimSystem, ScratchPlan};
use crate::metrics::{training_accuracy, training_error_rate, MetricsError};

pub const TAYLOR_TERMS: u32 = 10;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Fxp(#[from] FxpError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("variant precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericVariant {
    Fp32,
    Int32,
    Hyb,
    Bui,
}

/// How logistic kernels evaluate the sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogActivation {
    Taylor,
    Lut,
}

#[derive(Debug, Clone)]
pub struct GdConfig {
    pub task: Task,
    pub variant: NumericVariant,
    pub activation: LogActivation,
    pub lut_placement: LutPlacement,
    pub iterations: usize,
    pub learning_rate: f64,
    pub n_cores: usize,
    pub threads: u32,
    /// Evaluate the training error every this many iterations (0 disables
    /// the trace).
    pub record_every: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            task: Task::Linear,
            variant: NumericVariant::Fp32,
            activation: LogActivation::Lut,
            lut_placement: LutPlacement::Scratchpad,
            iterations: 500,
            learning_rate: 0.25,
            n_cores: 16,
            threads: 16,
            record_every: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    /// Training error rate (linear) or 1 - accuracy (logistic).
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Dequantized learned weights.
    pub weights: Vec<f64>,
    pub trace: Vec<TracePoint>,
    pub final_error: f64,
    pub breakdown: CostBreakdown,
    /// Kernel cycles of the last (steady-state) iteration's launch.
    pub kernel_cycles_per_iteration: u64,
    /// 16-bit lane saturations, weight clamps, and Taylor overflows.
    pub saturation_events: u64,
}

/// Contiguous near-equal row partition; the first `n % cores` cores take one
/// extra row.
pub fn partition_rows(n: usize, cores: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / cores;
    let rem = n % cores;
    let mut start = 0;
    (0..cores)
        .map(|c| {
            let len = base + usize::from(c < rem);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Smallest right-shift that keeps an `nf`-term lane of i8 x i8 products
/// inside 16 bits.
fn lane_shift_for(nf: usize) -> u8 {
    let mut shift = 0u8;
    while (nf as i64 * 128 * 128) >> shift > i16::MAX as i64 {
        shift += 1;
    }
    shift
}

fn round_half_even(x: f64) -> i64 {
    let floor = x.floor();
    let diff = x - floor;
    if diff > 0.5 {
        floor as i64 + 1
    } else if diff < 0.5 {
        floor as i64
    } else if (floor as i64) % 2 == 0 {
        floor as i64
    } else {
        floor as i64 + 1
    }
}

/// Quantized dataset in the variant's on-device layout.
enum ModelData {
    F32 { x: Vec<f32>, y: Vec<f32> },
    I32 { x: Vec<i32>, y10: Vec<i32> },
    I8 { x: Vec<i8>, y10: Vec<i32>, sx: f64, lane_shift: u8 },
}

impl ModelData {
    fn build(ds: &Dataset, task: Task, variant: NumericVariant) -> Result<Self, TrainError> {
        if task == Task::Logistic && !ds.y.iter().all(|&y| y == 0.0 || y == 1.0) {
            return Err(TrainError::Precondition("logistic labels must be 0 or 1".into()));
        }
        let y10 = || ds.y.iter().map(|&y| round_half_even(y * 1024.0) as i32).collect();
        match variant {
            NumericVariant::Fp32 => Ok(ModelData::F32 {
                x: ds.x.iter().map(|&v| v as f32).collect(),
                y: ds.y.iter().map(|&v| v as f32).collect(),
            }),
            NumericVariant::Int32 => {
                let q = quantize_dataset(ds, QuantTarget::Int32Frac10)?;
                let QuantizedValues::I32 { raw, .. } = q.values else { unreachable!() };
                Ok(ModelData::I32 { x: raw, y10: y10() })
            }
            NumericVariant::Hyb | NumericVariant::Bui => {
                let q = quantize_dataset(ds, QuantTarget::Int8)?;
                let QuantizedValues::I8 { raw, scale } = q.values else { unreachable!() };
                Ok(ModelData::I8 {
                    x: raw,
                    y10: y10(),
                    sx: scale,
                    lane_shift: lane_shift_for(ds.n_features),
                })
            }
        }
    }

    fn elem_size(&self) -> usize {
        match self {
            ModelData::F32 { .. } | ModelData::I32 { .. } => 4,
            ModelData::I8 { .. } => 1,
        }
    }
}

/// Per-iteration quantization of the wide master weights.
enum QuantWeights {
    F32(Vec<f32>),
    I32(Vec<i64>),
    I8 { raw: Vec<i8>, clamps: u64 },
}

impl QuantWeights {
    fn quantize(w: &[f64], data: &ModelData) -> Self {
        match data {
            ModelData::F32 { .. } => QuantWeights::F32(w.iter().map(|&v| v as f32).collect()),
            ModelData::I32 { .. } => {
                QuantWeights::I32(w.iter().map(|&v| round_half_even(v * 1024.0)).collect())
            }
            ModelData::I8 { .. } => {
                let mut clamps = 0;
                let raw = w
                    .iter()
                    .map(|&v| {
                        let r = round_half_even(v * 128.0);
                        if !(-128..=127).contains(&r) {
                            clamps += 1;
                        }
                        r.clamp(-128, 127) as i8
                    })
                    .collect();
                QuantWeights::I8 { raw, clamps }
            }
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        match self {
            QuantWeights::F32(w) => w.iter().flat_map(|v| v.to_le_bytes()).collect(),
            QuantWeights::I32(w) => w.iter().flat_map(|v| (*v as i32).to_le_bytes()).collect(),
            QuantWeights::I8 { raw, .. } => raw.iter().map(|&v| v as u8).collect(),
        }
    }

    fn from_bytes(bytes: &[u8], data: &ModelData) -> Self {
        match data {
            ModelData::F32 { .. } => QuantWeights::F32(
                bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            ModelData::I32 { .. } => QuantWeights::I32(
                bytes
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64)
                    .collect(),
            ),
            ModelData::I8 { .. } => QuantWeights::I8 {
                raw: bytes.iter().map(|&b| b as i8).collect(),
                clamps: 0,
            },
        }
    }

    fn byte_len(&self) -> usize {
        self.to_bytes().len()
    }
}

/// Sigmoid approximation shared by kernels and host-side evaluation; returns
/// the value plus the modeled per-call instruction and DMA cost.
struct Activator<'a> {
    kind: LogActivation,
    variant: NumericVariant,
    lut: &'a SigmoidLut,
    placement: LutPlacement,
    cm: &'a CostModel,
}

impl Activator<'_> {
    fn eval(&self, x: f64) -> (f64, u64, u64, u64) {
        match self.kind {
            LogActivation::Taylor => {
                if self.variant == NumericVariant::Fp32 {
                    // Emulated-float series; the reference value is exact.
                    let instr = TAYLOR_TERMS as u64 * self.cm.taylor_instr_per_term_fp32 as u64;
                    (sigmoid_exact(x), instr, 0, 0)
                } else {
                    let r = sigmoid_taylor(x, TAYLOR_TERMS, self.cm);
                    (r.value, r.instructions, 0, r.overflow_events as u64)
                }
            }
            LogActivation::Lut => {
                let cost = self.lut.access_cost(self.placement, self.cm);
                (self.lut.lookup(x), cost.instructions as u64, cost.dma_bytes, 0)
            }
        }
    }
}

/// Data-independent instruction cost of one row (dot, residual, gradient,
/// loop overhead); activation cost is added separately.
fn row_instr(cm: &CostModel, variant: NumericVariant, nf: usize) -> u64 {
    let nf = nf as u64;
    let overhead = nf * cm.instr_overhead_per_element as u64;
    let fx = &cm.fxp;
    match variant {
        NumericVariant::Fp32 => {
            overhead
                + 2 * nf * (cm.instr_fp32_mul as u64 + cm.instr_fp32_add as u64)
                + cm.instr_fp32_add as u64
        }
        NumericVariant::Int32 => {
            overhead
                + 2 * nf * (fx.mul_emulated32 as u64 + fx.add64 as u64)
                + fx.add32 as u64
        }
        NumericVariant::Hyb | NumericVariant::Bui => {
            let mul8 = if variant == NumericVariant::Hyb { fx.mul_default8 } else { fx.mul_builtin8 };
            overhead
                + nf * (mul8 as u64 + fx.add32 as u64)
                + 2 * fx.add32 as u64 // lane widen + residual
                + nf * (fx.mul_emulated32 as u64 + fx.add64 as u64)
        }
    }
}

/// One core's forward/backward pass over its row range. Returns the encoded
/// partial gradient plus (instructions, dma bytes, saturation events).
#[allow(clippy::too_many_arguments)]
fn core_pass(
    data: &ModelData,
    rows: &std::ops::Range<usize>,
    nf: usize,
    task: Task,
    weights: &QuantWeights,
    act: &Activator<'_>,
    cm: &CostModel,
    variant: NumericVariant,
) -> Result<(Vec<u8>, u64, u64, u64), String> {
    let base_instr = row_instr(cm, variant, nf);
    let mut instr = 0u64;
    let mut dma_bytes = 0u64;
    let mut sat = 0u64;
    let n_rows = rows.len() as u64;
    instr += n_rows * base_instr;

    let logistic = task == Task::Logistic;
    let partial: Vec<u8> = match (data, weights) {
        (ModelData::F32 { x, y }, QuantWeights::F32(w)) => {
            let mut grad = vec![0f32; nf];
            for r in rows.clone() {
                let xr = &x[r * nf..(r + 1) * nf];
                let mut dot = 0f32;
                for j in 0..nf {
                    dot += xr[j] * w[j];
                }
                let pred = if logistic {
                    let (p, i, d, s) = act.eval(dot as f64);
                    instr += i;
                    dma_bytes += d;
                    sat += s;
                    p as f32
                } else {
                    dot
                };
                let res = pred - y[r];
                for j in 0..nf {
                    grad[j] += res * xr[j];
                }
            }
            grad.iter().flat_map(|v| v.to_le_bytes()).collect()
        }
        (ModelData::I32 { x, y10 }, QuantWeights::I32(w)) => {
            let mut grad = vec![0i64; nf];
            for r in rows.clone() {
                let xr = &x[r * nf..(r + 1) * nf];
                let mut dot10 = 0i64;
                for j in 0..nf {
                    dot10 += mul_q_raw(xr[j] as i64, w[j], 10, 32).map_err(|e| e.to_string())?;
                }
                let res10 = if logistic {
                    let (p, i, d, s) = act.eval(dot10 as f64 / 1024.0);
                    instr += i;
                    dma_bytes += d;
                    sat += s;
                    round_half_even(p * 1024.0) - y10[r] as i64
                } else {
                    dot10 - y10[r] as i64
                };
                for j in 0..nf {
                    grad[j] += mul_q_raw(res10, xr[j] as i64, 10, 64).map_err(|e| e.to_string())?;
                }
            }
            grad.iter().flat_map(|v| v.to_le_bytes()).collect()
        }
        (ModelData::I8 { x, y10, sx, lane_shift }, QuantWeights::I8 { raw: w, .. }) => {
            let rescale = (1i64 << lane_shift) as f64 * sx / 128.0;
            let mut grad = vec![0i64; nf];
            for r in rows.clone() {
                let xr = &x[r * nf..(r + 1) * nf];
                let dot = hybrid_dot_raw(xr, w, *lane_shift, OverflowMode::Saturate)
                    .map_err(|e| e.to_string())?;
                sat += dot.saturation_events as u64;
                let dot_real = dot.sum as f64 * rescale;
                let dot10 = round_half_even(dot_real * 1024.0);
                let res10 = if logistic {
                    let (p, i, d, s) = act.eval(dot_real);
                    instr += i;
                    dma_bytes += d;
                    sat += s;
                    round_half_even(p * 1024.0) - y10[r] as i64
                } else {
                    dot10 - y10[r] as i64
                };
                for j in 0..nf {
                    grad[j] += res10 * xr[j] as i64;
                }
            }
            grad.iter().flat_map(|v| v.to_le_bytes()).collect()
        }
        _ => return Err("weight/data variant mismatch".into()),
    };
    // Each iteration streams the core's rows (features + targets) from the
    // bank through the scratchpad.
    let y_size = if matches!(data, ModelData::F32 { .. } | ModelData::I32 { .. }) { 4 } else { 4 };
    dma_bytes += n_rows * (nf as u64 * data.elem_size() as u64 + y_size);
    Ok((partial, instr, dma_bytes, sat))
}

/// Reduce per-core partial gradients in fixed core order into a wide (f64)
/// gradient in value units.
fn reduce_gradient(
    partials: &[Vec<u8>],
    data: &ModelData,
    nf: usize,
    n_rows: usize,
) -> Vec<f64> {
    let mut grad = vec![0f64; nf];
    match data {
        ModelData::F32 { .. } => {
            for p in partials {
                for (j, c) in p.chunks_exact(4).enumerate() {
                    grad[j] += f32::from_le_bytes(c.try_into().unwrap()) as f64;
                }
            }
        }
        ModelData::I32 { .. } => {
            let mut acc = vec![0i64; nf];
            for p in partials {
                for (j, c) in p.chunks_exact(8).enumerate() {
                    acc[j] += i64::from_le_bytes(c.try_into().unwrap());
                }
            }
            for j in 0..nf {
                grad[j] = acc[j] as f64 / 1024.0;
            }
        }
        ModelData::I8 { sx, .. } => {
            let mut acc = vec![0i64; nf];
            for p in partials {
                for (j, c) in p.chunks_exact(8).enumerate() {
                    acc[j] += i64::from_le_bytes(c.try_into().unwrap());
                }
            }
            for j in 0..nf {
                grad[j] = acc[j] as f64 * sx / 1024.0;
            }
        }
    }
    for g in &mut grad {
        *g /= n_rows as f64;
    }
    grad
}

/// Host-side evaluation of the current quantized model over the whole
/// dataset; uses the exact kernel arithmetic, charges no cost.
fn evaluate(
    data: &ModelData,
    ds: &Dataset,
    weights: &QuantWeights,
    task: Task,
    act: &Activator<'_>,
) -> Result<f64, TrainError> {
    let nf = ds.n_features;
    let n = ds.n_rows();
    let mut scores = Vec::with_capacity(n);
    for r in 0..n {
        let dot_real = match (data, weights) {
            (ModelData::F32 { x, .. }, QuantWeights::F32(w)) => {
                let xr = &x[r * nf..(r + 1) * nf];
                let mut dot = 0f32;
                for j in 0..nf {
                    dot += xr[j] * w[j];
                }
                dot as f64
            }
            (ModelData::I32 { x, .. }, QuantWeights::I32(w)) => {
                let xr = &x[r * nf..(r + 1) * nf];
                let mut dot10 = 0i64;
                for j in 0..nf {
                    dot10 += mul_q_raw(xr[j] as i64, w[j], 10, 32)?;
                }
                dot10 as f64 / 1024.0
            }
            (ModelData::I8 { x, sx, lane_shift, .. }, QuantWeights::I8 { raw: w, .. }) => {
                let xr = &x[r * nf..(r + 1) * nf];
                let dot = hybrid_dot_raw(xr, w, *lane_shift, OverflowMode::Saturate)?;
                dot.sum as f64 * (1i64 << lane_shift) as f64 * sx / 128.0
            }
            _ => unreachable!(),
        };
        scores.push(match task {
            Task::Linear => dot_real,
            Task::Logistic => act.eval(dot_real).0,
        });
    }
    Ok(match task {
        Task::Linear => training_error_rate(&scores, &ds.y)?,
        Task::Logistic => 1.0 - training_accuracy(&scores, &ds.y)?,
    })
}

fn align8(n: u64) -> u64 {
    n.div_ceil(8) * 8
}

pub fn train(
    ds: &Dataset,
    cfg: &GdConfig,
    sys: &mut PimSystem,
) -> Result<TrainOutput, TrainError> {
    let nf = ds.n_features;
    let n = ds.n_rows();
    if cfg.n_cores == 0 || cfg.n_cores > sys.n_cores() {
        return Err(TrainError::Precondition(format!(
            "need 1..={} cores, requested {}",
            sys.n_cores(),
            cfg.n_cores
        )));
    }
    if n < cfg.n_cores {
        return Err(TrainError::Precondition(format!(
            "{n} rows cannot feed {} cores",
            cfg.n_cores
        )));
    }

    let data = ModelData::build(ds, cfg.task, cfg.variant)?;
    let lut = SigmoidLut::build();
    let cm = sys.cost_model.clone();
    let act = Activator {
        kind: cfg.activation,
        variant: cfg.variant,
        lut: &lut,
        placement: cfg.lut_placement,
        cm: &cm,
    };
    let ranges = partition_rows(n, cfg.n_cores);
    let cores: Vec<usize> = (0..cfg.n_cores).collect();

    let mut w_wide = vec![0f64; nf];
    let mut qw = QuantWeights::quantize(&w_wide, &data);
    let w_len = qw.byte_len() as u64;
    let grad_len = match data {
        ModelData::F32 { .. } => 4 * nf as u64,
        _ => 8 * nf as u64,
    };

    // Per-core bank layout: [rows | targets | weights | partial gradient].
    let elem = data.elem_size() as u64;
    let layouts: Vec<(u64, u64)> = ranges
        .iter()
        .map(|r| {
            let x_bytes = r.len() as u64 * nf as u64 * elem;
            let y_bytes = r.len() as u64 * 4;
            let w_off = align8(x_bytes) + align8(y_bytes);
            (w_off, align8(w_off + w_len))
        })
        .collect();

    // One-time dataset (+ initial weights) load.
    {
        let x_bytes_of = |r: &std::ops::Range<usize>| -> Vec<u8> {
            match &data {
                ModelData::F32 { x, .. } => {
                    x[r.start * nf..r.end * nf].iter().flat_map(|v| v.to_le_bytes()).collect()
                }
                ModelData::I32 { x, .. } => {
                    x[r.start * nf..r.end * nf].iter().flat_map(|v| v.to_le_bytes()).collect()
                }
                ModelData::I8 { x, .. } => {
                    x[r.start * nf..r.end * nf].iter().map(|&v| v as u8).collect()
                }
            }
        };
        let y_bytes_of = |r: &std::ops::Range<usize>| -> Vec<u8> {
            match &data {
                ModelData::F32 { y, .. } => {
                    y[r.clone()].iter().flat_map(|v| v.to_le_bytes()).collect()
                }
                ModelData::I32 { y10, .. } | ModelData::I8 { y10, .. } => {
                    y10[r.clone()].iter().flat_map(|v| v.to_le_bytes()).collect()
                }
            }
        };
        let w0 = qw.to_bytes();
        let mut staged: Vec<(usize, u64, Vec<u8>)> = Vec::new();
        for (c, r) in ranges.iter().enumerate() {
            let xb = x_bytes_of(r);
            let yb = y_bytes_of(r);
            staged.push((c, 0, xb));
            staged.push((c, align8(r.len() as u64 * nf as u64 * elem), yb));
            staged.push((c, layouts[c].0, w0.clone()));
        }
        let writes: Vec<(usize, u64, &[u8])> =
            staged.iter().map(|(c, o, b)| (*c, *o, b.as_slice())).collect();
        sys.cpu_to_pim(&writes)?;
    }

    let scratch = ScratchPlan {
        reserved_bytes: if cfg.task == Task::Logistic
            && cfg.activation == LogActivation::Lut
            && cfg.lut_placement == LutPlacement::Scratchpad
        {
            lut.size_bytes() as u32
        } else {
            0
        },
        per_thread_bytes: 1024,
    };

    let mut trace = Vec::new();
    let mut saturation_events = 0u64;
    let mut last_launch_cycles = 0u64;
    if cfg.record_every > 0 {
        trace.push(TracePoint { iteration: 0, error: evaluate(&data, ds, &qw, cfg.task, &act)? });
    }

    for iter in 0..cfg.iterations {
        if let QuantWeights::I8 { clamps, .. } = &qw {
            saturation_events += clamps;
        }
        // Launch: every selected core reads its weights from the bank, walks
        // its rows, and writes its partial gradient.
        let launch = {
            let data_ref = &data;
            let act_ref = &act;
            let cm_ref = &cm;
            let ranges_ref = &ranges;
            let layouts_ref = &layouts;
            let mut sat_this = 0u64;
            let res = sys.launch_kernel(&cores, cfg.threads, scratch, |ctx| {
                let c = ctx.core_id;
                let (w_off, g_off) = layouts_ref[c];
                let w_bytes = ctx.bank.read(w_off, w_len).map_err(|_| "weight read")?.to_vec();
                let w = QuantWeights::from_bytes(&w_bytes, data_ref);
                let (partial, instr, dma_bytes, sat) = core_pass(
                    data_ref,
                    &ranges_ref[c],
                    nf,
                    cfg.task,
                    &w,
                    act_ref,
                    cm_ref,
                    cfg.variant,
                )?;
                ctx.instr(instr);
                ctx.dma(dma_bytes);
                sat_this += sat;
                ctx.bank.write(g_off, &partial).map_err(|_| "gradient write")?;
                Ok(())
            })?;
            saturation_events += sat_this;
            res
        };
        last_launch_cycles = launch.delta.pim_kernel_cycles;

        // Host-mediated reduction/broadcast: gather partial gradients,
        // update the wide weights, scatter the re-quantized weights.
        let gathers: Vec<(usize, u64, u64)> =
            cores.iter().map(|&c| (c, layouts[c].1, grad_len)).collect();
        let (partials, _) = sys.inter_core_exchange(&gathers, &[])?;
        let grad = reduce_gradient(&partials, &data, nf, n);
        for j in 0..nf {
            w_wide[j] -= cfg.learning_rate * grad[j];
        }
        qw = QuantWeights::quantize(&w_wide, &data);
        let wb = qw.to_bytes();
        let scatters: Vec<(usize, u64, &[u8])> =
            cores.iter().map(|&c| (c, layouts[c].0, wb.as_slice())).collect();
        sys.inter_core_exchange(&[], &scatters)?;

        if cfg.record_every > 0 && (iter + 1) % cfg.record_every == 0 {
            trace.push(TracePoint {
                iteration: iter + 1,
                error: evaluate(&data, ds, &qw, cfg.task, &act)?,
            });
        }
    }

    // Read the final model back from core 0's bank.
    let (w_back, _) = sys.pim_to_cpu(&[(0, layouts[0].0, w_len)])?;
    let qw_final = QuantWeights::from_bytes(&w_back[0], &data);
    let weights = match &qw_final {
        QuantWeights::F32(w) => w.iter().map(|&v| v as f64).collect(),
        QuantWeights::I32(w) => w.iter().map(|&v| v as f64 / 1024.0).collect(),
        QuantWeights::I8 { raw, .. } => raw.iter().map(|&v| v as f64 / 128.0).collect(),
    };
    let final_error = evaluate(&data, ds, &qw_final, cfg.task, &act)?;
    if cfg.record_every > 0
        && trace.last().map(|t| t.iteration) != Some(cfg.iterations)
    {
        trace.push(TracePoint { iteration: cfg.iterations, error: final_error });
    }

    Ok(TrainOutput {
        weights,
        trace,
        final_error,
        breakdown: sys.breakdown(),
        kernel_cycles_per_iteration: last_launch_cycles,
        saturation_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_classification, gen_regression};

    fn run(ds: &Dataset, cfg: &GdConfig) -> TrainOutput {
        let mut sys = PimSystem::new(cfg.n_cores, CostModel::default());
        train(ds, cfg, &mut sys).unwrap()
    }

    fn lin_cfg(variant: NumericVariant) -> GdConfig {
        GdConfig {
            variant,
            iterations: 300,
            n_cores: 8,
            threads: 16,
            record_every: 50,
            ..GdConfig::default()
        }
    }

    #[test]
    fn partition_covers_all_rows_contiguously() {
        let parts = partition_rows(103, 8);
        assert_eq!(parts.len(), 8);
        assert_eq!(parts[0].start, 0);
        assert_eq!(parts.last().unwrap().end, 103);
        for w in parts.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        let sizes: Vec<usize> = parts.iter().map(|r| r.len()).collect();
        assert_eq!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap(), 1);
    }

    #[test]
    fn lane_shift_keeps_sixteen_features_in_lane() {
        assert_eq!(lane_shift_for(16), 4);
        assert_eq!(lane_shift_for(1), 0);
        assert!(16i64 * 128 * 128 >> lane_shift_for(16) <= i16::MAX as i64);
    }

    #[test]
    fn linear_fp32_converges_and_recovers_weights() {
        let (ds, w_true) = gen_regression(2048, 16, 4, 42);
        let out = run(&ds, &lin_cfg(NumericVariant::Fp32));
        assert!(out.final_error <= 0.015, "error {}", out.final_error);
        let rel = crate::metrics::frobenius_rel(&out.weights, &w_true).unwrap();
        assert!(rel < 0.1, "weight recovery {rel}");
        // Error trace descends from its start.
        assert!(out.trace.last().unwrap().error <= out.trace[0].error);
    }

    #[test]
    fn linear_int32_stays_close_to_fp32() {
        let (ds, _) = gen_regression(2048, 16, 4, 42);
        let fp = run(&ds, &lin_cfg(NumericVariant::Fp32));
        let int = run(&ds, &lin_cfg(NumericVariant::Int32));
        assert!(int.final_error <= fp.final_error + 0.015);
    }

    #[test]
    fn hybrid_and_builtin_agree_bitwise_but_not_in_cost() {
        let (ds, _) = gen_regression(2048, 16, 2, 42);
        let hyb = run(&ds, &lin_cfg(NumericVariant::Hyb));
        let bui = run(&ds, &lin_cfg(NumericVariant::Bui));
        assert_eq!(hyb.weights, bui.weights);
        assert_eq!(hyb.trace, bui.trace);
        assert_eq!(hyb.final_error, bui.final_error);
        assert!(bui.kernel_cycles_per_iteration < hyb.kernel_cycles_per_iteration);
    }

    #[test]
    fn variant_kernel_cost_ordering() {
        let (ds, _) = gen_regression(2048, 16, 2, 42);
        let cost = |v| run(&ds, &lin_cfg(v)).kernel_cycles_per_iteration;
        let (fp, int, hyb, bui) = (
            cost(NumericVariant::Fp32),
            cost(NumericVariant::Int32),
            cost(NumericVariant::Hyb),
            cost(NumericVariant::Bui),
        );
        assert!(fp > int && int > hyb && hyb > bui, "{fp} {int} {hyb} {bui}");
    }

    #[test]
    fn values_are_invariant_to_thread_count() {
        let (ds, _) = gen_regression(1024, 16, 4, 7);
        let mut one = lin_cfg(NumericVariant::Int32);
        one.threads = 1;
        let mut many = lin_cfg(NumericVariant::Int32);
        many.threads = 16;
        let a = run(&ds, &one);
        let b = run(&ds, &many);
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.trace, b.trace);
        assert!(a.breakdown.pim_kernel_cycles > b.breakdown.pim_kernel_cycles);
    }

    #[test]
    fn breakdown_has_all_four_components() {
        let (ds, _) = gen_regression(1024, 16, 4, 7);
        let out = run(&ds, &lin_cfg(NumericVariant::Int32));
        let b = out.breakdown;
        assert!(b.pim_kernel_cycles > 0);
        assert!(b.cpu_to_pim_cycles > 0);
        assert!(b.pim_to_cpu_cycles > 0);
        assert!(b.inter_pim_cycles > 0);
        assert!(b.dma_cycles > 0);
    }

    #[test]
    fn logistic_lut_learns_the_boundary() {
        let (ds, _) = gen_classification(4096, 4, 33);
        let cfg = GdConfig {
            task: Task::Logistic,
            variant: NumericVariant::Int32,
            activation: LogActivation::Lut,
            iterations: 400,
            n_cores: 8,
            ..GdConfig::default()
        };
        let out = run(&ds, &cfg);
        assert!(out.final_error <= 0.05, "logistic error {}", out.final_error);
    }

    #[test]
    fn logistic_taylor_costs_far_more_than_lut() {
        let (ds, _) = gen_classification(2048, 4, 33);
        let base = GdConfig {
            task: Task::Logistic,
            variant: NumericVariant::Int32,
            iterations: 20,
            n_cores: 4,
            record_every: 0,
            ..GdConfig::default()
        };
        let lut = run(&ds, &GdConfig { activation: LogActivation::Lut, ..base.clone() });
        let taylor = run(&ds, &GdConfig { activation: LogActivation::Taylor, ..base.clone() });
        let ratio =
            taylor.kernel_cycles_per_iteration as f64 / lut.kernel_cycles_per_iteration as f64;
        assert!(ratio >= 20.0, "taylor/lut kernel ratio {ratio}");
    }

    #[test]
    fn logistic_rejects_non_binary_labels() {
        let (ds, _) = gen_regression(256, 4, 4, 1);
        let cfg = GdConfig { task: Task::Logistic, n_cores: 2, ..GdConfig::default() };
        let mut sys = PimSystem::new(2, CostModel::default());
        assert!(matches!(train(&ds, &cfg, &mut sys), Err(TrainError::Precondition(_))));
    }

    #[test]
    fn trace_cadence_and_endpoints() {
        let (ds, _) = gen_regression(512, 8, 4, 5);
        let cfg = GdConfig {
            iterations: 120,
            record_every: 50,
            n_cores: 4,
            ..GdConfig::default()
        };
        let out = run(&ds, &cfg);
        let iters: Vec<usize> = out.trace.iter().map(|t| t.iteration).collect();
        assert_eq!(iters, vec![0, 50, 100, 120]);
    }
}
