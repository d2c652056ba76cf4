//! Functional simulator and cost accountant for a generic near-bank PIM
//! system: host orchestration, per-core bank/scratchpad memories, interleaved
//! threads, explicit host-mediated transfers, and the four-way time breakdown.
//!
//! Kernels execute natively for values; instructions are counted per
//! operation class and cycles derive from the pipeline-throughput formula
//! `throughput(t) = min(t, saturation) / saturation` instructions per cycle.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fxp::FxpCosts;

pub const BANK_CAPACITY: u64 = 64 * 1024 * 1024;
pub const SCRATCHPAD_CAPACITY: u32 = 64 * 1024;
pub const MAX_THREADS: u32 = 24;
pub const DMA_MAX_CHUNK: u64 = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MachineError {
    #[error("core {core}: bank capacity exceeded (offset {offset} + len {len} > 64 MiB)")]
    CapacityExceeded { core: usize, offset: u64, len: u64 },
    #[error("core {core}: region out of bounds (offset {offset}, len {len})")]
    OutOfBounds { core: usize, offset: u64, len: u64 },
    #[error("core {core}: DMA offsets/length must be 8-byte aligned")]
    Misaligned { core: usize },
    #[error("thread budget exceeded: requested {requested}, admissible {admissible}")]
    ThreadBudgetExceeded { requested: u32, admissible: u32 },
    #[error("scratchpad budget exceeded: reserved {reserved} bytes > {capacity}")]
    ScratchBudgetExceeded { reserved: u32, capacity: u32 },
    #[error("no such core: {0}")]
    BadCore(usize),
    #[error("kernel failed on core {core}: {message}")]
    KernelFailed { core: usize, message: String },
    #[error("config: {0}")]
    Config(String),
}

/// All analytic cost constants of the machine model. Every field is exposed
/// through the plain-text configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Threads needed to keep the pipeline full.
    pub pipeline_saturation_threads: u32,
    pub cycles_per_instruction_at_saturation: f64,
    /// Fixed dispatch cost of one DMA transfer.
    pub dma_fixed_cycles: u64,
    pub dma_cycles_per_8bytes: f64,
    /// Host<->bank transfer bandwidth.
    pub transfer_bandwidth_bytes_per_cycle: f64,
    /// Per-launch per-core setup/teardown instructions (kernel start, barriers,
    /// intra-core reduction). This is what bends strong scaling below ideal.
    pub kernel_launch_overhead_instr: u64,
    /// Loop/addressing/load instructions charged per processed element.
    pub instr_overhead_per_element: u32,
    /// Emulated binary32 operation costs.
    pub instr_fp32_mul: u32,
    pub instr_fp32_add: u32,
    pub instr_fp32_cmp: u32,
    /// Compiler-default 16-bit multiply (8-bit decomposition).
    pub instr_mul16_default: u32,
    /// Modeled cost of one Taylor term (one emulated multiply plus one
    /// divide-equivalent at extended precision) for the fixed-point path.
    pub taylor_instr_per_term_int: u32,
    /// Same, on the emulated-float path.
    pub taylor_instr_per_term_fp32: u32,
    /// One scratchpad LUT access.
    pub instr_lut_scratch_access: u32,
    pub fxp: FxpCosts,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            pipeline_saturation_threads: 11,
            cycles_per_instruction_at_saturation: 1.0,
            dma_fixed_cycles: 77,
            dma_cycles_per_8bytes: 0.5,
            transfer_bandwidth_bytes_per_cycle: 8.0,
            kernel_launch_overhead_instr: 100_000,
            instr_overhead_per_element: 20,
            instr_fp32_mul: 330,
            instr_fp32_add: 10,
            instr_fp32_cmp: 5,
            instr_mul16_default: 7,
            taylor_instr_per_term_int: 4000,
            taylor_instr_per_term_fp32: 11000,
            instr_lut_scratch_access: 3,
            fxp: FxpCosts::default(),
        }
    }
}

impl CostModel {
    /// Cycles for `instructions` issued by `threads` interleaved threads.
    pub fn kernel_cycles(&self, instructions: u64, threads: u32) -> u64 {
        let sat = self.pipeline_saturation_threads as u64;
        let active = (threads as u64).min(sat).max(1);
        let scaled = instructions as f64 * self.cycles_per_instruction_at_saturation * sat as f64
            / active as f64;
        scaled.ceil() as u64
    }

    /// DMA cost of one transfer of `len` bytes (chunked at 2048).
    pub fn dma_cycles(&self, len: u64) -> f64 {
        if len == 0 {
            return self.dma_fixed_cycles as f64;
        }
        let transfers = len.div_ceil(DMA_MAX_CHUNK);
        transfers as f64 * self.dma_fixed_cycles as f64
            + self.dma_cycles_per_8bytes * (len as f64 / 8.0)
    }

    /// Host<->bank transfer cost: parallel (max) when all buffers are the same
    /// size, serial (sum) otherwise.
    pub fn transfer_cycles(&self, lens: &[u64]) -> u64 {
        if lens.is_empty() {
            return 0;
        }
        let equal = lens.windows(2).all(|w| w[0] == w[1]);
        let bytes = if equal { lens[0] } else { lens.iter().sum() };
        (bytes as f64 / self.transfer_bandwidth_bytes_per_cycle).ceil() as u64
    }

    /// Parse `key = value` overrides (flat config file section).
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), MachineError> {
        fn p<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, MachineError> {
            v.trim()
                .parse()
                .map_err(|_| MachineError::Config(format!("bad value for {k}: {v}")))
        }
        match key {
            "pipeline_saturation_threads" => self.pipeline_saturation_threads = p(key, value)?,
            "cycles_per_instruction_at_saturation" => {
                self.cycles_per_instruction_at_saturation = p(key, value)?
            }
            "dma_fixed_cycles" => self.dma_fixed_cycles = p(key, value)?,
            "dma_cycles_per_8bytes" => self.dma_cycles_per_8bytes = p(key, value)?,
            "transfer_bandwidth_bytes_per_cycle" => {
                self.transfer_bandwidth_bytes_per_cycle = p(key, value)?
            }
            "kernel_launch_overhead_instr" => self.kernel_launch_overhead_instr = p(key, value)?,
            "instr_overhead_per_element" => self.instr_overhead_per_element = p(key, value)?,
            "instr_fp32_mul" => self.instr_fp32_mul = p(key, value)?,
            "instr_fp32_add" => self.instr_fp32_add = p(key, value)?,
            "instr_fp32_cmp" => self.instr_fp32_cmp = p(key, value)?,
            "instr_mul16_default" => self.instr_mul16_default = p(key, value)?,
            "taylor_instr_per_term_int" => self.taylor_instr_per_term_int = p(key, value)?,
            "taylor_instr_per_term_fp32" => self.taylor_instr_per_term_fp32 = p(key, value)?,
            "instr_lut_scratch_access" => self.instr_lut_scratch_access = p(key, value)?,
            "instr_mul_emulated32" => self.fxp.mul_emulated32 = p(key, value)?,
            "instr_mul_default8" => self.fxp.mul_default8 = p(key, value)?,
            "instr_mul_builtin8" => self.fxp.mul_builtin8 = p(key, value)?,
            "instr_add32" => self.fxp.add32 = p(key, value)?,
            "instr_add64" => self.fxp.add64 = p(key, value)?,
            other => return Err(MachineError::Config(format!("unknown cost-model key: {other}"))),
        }
        Ok(())
    }
}

/// Modeled time split into the four components of the breakdown plots, plus
/// informational instruction/DMA tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub pim_kernel_cycles: u64,
    pub cpu_to_pim_cycles: u64,
    pub pim_to_cpu_cycles: u64,
    pub inter_pim_cycles: u64,
    /// Total instructions issued across all cores (informational).
    pub instructions: u64,
    /// Total DMA engine cycles across all cores (informational; already
    /// included in `pim_kernel_cycles`).
    pub dma_cycles: u64,
}

impl CostBreakdown {
    pub fn total(&self) -> u64 {
        self.pim_kernel_cycles + self.cpu_to_pim_cycles + self.pim_to_cpu_cycles + self.inter_pim_cycles
    }

    pub fn communication(&self) -> u64 {
        self.cpu_to_pim_cycles + self.pim_to_cpu_cycles + self.inter_pim_cycles
    }
}

impl Add for CostBreakdown {
    type Output = CostBreakdown;
    fn add(self, rhs: CostBreakdown) -> CostBreakdown {
        CostBreakdown {
            pim_kernel_cycles: self.pim_kernel_cycles + rhs.pim_kernel_cycles,
            cpu_to_pim_cycles: self.cpu_to_pim_cycles + rhs.cpu_to_pim_cycles,
            pim_to_cpu_cycles: self.pim_to_cpu_cycles + rhs.pim_to_cpu_cycles,
            inter_pim_cycles: self.inter_pim_cycles + rhs.inter_pim_cycles,
            instructions: self.instructions + rhs.instructions,
            dma_cycles: self.dma_cycles + rhs.dma_cycles,
        }
    }
}

impl AddAssign for CostBreakdown {
    fn add_assign(&mut self, rhs: CostBreakdown) {
        *self = *self + rhs;
    }
}

/// Grow-on-write byte region with a hard capacity.
#[derive(Debug, Default, Clone)]
pub struct BankMemory {
    data: Vec<u8>,
    capacity: u64,
}

impl BankMemory {
    fn new(capacity: u64) -> Self {
        Self { data: Vec::new(), capacity }
    }

    fn ensure(&mut self, end: u64) {
        if (self.data.len() as u64) < end {
            self.data.resize(end as usize, 0);
        }
    }

    pub fn write(&mut self, offset: u64, bytes: &[u8]) -> Result<(), ()> {
        let end = offset + bytes.len() as u64;
        if end > self.capacity {
            return Err(());
        }
        self.ensure(end);
        self.data[offset as usize..end as usize].copy_from_slice(bytes);
        Ok(())
    }

    pub fn read(&mut self, offset: u64, len: u64) -> Result<&[u8], ()> {
        let end = offset + len;
        if end > self.capacity {
            return Err(());
        }
        self.ensure(end);
        Ok(&self.data[offset as usize..end as usize])
    }

    pub fn len(&self) -> u64 {
        self.data.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// One PIM core: a 64-MiB bank, a 64-KiB scratchpad, up to 24 threads.
#[derive(Debug)]
pub struct PimCore {
    pub bank: BankMemory,
    scratchpad: Vec<u8>,
}

impl PimCore {
    fn new() -> Self {
        Self { bank: BankMemory::new(BANK_CAPACITY), scratchpad: Vec::new() }
    }
}

/// Scratchpad requirements of a kernel: a reserved block (e.g. a resident
/// LUT) plus a per-thread working buffer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScratchPlan {
    pub reserved_bytes: u32,
    pub per_thread_bytes: u32,
}

impl ScratchPlan {
    /// Highest thread count the scratchpad budget admits.
    pub fn admissible_threads(&self) -> Result<u32, MachineError> {
        if self.reserved_bytes > SCRATCHPAD_CAPACITY {
            return Err(MachineError::ScratchBudgetExceeded {
                reserved: self.reserved_bytes,
                capacity: SCRATCHPAD_CAPACITY,
            });
        }
        let free = SCRATCHPAD_CAPACITY - self.reserved_bytes;
        let by_budget = if self.per_thread_bytes == 0 {
            MAX_THREADS
        } else {
            free / self.per_thread_bytes
        };
        Ok(by_budget.min(MAX_THREADS))
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DmaDirection {
    BankToScratch,
    ScratchToBank,
}

/// Per-core kernel execution context.
pub struct KernelCtx<'a> {
    pub core_id: usize,
    pub bank: &'a mut BankMemory,
    cost_model: &'a CostModel,
    instructions: u64,
    dma_cycles: f64,
}

impl<'a> KernelCtx<'a> {
    pub fn cost_model(&self) -> &CostModel {
        self.cost_model
    }

    /// Charge `n` instructions.
    #[inline]
    pub fn instr(&mut self, n: u64) {
        self.instructions += n;
    }

    /// Charge a streaming bank<->scratchpad DMA of `len` bytes.
    #[inline]
    pub fn dma(&mut self, len: u64) {
        self.dma_cycles += self.cost_model.dma_cycles(len);
    }

    pub fn instructions(&self) -> u64 {
        self.instructions
    }
}

/// Per-core tally returned by a launch.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CoreTally {
    pub instructions: u64,
    pub dma_cycles: u64,
    pub cycles: u64,
}

#[derive(Debug, Clone, Default)]
pub struct LaunchResult {
    pub delta: CostBreakdown,
    pub per_core: Vec<CoreTally>,
}

/// The PIM system: host plus an array of shared-nothing cores.
#[derive(Debug)]
pub struct PimSystem {
    cores: Vec<PimCore>,
    pub cost_model: CostModel,
    pub clock_mhz: f64,
    accumulated: CostBreakdown,
}

impl PimSystem {
    pub fn new(n_cores: usize, cost_model: CostModel) -> Self {
        Self::with_clock(n_cores, cost_model, 425.0)
    }

    pub fn with_clock(n_cores: usize, cost_model: CostModel, clock_mhz: f64) -> Self {
        let cores = (0..n_cores).map(|_| PimCore::new()).collect();
        Self { cores, cost_model, clock_mhz, accumulated: CostBreakdown::default() }
    }

    pub fn n_cores(&self) -> usize {
        self.cores.len()
    }

    pub fn breakdown(&self) -> CostBreakdown {
        self.accumulated
    }

    pub fn reset_breakdown(&mut self) {
        self.accumulated = CostBreakdown::default();
    }

    pub fn cycles_to_ms(&self, cycles: u64) -> f64 {
        cycles as f64 / (self.clock_mhz * 1e3)
    }

    fn core_mut(&mut self, core: usize) -> Result<&mut PimCore, MachineError> {
        let n = self.cores.len();
        self.cores.get_mut(core).ok_or(MachineError::BadCore(n.min(core)))
    }

    /// Copy host buffers into the target cores' banks. Transfers of identical
    /// size proceed in parallel (cost of one); mixed sizes serialize.
    pub fn cpu_to_pim(
        &mut self,
        writes: &[(usize, u64, &[u8])],
    ) -> Result<CostBreakdown, MachineError> {
        for &(core, offset, bytes) in writes {
            let c = self.core_mut(core)?;
            c.bank.write(offset, bytes).map_err(|_| MachineError::CapacityExceeded {
                core,
                offset,
                len: bytes.len() as u64,
            })?;
        }
        let lens: Vec<u64> = writes.iter().map(|w| w.2.len() as u64).collect();
        let delta = CostBreakdown {
            cpu_to_pim_cycles: self.cost_model.transfer_cycles(&lens),
            ..Default::default()
        };
        self.accumulated += delta;
        Ok(delta)
    }

    /// Read regions of the cores' banks back to the host, bit-exact.
    pub fn pim_to_cpu(
        &mut self,
        reads: &[(usize, u64, u64)],
    ) -> Result<(Vec<Vec<u8>>, CostBreakdown), MachineError> {
        let mut buffers = Vec::with_capacity(reads.len());
        for &(core, offset, len) in reads {
            let c = self.core_mut(core)?;
            let bytes = c
                .bank
                .read(offset, len)
                .map_err(|_| MachineError::OutOfBounds { core, offset, len })?;
            buffers.push(bytes.to_vec());
        }
        let lens: Vec<u64> = reads.iter().map(|r| r.2).collect();
        let delta = CostBreakdown {
            pim_to_cpu_cycles: self.cost_model.transfer_cycles(&lens),
            ..Default::default()
        };
        self.accumulated += delta;
        Ok((buffers, delta))
    }

    /// Host-mediated inter-core redistribution: a gather followed by a
    /// scatter, booked under inter-PIM time. Even a single-core system pays
    /// both legs; there is no direct channel.
    pub fn inter_core_exchange(
        &mut self,
        gathers: &[(usize, u64, u64)],
        scatters: &[(usize, u64, &[u8])],
    ) -> Result<(Vec<Vec<u8>>, CostBreakdown), MachineError> {
        let mut buffers = Vec::with_capacity(gathers.len());
        for &(core, offset, len) in gathers {
            let c = self.core_mut(core)?;
            let bytes = c
                .bank
                .read(offset, len)
                .map_err(|_| MachineError::OutOfBounds { core, offset, len })?;
            buffers.push(bytes.to_vec());
        }
        for &(core, offset, bytes) in scatters {
            let c = self.core_mut(core)?;
            c.bank.write(offset, bytes).map_err(|_| MachineError::CapacityExceeded {
                core,
                offset,
                len: bytes.len() as u64,
            })?;
        }
        let gather_lens: Vec<u64> = gathers.iter().map(|g| g.2).collect();
        let scatter_lens: Vec<u64> = scatters.iter().map(|s| s.2.len() as u64).collect();
        let delta = CostBreakdown {
            inter_pim_cycles: self.cost_model.transfer_cycles(&gather_lens)
                + self.cost_model.transfer_cycles(&scatter_lens),
            ..Default::default()
        };
        self.accumulated += delta;
        Ok((buffers, delta))
    }

    /// Explicit bank<->scratchpad DMA with the deterministic per-transfer
    /// cost. Offsets and length must be 8-byte aligned; transfers above 2048
    /// bytes are chunked.
    pub fn dma(
        &mut self,
        core: usize,
        bank_offset: u64,
        scratch_offset: u64,
        len: u64,
        direction: DmaDirection,
    ) -> Result<CostBreakdown, MachineError> {
        if bank_offset % 8 != 0 || scratch_offset % 8 != 0 || len % 8 != 0 {
            return Err(MachineError::Misaligned { core });
        }
        let cycles = self.cost_model.dma_cycles(len);
        let c = self.core_mut(core)?;
        if scratch_offset + len > SCRATCHPAD_CAPACITY as u64 {
            return Err(MachineError::OutOfBounds { core, offset: scratch_offset, len });
        }
        if c.scratchpad.len() < SCRATCHPAD_CAPACITY as usize {
            c.scratchpad.resize(SCRATCHPAD_CAPACITY as usize, 0);
        }
        match direction {
            DmaDirection::BankToScratch => {
                let bytes = c
                    .bank
                    .read(bank_offset, len)
                    .map_err(|_| MachineError::OutOfBounds { core, offset: bank_offset, len })?
                    .to_vec();
                c.scratchpad[scratch_offset as usize..(scratch_offset + len) as usize]
                    .copy_from_slice(&bytes);
            }
            DmaDirection::ScratchToBank => {
                let bytes =
                    c.scratchpad[scratch_offset as usize..(scratch_offset + len) as usize].to_vec();
                c.bank.write(bank_offset, &bytes).map_err(|_| MachineError::CapacityExceeded {
                    core,
                    offset: bank_offset,
                    len,
                })?;
            }
        }
        let rounded = cycles.round() as u64;
        let delta = CostBreakdown {
            pim_kernel_cycles: rounded,
            dma_cycles: rounded,
            ..Default::default()
        };
        self.accumulated += delta;
        Ok(delta)
    }

    /// Run `kernel` once per selected core (deterministic core order), model
    /// the cycle cost from the per-core instruction tallies, and bound the
    /// launch by the slowest core.
    pub fn launch_kernel<F>(
        &mut self,
        cores: &[usize],
        threads: u32,
        scratch: ScratchPlan,
        mut kernel: F,
    ) -> Result<LaunchResult, MachineError>
    where
        F: FnMut(&mut KernelCtx) -> Result<(), String>,
    {
        let admissible = scratch.admissible_threads()?;
        if threads == 0 || threads > admissible {
            return Err(MachineError::ThreadBudgetExceeded { requested: threads, admissible });
        }
        let cm = self.cost_model.clone();
        let mut per_core = Vec::with_capacity(cores.len());
        let mut max_cycles = 0u64;
        let mut total_instr = 0u64;
        let mut total_dma = 0u64;
        for &core in cores {
            if core >= self.cores.len() {
                return Err(MachineError::BadCore(core));
            }
            let bank = &mut self.cores[core].bank;
            let mut ctx = KernelCtx { core_id: core, bank, cost_model: &cm, instructions: 0, dma_cycles: 0.0 };
            kernel(&mut ctx)
                .map_err(|message| MachineError::KernelFailed { core, message })?;
            let instr = ctx.instructions + cm.kernel_launch_overhead_instr;
            let dma = ctx.dma_cycles.round() as u64;
            let cycles = cm.kernel_cycles(instr, threads) + dma;
            max_cycles = max_cycles.max(cycles);
            total_instr += instr;
            total_dma += dma;
            per_core.push(CoreTally { instructions: instr, dma_cycles: dma, cycles });
        }
        let delta = CostBreakdown {
            pim_kernel_cycles: max_cycles,
            instructions: total_instr,
            dma_cycles: total_dma,
            ..Default::default()
        };
        self.accumulated += delta;
        Ok(LaunchResult { delta, per_core })
    }
}

/// Parse a plain-text machine/cost configuration: `[section]` headers,
/// `key = value` lines, `#` comments. Sections: `machine`, `cost_model`.
pub fn parse_machine_config(text: &str) -> Result<(CostModel, f64), MachineError> {
    let mut cm = CostModel::default();
    let mut clock_mhz = 425.0;
    let mut section = String::from("machine");
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].trim().to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| MachineError::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim();
        match section.as_str() {
            "machine" => match key {
                "clock_mhz" => {
                    clock_mhz = value
                        .trim()
                        .parse()
                        .map_err(|_| MachineError::Config(format!("bad clock_mhz: {value}")))?
                }
                other => return Err(MachineError::Config(format!("unknown machine key: {other}"))),
            },
            "cost_model" => cm.apply_kv(key, value)?,
            other => return Err(MachineError::Config(format!("unknown section: {other}"))),
        }
    }
    Ok((cm, clock_mhz))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(n: usize) -> PimSystem {
        PimSystem::new(n, CostModel::default())
    }

    #[test]
    fn equal_buffers_transfer_in_parallel() {
        let mut s = sys(64);
        let buf = vec![0xabu8; 1 << 20];
        let writes: Vec<_> = (0..64).map(|c| (c, 0u64, buf.as_slice())).collect();
        let d = s.cpu_to_pim(&writes).unwrap();
        let single = s.cpu_to_pim(&[(0, 0, buf.as_slice())]).unwrap();
        assert_eq!(d.cpu_to_pim_cycles, single.cpu_to_pim_cycles);
    }

    #[test]
    fn unequal_buffers_transfer_serially() {
        let mut s = sys(2);
        let a = vec![1u8; 1 << 20];
        let b = vec![2u8; 2 << 20];
        let d = s.cpu_to_pim(&[(0, 0, a.as_slice()), (1, 0, b.as_slice())]).unwrap();
        let expected = ((3u64 << 20) as f64 / 8.0).ceil() as u64;
        assert_eq!(d.cpu_to_pim_cycles, expected);
    }

    #[test]
    fn empty_transfer_is_free() {
        let mut s = sys(4);
        let d = s.cpu_to_pim(&[]).unwrap();
        assert_eq!(d, CostBreakdown::default());
    }

    #[test]
    fn readback_is_bit_exact() {
        let mut s = sys(2);
        let payload: Vec<u8> = (0..4096).map(|i| (i * 7 % 251) as u8).collect();
        s.cpu_to_pim(&[(1, 128, payload.as_slice())]).unwrap();
        let (bufs, d) = s.pim_to_cpu(&[(1, 128, 4096)]).unwrap();
        assert_eq!(bufs[0], payload);
        assert!(d.pim_to_cpu_cycles > 0);
    }

    #[test]
    fn region_past_bank_end_is_out_of_bounds() {
        let mut s = sys(1);
        let err = s.pim_to_cpu(&[(0, BANK_CAPACITY - 8, 16)]).unwrap_err();
        assert!(matches!(err, MachineError::OutOfBounds { .. }));
    }

    #[test]
    fn bank_capacity_is_enforced() {
        let mut s = sys(1);
        let buf = vec![0u8; 16];
        let err = s.cpu_to_pim(&[(0, BANK_CAPACITY, buf.as_slice())]).unwrap_err();
        assert!(matches!(err, MachineError::CapacityExceeded { .. }));
    }

    #[test]
    fn exchange_books_gather_plus_scatter_under_inter_pim() {
        let mut s = sys(4);
        let w = vec![5u8; 512];
        let writes: Vec<_> = (0..4).map(|c| (c, 0u64, w.as_slice())).collect();
        s.cpu_to_pim(&writes).unwrap();
        let gathers: Vec<_> = (0..4).map(|c| (c, 0u64, 512u64)).collect();
        let scatters: Vec<_> = (0..4).map(|c| (c, 1024u64, w.as_slice())).collect();
        let (_, d) = s.inter_core_exchange(&gathers, &scatters).unwrap();
        let leg = s.cost_model.transfer_cycles(&[512; 4]);
        assert_eq!(d.inter_pim_cycles, 2 * leg);
        assert_eq!(d.cpu_to_pim_cycles, 0);
        assert_eq!(d.pim_to_cpu_cycles, 0);
    }

    #[test]
    fn single_core_exchange_still_round_trips() {
        let mut s = sys(1);
        let w = vec![9u8; 64];
        s.cpu_to_pim(&[(0, 0, w.as_slice())]).unwrap();
        let (_, d) = s.inter_core_exchange(&[(0, 0, 64)], &[(0, 64, w.as_slice())]).unwrap();
        assert_eq!(d.inter_pim_cycles, 2 * s.cost_model.transfer_cycles(&[64]));
    }

    #[test]
    fn zero_byte_exchange_is_free() {
        let mut s = sys(2);
        let (_, d) = s.inter_core_exchange(&[], &[]).unwrap();
        assert_eq!(d.inter_pim_cycles, 0);
    }

    #[test]
    fn streaming_dma_beats_strided() {
        let cm = CostModel::default();
        let streaming = cm.dma_cycles(2048);
        let strided: f64 = (0..32).map(|_| cm.dma_cycles(64)).sum();
        assert!(streaming < strided);
        // >= 10x cheaper per byte for 2048-byte vs 8-byte transfers.
        let per_byte_big = cm.dma_cycles(2048) / 2048.0;
        let per_byte_small = cm.dma_cycles(8) / 8.0;
        assert!(per_byte_small / per_byte_big >= 10.0);
    }

    #[test]
    fn zero_length_dma_pays_dispatch() {
        let mut s = sys(1);
        let d = s.dma(0, 0, 0, 0, DmaDirection::BankToScratch).unwrap();
        assert_eq!(d.dma_cycles, s.cost_model.dma_fixed_cycles);
    }

    #[test]
    fn misaligned_dma_rejected() {
        let mut s = sys(1);
        let err = s.dma(0, 4, 0, 8, DmaDirection::BankToScratch).unwrap_err();
        assert!(matches!(err, MachineError::Misaligned { .. }));
    }

    #[test]
    fn dma_round_trips_bytes() {
        let mut s = sys(1);
        let payload: Vec<u8> = (0..256).map(|i| i as u8).collect();
        s.cpu_to_pim(&[(0, 0, payload.as_slice())]).unwrap();
        s.dma(0, 0, 0, 256, DmaDirection::BankToScratch).unwrap();
        s.dma(0, 4096, 0, 256, DmaDirection::ScratchToBank).unwrap();
        let (bufs, _) = s.pim_to_cpu(&[(0, 4096, 256)]).unwrap();
        assert_eq!(bufs[0], payload);
    }

    #[test]
    fn kernel_cycles_saturate_at_eleven_threads() {
        let mut s = sys(1);
        let run = |s: &mut PimSystem, t| {
            s.launch_kernel(&[0], t, ScratchPlan::default(), |ctx| {
                ctx.instr(1_000_000);
                Ok(())
            })
            .unwrap()
            .delta
            .pim_kernel_cycles
        };
        let eleven = run(&mut s, 11);
        let twentyfour = run(&mut s, 24);
        assert_eq!(eleven, twentyfour);
        let one = run(&mut s, 1);
        // Pure-compute kernel: exactly 11x.
        assert_eq!(one, 11 * eleven);
        // Strictly decreasing up to saturation.
        let mut prev = one;
        for t in 2..=11 {
            let c = run(&mut s, t);
            assert!(c < prev, "cycles must strictly decrease, t={t}");
            prev = c;
        }
    }

    #[test]
    fn zero_threads_rejected() {
        let mut s = sys(1);
        let err = s.launch_kernel(&[0], 0, ScratchPlan::default(), |_| Ok(())).unwrap_err();
        assert!(matches!(err, MachineError::ThreadBudgetExceeded { .. }));
    }

    #[test]
    fn scratch_budget_caps_threads() {
        // 2 KiB of chunk buffer + 2 KiB of class buffer per thread: 16 threads.
        let plan = ScratchPlan { reserved_bytes: 0, per_thread_bytes: 4096 };
        assert_eq!(plan.admissible_threads().unwrap(), 16);
        // A 40-KiB resident LUT still admits all 24 threads of a small-buffer kernel.
        let lut = ScratchPlan { reserved_bytes: 40 * 1024, per_thread_bytes: 256 };
        assert_eq!(lut.admissible_threads().unwrap(), 24);
        let over = ScratchPlan { reserved_bytes: SCRATCHPAD_CAPACITY + 1, per_thread_bytes: 0 };
        assert!(over.admissible_threads().is_err());
    }

    #[test]
    fn slowest_core_bounds_the_launch() {
        let mut s = sys(3);
        let r = s
            .launch_kernel(&[0, 1, 2], 11, ScratchPlan::default(), |ctx| {
                ctx.instr((ctx.core_id as u64 + 1) * 1000);
                Ok(())
            })
            .unwrap();
        let max = r.per_core.iter().map(|t| t.cycles).max().unwrap();
        assert_eq!(r.delta.pim_kernel_cycles, max);
        assert_eq!(r.per_core.len(), 3);
    }

    #[test]
    fn kernel_errors_carry_core_id() {
        let mut s = sys(4);
        let err = s
            .launch_kernel(&[0, 1, 2, 3], 11, ScratchPlan::default(), |ctx| {
                if ctx.core_id == 2 {
                    Err("boom".into())
                } else {
                    Ok(())
                }
            })
            .unwrap_err();
        assert!(matches!(err, MachineError::KernelFailed { core: 2, .. }));
    }

    #[test]
    fn breakdown_accumulates_additively() {
        let mut s = sys(2);
        let buf = vec![1u8; 1024];
        let d1 = s.cpu_to_pim(&[(0, 0, buf.as_slice()), (1, 0, buf.as_slice())]).unwrap();
        let d2 = s
            .launch_kernel(&[0, 1], 11, ScratchPlan::default(), |ctx| {
                ctx.instr(5000);
                ctx.dma(1024);
                Ok(())
            })
            .unwrap()
            .delta;
        let (_, d3) = s.pim_to_cpu(&[(0, 0, 64), (1, 0, 64)]).unwrap();
        let sum = d1 + d2 + d3;
        assert_eq!(s.breakdown(), sum);
        assert_eq!(sum.total(), sum.pim_kernel_cycles + sum.communication());
    }

    #[test]
    fn config_parsing_round_trip() {
        let text = "
# machine parameters
[machine]
clock_mhz = 350
[cost_model]
pipeline_saturation_threads = 13
dma_fixed_cycles = 100
instr_mul_builtin8 = 4
";
        let (cm, clock) = parse_machine_config(text).unwrap();
        assert_eq!(clock, 350.0);
        assert_eq!(cm.pipeline_saturation_threads, 13);
        assert_eq!(cm.dma_fixed_cycles, 100);
        assert!(parse_machine_config("[cost_model]\nnope = 1").is_err());
    }
}
