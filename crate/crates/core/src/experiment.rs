//! Experiment orchestration: one `run` produces a [`RunReport`]; sweep
//! helpers vary the thread count or the core count over a grid. Reports
//! render as CSV, JSON lines, or an aligned table with a fixed column order
//! and fixed float formatting, so repeated runs are byte-identical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{gen_classification, gen_clusters, gen_regression, Dataset};
use crate::dtree::{self, DtreeConfig};
use crate::kmeans::{self, KmeansConfig};
use crate::machine::{CostBreakdown, CostModel, PimSystem};
use crate::regression::{self, GdConfig, LogActivation, NumericVariant, Task};
use crate::activation::LutPlacement;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Regression(#[from] regression::TrainError),
    #[error(transparent)]
    Dtree(#[from] dtree::DtreeError),
    #[error(transparent)]
    Kmeans(#[from] kmeans::KmeansError),
    #[error("experiment: {0}")]
    Invalid(String),
}

/// What to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workload {
    Linear { variant: NumericVariant },
    Logistic { variant: NumericVariant, activation: LogActivation, lut_placement: LutPlacement },
    DecisionTree,
    Kmeans { k: usize },
}

impl Workload {
    pub fn label(&self) -> String {
        match self {
            Workload::Linear { variant } => format!("lin-{}", variant_label(*variant)),
            Workload::Logistic { variant, activation, .. } => {
                let act = match activation {
                    LogActivation::Taylor => "taylor",
                    LogActivation::Lut => "lut",
                };
                format!("log-{}-{act}", variant_label(*variant))
            }
            Workload::DecisionTree => "dtr".into(),
            Workload::Kmeans { .. } => "kme".into(),
        }
    }
}

fn variant_label(v: NumericVariant) -> &'static str {
    match v {
        NumericVariant::Fp32 => "fp32",
        NumericVariant::Int32 => "int32",
        NumericVariant::Hyb => "hyb",
        NumericVariant::Bui => "bui",
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub workload: Workload,
    pub n_rows: usize,
    pub n_features: usize,
    pub decimals: u32,
    pub seed: u64,
    pub n_cores: usize,
    pub threads: u32,
    /// GD iterations or k-means iteration cap; ignored by the tree.
    pub iterations: usize,
    pub learning_rate: f64,
    pub n_init: usize,
    pub cost_model: CostModel,
    pub clock_mhz: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            workload: Workload::Linear { variant: NumericVariant::Int32 },
            n_rows: 65536,
            n_features: 16,
            decimals: 4,
            seed: 0,
            n_cores: 16,
            threads: 16,
            iterations: 500,
            learning_rate: 0.25,
            n_init: 10,
            cost_model: CostModel::default(),
            clock_mhz: 425.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub n_cores: usize,
    pub threads: u32,
    pub n_rows: usize,
    pub pim_kernel_cycles: u64,
    pub cpu_to_pim_cycles: u64,
    pub pim_to_cpu_cycles: u64,
    pub inter_pim_cycles: u64,
    pub total_cycles: u64,
    pub total_ms: f64,
    pub clock_mhz: f64,
    pub quality_metric: String,
    pub quality: f64,
}

impl RunReport {
    fn new(
        spec: &ExperimentSpec,
        breakdown: CostBreakdown,
        quality_metric: &str,
        quality: f64,
    ) -> Self {
        let total = breakdown.total();
        Self {
            label: spec.workload.label(),
            n_cores: spec.n_cores,
            threads: spec.threads,
            n_rows: spec.n_rows,
            pim_kernel_cycles: breakdown.pim_kernel_cycles,
            cpu_to_pim_cycles: breakdown.cpu_to_pim_cycles,
            pim_to_cpu_cycles: breakdown.pim_to_cpu_cycles,
            inter_pim_cycles: breakdown.inter_pim_cycles,
            total_cycles: total,
            total_ms: total as f64 / (spec.clock_mhz * 1e3),
            clock_mhz: spec.clock_mhz,
            quality_metric: quality_metric.into(),
            quality,
        }
    }
}

/// Build the synthetic dataset a spec asks for.
pub fn dataset_for(spec: &ExperimentSpec) -> Dataset {
    match spec.workload {
        Workload::Linear { .. } => {
            gen_regression(spec.n_rows, spec.n_features, spec.decimals, spec.seed).0
        }
        Workload::Logistic { .. } | Workload::DecisionTree => {
            gen_classification(spec.n_rows, spec.decimals, spec.seed).0
        }
        Workload::Kmeans { k } => gen_clusters(spec.n_rows, spec.n_features, k, spec.seed).0,
    }
}

pub fn run(spec: &ExperimentSpec) -> Result<RunReport, ExperimentError> {
    let ds = dataset_for(spec);
    run_on(spec, &ds)
}

/// Like [`run`] but with a caller-provided dataset (sweeps reuse one
/// dataset across grid points).
pub fn run_on(spec: &ExperimentSpec, ds: &Dataset) -> Result<RunReport, ExperimentError> {
    let mut sys = PimSystem::with_clock(spec.n_cores, spec.cost_model.clone(), spec.clock_mhz);
    match spec.workload {
        Workload::Linear { variant } => {
            let cfg = GdConfig {
                task: Task::Linear,
                variant,
                iterations: spec.iterations,
                learning_rate: spec.learning_rate,
                n_cores: spec.n_cores,
                threads: spec.threads,
                ..GdConfig::default()
            };
            let out = regression::train(ds, &cfg, &mut sys)?;
            Ok(RunReport::new(spec, out.breakdown, "error_rate", out.final_error))
        }
        Workload::Logistic { variant, activation, lut_placement } => {
            let cfg = GdConfig {
                task: Task::Logistic,
                variant,
                activation,
                lut_placement,
                iterations: spec.iterations,
                learning_rate: spec.learning_rate,
                n_cores: spec.n_cores,
                threads: spec.threads,
                ..GdConfig::default()
            };
            let out = regression::train(ds, &cfg, &mut sys)?;
            Ok(RunReport::new(spec, out.breakdown, "error_rate", out.final_error))
        }
        Workload::DecisionTree => {
            let cfg = DtreeConfig {
                seed: spec.seed,
                n_cores: spec.n_cores,
                threads: spec.threads,
                ..DtreeConfig::default()
            };
            let out = dtree::train(ds, &cfg, &mut sys)?;
            Ok(RunReport::new(spec, out.breakdown, "accuracy", out.training_accuracy))
        }
        Workload::Kmeans { k } => {
            let cfg = KmeansConfig {
                k,
                max_iters: spec.iterations,
                n_init: spec.n_init,
                seed: spec.seed,
                n_cores: spec.n_cores,
                threads: spec.threads,
                ..KmeansConfig::default()
            };
            let out = kmeans::train(ds, &cfg, &mut sys)?;
            Ok(RunReport::new(spec, out.breakdown, "inertia", out.inertia))
        }
    }
}

/// One run per thread count, same dataset and core count.
pub fn sweep_threads(
    spec: &ExperimentSpec,
    threads: &[u32],
) -> Result<Vec<RunReport>, ExperimentError> {
    let ds = dataset_for(spec);
    threads
        .iter()
        .map(|&t| run_on(&ExperimentSpec { threads: t, ..spec.clone() }, &ds))
        .collect()
}

/// Strong scaling: fixed problem size, one run per core count. The dataset
/// is regenerated per point only when the workload's generator depends on
/// nothing core-related, so one shared dataset is used throughout.
pub fn sweep_cores_strong(
    spec: &ExperimentSpec,
    cores: &[usize],
) -> Result<Vec<RunReport>, ExperimentError> {
    let ds = dataset_for(spec);
    cores
        .iter()
        .map(|&c| run_on(&ExperimentSpec { n_cores: c, ..spec.clone() }, &ds))
        .collect()
}

/// Weak scaling: `rows_per_core` rows per core, one run per core count.
pub fn sweep_cores_weak(
    spec: &ExperimentSpec,
    cores: &[usize],
    rows_per_core: usize,
) -> Result<Vec<RunReport>, ExperimentError> {
    cores
        .iter()
        .map(|&c| {
            run(&ExperimentSpec { n_cores: c, n_rows: c * rows_per_core, ..spec.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    JsonLines,
    Table,
}

pub const CSV_HEADER: &str = "label,cores,threads,rows,pim_kernel_cycles,cpu_to_pim_cycles,\
pim_to_cpu_cycles,inter_pim_cycles,total_cycles,total_ms,quality_metric,quality";

fn csv_row(r: &RunReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{:.3},{},{:.6}",
        r.label,
        r.n_cores,
        r.threads,
        r.n_rows,
        r.pim_kernel_cycles,
        r.cpu_to_pim_cycles,
        r.pim_to_cpu_cycles,
        r.inter_pim_cycles,
        r.total_cycles,
        r.total_ms,
        r.quality_metric,
        r.quality
    )
}

pub fn render(reports: &[RunReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in reports {
                out.push_str(&csv_row(r));
                out.push('\n');
            }
            out
        }
        ReportFormat::JsonLines => {
            let mut out = String::new();
            for r in reports {
                // serde_json's map order follows the struct declaration, so
                // lines are stable across runs.
                out.push_str(&serde_json::to_string(r).expect("report serializes"));
                out.push('\n');
            }
            out
        }
        ReportFormat::Table => {
            let headers = [
                "label", "cores", "thr", "rows", "pim_kernel", "cpu_to_pim", "pim_to_cpu",
                "inter_pim", "total_cycles", "total_ms", "quality",
            ];
            let rows: Vec<[String; 11]> = reports
                .iter()
                .map(|r| {
                    [
                        r.label.clone(),
                        r.n_cores.to_string(),
                        r.threads.to_string(),
                        r.n_rows.to_string(),
                        r.pim_kernel_cycles.to_string(),
                        r.cpu_to_pim_cycles.to_string(),
                        r.pim_to_cpu_cycles.to_string(),
                        r.inter_pim_cycles.to_string(),
                        r.total_cycles.to_string(),
                        format!("{:.3}", r.total_ms),
                        format!("{}={:.6}", r.quality_metric, r.quality),
                    ]
                })
                .collect();
            let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
            for row in &rows {
                for (w, cell) in widths.iter_mut().zip(row) {
                    *w = (*w).max(cell.len());
                }
            }
            let mut out = String::new();
            let fmt_line = |cells: &[String], widths: &[usize]| {
                cells
                    .iter()
                    .zip(widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let header_cells: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
            out.push_str(&fmt_line(&header_cells, &widths));
            out.push('\n');
            for row in &rows {
                out.push_str(&fmt_line(row, &widths));
                out.push('\n');
            }
            out
        }
    }
}
