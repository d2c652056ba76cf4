//! `pimsim` — drive the PIM training simulator from the command line.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pimsim_core::activation::LutPlacement;
use pimsim_core::dtree;
use pimsim_core::experiment::{
    self, ExperimentSpec, ReportFormat, RunReport, Workload,
};
use pimsim_core::machine::parse_machine_config;
use pimsim_core::regression::{LogActivation, NumericVariant};

#[derive(Parser)]
#[command(name = "pimsim", version, about = "Simulate ML training on a PIM system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one workload and print its cost/quality report.
    Run(RunArgs),
    /// Run the same workload over a grid of thread counts.
    SweepThreads(SweepThreadsArgs),
    /// Run the same workload over a grid of core counts.
    SweepScaling(SweepScalingArgs),
    /// Classify CSV rows with a saved decision tree.
    Predict(PredictArgs),
    /// Re-render a saved JSON-lines report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WorkloadArg {
    LinFp32,
    LinInt32,
    LinHyb,
    LinBui,
    LogFp32,
    LogInt32,
    LogHyb,
    LogBui,
    Dtr,
    Kme,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ActivationArg {
    Taylor,
    Lut,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LutPlacementArg {
    Scratchpad,
    Bank,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
    Table,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Jsonl => ReportFormat::JsonLines,
            FormatArg::Table => ReportFormat::Table,
        }
    }
}

/// Workload, problem size, and machine knobs shared by run and the sweeps.
#[derive(Args)]
struct SpecArgs {
    /// Workload and numeric variant.
    #[arg(long, value_enum)]
    workload: WorkloadArg,
    /// Sigmoid implementation for logistic workloads.
    #[arg(long, value_enum, default_value = "lut")]
    activation: ActivationArg,
    /// Where logistic LUT kernels keep the table.
    #[arg(long, value_enum, default_value = "scratchpad")]
    lut_placement: LutPlacementArg,
    #[arg(long, default_value_t = 65536)]
    rows: usize,
    #[arg(long, default_value_t = 16)]
    features: usize,
    /// Decimal places of the generated feature values.
    #[arg(long, default_value_t = 4)]
    decimals: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    cores: usize,
    #[arg(long, default_value_t = 16)]
    threads: u32,
    /// GD iterations / k-means iteration cap.
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 0.25)]
    learning_rate: f64,
    /// k-means cluster count.
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// k-means restarts.
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    /// Plain-text machine/cost-model config file; flags do not override it.
    #[arg(long)]
    machine: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// For dtr: also save the trained tree as JSON.
    #[arg(long)]
    save_tree: Option<PathBuf>,
}

#[derive(Args)]
struct SweepThreadsArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Comma-separated thread counts, e.g. 1,2,4,8,11,16,24.
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 4, 8, 11, 16, 24])]
    grid: Vec<u32>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScalingMode {
    /// Fixed total rows.
    Strong,
    /// Fixed rows per core.
    Weak,
}

#[derive(Args)]
struct SweepScalingArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, value_enum)]
    mode: ScalingMode,
    /// Comma-separated core counts.
    #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512, 1024, 2048])]
    grid: Vec<usize>,
    /// Weak scaling: rows per core.
    #[arg(long, default_value_t = 4096)]
    rows_per_core: usize,
}

#[derive(Args)]
struct PredictArgs {
    /// Tree file written by `run --workload dtr --save-tree`.
    #[arg(long)]
    tree: PathBuf,
    /// Headerless CSV of feature rows.
    #[arg(long)]
    input: PathBuf,
    /// Treat the last CSV column as the true label and print the accuracy.
    #[arg(long)]
    labeled: bool,
    /// Write one predicted class per line here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON-lines report produced with --format jsonl.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct CliError(String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

fn build_spec(args: &SpecArgs) -> Result<ExperimentSpec, CliError> {
    let workload = match args.workload {
        WorkloadArg::LinFp32 => Workload::Linear { variant: NumericVariant::Fp32 },
        WorkloadArg::LinInt32 => Workload::Linear { variant: NumericVariant::Int32 },
        WorkloadArg::LinHyb => Workload::Linear { variant: NumericVariant::Hyb },
        WorkloadArg::LinBui => Workload::Linear { variant: NumericVariant::Bui },
        WorkloadArg::LogFp32 | WorkloadArg::LogInt32 | WorkloadArg::LogHyb
        | WorkloadArg::LogBui => {
            let variant = match args.workload {
                WorkloadArg::LogFp32 => NumericVariant::Fp32,
                WorkloadArg::LogInt32 => NumericVariant::Int32,
                WorkloadArg::LogHyb => NumericVariant::Hyb,
                _ => NumericVariant::Bui,
            };
            Workload::Logistic {
                variant,
                activation: match args.activation {
                    ActivationArg::Taylor => LogActivation::Taylor,
                    ActivationArg::Lut => LogActivation::Lut,
                },
                lut_placement: match args.lut_placement {
                    LutPlacementArg::Scratchpad => LutPlacement::Scratchpad,
                    LutPlacementArg::Bank => LutPlacement::Bank,
                },
            }
        }
        WorkloadArg::Dtr => Workload::DecisionTree,
        WorkloadArg::Kme => Workload::Kmeans { k: args.k },
    };
    let mut spec = ExperimentSpec {
        workload,
        n_rows: args.rows,
        n_features: args.features,
        decimals: args.decimals,
        seed: args.seed,
        n_cores: args.cores,
        threads: args.threads,
        iterations: args.iters,
        learning_rate: args.learning_rate,
        n_init: args.n_init,
        ..ExperimentSpec::default()
    };
    if let Some(path) = &args.machine {
        let text = std::fs::read_to_string(path)?;
        let (cm, clock) = parse_machine_config(&text)?;
        spec.cost_model = cm;
        spec.clock_mhz = clock;
    }
    Ok(spec)
}

fn emit(reports: &[RunReport], output: &OutputArgs) -> Result<(), CliError> {
    let text = experiment::render(reports, output.format.into());
    match &output.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let spec = build_spec(&args.spec)?;
    if let Some(tree_path) = &args.save_tree {
        if args.spec.workload != WorkloadArg::Dtr {
            return Err(CliError("--save-tree only applies to --workload dtr".into()));
        }
        let ds = experiment::dataset_for(&spec);
        let cfg = dtree::DtreeConfig {
            seed: spec.seed,
            n_cores: spec.n_cores,
            threads: spec.threads,
            ..dtree::DtreeConfig::default()
        };
        let mut sys = pimsim_core::machine::PimSystem::with_clock(
            spec.n_cores,
            spec.cost_model.clone(),
            spec.clock_mhz,
        );
        let out = dtree::train(&ds, &cfg, &mut sys)?;
        dtree::save_tree(&out.tree, tree_path)?;
    }
    let report = experiment::run(&spec)?;
    emit(&[report], &args.output)
}

fn cmd_sweep_threads(args: &SweepThreadsArgs) -> Result<(), CliError> {
    let spec = build_spec(&args.spec)?;
    let reports = experiment::sweep_threads(&spec, &args.grid)?;
    emit(&reports, &args.output)
}

fn cmd_sweep_scaling(args: &SweepScalingArgs) -> Result<(), CliError> {
    let spec = build_spec(&args.spec)?;
    let reports = match args.mode {
        ScalingMode::Strong => experiment::sweep_cores_strong(&spec, &args.grid)?,
        ScalingMode::Weak => {
            experiment::sweep_cores_weak(&spec, &args.grid, args.rows_per_core)?
        }
    };
    emit(&reports, &args.output)
}

fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let tree = dtree::load_tree(&args.tree)?;
    let text = std::fs::read_to_string(&args.input)?;
    let mut lines = Vec::new();
    let mut correct = 0usize;
    let mut total = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let mut row: Vec<f64> = Vec::new();
        for field in raw.split(',') {
            row.push(
                field
                    .trim()
                    .parse()
                    .map_err(|_| CliError(format!("line {}: bad number {field:?}", lineno + 1)))?,
            );
        }
        let label = if args.labeled {
            row.pop().ok_or_else(|| CliError(format!("line {}: empty row", lineno + 1)))?
        } else {
            0.0
        };
        let pred = tree.predict(&row);
        if args.labeled {
            total += 1;
            if pred as f64 == label {
                correct += 1;
            }
        }
        lines.push(pred.to_string());
    }
    let mut out = lines.join("\n");
    out.push('\n');
    match &args.out {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    if args.labeled && total > 0 {
        eprintln!("accuracy {:.6} over {total} rows", correct as f64 / total as f64);
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.input)?;
    let mut reports = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: RunReport = serde_json::from_str(line)
            .map_err(|e| CliError(format!("line {}: {e}", lineno + 1)))?;
        reports.push(r);
    }
    let text = experiment::render(&reports, args.format.into());
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::SweepThreads(args) => cmd_sweep_threads(args),
        Command::SweepScaling(args) => cmd_sweep_scaling(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pimsim: {e}");
            ExitCode::FAILURE
        }
    }
}
