//! Functional simulator and analytic cost model for training classic ML
//! models (linear/logistic regression, extremely randomized trees, k-means)
//! on near-bank processing-in-memory hardware.
//!
//! The simulator computes real values natively on the host while charging
//! every modeled operation to an instruction/cycle cost model, so experiments
//! report both learned-model quality and a four-way time breakdown
//! (PIM kernels, CPU->PIM, PIM->CPU, inter-PIM).

pub mod activation;
pub mod data;
pub mod dtree;
pub mod experiment;
pub mod fxp;
pub mod kmeans;
pub mod machine;
pub mod metrics;
pub mod regression;

pub use fxp::{Fixed, FixedFormat, FxpError, OverflowMode, QuantizationParams};
pub use machine::{CostBreakdown, CostModel, MachineError, PimSystem, ScratchPlan};
