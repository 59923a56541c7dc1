//! Analytical performance model for spatial LLM accelerators on FPGAs.
//!
//! The crate estimates compute, on-chip memory and memory-port demand of a
//! transformer workload, checks them against a device budget, searches the
//! largest feasible compute allocation and predicts pipelined latency on one
//! or more devices.

pub mod catalog;
pub mod constraints;
pub mod demand;
pub mod distributed;
pub mod error;
pub mod estimate;
pub mod ops;
pub mod par;
pub mod sweep;

pub use catalog::{
    builtin_device, builtin_model, total_compute_power, DeviceSpec, ModelKind, ModelSpec, Phase, PhaseWorkload,
    QuantScheme, WeightResidence,
};
pub use constraints::{evaluate, Allocation, CheckOptions, ConstraintKind, ConstraintReport, ConstraintSet};
pub use demand::{buffer_plan, op_macs, BufferPlan, MacDemand};
pub use distributed::{multi_latency, ParallelismPlan};
pub use error::{Error, Result};
pub use estimate::{
    balanced_allocation, latency, search_max_m, BindingTerm, LatencyEstimate, SearchOptions, SearchResult,
};
pub use ops::{OpMap, OperatorId};
pub use par::Execution;
pub use sweep::{estimate_point, run_sweep, EstimationContext, PointResult, SweepAxis, SweepRow, SweepSpec};
