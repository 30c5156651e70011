//! Analytical cost modeling and schedule optimization for multi-chip-module
//! (MCM) DNN accelerators.
//!
//! The crate models a package of chiplets arranged in an X-by-Y mesh, fed
//! from off-package memory through one or more global chiplets. On top of
//! that it provides:
//!
//! * [`topology`] — package layouts, global-chiplet placement, hop counts;
//! * [`workload`] — GEMM operator sequences (with conv-to-GEMM lowering);
//! * [`costmodel`] — latency/energy/EDP for a partitioned operator sequence;
//! * [`redistribute`] — on-package output redistribution between chained ops;
//! * [`optimize`] — partition search: baselines, a genetic algorithm, and a
//!   quadratic integer model with an exact lattice solver and LP export;
//! * [`pipeline`] — batch pipelining as resource-constrained scheduling;
//! * [`netsim`] — a small link-level store-and-forward simulator used to
//!   validate the analytical hop formulas and explore congestion.
//!
//! All floating-point quantities use SI units: seconds, joules, bytes/s.

pub mod costmodel;
pub mod error;
pub mod netsim;
pub mod optimize;
pub mod pipeline;
pub mod redistribute;
pub mod topology;
pub mod workload;

pub use costmodel::{CostBreakdown, CostParams, ModelOptions, Partition};
pub use error::Error;
pub use topology::{GridSpec, GridType, HopStrategy, Topology};
pub use workload::{GemmOp, TaskSequence};
