//! Layer-wise parallelization search for convolutional networks.
//!
//! A [`ComputationGraph`] of layers is costed against a [`DeviceGraph`] into
//! [`CostTables`]; the [`planner`] then finds the strategy (one [`Config`]
//! per layer) of minimum per-step time by repeatedly eliminating nodes and
//! parallel edges and solving what remains exhaustively. The [`oracle`]
//! module holds the exhaustive reference search used to check it.
//!
//! Search code is generic over the scalar [`Cost`] type: `f64` for analytic
//! tables, `f32`, and the exact rational [`Exact`].

pub mod baseline;
pub mod config;
pub mod cost;
pub mod error;
pub mod graph;
pub mod io;
pub mod models;
pub mod oracle;
pub mod planner;
pub mod problem;
pub mod report;
pub mod scalar;
pub mod strategy;

pub use baseline::{baseline_config, baseline_strategy, Baseline};
pub use config::{enumerate_configs, owned_region, required_input_region, Config, Footprint, Interval, Region};
pub use cost::{build_cost_tables, evaluate_strategy, CostBreakdown, CostTables, Matrix};
pub use error::{Error, Result};
pub use graph::{ComputationGraph, Device, DeviceGraph, Dim, GraphBuilder, LayerKind, TensorShape};
pub use models::{builtin_model, Model};
pub use oracle::{brute_force_plan, random_series_parallel_graph, RandomGraphSpec};
pub use planner::{plan, plan_with_tables, EliminationRecord, PlanOptions, PlanOutcome, ReducedGraph};
pub use scalar::{quantize_seconds, Cost, Exact};
pub use strategy::Strategy;

/// Tables in seconds as produced by the analytic backend.
pub type CostTablesF64 = CostTables<f64>;
pub type CostTablesF32 = CostTables<f32>;
pub type ExactCostTables = CostTables<Exact>;
pub type PlanOutcomeF64 = PlanOutcome<f64>;
pub type ExactPlanOutcome = PlanOutcome<Exact>;
