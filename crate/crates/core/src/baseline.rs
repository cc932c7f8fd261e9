//! Hand-written reference strategies: data, model and "one weird trick"
//! parallelism.

use std::fmt;
use std::str::FromStr;

use crate::config::{parallelizable_dims, Config};
use crate::cost::CostTables;
use crate::error::{Error, Result};
use crate::graph::{ComputationGraph, Dim, LayerKind, TensorShape};
use crate::scalar::Cost;
use crate::strategy::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Baseline {
    /// Every layer split along the batch.
    Data,
    /// Parameterized layers split along channels, the rest along the batch.
    Model,
    /// Batch splits for convolutions and pooling, channel splits for
    /// fully-connected and softmax layers.
    Owt,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Data, Baseline::Model, Baseline::Owt];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Data => "data",
            Baseline::Model => "model",
            Baseline::Owt => "owt",
        }
    }

    /// The dimension this baseline splits `kind` along.
    pub fn split_dim(self, kind: &LayerKind) -> Dim {
        let channel = match self {
            Baseline::Data => false,
            Baseline::Model => kind.has_parameters(),
            Baseline::Owt => matches!(kind, LayerKind::FullyConnected { .. } | LayerKind::Softmax),
        };
        if channel {
            Dim::Channel
        } else {
            Dim::Sample
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown baseline `{s}` (expected data, model or owt)")))
    }
}

/// Degree `devices` along the baseline's dimension, or the largest divisor of
/// that extent not above `devices` when it does not divide evenly.
pub fn baseline_config(baseline: Baseline, kind: &LayerKind, shape: TensorShape, devices: usize) -> Config {
    let dim = baseline.split_dim(kind);
    let mut degrees = [1; 4];
    if parallelizable_dims(kind, shape).contains(&dim) {
        let extent = shape.extent(dim);
        degrees[dim.index()] = (1..=devices.min(extent)).rev().find(|k| extent.is_multiple_of(*k)).unwrap_or(1);
    }
    Config::from_degrees(degrees)
}

/// The baseline strategy as catalog indices into `tables`.
pub fn baseline_strategy<T: Cost>(
    baseline: Baseline,
    graph: &ComputationGraph,
    tables: &CostTables<T>,
    devices: usize,
) -> Result<Strategy> {
    let configs = graph
        .layers()
        .iter()
        .enumerate()
        .map(|(l, layer)| (layer.id.as_str(), baseline_config(baseline, &layer.kind, graph.shape(l), devices)));
    Strategy::from_configs(graph, tables, configs)
}
