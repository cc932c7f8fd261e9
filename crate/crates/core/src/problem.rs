//! Flat view of a cost-minimization instance: per-node cost vectors and
//! per-edge cost matrices, with no graph semantics attached.

use crate::cost::{CostTables, Matrix};
use crate::graph::ComputationGraph;
use crate::scalar::Cost;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemEdge<T> {
    pub src: usize,
    pub dst: usize,
    pub table: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostProblem<T> {
    pub node_costs: Vec<Vec<T>>,
    pub edges: Vec<ProblemEdge<T>>,
}

impl<T: Cost> CostProblem<T> {
    pub fn from_tables(graph: &ComputationGraph, tables: &CostTables<T>) -> Self {
        CostProblem {
            node_costs: tables.node_costs().to_vec(),
            edges: graph
                .edges()
                .iter()
                .zip(tables.xfer_tables())
                .map(|(e, m)| ProblemEdge { src: e.src, dst: e.dst, table: m.clone() })
                .collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_costs.len()
    }

    /// Node costs in node order, then edge costs in edge order.
    pub fn evaluate(&self, choice: &[usize]) -> T {
        let mut total = T::zero();
        for (costs, &c) in self.node_costs.iter().zip(choice) {
            total = total + costs[c];
        }
        for e in &self.edges {
            total = total + e.table.get(choice[e.src], choice[e.dst]);
        }
        total
    }

    /// Number of joint assignments, saturating at `u128::MAX`.
    pub fn strategy_space(&self) -> u128 {
        self.node_costs.iter().fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128))
    }
}
