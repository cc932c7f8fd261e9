//! Exhaustive baseline and random instances for checking the planner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{evaluate_strategy, CostTables, Matrix};
use crate::error::{Error, Result};
use crate::graph::{ComputationGraph, Dim, GraphBuilder, LayerKind};
use crate::problem::CostProblem;
use crate::scalar::Cost;
use crate::strategy::Strategy;

pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce<T> {
    pub choice: Vec<usize>,
    pub cost: T,
    /// Complete assignments scored.
    pub visited: u64,
}

/// Depth-first search over every joint assignment. Ties go to the
/// lexicographically smallest assignment.
pub fn brute_force<T: Cost>(problem: &CostProblem<T>, budget: u64) -> Result<BruteForce<T>> {
    let space = problem.strategy_space();
    if space > budget as u128 {
        let size = if space == u128::MAX { format!(">= {}", u128::MAX) } else { space.to_string() };
        return Err(Error::BudgetExceeded { size, budget });
    }
    let n = problem.node_count();
    if n == 0 {
        return Ok(BruteForce { choice: Vec::new(), cost: T::zero(), visited: 1 });
    }
    // each edge is charged once both endpoints are assigned
    let mut edges_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in problem.edges.iter().enumerate() {
        edges_at[e.src.max(e.dst)].push(i);
    }

    struct Search<'a, T> {
        problem: &'a CostProblem<T>,
        edges_at: Vec<Vec<usize>>,
        choice: Vec<usize>,
        best: Option<(T, Vec<usize>)>,
        visited: u64,
    }

    impl<T: Cost> Search<'_, T> {
        fn dfs(&mut self, depth: usize, partial: T) {
            if depth == self.choice.len() {
                self.visited += 1;
                let better = match &self.best {
                    None => true,
                    Some((b, _)) => partial < *b,
                };
                if better {
                    self.best = Some((partial, self.choice.clone()));
                }
                return;
            }
            for c in 0..self.problem.node_costs[depth].len() {
                self.choice[depth] = c;
                let mut cost = partial + self.problem.node_costs[depth][c];
                for &e in &self.edges_at[depth] {
                    let edge = &self.problem.edges[e];
                    cost = cost + edge.table.get(self.choice[edge.src], self.choice[edge.dst]);
                }
                self.dfs(depth + 1, cost);
            }
        }
    }

    let mut search = Search { problem, edges_at, choice: vec![0; n], best: None, visited: 0 };
    search.dfs(0, T::zero());
    let (cost, choice) = search.best.expect("every node has at least one config");
    Ok(BruteForce { choice, cost, visited: search.visited })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteOutcome<T> {
    pub strategy: Strategy,
    /// Cost of `strategy` under [`evaluate_strategy`].
    pub cost: T,
    pub visited: u64,
}

/// Brute-force optimum of the original graph under `tables`.
pub fn brute_force_plan<T: Cost>(
    graph: &ComputationGraph,
    tables: &CostTables<T>,
    budget: u64,
) -> Result<BruteOutcome<T>> {
    let found = brute_force(&CostProblem::from_tables(graph, tables), budget)?;
    let strategy = Strategy::new(found.choice);
    let cost = evaluate_strategy(graph, tables, &strategy)?;
    Ok(BruteOutcome { strategy, cost, visited: found.visited })
}

/// Parameters of a random series-parallel instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomGraphSpec {
    pub seed: u64,
    pub node_count: usize,
    pub max_configs_per_layer: usize,
    /// Chance that a growth step adds a parallel branch instead of
    /// subdividing an edge.
    pub branch_probability: f64,
    /// With one device every layer gets a single config.
    pub device_count: usize,
}

impl RandomGraphSpec {
    pub fn new(seed: u64, node_count: usize) -> Self {
        RandomGraphSpec { seed, node_count, max_configs_per_layer: 3, branch_probability: 0.4, device_count: 4 }
    }
}

/// Grows a two-terminal series-parallel DAG from a single source->sink edge
/// and fills its tables with random costs in `[0, 10]` at 0.01 resolution.
///
/// Multi-input nodes become channel concats, the rest softmax layers; the
/// layer kinds only exist to make a well-formed graph and play no part in
/// the synthetic costs.
pub fn random_series_parallel_graph<T: Cost>(spec: &RandomGraphSpec) -> Result<(ComputationGraph, CostTables<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.node_count.max(1);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    if n >= 2 {
        edges.push((0, 1));
    }
    for w in 2..n {
        let i = rng.random_range(0..edges.len());
        let (a, b) = edges[i];
        if rng.random_bool(spec.branch_probability.clamp(0.0, 1.0)) {
            edges.push((a, w));
            edges.push((w, b));
        } else {
            edges[i] = (a, w);
            edges.push((w, b));
        }
    }

    // declare layers in a topological order so ids read naturally
    let mut indegree = vec![0usize; n];
    let mut inputs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in &edges {
        indegree[b] += 1;
        inputs[b].push(a);
    }
    let mut order = Vec::with_capacity(n);
    let mut ready = std::collections::BTreeSet::from([0usize]);
    let mut remaining = indegree.clone();
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &(a, b) in &edges {
            if a == v {
                remaining[b] -= 1;
                if remaining[b] == 0 {
                    ready.insert(b);
                }
            }
        }
    }
    let mut name = vec![String::new(); n];
    for (rank, &v) in order.iter().enumerate() {
        name[v] = format!("n{rank}");
    }
    let mut builder = GraphBuilder::new(1);
    for &v in &order {
        let kind = match indegree[v] {
            0 => LayerKind::Input { channel: 1, height: 1, width: 1 },
            1 => LayerKind::Softmax,
            _ => LayerKind::Concat { axis: Dim::Channel },
        };
        builder.push(name[v].clone(), kind, inputs[v].iter().map(|&a| name[a].clone()).collect());
    }
    let graph = builder.build()?;

    let max_configs = if spec.device_count <= 1 { 1 } else { spec.max_configs_per_layer.max(1) };
    let value = |rng: &mut ChaCha8Rng| T::from_hundredths(rng.random_range(0..=1000));
    let node: Vec<Vec<T>> = (0..graph.node_count())
        .map(|_| {
            let k = rng.random_range(1..=max_configs);
            (0..k).map(|_| value(&mut rng)).collect()
        })
        .collect();
    let xfer = graph
        .edges()
        .iter()
        .map(|e| Matrix::from_fn(node[e.src].len(), node[e.dst].len(), |_, _| value(&mut rng)))
        .collect();
    let tables = CostTables::synthetic(&graph, node, xfer)?;
    Ok((graph, tables))
}
