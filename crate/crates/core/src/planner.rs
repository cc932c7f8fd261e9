//! Optimal strategy search by node and edge elimination.
//!
//! A node with exactly one in-edge and one out-edge is folded into a new edge
//! whose table is, for every pair of neighbour configs, the cheapest way
//! through the removed node. Parallel edges are merged by adding their tables.
//! Both rewrites keep the optimum, so once neither applies the small remaining
//! graph is solved exhaustively and the removed nodes are recovered by undoing
//! the rewrites in reverse.

use crate::cost::{CostTables, Matrix};
use crate::error::{Error, Result};
use crate::graph::{ComputationGraph, DeviceGraph};
use crate::problem::{CostProblem, ProblemEdge};
use crate::scalar::Cost;
use crate::strategy::Strategy;

pub const DEFAULT_K_BOUND: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum EliminationRecord {
    Node {
        removed: usize,
        source: usize,
        target: usize,
        in_edge: usize,
        out_edge: usize,
        new_edge: usize,
        /// Best config of the removed node for each (source, target) config pair.
        choice: Matrix<u32>,
    },
    Edge {
        first: usize,
        second: usize,
        new_edge: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct LiveEdge<T> {
    src: usize,
    dst: usize,
    table: Matrix<T>,
}

/// A computation graph part-way through elimination, with its live tables
/// and the log needed to undo it.
#[derive(Debug, Clone)]
pub struct ReducedGraph<T> {
    names: Vec<String>,
    rank: Vec<usize>,
    alive: Vec<bool>,
    node_cost: Vec<Vec<T>>,
    edges: Vec<Option<LiveEdge<T>>>,
    in_edges: Vec<Vec<usize>>,
    out_edges: Vec<Vec<usize>>,
    log: Vec<EliminationRecord>,
}

impl<T: Cost> ReducedGraph<T> {
    pub fn new(graph: &ComputationGraph, tables: &CostTables<T>) -> Self {
        let n = graph.node_count();
        let mut rg = ReducedGraph {
            names: graph.layers().iter().map(|l| l.id.clone()).collect(),
            rank: graph.topo_rank().to_vec(),
            alive: vec![true; n],
            node_cost: tables.node_costs().to_vec(),
            edges: Vec::with_capacity(graph.edges().len() * 2),
            in_edges: vec![Vec::new(); n],
            out_edges: vec![Vec::new(); n],
            log: Vec::new(),
        };
        for (e, m) in graph.edges().iter().zip(tables.xfer_tables()) {
            rg.add_edge(e.src, e.dst, m.clone());
        }
        rg
    }

    fn add_edge(&mut self, src: usize, dst: usize, table: Matrix<T>) -> usize {
        let id = self.edges.len();
        self.edges.push(Some(LiveEdge { src, dst, table }));
        self.out_edges[src].push(id);
        self.in_edges[dst].push(id);
        id
    }

    fn remove_edge(&mut self, id: usize) -> LiveEdge<T> {
        let e = self.edges[id].take().expect("edge already removed");
        self.out_edges[e.src].retain(|&x| x != id);
        self.in_edges[e.dst].retain(|&x| x != id);
        e
    }

    pub fn log(&self) -> &[EliminationRecord] {
        &self.log
    }

    pub fn live_nodes(&self) -> Vec<usize> {
        (0..self.alive.len()).filter(|&i| self.alive[i]).collect()
    }

    pub fn live_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_some()).count()
    }

    /// Live edges as `(id, src, dst)`, by id.
    pub fn live_edges(&self) -> Vec<(usize, usize, usize)> {
        self.edges.iter().enumerate().filter_map(|(i, e)| e.as_ref().map(|e| (i, e.src, e.dst))).collect()
    }

    pub fn edge_table(&self, id: usize) -> Option<&Matrix<T>> {
        self.edges.get(id).and_then(|e| e.as_ref()).map(|e| &e.table)
    }

    /// Folds the eligible node of lowest topological rank into a new edge.
    /// Returns `false` and leaves the graph untouched if no node qualifies.
    pub fn eliminate_node(&mut self) -> bool {
        let candidate = (0..self.alive.len())
            .filter(|&w| self.alive[w] && self.in_edges[w].len() == 1 && self.out_edges[w].len() == 1)
            .min_by_key(|&w| (self.rank[w], w));
        let Some(w) = candidate else { return false };
        let (in_id, out_id) = (self.in_edges[w][0], self.out_edges[w][0]);
        let e1 = self.remove_edge(in_id);
        let e2 = self.remove_edge(out_id);
        let (u, v) = (e1.src, e2.dst);
        let cw = &self.node_cost[w];
        let (nu, nv) = (e1.table.rows(), e2.table.cols());

        let mut table = Matrix::filled(nu, nv, T::zero());
        let mut choice = Matrix::filled(nu, nv, 0u32);
        let mut best = vec![T::zero(); nv];
        let mut arg = vec![0u32; nv];
        for a in 0..nu {
            let through = cw[0] + e1.table.get(a, 0);
            for (b, slot) in best.iter_mut().enumerate() {
                *slot = through + e2.table.get(0, b);
            }
            arg.fill(0);
            for (j, &c) in cw.iter().enumerate().skip(1) {
                let through = c + e1.table.get(a, j);
                for (b, &out) in e2.table.row(j).iter().enumerate() {
                    let cand = through + out;
                    // strict: ties keep the lowest config index
                    if cand < best[b] {
                        best[b] = cand;
                        arg[b] = j as u32;
                    }
                }
            }
            for (b, (&cost, &j)) in best.iter().zip(&arg).enumerate() {
                table.set(a, b, cost);
                choice.set(a, b, j);
            }
        }

        self.alive[w] = false;
        let new_edge = self.add_edge(u, v, table);
        self.log.push(EliminationRecord::Node {
            removed: w,
            source: u,
            target: v,
            in_edge: in_id,
            out_edge: out_id,
            new_edge,
            choice,
        });
        true
    }

    /// Merges the lexicographically smallest `(src, dst, e1, e2)` pair of
    /// parallel edges. Returns `false` if there is none.
    pub fn eliminate_edge(&mut self) -> bool {
        let mut found = None;
        'outer: for src in 0..self.alive.len() {
            if !self.alive[src] {
                continue;
            }
            let mut outs: Vec<(usize, usize)> =
                self.out_edges[src].iter().map(|&e| (self.edges[e].as_ref().unwrap().dst, e)).collect();
            outs.sort_unstable();
            for w in outs.windows(2) {
                if w[0].0 == w[1].0 {
                    found = Some((w[0].1, w[1].1));
                    break 'outer;
                }
            }
        }
        let Some((first, second)) = found else { return false };
        let e1 = self.remove_edge(first);
        let e2 = self.remove_edge(second);
        let table = Matrix::from_fn(e1.table.rows(), e1.table.cols(), |a, b| e1.table.get(a, b) + e2.table.get(a, b));
        let new_edge = self.add_edge(e1.src, e1.dst, table);
        self.log.push(EliminationRecord::Edge { first, second, new_edge });
        true
    }

    /// Alternates node and edge elimination until neither applies.
    pub fn reduce(&mut self) {
        loop {
            let node = self.eliminate_node();
            let edge = self.eliminate_edge();
            if !node && !edge {
                break;
            }
        }
    }

    /// The live graph as a flat problem; also returns, per problem node, the
    /// original layer index.
    pub fn problem(&self) -> (CostProblem<T>, Vec<usize>) {
        let nodes = self.live_nodes();
        let mut pos = vec![usize::MAX; self.alive.len()];
        for (i, &n) in nodes.iter().enumerate() {
            pos[n] = i;
        }
        let problem = CostProblem {
            node_costs: nodes.iter().map(|&n| self.node_cost[n].clone()).collect(),
            edges: self
                .edges
                .iter()
                .flatten()
                .map(|e| ProblemEdge { src: pos[e.src], dst: pos[e.dst], table: e.table.clone() })
                .collect(),
        };
        (problem, nodes)
    }

    /// Exhaustively solves the live graph. Returns per-layer choices (only
    /// live layers set) and the cost. Ties go to the lexicographically
    /// smallest assignment in layer order.
    pub fn enumerate_final(&self, k_bound: usize) -> Result<(Vec<Option<usize>>, T)> {
        let nodes = self.live_nodes();
        if nodes.len() > k_bound {
            return Err(Error::KBoundExceeded { k: nodes.len(), bound: k_bound });
        }
        let (problem, _) = self.problem();
        let sizes: Vec<usize> = problem.node_costs.iter().map(Vec::len).collect();
        let mut current = vec![0usize; nodes.len()];
        let mut best_choice = current.clone();
        let mut best = problem.evaluate(&current);
        'scan: loop {
            let mut i = current.len();
            loop {
                if i == 0 {
                    break 'scan;
                }
                i -= 1;
                current[i] += 1;
                if current[i] < sizes[i] {
                    break;
                }
                current[i] = 0;
            }
            let cost = problem.evaluate(&current);
            if cost < best {
                best = cost;
                best_choice.copy_from_slice(&current);
            }
        }
        let mut out = vec![None; self.alive.len()];
        for (&n, &c) in nodes.iter().zip(&best_choice) {
            out[n] = Some(c);
        }
        Ok((out, best))
    }

    pub fn name(&self, layer: usize) -> &str {
        &self.names[layer]
    }
}

/// Recovers the eliminated layers' configs by replaying the log backwards.
/// `partial` must assign every layer still live at the end of the log.
pub fn unwind(log: &[EliminationRecord], mut partial: Vec<Option<usize>>) -> Strategy {
    for rec in log.iter().rev() {
        // undoing an edge elimination assigns nothing
        if let EliminationRecord::Node { removed, source, target, choice, .. } = rec {
            let cu = partial[*source].expect("source assigned before its eliminated neighbour");
            let cv = partial[*target].expect("target assigned before its eliminated neighbour");
            partial[*removed] = Some(choice.get(cu, cv) as usize);
        }
    }
    Strategy::new(partial.into_iter().map(|c| c.expect("every layer assigned after unwind")).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanOptions {
    /// Largest final graph solved by enumeration.
    pub k_bound: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { k_bound: DEFAULT_K_BOUND }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome<T> {
    pub strategy: Strategy,
    /// Cost of `strategy` re-evaluated on the original tables.
    pub cost: T,
    /// Optimum of the final graph, i.e. the cost as the search saw it.
    pub search_cost: T,
    pub node_eliminations: usize,
    pub edge_eliminations: usize,
    pub final_nodes: usize,
}

impl<T> PlanOutcome<T> {
    pub fn eliminations(&self) -> usize {
        self.node_eliminations + self.edge_eliminations
    }
}

/// Runs elimination, final enumeration and unwind on precomputed tables.
pub fn plan_with_tables<T: Cost>(
    graph: &ComputationGraph,
    tables: &CostTables<T>,
    options: PlanOptions,
) -> Result<PlanOutcome<T>> {
    let mut rg = ReducedGraph::new(graph, tables);
    rg.reduce();
    let final_nodes = rg.live_nodes().len();
    let (partial, search_cost) = rg.enumerate_final(options.k_bound)?;
    let strategy = unwind(rg.log(), partial);
    let cost = crate::cost::evaluate_strategy(graph, tables, &strategy)?;
    let node_eliminations = rg.log().iter().filter(|r| matches!(r, EliminationRecord::Node { .. })).count();
    Ok(PlanOutcome {
        strategy,
        cost,
        search_cost,
        node_eliminations,
        edge_eliminations: rg.log().len() - node_eliminations,
        final_nodes,
    })
}

/// Builds analytic tables for `devices` and finds an optimal strategy.
pub fn plan(
    graph: &ComputationGraph,
    devices: &DeviceGraph,
    options: PlanOptions,
) -> Result<(CostTables<f64>, PlanOutcome<f64>)> {
    let tables = crate::cost::build_cost_tables::<f64>(graph, devices)?;
    let outcome = plan_with_tables(graph, &tables, options)?;
    Ok((tables, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Dim, GraphBuilder, LayerKind};
    use crate::scalar::Exact;

    fn h(v: i64) -> Exact {
        Exact::from_integer(v)
    }

    fn m(rows: &[&[i64]]) -> Matrix<Exact> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| h(v)).collect()).collect())
    }

    /// u -> w -> v with two configs each.
    fn chain() -> (ComputationGraph, CostTables<Exact>) {
        let g = GraphBuilder::new(1)
            .input("u", 1, 1, 1)
            .layer("w", LayerKind::Softmax, &["u"])
            .layer("v", LayerKind::Softmax, &["w"])
            .build()
            .unwrap();
        let swap = m(&[&[0, 5], &[5, 0]]);
        let t = CostTables::synthetic(
            &g,
            vec![vec![h(0), h(0)], vec![h(1), h(2)], vec![h(0), h(0)]],
            vec![swap.clone(), swap],
        )
        .unwrap();
        (g, t)
    }

    #[test]
    fn node_elimination_table() {
        let (g, t) = chain();
        let mut rg = ReducedGraph::new(&g, &t);
        assert!(rg.eliminate_node());
        let EliminationRecord::Node { removed, new_edge, choice, .. } = &rg.log()[0] else { panic!() };
        assert_eq!(*removed, 1);
        let table = rg.edge_table(*new_edge).unwrap();
        assert_eq!(table.get(0, 0), h(1));
        assert_eq!(table.get(0, 1), h(6));
        assert_eq!(choice.get(0, 0), 0);
        assert_eq!(choice.get(0, 1), 0);
        assert_eq!(rg.live_edge_count(), 1);
    }

    #[test]
    fn unwind_reads_stored_choice() {
        let (g, t) = chain();
        let mut rg = ReducedGraph::new(&g, &t);
        rg.eliminate_node();
        let s = unwind(rg.log(), vec![Some(0), None, Some(0)]);
        assert_eq!(s.choices(), &[0, 0, 0]);
    }

    #[test]
    fn ties_take_lowest_index() {
        let g = GraphBuilder::new(1)
            .input("u", 1, 1, 1)
            .layer("w", LayerKind::Softmax, &["u"])
            .layer("v", LayerKind::Softmax, &["w"])
            .build()
            .unwrap();
        let zero = m(&[&[0, 0, 0]]);
        let t = CostTables::synthetic(
            &g,
            vec![vec![h(0)], vec![h(2), h(1), h(1)], vec![h(0), h(0), h(0)]],
            vec![zero, m(&[&[0, 0, 0], &[0, 0, 0], &[0, 0, 0]])],
        )
        .unwrap();
        let mut rg = ReducedGraph::new(&g, &t);
        rg.eliminate_node();
        let EliminationRecord::Node { choice, .. } = &rg.log()[0] else { panic!() };
        assert!(choice.values().iter().all(|&c| c == 1));
        let out = plan_with_tables(&g, &t, PlanOptions::default()).unwrap();
        assert_eq!(out.strategy.choices(), &[0, 1, 0]);
    }

    fn diamond() -> ComputationGraph {
        GraphBuilder::new(1)
            .input("a", 1, 1, 1)
            .layer("b", LayerKind::Concat { axis: Dim::Channel }, &["a", "a"])
            .build()
            .unwrap()
    }

    #[test]
    fn edge_elimination_adds_tables() {
        let g = diamond();
        let t = CostTables::synthetic(
            &g,
            vec![vec![h(0), h(0)], vec![h(0), h(0)]],
            vec![m(&[&[1, 2], &[3, 4]]), m(&[&[10, 20], &[30, 40]])],
        )
        .unwrap();
        let mut rg = ReducedGraph::new(&g, &t);
        assert!(!rg.eliminate_node());
        assert!(rg.eliminate_edge());
        let EliminationRecord::Edge { first, second, new_edge } = rg.log()[0] else { panic!() };
        assert_eq!((first, second), (0, 1));
        assert_eq!(rg.edge_table(new_edge).unwrap(), &m(&[&[11, 22], &[33, 44]]));
        assert!(!rg.eliminate_edge());
    }

    #[test]
    fn zero_edge_is_additive_identity() {
        let g = diamond();
        let other = m(&[&[7, 1], &[2, 9]]);
        let t = CostTables::synthetic(
            &g,
            vec![vec![h(0), h(0)], vec![h(0), h(0)]],
            vec![m(&[&[0, 0], &[0, 0]]), other.clone()],
        )
        .unwrap();
        let mut rg = ReducedGraph::new(&g, &t);
        rg.eliminate_edge();
        assert_eq!(rg.edge_table(2).unwrap(), &other);
        let s = unwind(rg.log(), vec![Some(1), Some(0)]);
        assert_eq!(s.choices(), &[1, 0]);
    }

    #[test]
    fn multi_input_node_is_not_eliminated() {
        let g = GraphBuilder::new(1)
            .input("a", 1, 1, 1)
            .layer("b", LayerKind::Softmax, &["a"])
            .layer("c", LayerKind::Concat { axis: Dim::Channel }, &["a", "b"])
            .build()
            .unwrap();
        let t = CostTables::synthetic(&g, vec![vec![h(0)]; 3], vec![m(&[&[0]]); 3]).unwrap();
        let mut rg = ReducedGraph::new(&g, &t);
        assert!(rg.eliminate_node());
        assert!(!rg.eliminate_node());
        assert_eq!(rg.live_nodes(), vec![0, 2]);
    }

    #[test]
    fn single_node_final_graph() {
        let g = GraphBuilder::new(1).input("a", 1, 1, 1).build().unwrap();
        let t = CostTables::synthetic(&g, vec![vec![h(3), h(1), h(2)]], vec![]).unwrap();
        let mut rg = ReducedGraph::new(&g, &t);
        rg.reduce();
        assert!(rg.log().is_empty());
        let (choice, cost) = rg.enumerate_final(DEFAULT_K_BOUND).unwrap();
        assert_eq!(choice, vec![Some(1)]);
        assert_eq!(cost, h(1));
    }

    #[test]
    fn k_bound_is_enforced() {
        // no node has one in-edge and one out-edge, and no edges are parallel
        let g = GraphBuilder::new(1)
            .input("a", 1, 1, 1)
            .layer("b", LayerKind::Softmax, &["a"])
            .layer("c", LayerKind::Concat { axis: Dim::Channel }, &["a", "b"])
            .layer("d", LayerKind::Concat { axis: Dim::Channel }, &["b", "c"])
            .build()
            .unwrap();
        let t = CostTables::synthetic(&g, vec![vec![h(0), h(1)]; 4], vec![m(&[&[0, 1], &[1, 0]]); 5]).unwrap();
        let err = plan_with_tables(&g, &t, PlanOptions { k_bound: 2 }).unwrap_err();
        assert!(matches!(err, Error::KBoundExceeded { bound: 2, .. }), "{err}");
        assert!(err.is_limit());
        assert!(plan_with_tables(&g, &t, PlanOptions::default()).is_ok());
    }

    #[test]
    fn eliminations_remove_one_edge_each() {
        let g = GraphBuilder::new(1)
            .input("a", 1, 1, 1)
            .layer("b", LayerKind::Softmax, &["a"])
            .layer("c", LayerKind::Softmax, &["a"])
            .layer("d", LayerKind::Concat { axis: Dim::Channel }, &["b", "c"])
            .layer("e", LayerKind::Softmax, &["d"])
            .build()
            .unwrap();
        let t = CostTables::synthetic(&g, vec![vec![h(1), h(2)]; 5], vec![m(&[&[0, 1], &[1, 0]]); 5]).unwrap();
        let mut rg = ReducedGraph::new(&g, &t);
        let mut edges = rg.live_edge_count();
        loop {
            let progressed = rg.eliminate_node() || rg.eliminate_edge();
            if !progressed {
                break;
            }
            assert_eq!(rg.live_edge_count(), edges - 1);
            edges -= 1;
        }
        assert_eq!(rg.live_nodes().len(), 2);
        assert!(rg.log().len() < g.edges().len());
    }

    #[test]
    fn one_device_plans_all_ones() {
        let g = crate::models::builtin_model(crate::models::Model::AlexNet, 32).unwrap();
        let d = DeviceGraph::uniform(1, 1e13, 1e10).unwrap();
        let (t, out) = plan(&g, &d, PlanOptions::default()).unwrap();
        assert!(out.strategy.choices().iter().all(|&c| c == 0));
        let compute: f64 = (0..g.node_count()).map(|l| t.compute_cost(l)[0]).sum();
        assert!((out.cost - compute).abs() <= 1e-12 * compute);
    }
}
