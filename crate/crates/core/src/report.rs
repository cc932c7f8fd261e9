//! Human-readable and JSON summaries of strategies.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::config::{place, Config};
use crate::cost::{evaluate_strategy, strategy_breakdown, sync_traffic, transfer_traffic, CostTables};
use crate::error::Result;
use crate::graph::{ComputationGraph, DeviceGraph};
use crate::planner::PlanOutcome;
use crate::strategy::Strategy;

/// Raw cross-device bytes, alongside the seconds the cost model charges.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Traffic {
    pub sync_bytes: f64,
    pub transfer_bytes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRow {
    pub id: String,
    pub config: Option<Config>,
    pub compute: f64,
    pub sync: f64,
    /// Transfer time of the layer's inbound edges.
    pub transfer_in: f64,
    pub traffic: Option<Traffic>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub label: String,
    pub compute: f64,
    pub sync: f64,
    pub transfer: f64,
    /// Whole-strategy cost, summed exactly as [`evaluate_strategy`] does.
    pub total: f64,
    pub traffic: Option<Traffic>,
    pub layers: Vec<LayerRow>,
}

/// Outcome of the elimination search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchSummary {
    pub final_graph_nodes: usize,
    pub node_eliminations: usize,
    pub edge_eliminations: usize,
}

impl<T> From<&PlanOutcome<T>> for SearchSummary {
    fn from(o: &PlanOutcome<T>) -> Self {
        SearchSummary {
            final_graph_nodes: o.final_nodes,
            node_eliminations: o.node_eliminations,
            edge_eliminations: o.edge_eliminations,
        }
    }
}

/// Breaks `strategy` down per layer. With `devices`, also counts the bytes
/// the analytic model moves.
pub fn strategy_report(
    label: &str,
    graph: &ComputationGraph,
    tables: &CostTables<f64>,
    strategy: &Strategy,
    devices: Option<&DeviceGraph>,
) -> Result<StrategyReport> {
    let totals = strategy_breakdown(graph, tables, strategy)?;
    let configs = strategy.configs(tables);
    let s = strategy.choices();
    let mut layers: Vec<LayerRow> = graph
        .layers()
        .iter()
        .enumerate()
        .map(|(l, layer)| LayerRow {
            id: layer.id.clone(),
            config: configs.as_ref().map(|c| c[l]),
            compute: tables.compute_cost(l)[s[l]],
            sync: tables.sync_cost(l)[s[l]],
            transfer_in: 0.0,
            traffic: None,
        })
        .collect();
    for (e, edge) in graph.edges().iter().enumerate() {
        layers[edge.dst].transfer_in += tables.xfer(e).get(s[edge.src], s[edge.dst]);
    }

    let mut traffic = None;
    if let (Some(devices), Some(configs)) = (devices, &configs) {
        let mut total = Traffic::default();
        for (l, row) in layers.iter_mut().enumerate() {
            let sync_bytes = sync_traffic(graph, l, &configs[l], devices)?.0;
            row.traffic = Some(Traffic { sync_bytes, transfer_bytes: 0.0 });
            total.sync_bytes += sync_bytes;
        }
        for (e, edge) in graph.edges().iter().enumerate() {
            let (cs, cd) = (&configs[edge.src], &configs[edge.dst]);
            let stats = transfer_traffic(graph, e, cs, &place(cs, devices)?, cd, &place(cd, devices)?, devices)?;
            if let Some(t) = layers[edge.dst].traffic.as_mut() {
                t.transfer_bytes += stats.bytes;
            }
            total.transfer_bytes += stats.bytes;
        }
        traffic = Some(total);
    }

    Ok(StrategyReport {
        label: label.to_string(),
        compute: totals.compute,
        sync: totals.sync,
        transfer: totals.transfer,
        total: evaluate_strategy(graph, tables, strategy)?,
        traffic,
        layers,
    })
}

fn config_json(c: &Option<Config>) -> Value {
    c.map_or(Value::Null, |c| serde_json::to_value(c).expect("config serializes"))
}

fn traffic_json(t: &Traffic) -> Value {
    json!({ "sync_bytes": t.sync_bytes, "transfer_bytes": t.transfer_bytes })
}

fn ms(seconds: f64) -> f64 {
    seconds * 1e3
}

impl StrategyReport {
    /// Communication time: sync plus transfer.
    pub fn communication(&self) -> f64 {
        self.sync + self.transfer
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("label".into(), json!(self.label));
        obj.insert("compute_seconds".into(), json!(self.compute));
        obj.insert("sync_seconds".into(), json!(self.sync));
        obj.insert("transfer_seconds".into(), json!(self.transfer));
        obj.insert("total_seconds".into(), json!(self.total));
        if let Some(t) = &self.traffic {
            obj.insert("traffic".into(), traffic_json(t));
        }
        let layers: Vec<Value> = self
            .layers
            .iter()
            .map(|r| {
                let mut o = Map::new();
                o.insert("id".into(), json!(r.id));
                o.insert("config".into(), config_json(&r.config));
                o.insert("compute_seconds".into(), json!(r.compute));
                o.insert("sync_seconds".into(), json!(r.sync));
                o.insert("transfer_in_seconds".into(), json!(r.transfer_in));
                if let Some(t) = &r.traffic {
                    o.insert("traffic".into(), traffic_json(t));
                }
                Value::Object(o)
            })
            .collect();
        obj.insert("layers".into(), Value::Array(layers));
        Value::Object(obj)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let bytes = self.traffic.is_some();
        writeln!(out, "strategy: {}", self.label).unwrap();
        write!(out, "{:<20} {:<26} {:>12} {:>12} {:>12}", "layer", "config", "compute ms", "sync ms", "xfer-in ms")
            .unwrap();
        if bytes {
            write!(out, " {:>14} {:>14}", "sync bytes", "xfer bytes").unwrap();
        }
        out.push('\n');
        for r in &self.layers {
            let config = r.config.map_or_else(|| "-".to_string(), |c| c.to_string());
            write!(
                out,
                "{:<20} {:<26} {:>12.4} {:>12.4} {:>12.4}",
                r.id,
                config,
                ms(r.compute),
                ms(r.sync),
                ms(r.transfer_in)
            )
            .unwrap();
            if let Some(t) = &r.traffic {
                write!(out, " {:>14.0} {:>14.0}", t.sync_bytes, t.transfer_bytes).unwrap();
            }
            out.push('\n');
        }
        writeln!(
            out,
            "total: {:.4} ms (compute {:.4} ms, sync {:.4} ms, transfer {:.4} ms)",
            ms(self.total),
            ms(self.compute),
            ms(self.sync),
            ms(self.transfer)
        )
        .unwrap();
        if let Some(t) = &self.traffic {
            writeln!(out, "traffic: sync {:.0} B, transfer {:.0} B", t.sync_bytes, t.transfer_bytes).unwrap();
        }
        out
    }
}

impl SearchSummary {
    pub fn to_json(&self) -> Value {
        json!({
            "final_graph_nodes": self.final_graph_nodes,
            "node_eliminations": self.node_eliminations,
            "edge_eliminations": self.edge_eliminations,
        })
    }

    pub fn render(&self) -> String {
        format!(
            "search: {} node and {} edge eliminations, final graph has {} nodes\n",
            self.node_eliminations, self.edge_eliminations, self.final_graph_nodes
        )
    }
}

/// One row per strategy: totals and, when available, raw bytes.
pub fn compare_table(rows: &[StrategyReport]) -> String {
    let bytes = rows.iter().all(|r| r.traffic.is_some());
    let mut out = String::new();
    write!(
        out,
        "{:<10} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "strategy", "total ms", "compute ms", "sync ms", "xfer ms", "comm ms"
    )
    .unwrap();
    if bytes {
        write!(out, " {:>14} {:>14}", "sync bytes", "xfer bytes").unwrap();
    }
    out.push('\n');
    for r in rows {
        write!(
            out,
            "{:<10} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>12.4}",
            r.label,
            ms(r.total),
            ms(r.compute),
            ms(r.sync),
            ms(r.transfer),
            ms(r.communication())
        )
        .unwrap();
        if let Some(t) = r.traffic.as_ref().filter(|_| bytes) {
            write!(out, " {:>14.0} {:>14.0}", t.sync_bytes, t.transfer_bytes).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn compare_json(rows: &[StrategyReport]) -> Value {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            let mut o = Map::new();
            o.insert("strategy".into(), json!(r.label));
            o.insert("total_seconds".into(), json!(r.total));
            o.insert("compute_seconds".into(), json!(r.compute));
            o.insert("sync_seconds".into(), json!(r.sync));
            o.insert("transfer_seconds".into(), json!(r.transfer));
            o.insert("communication_seconds".into(), json!(r.communication()));
            if let Some(t) = &r.traffic {
                o.insert("traffic".into(), traffic_json(t));
            }
            Value::Object(o)
        })
        .collect();
    json!({ "rows": rows })
}
