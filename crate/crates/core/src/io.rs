//! JSON formats: networks, device graphs, measured cost overrides and
//! strategies.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::Config;
use crate::cost::{CostTables, Matrix};
use crate::error::{Error, Result};
use crate::graph::{ComputationGraph, Device, DeviceGraph, Dim, GraphBuilder, LayerKind};
use crate::strategy::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
enum Pair {
    Square(usize),
    Rect([usize; 2]),
}

impl Pair {
    fn get(self) -> (usize, usize) {
        match self {
            Pair::Square(v) => (v, v),
            Pair::Rect([h, w]) => (h, w),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InputFields {
    channel: usize,
    height: usize,
    width: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvFields {
    out_channels: usize,
    kernel: Pair,
    #[serde(default)]
    stride: Option<Pair>,
    #[serde(default)]
    padding: Option<Pair>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolFields {
    kernel: Pair,
    #[serde(default)]
    stride: Option<Pair>,
    #[serde(default)]
    padding: Option<Pair>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FcFields {
    out_channels: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConcatFields {
    #[serde(default)]
    axis: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoFields {}

fn fields<T: DeserializeOwned>(id: &str, rest: Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(rest)).map_err(|e| Error::Parse(format!("layer `{id}`: {e}")))
}

fn parse_kind(id: &str, kind: &str, rest: Map<String, Value>) -> Result<LayerKind> {
    Ok(match kind {
        "input" => {
            let f: InputFields = fields(id, rest)?;
            LayerKind::Input { channel: f.channel, height: f.height, width: f.width }
        }
        "conv2d" | "conv" => {
            let f: ConvFields = fields(id, rest)?;
            LayerKind::Conv2D {
                out_channels: f.out_channels,
                kernel: f.kernel.get(),
                stride: f.stride.map_or((1, 1), Pair::get),
                padding: f.padding.map_or((0, 0), Pair::get),
            }
        }
        "pool2d" | "pool" => {
            let f: PoolFields = fields(id, rest)?;
            let kernel = f.kernel.get();
            LayerKind::Pool2D {
                kernel,
                stride: f.stride.map_or(kernel, Pair::get),
                padding: f.padding.map_or((0, 0), Pair::get),
            }
        }
        "fc" | "fully_connected" | "fullyconnected" => {
            let f: FcFields = fields(id, rest)?;
            LayerKind::FullyConnected { out_channels: f.out_channels }
        }
        "flatten" => {
            fields::<NoFields>(id, rest)?;
            LayerKind::Flatten
        }
        "softmax" => {
            fields::<NoFields>(id, rest)?;
            LayerKind::Softmax
        }
        "concat" => {
            let f: ConcatFields = fields(id, rest)?;
            let axis = match f.axis.as_deref() {
                None => Dim::Channel,
                Some(a) => {
                    Dim::parse(a).ok_or_else(|| Error::Parse(format!("layer `{id}`: unknown concat axis `{a}`")))?
                }
            };
            LayerKind::Concat { axis }
        }
        other => return Err(Error::UnknownLayerKind { layer: id.to_string(), kind: other.to_string() }),
    })
}

fn take_str(obj: &mut Map<String, Value>, key: &str, ctx: &str) -> Result<String> {
    match obj.remove(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(Error::Parse(format!("{ctx}: `{key}` must be a string"))),
        None => Err(Error::Parse(format!("{ctx}: missing `{key}`"))),
    }
}

/// Parses and validates a network description, inferring shapes.
pub fn parse_network(text: &str) -> Result<ComputationGraph> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let Value::Object(mut doc) = doc else {
        return Err(Error::Parse("network must be a JSON object".into()));
    };
    let batch = doc
        .remove("batch")
        .ok_or_else(|| Error::Parse("missing `batch`".into()))?
        .as_u64()
        .filter(|&b| b >= 1)
        .ok_or_else(|| Error::Parse("`batch` must be a positive integer".into()))? as usize;
    let Some(Value::Array(layers)) = doc.remove("layers") else {
        return Err(Error::Parse("missing `layers` array".into()));
    };
    if let Some(key) = doc.keys().next() {
        return Err(Error::Parse(format!("unknown top-level field `{key}`")));
    }
    let mut builder = GraphBuilder::new(batch);
    for (i, layer) in layers.into_iter().enumerate() {
        let Value::Object(mut obj) = layer else {
            return Err(Error::Parse(format!("layer #{i} must be an object")));
        };
        let id = take_str(&mut obj, "id", &format!("layer #{i}"))?;
        let kind = take_str(&mut obj, "kind", &format!("layer `{id}`"))?;
        let inputs = match obj.remove("inputs") {
            None => Vec::new(),
            Some(v) => serde_json::from_value::<Vec<String>>(v)
                .map_err(|e| Error::Parse(format!("layer `{id}`: `inputs`: {e}")))?,
        };
        let kind = parse_kind(&id, &kind, obj)?;
        builder.push(id, kind, inputs);
    }
    builder.build()
}

fn pair(p: (usize, usize)) -> Value {
    json!([p.0, p.1])
}

/// Inverse of [`parse_network`].
pub fn network_to_json(graph: &ComputationGraph) -> Value {
    let layers: Vec<Value> = graph
        .layers()
        .iter()
        .map(|l| {
            let mut obj = Map::new();
            obj.insert("id".into(), json!(l.id));
            obj.insert("kind".into(), json!(l.kind.name()));
            if !l.kind.is_input() {
                let inputs: Vec<&str> = l.inputs.iter().map(|&i| graph.layer(i).id.as_str()).collect();
                obj.insert("inputs".into(), json!(inputs));
            }
            match l.kind {
                LayerKind::Input { channel, height, width } => {
                    obj.insert("channel".into(), json!(channel));
                    obj.insert("height".into(), json!(height));
                    obj.insert("width".into(), json!(width));
                }
                LayerKind::Conv2D { out_channels, kernel, stride, padding } => {
                    obj.insert("out_channels".into(), json!(out_channels));
                    obj.insert("kernel".into(), pair(kernel));
                    obj.insert("stride".into(), pair(stride));
                    obj.insert("padding".into(), pair(padding));
                }
                LayerKind::Pool2D { kernel, stride, padding } => {
                    obj.insert("kernel".into(), pair(kernel));
                    obj.insert("stride".into(), pair(stride));
                    obj.insert("padding".into(), pair(padding));
                }
                LayerKind::FullyConnected { out_channels } => {
                    obj.insert("out_channels".into(), json!(out_channels));
                }
                LayerKind::Concat { axis } => {
                    obj.insert("axis".into(), json!(axis.name()));
                }
                LayerKind::Flatten | LayerKind::Softmax => {}
            }
            Value::Object(obj)
        })
        .collect();
    json!({ "batch": graph.batch(), "layers": layers })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceDoc {
    devices: Vec<DeviceEntry>,
    #[serde(default)]
    links: Vec<LinkEntry>,
    default_bandwidth: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceEntry {
    id: u32,
    flops: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkEntry {
    src: u32,
    dst: u32,
    bandwidth: f64,
}

pub fn parse_device_graph(text: &str) -> Result<DeviceGraph> {
    let doc: DeviceDoc = serde_json::from_str(text).map_err(|e| Error::Parse(format!("device graph: {e}")))?;
    let devices = doc.devices.iter().map(|d| Device { id: d.id, compute_rate: d.flops }).collect();
    let links: Vec<(u32, u32, f64)> = doc.links.iter().map(|l| (l.src, l.dst, l.bandwidth)).collect();
    DeviceGraph::new(devices, &links, doc.default_bandwidth)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasuredDoc {
    #[serde(default)]
    node_costs: Map<String, Value>,
    #[serde(default)]
    xfer_costs: Map<String, Value>,
}

/// Overrides analytic table entries with measured costs. Vectors are indexed
/// in catalog order; keys are layer ids and edge ids.
pub fn apply_measured_costs(graph: &ComputationGraph, tables: &mut CostTables<f64>, text: &str) -> Result<()> {
    let doc: MeasuredDoc = serde_json::from_str(text).map_err(|e| Error::Parse(format!("measured costs: {e}")))?;
    let check = |v: &f64| v.is_finite() && *v >= 0.0;
    for (id, v) in doc.node_costs {
        let layer = graph.index_of(&id).ok_or_else(|| Error::UnknownLayer(id.clone()))?;
        let costs: Vec<f64> = serde_json::from_value(v).map_err(|e| Error::Parse(format!("node_costs `{id}`: {e}")))?;
        if !costs.iter().all(check) {
            return Err(Error::Parse(format!("node_costs `{id}`: costs must be finite and >= 0")));
        }
        tables.override_node(layer, costs)?;
    }
    for (id, v) in doc.xfer_costs {
        let edge = graph
            .edges()
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| Error::Parse(format!("xfer_costs: unknown edge `{id}`")))?;
        let rows: Vec<Vec<f64>> =
            serde_json::from_value(v).map_err(|e| Error::Parse(format!("xfer_costs `{id}`: {e}")))?;
        if rows.iter().flatten().any(|v| !check(v)) {
            return Err(Error::Parse(format!("xfer_costs `{id}`: costs must be finite and >= 0")));
        }
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse(format!("xfer_costs `{id}`: ragged matrix")));
        }
        tables.override_xfer(edge, Matrix::from_rows(rows))?;
    }
    Ok(())
}

/// Strategy document written by `plan`/`brute` and read by `eval`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyDoc {
    pub cost_seconds: f64,
    /// `(layer id, config)` in layer order.
    pub layers: Vec<(String, Config)>,
    pub eliminations: usize,
    pub final_graph_nodes: usize,
}

impl StrategyDoc {
    pub fn new(
        graph: &ComputationGraph,
        configs: &[Config],
        cost_seconds: f64,
        eliminations: usize,
        final_graph_nodes: usize,
    ) -> Self {
        StrategyDoc {
            cost_seconds,
            layers: graph.layers().iter().map(|l| l.id.clone()).zip(configs.iter().copied()).collect(),
            eliminations,
            final_graph_nodes,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut layers = Map::new();
        for (id, c) in &self.layers {
            layers.insert(id.clone(), serde_json::to_value(c).expect("config serializes"));
        }
        json!({
            "cost_seconds": self.cost_seconds,
            "layers": layers,
            "eliminations": self.eliminations,
            "final_graph_nodes": self.final_graph_nodes,
        })
    }

    /// Only `layers` is required; the summary fields default to zero.
    pub fn parse(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("strategy: {e}")))?;
        let obj = v.as_object().ok_or_else(|| Error::Parse("strategy must be a JSON object".into()))?;
        let layers = obj
            .get("layers")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Parse("strategy: missing `layers` object".into()))?
            .iter()
            .map(|(id, c)| {
                serde_json::from_value::<Config>(c.clone())
                    .map(|c| (id.clone(), c))
                    .map_err(|e| Error::Parse(format!("strategy layer `{id}`: {e}")))
            })
            .collect::<Result<_>>()?;
        let num = |k: &str| obj.get(k).and_then(Value::as_u64).unwrap_or(0) as usize;
        Ok(StrategyDoc {
            cost_seconds: obj.get("cost_seconds").and_then(Value::as_f64).unwrap_or(0.0),
            layers,
            eliminations: num("eliminations"),
            final_graph_nodes: num("final_graph_nodes"),
        })
    }

    pub fn to_strategy(&self, graph: &ComputationGraph, tables: &CostTables<f64>) -> Result<Strategy> {
        Strategy::from_configs(graph, tables, self.layers.iter().map(|(id, c)| (id.as_str(), *c)))
    }
}
