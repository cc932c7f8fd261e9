//! Computation-graph and device-graph data model.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A tensor dimension, in the fixed order used everywhere in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dim {
    Sample,
    Channel,
    Height,
    Width,
}

impl Dim {
    pub const ALL: [Dim; 4] = [Dim::Sample, Dim::Channel, Dim::Height, Dim::Width];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Dim::Sample => "sample",
            Dim::Channel => "channel",
            Dim::Height => "height",
            Dim::Width => "width",
        }
    }

    pub fn parse(name: &str) -> Option<Dim> {
        Dim::ALL.into_iter().find(|d| d.name() == name)
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Extents of a 4-D activation tensor. Tensors produced by fully-connected
/// layers have `height == width == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorShape {
    pub sample: usize,
    pub channel: usize,
    pub height: usize,
    pub width: usize,
}

impl TensorShape {
    pub fn new(sample: usize, channel: usize, height: usize, width: usize) -> Self {
        TensorShape { sample, channel, height, width }
    }

    pub fn extents(&self) -> [usize; 4] {
        [self.sample, self.channel, self.height, self.width]
    }

    pub fn from_extents(e: [usize; 4]) -> Self {
        TensorShape::new(e[0], e[1], e[2], e[3])
    }

    pub fn extent(&self, dim: Dim) -> usize {
        self.extents()[dim.index()]
    }

    pub fn volume(&self) -> usize {
        self.extents().iter().product()
    }

    /// Features per sample, i.e. `channel * height * width`.
    pub fn features(&self) -> usize {
        self.channel * self.height * self.width
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.sample, self.channel, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// Data source. The sample extent comes from the graph's batch size.
    Input {
        channel: usize,
        height: usize,
        width: usize,
    },
    Conv2D {
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    },
    Pool2D {
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    },
    /// Dense layer over the `channel * height * width` features of its input.
    FullyConnected {
        out_channels: usize,
    },
    Flatten,
    Concat {
        axis: Dim,
    },
    Softmax,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Input { .. } => "input",
            LayerKind::Conv2D { .. } => "conv2d",
            LayerKind::Pool2D { .. } => "pool2d",
            LayerKind::FullyConnected { .. } => "fc",
            LayerKind::Flatten => "flatten",
            LayerKind::Concat { .. } => "concat",
            LayerKind::Softmax => "softmax",
        }
    }

    pub fn is_input(&self) -> bool {
        matches!(self, LayerKind::Input { .. })
    }

    /// Whether the layer carries trainable parameters.
    pub fn has_parameters(&self) -> bool {
        matches!(self, LayerKind::Conv2D { .. } | LayerKind::FullyConnected { .. })
    }

    fn check(&self) -> std::result::Result<(), String> {
        let positive = |what: &str, v: usize| {
            if v == 0 {
                Err(format!("{what} must be >= 1"))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerKind::Input { channel, height, width } => {
                positive("channel", channel)?;
                positive("height", height)?;
                positive("width", width)
            }
            LayerKind::Conv2D { out_channels, kernel, stride, .. } => {
                positive("out_channels", out_channels)?;
                positive("kernel height", kernel.0)?;
                positive("kernel width", kernel.1)?;
                positive("stride height", stride.0)?;
                positive("stride width", stride.1)
            }
            LayerKind::Pool2D { kernel, stride, .. } => {
                positive("kernel height", kernel.0)?;
                positive("kernel width", kernel.1)?;
                positive("stride height", stride.0)?;
                positive("stride width", stride.1)
            }
            LayerKind::FullyConnected { out_channels } => positive("out_channels", out_channels),
            LayerKind::Flatten | LayerKind::Concat { .. } | LayerKind::Softmax => Ok(()),
        }
    }

    fn check_arity(&self, n: usize) -> std::result::Result<(), String> {
        match self {
            LayerKind::Input { .. } if n != 0 => Err(format!("input layers take no inputs, got {n}")),
            LayerKind::Concat { .. } if n < 2 => Err(format!("concat needs at least 2 inputs, got {n}")),
            LayerKind::Input { .. } | LayerKind::Concat { .. } => Ok(()),
            _ if n != 1 => Err(format!("{} takes exactly 1 input, got {n}", self.name())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub id: String,
    pub kind: LayerKind,
    /// Producer layer indices, in input-slot order.
    pub inputs: Vec<usize>,
}

/// A tensor flowing from `src`'s output into input slot `slot` of `dst`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub src: usize,
    pub dst: usize,
    pub slot: usize,
}

/// A DAG multigraph of layers. Layer indices follow declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationGraph {
    batch: usize,
    layers: Vec<Layer>,
    edges: Vec<Edge>,
    shapes: Vec<TensorShape>,
    topo_order: Vec<usize>,
    topo_rank: Vec<usize>,
}

impl ComputationGraph {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, idx: usize) -> &Layer {
        &self.layers[idx]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.layers.len()
    }

    /// Number of computing layers, i.e. every node except data inputs.
    pub fn layer_count(&self) -> usize {
        self.layers.iter().filter(|l| !l.kind.is_input()).count()
    }

    pub fn shape(&self, idx: usize) -> TensorShape {
        self.shapes[idx]
    }

    pub fn shapes(&self) -> &[TensorShape] {
        &self.shapes
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Position of each layer in [`Self::topo_order`].
    pub fn topo_rank(&self) -> &[usize] {
        &self.topo_rank
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.id == id)
    }

    /// Offset of input `slot` of a concat layer along its axis; zero otherwise.
    pub fn input_offset(&self, dst: usize, slot: usize) -> usize {
        match self.layers[dst].kind {
            LayerKind::Concat { axis } => {
                self.layers[dst].inputs[..slot].iter().map(|&src| self.shapes[src].extent(axis)).sum()
            }
            _ => 0,
        }
    }
}

/// Recomputes every layer's output shape in topological order.
pub fn infer_shapes(mut graph: ComputationGraph) -> Result<ComputationGraph> {
    let mut shapes = vec![TensorShape::new(1, 1, 1, 1); graph.layers.len()];
    for &idx in &graph.topo_order {
        let layer = &graph.layers[idx];
        let inputs: Vec<TensorShape> = layer.inputs.iter().map(|&i| shapes[i]).collect();
        shapes[idx] = output_shape(graph.batch, layer, &inputs)?;
    }
    graph.shapes = shapes;
    Ok(graph)
}

fn window_extent(layer: &str, input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::Shape {
            layer: layer.to_string(),
            reason: format!("kernel {kernel} larger than padded input extent {padded}"),
        });
    }
    Ok((padded - kernel) / stride + 1)
}

fn output_shape(batch: usize, layer: &Layer, inputs: &[TensorShape]) -> Result<TensorShape> {
    let id = layer.id.as_str();
    let shape = match layer.kind {
        LayerKind::Input { channel, height, width } => TensorShape::new(batch, channel, height, width),
        LayerKind::Conv2D { out_channels, kernel, stride, padding } => {
            let x = inputs[0];
            TensorShape::new(
                x.sample,
                out_channels,
                window_extent(id, x.height, kernel.0, stride.0, padding.0)?,
                window_extent(id, x.width, kernel.1, stride.1, padding.1)?,
            )
        }
        LayerKind::Pool2D { kernel, stride, padding } => {
            let x = inputs[0];
            TensorShape::new(
                x.sample,
                x.channel,
                window_extent(id, x.height, kernel.0, stride.0, padding.0)?,
                window_extent(id, x.width, kernel.1, stride.1, padding.1)?,
            )
        }
        LayerKind::FullyConnected { out_channels } => TensorShape::new(inputs[0].sample, out_channels, 1, 1),
        LayerKind::Flatten => TensorShape::new(inputs[0].sample, inputs[0].features(), 1, 1),
        LayerKind::Softmax => inputs[0],
        LayerKind::Concat { axis } => {
            let mut out = inputs[0].extents();
            out[axis.index()] = 0;
            for x in inputs {
                let e = x.extents();
                for d in Dim::ALL {
                    if d != axis && e[d.index()] != out[d.index()] {
                        return Err(Error::Shape {
                            layer: id.to_string(),
                            reason: format!(
                                "concat inputs disagree on {d} extent: {} vs {}",
                                out[d.index()],
                                e[d.index()]
                            ),
                        });
                    }
                }
                out[axis.index()] += e[axis.index()];
            }
            TensorShape::from_extents(out)
        }
    };
    if shape.extents().contains(&0) {
        return Err(Error::Shape { layer: id.to_string(), reason: format!("inferred non-positive extent {shape}") });
    }
    Ok(shape)
}

/// Incrementally declares layers by id; [`GraphBuilder::build`] validates the
/// result and infers shapes.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    batch: usize,
    layers: Vec<(String, LayerKind, Vec<String>)>,
}

impl GraphBuilder {
    pub fn new(batch: usize) -> Self {
        GraphBuilder { batch, layers: Vec::new() }
    }

    pub fn input(&mut self, id: &str, channel: usize, height: usize, width: usize) -> &mut Self {
        self.layer(id, LayerKind::Input { channel, height, width }, &[])
    }

    pub fn layer(&mut self, id: &str, kind: LayerKind, inputs: &[&str]) -> &mut Self {
        self.layers.push((id.to_string(), kind, inputs.iter().map(|s| s.to_string()).collect()));
        self
    }

    pub fn push(&mut self, id: String, kind: LayerKind, inputs: Vec<String>) -> &mut Self {
        self.layers.push((id, kind, inputs));
        self
    }

    pub fn build(&self) -> Result<ComputationGraph> {
        if self.batch == 0 {
            return Err(Error::Parse("batch must be >= 1".into()));
        }
        let mut index = HashMap::new();
        for (i, (id, _, _)) in self.layers.iter().enumerate() {
            if index.insert(id.as_str(), i).is_some() {
                return Err(Error::DuplicateLayer(id.clone()));
            }
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (id, kind, inputs) in &self.layers {
            kind.check().map_err(|reason| Error::InvalidLayer { layer: id.clone(), reason })?;
            kind.check_arity(inputs.len()).map_err(|reason| Error::InvalidLayer { layer: id.clone(), reason })?;
            let inputs = inputs
                .iter()
                .map(|name| {
                    index
                        .get(name.as_str())
                        .copied()
                        .ok_or_else(|| Error::DanglingReference { layer: id.clone(), missing: name.clone() })
                })
                .collect::<Result<Vec<_>>>()?;
            layers.push(Layer { id: id.clone(), kind: *kind, inputs });
        }

        let mut edges = Vec::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for (dst, layer) in layers.iter().enumerate() {
            for (slot, &src) in layer.inputs.iter().enumerate() {
                let repeat = seen.entry((src, dst)).or_insert(0);
                let id = if *repeat == 0 {
                    format!("{}->{}", layers[src].id, layer.id)
                } else {
                    format!("{}->{}#{}", layers[src].id, layer.id, repeat)
                };
                *repeat += 1;
                edges.push(Edge { id, src, dst, slot });
            }
        }

        let topo_order = topological_order(&layers)?;
        let mut topo_rank = vec![0; layers.len()];
        for (rank, &idx) in topo_order.iter().enumerate() {
            topo_rank[idx] = rank;
        }
        let graph = ComputationGraph { batch: self.batch, layers, edges, shapes: Vec::new(), topo_order, topo_rank };
        infer_shapes(graph)
    }
}

/// Kahn's algorithm, always releasing the lowest-index ready layer first.
fn topological_order(layers: &[Layer]) -> Result<Vec<usize>> {
    let n = layers.len();
    let mut indegree: Vec<usize> = layers.iter().map(|l| l.inputs.len()).collect();
    let mut consumers = vec![Vec::new(); n];
    for (dst, layer) in layers.iter().enumerate() {
        for &src in &layer.inputs {
            consumers[src].push(dst);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(idx) = ready.pop_first() {
        order.push(idx);
        for &c in &consumers[idx] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap();
        return Err(Error::Cycle(layers[stuck].id.clone()));
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: u32,
    /// flop/s
    pub compute_rate: f64,
}

/// Devices plus a complete, directed bandwidth table in bytes/s.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceGraph {
    devices: Vec<Device>,
    bandwidth: Vec<f64>,
}

impl DeviceGraph {
    /// `links` are `(src, dst, bytes/s)`; unlisted ordered pairs get
    /// `default_bandwidth`. Device ids must be exactly `0..n` in some order.
    pub fn new(mut devices: Vec<Device>, links: &[(u32, u32, f64)], default_bandwidth: f64) -> Result<Self> {
        if devices.is_empty() {
            return Err(Error::InvalidDevice("at least one device is required".into()));
        }
        devices.sort_by_key(|d| d.id);
        for w in devices.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::DuplicateDevice(w[0].id));
            }
        }
        for (i, d) in devices.iter().enumerate() {
            if d.id as usize != i {
                return Err(Error::InvalidDevice(format!("device ids must be dense from 0; missing id {i}")));
            }
            if !(d.compute_rate > 0.0 && d.compute_rate.is_finite()) {
                return Err(Error::InvalidDevice(format!("device {}: compute rate must be positive", d.id)));
            }
        }
        if !(default_bandwidth > 0.0 && default_bandwidth.is_finite()) {
            return Err(Error::InvalidDevice("default_bandwidth must be positive".into()));
        }
        let n = devices.len();
        let mut bandwidth = vec![default_bandwidth; n * n];
        for &(src, dst, bw) in links {
            if src as usize >= n || dst as usize >= n {
                return Err(Error::InvalidDevice(format!("link {src}->{dst} references an unknown device")));
            }
            if !(bw > 0.0 && bw.is_finite()) {
                return Err(Error::InvalidDevice(format!("link {src}->{dst}: bandwidth must be positive")));
            }
            bandwidth[src as usize * n + dst as usize] = bw;
        }
        Ok(DeviceGraph { devices, bandwidth })
    }

    /// `n` identical devices with one bandwidth between every pair.
    pub fn uniform(n: usize, compute_rate: f64, bandwidth: f64) -> Result<Self> {
        let devices = (0..n as u32).map(|id| Device { id, compute_rate }).collect();
        DeviceGraph::new(devices, &[], bandwidth)
    }

    /// A modeled GPU cluster: nodes of `per_node` devices with fast links
    /// inside a node and a slower interconnect between nodes.
    pub fn cluster(n: usize, per_node: usize, compute_rate: f64, intra: f64, inter: f64) -> Result<Self> {
        let devices = (0..n as u32).map(|id| Device { id, compute_rate }).collect();
        let mut links = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && i / per_node == j / per_node {
                    links.push((i as u32, j as u32, intra));
                }
            }
        }
        DeviceGraph::new(devices, &links, inter)
    }

    /// Default cluster for `--devices N`: four 10 TFLOP/s devices per node,
    /// 40 GB/s inside a node, 12.5 GB/s between nodes.
    pub fn default_cluster(n: usize) -> Result<Self> {
        DeviceGraph::cluster(n, 4, 1e13, 4e10, 1.25e10)
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn compute_rate(&self, device: usize) -> f64 {
        self.devices[device].compute_rate
    }

    /// Bytes/s from `src` to `dst`. Transfers within one device are free and
    /// never consult this table.
    pub fn bandwidth(&self, src: usize, dst: usize) -> f64 {
        self.bandwidth[src * self.devices.len() + dst]
    }
}
