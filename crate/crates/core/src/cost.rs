//! Cost model: per-layer compute and parameter-sync time, per-edge transfer
//! time, the precomputed tables the search runs on, and whole-strategy
//! evaluation as a plain sum over those tables.

use num_traits::Float;

use crate::config::{
    enumerate_configs, owned_interval, owned_region, place, required_dim, required_input_region, Config, InputSlot,
    Placement,
};
use crate::error::{Error, Result};
use crate::graph::{ComputationGraph, DeviceGraph, Dim, LayerKind, TensorShape};
use crate::scalar::Cost;
use crate::strategy::Strategy;

/// Bytes per tensor element and per parameter (float32).
pub const ELEMENT_BYTES: f64 = 4.0;

/// Forward + backward work relative to the forward pass alone.
pub const TRAINING_FLOP_FACTOR: f64 = 3.0;

/// Dense row-major matrix indexed by (source config, destination config).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Panics if the rows are ragged.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix rows");
        Matrix { rows: rows.len(), cols, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Precomputed cost functions over every layer's configuration catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTables<T> {
    catalogs: Option<Vec<Vec<Config>>>,
    compute: Vec<Vec<T>>,
    sync: Vec<Vec<T>>,
    node: Vec<Vec<T>>,
    xfer: Vec<Matrix<T>>,
}

impl<T: Cost> CostTables<T> {
    /// Assembles tables and checks their dimensions against the graph.
    /// `catalogs` is `None` for synthetic tables that have no real configs.
    pub fn new(
        graph: &ComputationGraph,
        catalogs: Option<Vec<Vec<Config>>>,
        compute: Vec<Vec<T>>,
        sync: Vec<Vec<T>>,
        xfer: Vec<Matrix<T>>,
    ) -> Result<Self> {
        let n = graph.node_count();
        if compute.len() != n || sync.len() != n {
            return Err(Error::TableShape(format!("expected node tables for {n} layers")));
        }
        for (l, (c, s)) in compute.iter().zip(&sync).enumerate() {
            if c.is_empty() || c.len() != s.len() {
                return Err(Error::TableShape(format!(
                    "layer `{}`: empty or mismatched node table",
                    graph.layer(l).id
                )));
            }
            if let Some(cat) = &catalogs {
                if cat[l].len() != c.len() {
                    return Err(Error::TableShape(format!("layer `{}`: catalog size mismatch", graph.layer(l).id)));
                }
            }
        }
        if xfer.len() != graph.edges().len() {
            return Err(Error::TableShape(format!("expected {} edge tables", graph.edges().len())));
        }
        for (e, m) in graph.edges().iter().zip(&xfer) {
            if m.rows() != compute[e.src].len() || m.cols() != compute[e.dst].len() {
                return Err(Error::TableShape(format!(
                    "edge `{}`: table is {}x{}, expected {}x{}",
                    e.id,
                    m.rows(),
                    m.cols(),
                    compute[e.src].len(),
                    compute[e.dst].len()
                )));
            }
        }
        let node = compute.iter().zip(&sync).map(|(c, s)| c.iter().zip(s).map(|(&a, &b)| a + b).collect()).collect();
        Ok(CostTables { catalogs, compute, sync, node, xfer })
    }

    /// Tables with the whole node cost attributed to compute.
    pub fn synthetic(graph: &ComputationGraph, node: Vec<Vec<T>>, xfer: Vec<Matrix<T>>) -> Result<Self> {
        let sync = node.iter().map(|v| vec![T::zero(); v.len()]).collect();
        CostTables::new(graph, None, node, sync, xfer)
    }

    /// Maps every compute, sync and transfer entry into another scalar type.
    /// Node costs are re-summed in the new type.
    pub fn convert<U: Cost>(&self, f: impl Fn(T) -> U) -> CostTables<U> {
        let vecs = |v: &[Vec<T>]| -> Vec<Vec<U>> { v.iter().map(|r| r.iter().map(|&x| f(x)).collect()).collect() };
        let compute = vecs(&self.compute);
        let sync = vecs(&self.sync);
        let node = compute.iter().zip(&sync).map(|(c, s)| c.iter().zip(s).map(|(&a, &b)| a + b).collect()).collect();
        CostTables {
            catalogs: self.catalogs.clone(),
            compute,
            sync,
            node,
            xfer: self.xfer.iter().map(|m| m.map(&f)).collect(),
        }
    }

    pub fn catalogs(&self) -> Option<&[Vec<Config>]> {
        self.catalogs.as_deref()
    }

    pub fn catalog(&self, layer: usize) -> Option<&[Config]> {
        self.catalogs.as_ref().map(|c| c[layer].as_slice())
    }

    pub fn config_count(&self, layer: usize) -> usize {
        self.node[layer].len()
    }

    /// `t_c + t_s` per configuration.
    pub fn node_cost(&self, layer: usize) -> &[T] {
        &self.node[layer]
    }

    pub fn node_costs(&self) -> &[Vec<T>] {
        &self.node
    }

    pub fn compute_cost(&self, layer: usize) -> &[T] {
        &self.compute[layer]
    }

    pub fn sync_cost(&self, layer: usize) -> &[T] {
        &self.sync[layer]
    }

    pub fn xfer(&self, edge: usize) -> &Matrix<T> {
        &self.xfer[edge]
    }

    pub fn xfer_tables(&self) -> &[Matrix<T>] {
        &self.xfer
    }

    /// Replaces one layer's node costs, attributing them to compute.
    pub fn override_node(&mut self, layer: usize, costs: Vec<T>) -> Result<()> {
        if costs.len() != self.node[layer].len() {
            return Err(Error::TableShape(format!(
                "layer #{layer}: {} costs given, catalog has {}",
                costs.len(),
                self.node[layer].len()
            )));
        }
        self.sync[layer] = vec![T::zero(); costs.len()];
        self.node[layer] = costs.clone();
        self.compute[layer] = costs;
        Ok(())
    }

    pub fn override_xfer(&mut self, edge: usize, table: Matrix<T>) -> Result<()> {
        let cur = &self.xfer[edge];
        if table.rows() != cur.rows() || table.cols() != cur.cols() {
            return Err(Error::TableShape(format!(
                "edge #{edge}: {}x{} table given, expected {}x{}",
                table.rows(),
                table.cols(),
                cur.rows(),
                cur.cols()
            )));
        }
        self.xfer[edge] = table;
        Ok(())
    }

    /// Looks up the catalog index of `config` for `layer`.
    pub fn config_index(&self, graph: &ComputationGraph, layer: usize, config: &Config) -> Result<usize> {
        self.catalog(layer).and_then(|cat| cat.iter().position(|c| c == config)).ok_or_else(|| {
            Error::ConfigNotInCatalog { layer: graph.layer(layer).id.clone(), config: config.to_string() }
        })
    }
}

fn check_strategy<T: Cost>(graph: &ComputationGraph, tables: &CostTables<T>, strategy: &Strategy) -> Result<()> {
    let choices = strategy.choices();
    if choices.len() < graph.node_count() {
        return Err(Error::MissingLayer(graph.layer(choices.len()).id.clone()));
    }
    if choices.len() > graph.node_count() {
        return Err(Error::TableShape(format!(
            "strategy has {} entries for {} layers",
            choices.len(),
            graph.node_count()
        )));
    }
    for (l, &c) in choices.iter().enumerate() {
        if c >= tables.config_count(l) {
            return Err(Error::ConfigNotInCatalog {
                layer: graph.layer(l).id.clone(),
                config: format!("#{c} of {}", tables.config_count(l)),
            });
        }
    }
    Ok(())
}

/// Total per-step time of a strategy: every layer's `t_c + t_s` in layer
/// order, then every edge's `t_x` in edge order.
pub fn evaluate_strategy<T: Cost>(graph: &ComputationGraph, tables: &CostTables<T>, strategy: &Strategy) -> Result<T> {
    check_strategy(graph, tables, strategy)?;
    let s = strategy.choices();
    let mut total = T::zero();
    for (l, &c) in s.iter().enumerate() {
        total = total + tables.node[l][c];
    }
    for (e, edge) in graph.edges().iter().enumerate() {
        total = total + tables.xfer[e].get(s[edge.src], s[edge.dst]);
    }
    Ok(total)
}

/// Per-component totals of a strategy, read from the tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown<T> {
    pub compute: T,
    pub sync: T,
    pub transfer: T,
}

pub fn strategy_breakdown<T: Cost>(
    graph: &ComputationGraph,
    tables: &CostTables<T>,
    strategy: &Strategy,
) -> Result<CostBreakdown<T>> {
    check_strategy(graph, tables, strategy)?;
    let s = strategy.choices();
    let mut out = CostBreakdown { compute: T::zero(), sync: T::zero(), transfer: T::zero() };
    for (l, &c) in s.iter().enumerate() {
        out.compute = out.compute + tables.compute[l][c];
        out.sync = out.sync + tables.sync[l][c];
    }
    for (e, edge) in graph.edges().iter().enumerate() {
        out.transfer = out.transfer + tables.xfer[e].get(s[edge.src], s[edge.dst]);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Analytic backend

/// Forward-pass floating point operations of a layer.
pub fn forward_flops(kind: &LayerKind, input: Option<TensorShape>, out: TensorShape) -> f64 {
    let n = out.sample as f64;
    match *kind {
        LayerKind::Conv2D { out_channels, kernel, .. } => {
            let in_c = input.map_or(0, |s| s.channel) as f64;
            2.0 * n * out_channels as f64 * (out.height * out.width) as f64 * in_c * (kernel.0 * kernel.1) as f64
        }
        LayerKind::FullyConnected { out_channels } => {
            let in_f = input.map_or(0, |s| s.features()) as f64;
            2.0 * n * in_f * out_channels as f64
        }
        LayerKind::Pool2D { kernel, .. } => {
            n * out.channel as f64 * (out.height * out.width) as f64 * (kernel.0 * kernel.1) as f64
        }
        LayerKind::Softmax => 5.0 * n * out.channel as f64,
        LayerKind::Input { .. } | LayerKind::Flatten | LayerKind::Concat { .. } => 0.0,
    }
}

/// Trainable parameters of a layer.
pub fn parameter_count(kind: &LayerKind, input: Option<TensorShape>) -> usize {
    match *kind {
        LayerKind::Conv2D { out_channels, kernel, .. } => {
            out_channels * input.map_or(0, |s| s.channel) * kernel.0 * kernel.1
        }
        LayerKind::FullyConnected { out_channels } => input.map_or(0, |s| s.features()) * out_channels,
        _ => 0,
    }
}

fn first_input(graph: &ComputationGraph, layer: usize) -> Option<TensorShape> {
    graph.layer(layer).inputs.first().map(|&i| graph.shape(i))
}

fn from_f64<T: Float>(v: f64) -> T {
    T::from(v).expect("cost not representable in the scalar type")
}

/// `t_c`: forward + backward time of one partition on the slowest device the
/// configuration runs on.
pub fn compute_cost<T: Float>(
    graph: &ComputationGraph,
    layer: usize,
    config: &Config,
    devices: &DeviceGraph,
) -> Result<T> {
    let placement = place(config, devices)?;
    let flops = forward_flops(&graph.layer(layer).kind, first_input(graph, layer), graph.shape(layer));
    if flops == 0.0 {
        return Ok(T::zero());
    }
    let slowest = placement.devices().iter().map(|&d| devices.compute_rate(d)).fold(f64::INFINITY, f64::min);
    Ok(from_f64(flops / config.total_degree() as f64 * TRAINING_FLOP_FACTOR / slowest))
}

/// Parameter-server traffic of one step: `(bytes, seconds)`.
///
/// Parameters are sharded by the channel degree and replicated across the
/// remaining degrees. The server sits on device 0; every other device that
/// holds a replica sends its gradient shard and receives the updated shard.
pub fn sync_traffic(
    graph: &ComputationGraph,
    layer: usize,
    config: &Config,
    devices: &DeviceGraph,
) -> Result<(f64, f64)> {
    let placement = place(config, devices)?;
    let params = parameter_count(&graph.layer(layer).kind, first_input(graph, layer));
    let replicas = config.total_degree() / config.channel;
    if params == 0 || replicas == 1 {
        return Ok((0.0, 0.0));
    }
    let shard_bytes = ELEMENT_BYTES * params as f64 / config.channel as f64;
    let mut bytes = 0.0;
    let mut seconds = 0.0;
    for &d in placement.devices() {
        if d != 0 {
            bytes += 2.0 * shard_bytes;
            seconds += 2.0 * shard_bytes / devices.bandwidth(d, 0);
        }
    }
    Ok((bytes, seconds))
}

/// `t_s`: parameter synchronization time.
pub fn sync_cost<T: Float>(
    graph: &ComputationGraph,
    layer: usize,
    config: &Config,
    devices: &DeviceGraph,
) -> Result<T> {
    Ok(from_f64(sync_traffic(graph, layer, config, devices)?.1))
}

/// Cross-device traffic for one tensor under a pair of configurations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransferStats {
    /// Bytes moved between distinct devices, summed over all device pairs.
    pub bytes: f64,
    /// Time of the slowest device pair; links run concurrently.
    pub seconds: f64,
}

/// Traffic for edge `edge` when its source runs `c_src` on `p_src` and its
/// destination runs `c_dst` on `p_dst`. Placements must be injective, so each
/// (source partition, destination partition) pair is its own device pair.
pub fn transfer_traffic(
    graph: &ComputationGraph,
    edge: usize,
    c_src: &Config,
    p_src: &Placement,
    c_dst: &Config,
    p_dst: &Placement,
    devices: &DeviceGraph,
) -> Result<TransferStats> {
    let e = &graph.edges()[edge];
    let src_shape = graph.shape(e.src);
    let dst_shape = graph.shape(e.dst);
    let kind = graph.layer(e.dst).kind;
    let slot = InputSlot { shape: src_shape, offset: graph.input_offset(e.dst, e.slot) };
    let mut stats = TransferStats::default();
    let mut record = |p: usize, q: usize, volume: usize| {
        let (dp, dq) = (p_src.device(p), p_dst.device(q));
        if dp != dq && volume > 0 {
            let bytes = ELEMENT_BYTES * volume as f64;
            stats.bytes += bytes;
            stats.seconds = stats.seconds.max(bytes / devices.bandwidth(dp, dq));
        }
    };

    if matches!(kind, LayerKind::Flatten) {
        let owned: Vec<_> =
            (0..c_src.total_degree()).map(|p| owned_region(src_shape, c_src, p)).collect::<Result<_>>()?;
        for q in 0..c_dst.total_degree() {
            let fp = required_input_region(&kind, dst_shape, c_dst, q, &slot)?;
            for (p, region) in owned.iter().enumerate() {
                record(p, q, fp.intersection_volume(region));
            }
        }
        return Ok(stats);
    }

    // Separable layers: the needed volume from source block p is a product of
    // per-dimension overlaps, so only overlapping blocks are visited.
    let src_deg = c_src.degrees();
    let src_ext = src_shape.extents();
    let dst_deg = c_dst.degrees();
    let dst_ext = dst_shape.extents();
    let mut overlaps: [Vec<(usize, usize)>; 4] = Default::default();
    for q in 0..c_dst.total_degree() {
        let coords = c_dst.coordinates(q);
        for d in Dim::ALL {
            let i = d.index();
            let owned = owned_interval(dst_ext[i], dst_deg[i], coords[i]);
            let needed = required_dim(&kind, d, owned, &slot).expect("separable layer");
            let block = src_ext[i] / src_deg[i];
            let list = &mut overlaps[i];
            list.clear();
            for iv in needed {
                if iv.is_empty() {
                    continue;
                }
                for a in iv.lo / block..=(iv.hi - 1) / block {
                    let len = owned_interval(src_ext[i], src_deg[i], a).overlap(&iv);
                    match list.last_mut() {
                        Some((last, acc)) if *last == a => *acc += len,
                        _ => list.push((a, len)),
                    }
                }
            }
        }
        for &(a0, l0) in &overlaps[0] {
            for &(a1, l1) in &overlaps[1] {
                for &(a2, l2) in &overlaps[2] {
                    for &(a3, l3) in &overlaps[3] {
                        let p = ((a0 * src_deg[1] + a1) * src_deg[2] + a2) * src_deg[3] + a3;
                        record(p, q, l0 * l1 * l2 * l3);
                    }
                }
            }
        }
    }
    Ok(stats)
}

/// `t_x` under canonical placement.
pub fn transfer_cost<T: Float>(
    graph: &ComputationGraph,
    edge: usize,
    c_src: &Config,
    c_dst: &Config,
    devices: &DeviceGraph,
) -> Result<T> {
    let p_src = place(c_src, devices)?;
    let p_dst = place(c_dst, devices)?;
    Ok(from_f64(transfer_traffic(graph, edge, c_src, &p_src, c_dst, &p_dst, devices)?.seconds))
}

/// Builds the analytic cost tables over every layer's full configuration
/// catalog for `devices`.
pub fn build_cost_tables<T: Float + Cost>(graph: &ComputationGraph, devices: &DeviceGraph) -> Result<CostTables<T>> {
    let catalogs: Vec<Vec<Config>> = (0..graph.node_count())
        .map(|l| enumerate_configs(&graph.layer(l).kind, graph.shape(l), devices.len()))
        .collect();
    let placements: Vec<Vec<Placement>> = catalogs
        .iter()
        .map(|cat| cat.iter().map(|c| place(c, devices)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut compute = Vec::with_capacity(catalogs.len());
    let mut sync = Vec::with_capacity(catalogs.len());
    for (l, cat) in catalogs.iter().enumerate() {
        compute.push(cat.iter().map(|c| compute_cost(graph, l, c, devices)).collect::<Result<Vec<T>>>()?);
        sync.push(cat.iter().map(|c| sync_cost(graph, l, c, devices)).collect::<Result<Vec<T>>>()?);
    }
    let mut xfer = Vec::with_capacity(graph.edges().len());
    for (e, edge) in graph.edges().iter().enumerate() {
        let (sc, dc) = (&catalogs[edge.src], &catalogs[edge.dst]);
        let (sp, dp) = (&placements[edge.src], &placements[edge.dst]);
        let mut m = Matrix::filled(sc.len(), dc.len(), T::zero());
        for i in 0..sc.len() {
            for j in 0..dc.len() {
                let stats = transfer_traffic(graph, e, &sc[i], &sp[i], &dc[j], &dp[j], devices)?;
                m.set(i, j, from_f64(stats.seconds));
            }
        }
        xfer.push(m);
    }
    CostTables::new(graph, Some(catalogs), compute, sync, xfer)
}
