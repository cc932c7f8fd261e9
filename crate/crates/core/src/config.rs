//! Parallelization configurations and the partition geometry behind them.
//!
//! A configuration splits a layer's output tensor into equal contiguous blocks
//! along each dimension. Partition `i` owns one block; the blocks are numbered
//! row-major over (sample, channel, height, width) degrees and partition `i`
//! runs on device `i`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DeviceGraph, Dim, LayerKind, TensorShape};

/// Half-open index range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: usize,
    pub hi: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, x: usize) -> bool {
        self.lo <= x && x < self.hi
    }

    pub fn overlap(&self, other: &Interval) -> usize {
        self.hi.min(other.hi).saturating_sub(self.lo.max(other.lo))
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let lo = self.lo.max(other.lo);
        Interval { lo, hi: self.hi.min(other.hi).max(lo) }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lo, self.hi)
    }
}

/// Box over (sample, channel, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub dims: [Interval; 4],
}

impl Region {
    pub fn new(dims: [Interval; 4]) -> Self {
        Region { dims }
    }

    pub fn full(shape: TensorShape) -> Self {
        Region { dims: shape.extents().map(|e| Interval::new(0, e)) }
    }

    pub fn dim(&self, d: Dim) -> Interval {
        self.dims[d.index()]
    }

    pub fn volume(&self) -> usize {
        self.dims.iter().map(Interval::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.iter().any(Interval::is_empty)
    }

    pub fn intersect(&self, other: &Region) -> Region {
        Region { dims: std::array::from_fn(|i| self.dims[i].intersect(&other.dims[i])) }
    }

    pub fn intersection_volume(&self, other: &Region) -> usize {
        self.dims.iter().zip(&other.dims).map(|(a, b)| a.overlap(b)).product()
    }

    pub fn contains(&self, point: [usize; 4]) -> bool {
        self.dims.iter().zip(point).all(|(iv, x)| iv.contains(x))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} x {} x {} x {}", self.dims[0], self.dims[1], self.dims[2], self.dims[3])
    }
}

/// The set of input elements a partition reads, as disjoint boxes.
///
/// Most layers need a single box. Flattened channel ranges and strided
/// windows with gaps (`stride > kernel`) need several.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Footprint {
    boxes: Vec<Region>,
}

impl Footprint {
    pub fn boxes(&self) -> &[Region] {
        &self.boxes
    }

    pub fn volume(&self) -> usize {
        self.boxes.iter().map(Region::volume).sum()
    }

    pub fn intersection_volume(&self, region: &Region) -> usize {
        self.boxes.iter().map(|b| b.intersection_volume(region)).sum()
    }

    pub fn contains(&self, point: [usize; 4]) -> bool {
        self.boxes.iter().any(|b| b.contains(point))
    }

    /// The single box, when the footprint is one.
    pub fn as_region(&self) -> Option<Region> {
        match self.boxes.as_slice() {
            [r] => Some(*r),
            _ => None,
        }
    }
}

/// Degrees of parallelism per dimension. Dimensions a layer cannot split
/// carry degree 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Config {
    #[serde(default = "one")]
    pub sample: usize,
    #[serde(default = "one")]
    pub channel: usize,
    #[serde(default = "one")]
    pub height: usize,
    #[serde(default = "one")]
    pub width: usize,
}

fn one() -> usize {
    1
}

impl Default for Config {
    fn default() -> Self {
        Config::ones()
    }
}

impl Config {
    pub fn ones() -> Self {
        Config { sample: 1, channel: 1, height: 1, width: 1 }
    }

    pub fn from_degrees(d: [usize; 4]) -> Self {
        Config { sample: d[0], channel: d[1], height: d[2], width: d[3] }
    }

    pub fn degrees(&self) -> [usize; 4] {
        [self.sample, self.channel, self.height, self.width]
    }

    pub fn degree(&self, dim: Dim) -> usize {
        self.degrees()[dim.index()]
    }

    pub fn total_degree(&self) -> usize {
        self.degrees().iter().product()
    }

    /// Checks the configuration invariants against a layer's output shape.
    pub fn is_valid_for(&self, kind: &LayerKind, shape: TensorShape, device_count: usize) -> bool {
        let dims = parallelizable_dims(kind, shape);
        let total = self.total_degree();
        (1..=device_count).contains(&total)
            && Dim::ALL.iter().all(|&d| {
                let deg = self.degree(d);
                if dims.contains(&d) {
                    deg >= 1 && shape.extent(d).is_multiple_of(deg)
                } else {
                    deg == 1
                }
            })
    }

    /// Per-dimension block index of partition `part` (row-major).
    pub fn coordinates(&self, part: usize) -> [usize; 4] {
        let deg = self.degrees();
        let mut rest = part;
        let mut out = [0; 4];
        for i in (0..4).rev() {
            out[i] = rest % deg[i];
            rest /= deg[i];
        }
        out
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{n={}, c={}, h={}, w={}}}", self.sample, self.channel, self.height, self.width)
    }
}

/// Dimensions a layer may be split along.
pub fn parallelizable_dims(kind: &LayerKind, shape: TensorShape) -> Vec<Dim> {
    match kind {
        LayerKind::FullyConnected { .. } | LayerKind::Softmax => vec![Dim::Sample, Dim::Channel],
        LayerKind::Conv2D { .. } | LayerKind::Pool2D { .. } => Dim::ALL.to_vec(),
        LayerKind::Input { .. } | LayerKind::Flatten | LayerKind::Concat { .. } => {
            Dim::ALL.into_iter().filter(|&d| shape.extent(d) > 1).collect()
        }
    }
}

/// Every valid configuration, lexicographic in (sample, channel, height,
/// width) degrees. Always starts with the all-ones configuration.
pub fn enumerate_configs(kind: &LayerKind, shape: TensorShape, device_count: usize) -> Vec<Config> {
    let dims = parallelizable_dims(kind, shape);
    let choices: Vec<Vec<usize>> = Dim::ALL
        .iter()
        .map(|&d| {
            if dims.contains(&d) {
                (1..=device_count.min(shape.extent(d))).filter(|k| shape.extent(d).is_multiple_of(*k)).collect()
            } else {
                vec![1]
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut current = [1usize; 4];
    fn rec(choices: &[Vec<usize>], depth: usize, budget: usize, current: &mut [usize; 4], out: &mut Vec<Config>) {
        if depth == 4 {
            out.push(Config::from_degrees(*current));
            return;
        }
        for &k in &choices[depth] {
            if k > budget {
                break;
            }
            current[depth] = k;
            rec(choices, depth + 1, budget / k, current, out);
        }
        current[depth] = 1;
    }
    rec(&choices, 0, device_count.max(1), &mut current, &mut out);
    out
}

/// Block `index` of `degree` equal blocks over `[0, extent)`.
pub fn owned_interval(extent: usize, degree: usize, index: usize) -> Interval {
    let block = extent / degree;
    Interval::new(index * block, (index + 1) * block)
}

/// The output block computed by partition `part`.
pub fn owned_region(shape: TensorShape, config: &Config, part: usize) -> Result<Region> {
    let total = config.total_degree();
    if part >= total {
        return Err(Error::PartitionOutOfRange { index: part, total });
    }
    let coords = config.coordinates(part);
    let ext = shape.extents();
    let deg = config.degrees();
    Ok(Region { dims: std::array::from_fn(|i| owned_interval(ext[i], deg[i], coords[i])) })
}

/// Describes the tensor feeding one input slot of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputSlot {
    pub shape: TensorShape,
    /// Position of this input along a concat axis; zero for other layers.
    pub offset: usize,
}

/// Input rows read by a sliding window over output rows `owned`, as disjoint
/// sorted intervals clamped to `[0, extent)`.
pub fn window_rows(owned: Interval, kernel: usize, stride: usize, pad: usize, extent: usize) -> Vec<Interval> {
    if owned.is_empty() {
        return Vec::new();
    }
    let clamp = |lo: i64, hi: i64| -> Option<Interval> {
        let lo = lo.max(0) as usize;
        let hi = hi.min(extent as i64).max(0) as usize;
        (lo < hi).then(|| Interval::new(lo, hi))
    };
    let (k, s, p) = (kernel as i64, stride as i64, pad as i64);
    if stride <= kernel {
        let lo = owned.lo as i64 * s - p;
        let hi = (owned.hi as i64 - 1) * s - p + k;
        return clamp(lo, hi).into_iter().collect();
    }
    (owned.lo..owned.hi)
        .filter_map(|y| {
            let start = y as i64 * s - p;
            clamp(start, start + k)
        })
        .collect()
}

/// Input intervals along `dim` needed by an output block, or `None` when the
/// layer's dependency is not separable per dimension (flatten).
pub fn required_dim(kind: &LayerKind, dim: Dim, owned: Interval, input: &InputSlot) -> Option<Vec<Interval>> {
    let extent = input.shape.extent(dim);
    let full = || vec![Interval::new(0, extent)];
    let same = || if owned.is_empty() { vec![] } else { vec![owned] };
    let spatial = |kernel: (usize, usize), stride: (usize, usize), pad: (usize, usize)| match dim {
        Dim::Height => window_rows(owned, kernel.0, stride.0, pad.0, extent),
        _ => window_rows(owned, kernel.1, stride.1, pad.1, extent),
    };
    Some(match *kind {
        LayerKind::Input { .. } => Vec::new(),
        LayerKind::Conv2D { kernel, stride, padding, .. } => match dim {
            Dim::Sample => same(),
            Dim::Channel => full(),
            Dim::Height | Dim::Width => spatial(kernel, stride, padding),
        },
        LayerKind::Pool2D { kernel, stride, padding } => match dim {
            Dim::Sample | Dim::Channel => same(),
            Dim::Height | Dim::Width => spatial(kernel, stride, padding),
        },
        LayerKind::FullyConnected { .. } => match dim {
            Dim::Sample => same(),
            _ => full(),
        },
        LayerKind::Softmax => same(),
        LayerKind::Concat { axis } if axis == dim => {
            let lo = owned.lo.max(input.offset);
            let hi = owned.hi.min(input.offset + extent);
            if lo < hi {
                vec![Interval::new(lo - input.offset, hi - input.offset)]
            } else {
                vec![]
            }
        }
        LayerKind::Concat { .. } => same(),
        LayerKind::Flatten => match dim {
            Dim::Sample => same(),
            _ => return None,
        },
    })
}

/// Splits the row-major flat range `[lo, hi)` over `extents` into disjoint
/// boxes, one interval per extent.
fn flat_range_boxes(lo: usize, hi: usize, extents: &[usize]) -> Vec<Vec<Interval>> {
    if lo >= hi {
        return Vec::new();
    }
    if extents.len() == 1 {
        return vec![vec![Interval::new(lo, hi)]];
    }
    let rest = &extents[1..];
    let inner: usize = rest.iter().product();
    let prefixed = |outer: Interval, tails: Vec<Vec<Interval>>| {
        tails.into_iter().map(move |mut t| {
            t.insert(0, outer);
            t
        })
    };
    let first = lo / inner;
    let last = (hi - 1) / inner;
    if first == last {
        return prefixed(
            Interval::new(first, first + 1),
            flat_range_boxes(lo - first * inner, hi - first * inner, rest),
        )
        .collect();
    }
    let mut out = Vec::new();
    let mut start = first;
    if !lo.is_multiple_of(inner) {
        out.extend(prefixed(Interval::new(first, first + 1), flat_range_boxes(lo % inner, inner, rest)));
        start += 1;
    }
    let end = if !hi.is_multiple_of(inner) { last } else { last + 1 };
    if start < end {
        out.push(std::iter::once(Interval::new(start, end)).chain(rest.iter().map(|&e| Interval::new(0, e))).collect());
    }
    if !hi.is_multiple_of(inner) {
        out.extend(prefixed(Interval::new(last, last + 1), flat_range_boxes(0, hi % inner, rest)));
    }
    out
}

/// Input elements partition `part` of a layer reads from one of its inputs.
///
/// Convolution and pooling windows are clamped to the input (padding reads
/// nothing); convolution and fully-connected partitions read every input
/// channel.
pub fn required_input_region(
    kind: &LayerKind,
    out_shape: TensorShape,
    config: &Config,
    part: usize,
    input: &InputSlot,
) -> Result<Footprint> {
    let owned = owned_region(out_shape, config, part)?;
    let per_dim: Option<Vec<Vec<Interval>>> =
        Dim::ALL.iter().map(|&d| required_dim(kind, d, owned.dim(d), input)).collect();
    let boxes = match per_dim {
        Some(sets) => {
            let mut boxes = Vec::new();
            for &a in &sets[0] {
                for &b in &sets[1] {
                    for &c in &sets[2] {
                        for &d in &sets[3] {
                            boxes.push(Region::new([a, b, c, d]));
                        }
                    }
                }
            }
            boxes
        }
        None => {
            // flatten: output channel j maps to input (c, h, w) in row-major order
            let samples = owned.dim(Dim::Sample);
            let ch = owned.dim(Dim::Channel);
            let s = input.shape;
            flat_range_boxes(ch.lo, ch.hi, &[s.channel, s.height, s.width])
                .into_iter()
                .map(|b| Region::new([samples, b[0], b[1], b[2]]))
                .collect()
        }
    };
    Ok(Footprint { boxes: boxes.into_iter().filter(|b| !b.is_empty()).collect() })
}

/// Device assignment for each partition of a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    devices: Vec<usize>,
}

impl Placement {
    /// Explicit mapping; must be injective.
    pub fn from_devices(devices: Vec<usize>) -> Self {
        debug_assert!({
            let mut d = devices.clone();
            d.sort_unstable();
            d.windows(2).all(|w| w[0] != w[1])
        });
        Placement { devices }
    }

    pub fn device(&self, part: usize) -> usize {
        self.devices[part]
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn devices(&self) -> &[usize] {
        &self.devices
    }
}

/// Canonical placement: partition `i` on device `i`.
pub fn place(config: &Config, devices: &DeviceGraph) -> Result<Placement> {
    let needed = config.total_degree();
    if needed > devices.len() {
        return Err(Error::TooFewDevices { needed, available: devices.len() });
    }
    Ok(Placement { devices: (0..needed).collect() })
}
