//! Builtin benchmark networks.
//!
//! Layer counts follow the usual convention of counting convolution, pooling
//! and fully-connected layers; the data input is an extra node.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{ComputationGraph, Dim, GraphBuilder, LayerKind};

/// Modules in the default `inception_chain`, enough for 100+ layers.
pub const DEFAULT_INCEPTION_MODULES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    LeNet5,
    AlexNet,
    Vgg16,
    /// `k` Inception modules in series.
    InceptionChain(usize),
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Model> {
        let name = s.trim().to_ascii_lowercase();
        match name.as_str() {
            "lenet5" | "lenet-5" => return Ok(Model::LeNet5),
            "alexnet" => return Ok(Model::AlexNet),
            "vgg16" | "vgg-16" => return Ok(Model::Vgg16),
            "inception_chain" => return Ok(Model::InceptionChain(DEFAULT_INCEPTION_MODULES)),
            _ => {}
        }
        let k = name
            .strip_prefix("inception_chain")
            .and_then(|rest| {
                rest.strip_prefix(':').or_else(|| rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')))
            })
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1);
        k.map(Model::InceptionChain).ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::LeNet5 => f.write_str("lenet5"),
            Model::AlexNet => f.write_str("alexnet"),
            Model::Vgg16 => f.write_str("vgg16"),
            Model::InceptionChain(k) => write!(f, "inception_chain:{k}"),
        }
    }
}

fn conv(out: usize, k: usize, s: usize, p: usize) -> LayerKind {
    LayerKind::Conv2D { out_channels: out, kernel: (k, k), stride: (s, s), padding: (p, p) }
}

fn pool(k: usize, s: usize, p: usize) -> LayerKind {
    LayerKind::Pool2D { kernel: (k, k), stride: (s, s), padding: (p, p) }
}

fn fc(out: usize) -> LayerKind {
    LayerKind::FullyConnected { out_channels: out }
}

/// Appends `layers` as a chain after `prev`, returning the last id.
fn chain(b: &mut GraphBuilder, mut prev: String, layers: &[(&str, LayerKind)]) -> String {
    for (id, kind) in layers {
        b.push(id.to_string(), *kind, vec![prev]);
        prev = id.to_string();
    }
    prev
}

pub fn builtin_model(model: Model, batch: usize) -> Result<ComputationGraph> {
    let mut b = GraphBuilder::new(batch);
    match model {
        Model::LeNet5 => {
            b.input("data", 1, 32, 32);
            chain(
                &mut b,
                "data".into(),
                &[
                    ("conv1", conv(20, 5, 1, 0)),
                    ("pool1", pool(2, 2, 0)),
                    ("conv2", conv(50, 5, 1, 0)),
                    ("pool2", pool(2, 2, 0)),
                    ("fc1", fc(500)),
                    ("fc2", fc(10)),
                ],
            );
        }
        Model::AlexNet => {
            b.input("data", 3, 224, 224);
            chain(
                &mut b,
                "data".into(),
                &[
                    ("conv1", conv(96, 11, 4, 2)),
                    ("pool1", pool(3, 2, 0)),
                    ("conv2", conv(256, 5, 1, 2)),
                    ("pool2", pool(3, 2, 0)),
                    ("conv3", conv(384, 3, 1, 1)),
                    ("conv4", conv(384, 3, 1, 1)),
                    ("conv5", conv(256, 3, 1, 1)),
                    ("pool5", pool(3, 2, 0)),
                    ("fc6", fc(4096)),
                    ("fc7", fc(4096)),
                    ("fc8", fc(1000)),
                ],
            );
        }
        Model::Vgg16 => {
            b.input("data", 3, 224, 224);
            let blocks: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
            let mut prev = "data".to_string();
            for (i, &(convs, channels)) in blocks.iter().enumerate() {
                for j in 0..convs {
                    let id = format!("conv{}_{}", i + 1, j + 1);
                    b.push(id.clone(), conv(channels, 3, 1, 1), vec![prev]);
                    prev = id;
                }
                let id = format!("pool{}", i + 1);
                b.push(id.clone(), pool(2, 2, 0), vec![prev]);
                prev = id;
            }
            chain(&mut b, prev, &[("fc6", fc(4096)), ("fc7", fc(4096)), ("fc8", fc(1000))]);
        }
        Model::InceptionChain(k) => {
            if k == 0 {
                return Err(Error::UnknownModel("inception_chain:0".into()));
            }
            b.input("data", 288, 35, 35);
            let mut prev = "data".to_string();
            for m in 1..=k {
                prev = inception_module(&mut b, &prev, m);
            }
        }
    }
    b.build()
}

/// Four branches over a 288x35x35 input, concatenated back to 288 channels:
/// 1x1 | 1x1 -> 5x5 | 1x1 -> 3x3 -> 3x3 | 3x3 avg pool -> 1x1.
fn inception_module(b: &mut GraphBuilder, input: &str, m: usize) -> String {
    let id = |s: &str| format!("m{m}_{s}");
    let x = input.to_string();
    let b1 = chain(b, x.clone(), &[(&id("1x1"), conv(64, 1, 1, 0))]);
    let b2 = chain(b, x.clone(), &[(&id("5x5_reduce"), conv(48, 1, 1, 0)), (&id("5x5"), conv(64, 5, 1, 2))]);
    let b3 = chain(
        b,
        x.clone(),
        &[(&id("3x3_reduce"), conv(64, 1, 1, 0)), (&id("3x3a"), conv(96, 3, 1, 1)), (&id("3x3b"), conv(96, 3, 1, 1))],
    );
    let b4 = chain(b, x, &[(&id("pool"), pool(3, 1, 1)), (&id("pool_proj"), conv(64, 1, 1, 0))]);
    let out = id("concat");
    b.push(out.clone(), LayerKind::Concat { axis: Dim::Channel }, vec![b1, b2, b3, b4]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TensorShape;

    #[test]
    fn layer_counts() {
        assert_eq!(builtin_model(Model::LeNet5, 32).unwrap().layer_count(), 6);
        assert_eq!(builtin_model(Model::AlexNet, 32).unwrap().layer_count(), 11);
        assert_eq!(builtin_model(Model::Vgg16, 32).unwrap().layer_count(), 21);
    }

    #[test]
    fn one_inception_module() {
        let g = builtin_model(Model::InceptionChain(1), 32).unwrap();
        // feeding node + 7 convs + pool + concat
        assert_eq!(g.node_count(), 10);
        assert_eq!(g.layer_count(), 9);
        assert_eq!(g.shape(g.node_count() - 1), TensorShape::new(32, 288, 35, 35));
    }

    #[test]
    fn default_chain_is_large_enough() {
        let g = builtin_model("inception_chain".parse().unwrap(), 32).unwrap();
        assert!(g.node_count() >= 102, "{}", g.node_count());
    }

    #[test]
    fn shapes_of_classic_nets() {
        let vgg = builtin_model(Model::Vgg16, 32).unwrap();
        let pool5 = vgg.index_of("pool5").unwrap();
        assert_eq!(vgg.shape(pool5), TensorShape::new(32, 512, 7, 7));
        let alex = builtin_model(Model::AlexNet, 32).unwrap();
        assert_eq!(alex.shape(alex.index_of("conv1").unwrap()), TensorShape::new(32, 96, 55, 55));
        assert_eq!(alex.shape(alex.index_of("pool5").unwrap()), TensorShape::new(32, 256, 6, 6));
    }

    #[test]
    fn model_names() {
        assert_eq!("inception_chain:3".parse::<Model>().unwrap(), Model::InceptionChain(3));
        assert_eq!("inception_chain(2)".parse::<Model>().unwrap(), Model::InceptionChain(2));
        assert!(matches!("resnet".parse::<Model>(), Err(Error::UnknownModel(_))));
    }
}
