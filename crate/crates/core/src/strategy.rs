use crate::config::Config;
use crate::cost::CostTables;
use crate::error::{Error, Result};
use crate::graph::ComputationGraph;
use crate::scalar::Cost;

/// One configuration per layer, stored as an index into that layer's
/// configuration catalog.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Strategy {
    choices: Vec<usize>,
}

impl Strategy {
    pub fn new(choices: Vec<usize>) -> Self {
        Strategy { choices }
    }

    /// Catalog index 0, which is the all-ones configuration, for every layer.
    pub fn all_first(layers: usize) -> Self {
        Strategy { choices: vec![0; layers] }
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn choice(&self, layer: usize) -> usize {
        self.choices[layer]
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    /// Resolves indices to configurations; `None` for synthetic tables.
    pub fn configs<T: Cost>(&self, tables: &CostTables<T>) -> Option<Vec<Config>> {
        let cats = tables.catalogs()?;
        Some(self.choices.iter().zip(cats).map(|(&c, cat)| cat[c]).collect())
    }

    /// Builds a strategy from `(layer id, config)` pairs. Every layer must be
    /// named exactly once with a config from its catalog.
    pub fn from_configs<'a, T: Cost>(
        graph: &ComputationGraph,
        tables: &CostTables<T>,
        entries: impl IntoIterator<Item = (&'a str, Config)>,
    ) -> Result<Self> {
        let mut choices: Vec<Option<usize>> = vec![None; graph.node_count()];
        for (id, config) in entries {
            let layer = graph.index_of(id).ok_or_else(|| Error::UnknownLayer(id.to_string()))?;
            choices[layer] = Some(tables.config_index(graph, layer, &config)?);
        }
        let choices = choices
            .into_iter()
            .enumerate()
            .map(|(l, c)| c.ok_or_else(|| Error::MissingLayer(graph.layer(l).id.clone())))
            .collect::<Result<_>>()?;
        Ok(Strategy { choices })
    }
}
