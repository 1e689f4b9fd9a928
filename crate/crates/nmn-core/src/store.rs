//! Flat named parameter storage for one network.
//!
//! Parameters are dense `f64` arrays kept in insertion order, so flattening
//! a store (or zipping it with a gradient set) is reproducible. Each entry
//! lazily grows a pair of Adam moment arrays of the same shape.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AdamMoments {
    /// First moment (gradient average), `z` in the update equations.
    pub z: Vec<f64>,
    /// Second moment (squared-gradient average).
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ParamEntry {
    pub name: String,
    /// `[rows, cols]` for matrices (row-major), `[len]` for vectors.
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub moments: Option<AdamMoments>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of all trainable arrays of one network.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct ParameterStore {
    entries: Vec<ParamEntry>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new entry and returns its slot.
    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::State(format!("duplicate parameter name: {name}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dimension(format!("parameter {name}"), expected, data.len()));
        }
        let slot = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape,
            data,
            moments: None,
        });
        self.index.insert(name.to_string(), slot);
        Ok(slot)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn entry(&self, slot: usize) -> &ParamEntry {
        &self.entries[slot]
    }

    pub fn entry_mut(&mut self, slot: usize) -> &mut ParamEntry {
        &mut self.entries[slot]
    }

    pub fn by_name(&self, name: &str) -> Result<&ParamEntry> {
        self.slot(name)
            .map(|s| &self.entries[s])
            .ok_or_else(|| Error::State(format!("unknown parameter: {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Rebuilds the name index after deserialisation.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), i))
            .collect();
    }

    /// True when no entry name is shared with `other`.
    pub fn is_disjoint_from(&self, other: &ParameterStore) -> bool {
        self.entries.iter().all(|e| other.slot(&e.name).is_none())
    }
}

/// Gradient arrays aligned slot-by-slot with a [`ParameterStore`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub by_slot: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParameterStore) -> Self {
        Gradients {
            by_slot: store.iter().map(|e| vec![0.0; e.len()]).collect(),
        }
    }

    pub fn slot(&self, slot: usize) -> &[f64] {
        &self.by_slot[slot]
    }
}
