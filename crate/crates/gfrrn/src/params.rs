//! Named, shape-tagged parameter collection with per-parameter trainability
//! flags — the contract the tuning modes operate on.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Which part of the model a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    /// Pre-trained encoder weights.
    Backbone,
    /// Inserted adapter weights.
    Mona,
    /// Everything task-specific (second encoder, decoder, heads).
    Task,
}

/// How the run updates parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMode {
    /// Pre-trained weights fixed, no adapters inserted.
    Frozen,
    /// Full fine-tuning: everything updates.
    Fft,
    /// Adapters inserted; only adapter and task weights update.
    Mona,
}

pub struct ParamEntry {
    pub tensor: Tensor,
    pub group: ParamGroup,
    pub trainable: bool,
}

/// Whether a group's parameters update under a mode. Task parameters are
/// always trainable.
pub fn group_trainable(group: ParamGroup, mode: TuningMode) -> bool {
    match (group, mode) {
        (ParamGroup::Task, _) => true,
        (_, TuningMode::Fft) => true,
        (ParamGroup::Backbone, _) => false,
        (ParamGroup::Mona, TuningMode::Mona) => true,
        (ParamGroup::Mona, TuningMode::Frozen) => false,
    }
}

#[derive(Default)]
pub struct ParamStore {
    entries: IndexMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: String, tensor: Tensor, group: ParamGroup) {
        let prev = self.entries.insert(
            name.clone(),
            ParamEntry {
                tensor,
                group,
                trainable: true,
            },
        );
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) {
        if let Some(e) = self.entries.get_mut(name) {
            e.trainable = trainable;
        }
    }

    /// Set every trainable flag from (group, mode).
    pub fn apply_tuning_mode(&mut self, mode: TuningMode) {
        for entry in self.entries.values_mut() {
            entry.trainable = group_trainable(entry.group, mode);
        }
    }

    pub fn trainable_tensors(&self) -> Vec<Tensor> {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.clone())
            .collect()
    }

    pub fn all_tensors(&self) -> Vec<Tensor> {
        self.entries.values().map(|e| e.tensor.clone()).collect()
    }

    pub fn zero_grads(&self) {
        for e in self.entries.values() {
            e.tensor.zero_grad();
        }
    }

    /// Element counts: (trainable, total).
    pub fn count_elements(&self) -> (usize, usize) {
        let mut trainable = 0;
        let mut total = 0;
        for e in self.entries.values() {
            let n = e.tensor.len();
            total += n;
            if e.trainable {
                trainable += n;
            }
        }
        (trainable, total)
    }

    pub fn count_group_elements(&self, group: ParamGroup) -> usize {
        self.entries
            .values()
            .filter(|e| e.group == group)
            .map(|e| e.tensor.len())
            .sum()
    }

    /// SHA-256 over the exact f64 bytes of every parameter in a group, in
    /// insertion order. Detects any drift of supposedly frozen weights.
    pub fn hash_group(&self, group: ParamGroup) -> String {
        let mut hasher = Sha256::new();
        for (name, e) in &self.entries {
            if e.group != group {
                continue;
            }
            hasher.update(name.as_bytes());
            let v = e.tensor.to_array();
            for &x in v.iter() {
                hasher.update(x.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Derive the trainable subset of a store for a mode. Errors if the store
/// holds adapter parameters in a mode that should not have built them.
pub fn trainable_parameter_filter(
    store: &mut ParamStore,
    mode: TuningMode,
) -> Result<Vec<String>> {
    if mode == TuningMode::Frozen
        && store.iter().any(|(_, e)| e.group == ParamGroup::Mona)
    {
        return Err(Error::Config(
            "frozen mode builds the encoder without adapter layers".into(),
        ));
    }
    store.apply_tuning_mode(mode);
    Ok(store
        .iter()
        .filter(|(_, e)| e.trainable)
        .map(|(n, _)| n.clone())
        .collect())
}
