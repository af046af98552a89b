//! Named parameter storage shared by models, the optimizer, and the
//! checkpoint format.

use super::{Tape, Tensor, Var};

/// Index of a parameter in its store. Stable for the life of the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    /// Trainable entries receive gradients and Adam updates; the rest is
    /// persistent state (e.g. batchnorm running statistics).
    pub trainable: bool,
}

/// Ordered collection of named tensors. Registration order is the
/// checkpoint order, so runs are bit-reproducible.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.entries.push(ParamEntry {
            name,
            tensor,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn iter_ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.numel())
            .sum()
    }

    /// Copy every entry onto a tape. Trainable entries become
    /// gradient-collecting leaves when `with_grads` is set; everything
    /// else is a constant.
    pub fn bind_all(&self, tape: &mut Tape, with_grads: bool) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|e| tape.leaf(e.tensor.clone(), with_grads && e.trainable))
            .collect();
        Bound { vars }
    }

    /// Overwrite values from another store with matching names/shapes.
    /// Entries missing on either side are left alone. Returns the number
    /// of entries copied.
    pub fn load_matching(&mut self, other: &ParamStore) -> usize {
        let mut copied = 0;
        for e in &mut self.entries {
            if let Some(oid) = other.find(&e.name) {
                let src = other.get(oid);
                if src.shape == e.tensor.shape {
                    e.tensor = src.clone();
                    copied += 1;
                }
            }
        }
        copied
    }
}

/// Tape handles for every parameter of a store, indexed by [`ParamId`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gather (id, gradient) pairs for all bound parameters that received
    /// gradients in the last backward pass.
    pub fn collect_grads(&self, tape: &Tape, store: &ParamStore) -> Vec<(ParamId, Vec<f64>)> {
        store
            .iter_ids()
            .filter(|id| store.entry(*id).trainable)
            .filter_map(|id| tape.grad(self.vars[id.0]).map(|g| (id, g.to_vec())))
            .collect()
    }
}
