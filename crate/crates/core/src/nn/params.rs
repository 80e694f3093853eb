use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    /// Position in registration order.
    pub fn index(self) -> usize {
        self.0
    }

    pub fn from_index(i: usize) -> Self {
        ParamId(i)
    }
}

/// Named trainable tensors, kept in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    entries: Vec<(String, Arc<Tensor<T>>)>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId, TensorError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Usage(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, Arc::new(value)));
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t.as_ref()))
    }

    /// Replaces a parameter value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<(), TensorError> {
        let slot = &mut self.entries[id.0].1;
        if slot.shape() != value.shape() {
            return Err(TensorError::shape("set_param", slot.shape(), value.shape()));
        }
        *slot = Arc::new(value);
        Ok(())
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.entries[id.0].1)
    }

    pub fn zero_all(&mut self) {
        for (_, t) in &mut self.entries {
            Arc::make_mut(t).data_mut().fill(T::zero());
        }
    }

    /// Zeroes every parameter whose name starts with `prefix`.
    pub fn zero_prefix(&mut self, prefix: &str) -> usize {
        let mut n = 0;
        for (name, t) in &mut self.entries {
            if name.starts_with(prefix) {
                Arc::make_mut(t).data_mut().fill(T::zero());
                n += 1;
            }
        }
        n
    }

    /// Records every parameter as a trainable leaf of `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph<T>) -> Binding<'g, T> {
        Binding {
            vars: self
                .entries
                .iter()
                .map(|(_, t)| graph.leaf_shared(Arc::clone(t)))
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Arc::new(t.cast())))
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// The parameters of a store as leaves of one graph.
pub struct Binding<'g, T> {
    vars: Vec<Var<'g, T>>,
}

impl<'g, T: Scalar> Binding<'g, T> {
    pub fn var(&self, id: ParamId) -> Var<'g, T> {
        self.vars[id.0]
    }

    /// Gradients in store order; parameters the sink never reached get zeros.
    pub fn grads(&self) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect()
    }
}

/// Registers parameters under a dotted name prefix, drawing initial values
/// from a seeded stream.
pub struct ParamBuilder<'a, T> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, T: Scalar> ParamBuilder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut ChaCha8Rng) -> Self {
        ParamBuilder {
            store,
            rng,
            prefix: String::new(),
        }
    }

    /// Builder for a nested scope `prefix.name`.
    pub fn scope(&mut self, name: &str) -> ParamBuilder<'_, T> {
        let prefix = self.qualify(name);
        ParamBuilder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    fn qualify(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    /// uniform(−k, k) with k = 1/√fan_in.
    pub fn uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> ParamId {
        let k = 1.0 / (fan_in as f64).sqrt();
        let t = Tensor::from_fn(shape, |_| T::of(self.rng.gen_range(-k..k)));
        self.add(name, t)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.add(name, Tensor::full(shape, T::of(value)))
    }

    fn add(&mut self, name: &str, t: Tensor<T>) -> ParamId {
        let full = self.qualify(name);
        self.store
            .register(full, t)
            .expect("layer parameter names are unique within a scope")
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
