use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Array;

/// Named trainable tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array>,
}

impl ParamStore {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalars.
    pub fn size(&self) -> usize {
        self.values.iter().map(Array::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub(crate) fn push(&mut self, name: String, value: Array) -> usize {
        self.names.push(name);
        self.values.push(value);
        self.values.len() - 1
    }

    pub(crate) fn from_parts(names: Vec<String>, values: Vec<Array>) -> Self {
        Self { names, values }
    }
}

/// Draws initial values in registration order from one seeded stream.
pub(crate) struct Initializer {
    rng: ChaCha8Rng,
    pub store: ParamStore,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            store: ParamStore::default(),
        }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, name: String, shape: Vec<usize>, bound: f64) -> usize {
        let len = shape.iter().product();
        let data = (0..len).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.store.push(name, Array::new(shape, data).expect("param shape"))
    }

    /// Weight `[fan_in, fan_out]` scaled by `1 / sqrt(fan_in)`.
    pub fn weight(&mut self, name: String, fan_in: usize, fan_out: usize) -> usize {
        self.uniform(name, vec![fan_in, fan_out], 1.0 / (fan_in as f64).sqrt())
    }

    pub fn zeros(&mut self, name: String, shape: Vec<usize>) -> usize {
        self.store.push(name, Array::zeros(shape))
    }
}
