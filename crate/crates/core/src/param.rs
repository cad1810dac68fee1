//! Named parameters and running-stat buffers for a model.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ops::RunningStats;
use crate::rng::StreamRng;
use crate::tensor::{Scalar, Tensor};

/// One learnable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Parameters plus non-learnable running statistics, addressed by
/// dot-separated names unique within a model.
#[derive(Debug, Clone)]
pub struct ParamStore<T: Scalar> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, usize>,
    buffers: Vec<(String, RunningStats<T>)>,
    buffer_by_name: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
            buffers: Vec::new(),
            buffer_by_name: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, value: Tensor<T>) -> Result<usize> {
        if self.by_name.contains_key(name) {
            return Err(Error::Internal(format!("duplicate parameter name {name}")));
        }
        let grad = Tensor::zeros(value.shape());
        let idx = self.params.len();
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad,
        });
        self.by_name.insert(name.to_string(), idx);
        Ok(idx)
    }

    pub fn register_buffer(&mut self, name: &str, channels: usize) -> Result<usize> {
        if self.buffer_by_name.contains_key(name) {
            return Err(Error::Internal(format!("duplicate buffer name {name}")));
        }
        let idx = self.buffers.len();
        self.buffers.push((name.to_string(), RunningStats::new(channels)));
        self.buffer_by_name.insert(name.to_string(), idx);
        Ok(idx)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Internal(format!("unknown parameter {name}")))
    }

    pub fn buffer_index_of(&self, name: &str) -> Result<usize> {
        self.buffer_by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Internal(format!("unknown buffer {name}")))
    }

    pub fn get(&self, idx: usize) -> &Parameter<T> {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Parameter<T> {
        &mut self.params[idx]
    }

    pub fn by_name(&self, name: &str) -> Result<&Parameter<T>> {
        Ok(&self.params[self.index_of(name)?])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Result<&mut Parameter<T>> {
        let idx = self.index_of(name)?;
        Ok(&mut self.params[idx])
    }

    pub fn buffer(&self, idx: usize) -> &(String, RunningStats<T>) {
        &self.buffers[idx]
    }

    pub fn buffer_mut(&mut self, idx: usize) -> &mut RunningStats<T> {
        &mut self.buffers[idx].1
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[(String, RunningStats<T>)] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [(String, RunningStats<T>)] {
        &mut self.buffers
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of learnable scalars (running statistics excluded).
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::ZERO);
        }
    }
}

/// Bind a stored parameter as a graph leaf.
pub fn bind<T: Scalar>(
    g: &mut crate::graph::Graph<T>,
    store: &ParamStore<T>,
    name: &str,
) -> Result<crate::graph::NodeId> {
    let idx = store.index_of(name)?;
    g.param(idx, store.get(idx).value.clone())
}

/// Kaiming-uniform fan-in init for a conv/linear weight: `U(-b, b)` with
/// `b = sqrt(6 / fan_in)`. Draws come from the stream `init/<name>` of the
/// model seed, so each parameter's init is independent of registration order.
pub fn kaiming_uniform<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    name: &str,
    root: &StreamRng,
) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut rng = root.stream(&format!("init/{name}"));
    Tensor::from_fn(shape, |_| T::from_f64(rng.uniform_in(-bound, bound)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.register("a.weight", Tensor::zeros(&[2])).unwrap();
        assert!(store.register("a.weight", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn init_is_order_independent() {
        let root = StreamRng::from_seed(7);
        let a: Tensor<f32> = kaiming_uniform(&[4, 3], 3, "x.weight", &root);
        let _unrelated: Tensor<f32> = kaiming_uniform(&[8], 8, "y.weight", &root);
        let b: Tensor<f32> = kaiming_uniform(&[4, 3], 3, "x.weight", &root);
        assert_eq!(a, b);
    }

    #[test]
    fn kaiming_bound_respected() {
        let root = StreamRng::from_seed(1);
        let t: Tensor<f64> = kaiming_uniform(&[100], 6, "w", &root);
        let bound = (6.0f64 / 6.0).sqrt();
        assert!(t.data().iter().all(|&v| v.abs() <= bound));
    }
}
