//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr < 0.0 {
            return Err(Error::config(format!("learning rate {} < 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config(format!(
                "adam betas ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            )));
        }
        if self.eps <= 0.0 {
            return Err(Error::config(format!("adam eps {} must be > 0", self.eps)));
        }
        Ok(())
    }
}

/// First/second moment estimates, one pair per parameter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u32,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> AdamState<T> {
        AdamState {
            m: store
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect(),
            v: store
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u32 {
        self.t
    }
}

/// One update from the gradients currently held in `store`:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
/// `p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)`.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> Result<()> {
    config.validate()?;
    if state.m.len() != store.len() {
        return Err(Error::Internal(format!(
            "adam state tracks {} parameters, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = T::from_f64(config.beta1);
    let b2 = T::from_f64(config.beta2);
    let one_m_b1 = T::from_f64(1.0 - config.beta1);
    let one_m_b2 = T::from_f64(1.0 - config.beta2);
    let bias1 = T::from_f64(1.0 - config.beta1.powi(t));
    let bias2 = T::from_f64(1.0 - config.beta2.powi(t));
    let lr = T::from_f64(config.lr);
    let eps = T::from_f64(config.eps);

    for (i, p) in store.params_mut().iter_mut().enumerate() {
        if p.grad.shape() != p.value.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("{}: grad {:?} vs value {:?}", p.name, p.grad.shape(), p.value.shape()),
            ));
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let val = p.value.data_mut();
        for (((m, v), x), &g) in m.iter_mut().zip(v.iter_mut()).zip(val.iter_mut()).zip(p.grad.data()) {
            *m = b1 * *m + one_m_b1 * g;
            *v = b2 * *v + one_m_b2 * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.value.ensure_finite("adam_step")?;
    }
    Ok(())
}
