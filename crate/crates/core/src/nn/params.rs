use serde::{Deserialize, Serialize};

use super::{Gradients, Tensor};
use crate::error::{LensError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameter tensors together with their Adam state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    adam: AdamConfig,
}

impl ParamSet {
    pub fn new(adam: AdamConfig) -> Self {
        ParamSet {
            names: Vec::new(),
            values: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
            adam,
        }
    }

    /// Checks that names, values and moments line up, e.g. after loading.
    pub fn check_consistent(&self) -> Result<()> {
        let n = self.values.len();
        if self.names.len() != n || self.m.len() != n || self.v.len() != n {
            return Err(LensError::Data(format!(
                "parameter set has {} names, {} values, {} first and {} second moments",
                self.names.len(),
                n,
                self.m.len(),
                self.v.len()
            )));
        }
        for i in 0..n {
            let shape = self.values[i].shape();
            if self.m[i].shape() != shape || self.v[i].shape() != shape {
                return Err(LensError::Data(format!(
                    "moment shapes of {} differ from {:?}",
                    self.names[i], shape
                )));
            }
        }
        Ok(())
    }

    /// Registers a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.m.push(Tensor::zeros(value.shape()));
        self.v.push(Tensor::zeros(value.shape()));
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, index: usize) -> &Tensor {
        &self.values[index]
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.values[index]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Tensor::is_finite)
    }

    /// `name=norm` pairs, for diagnostics.
    pub fn norm_report(&self) -> String {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| format!("{n}={:.4e}", v.norm()))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// One bias-corrected Adam update over every parameter.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        self.adam_step_with(grads.params(), lr)
    }

    pub fn adam_step_with(&mut self, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != self.values.len() {
            return Err(LensError::dim(
                "adam_step",
                &[self.values.len()],
                &[grads.len()],
            ));
        }
        for (value, grad) in self.values.iter().zip(grads) {
            if value.shape() != grad.shape() {
                return Err(LensError::dim("adam_step", value.shape(), grad.shape()));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.adam;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((value, grad), (m, v)) in self
            .values
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, (w, &g)) in value.data_mut().iter_mut().zip(grad.data()).enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
