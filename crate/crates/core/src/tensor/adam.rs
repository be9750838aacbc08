use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named trainable tensors plus Adam moment estimates.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    index: HashMap<String, usize>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, t: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Parameter(format!("duplicate parameter `{}`", name)));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.m.push(vec![0.0; t.numel()]);
        self.v.push(vec![0.0; t.numel()]);
        self.tensors.push(t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.tensors[i])
            .ok_or_else(|| Error::Parameter(format!("unknown parameter `{}`", name)))
    }

    pub fn set(&mut self, name: &str, t: Tensor) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::Parameter(format!("unknown parameter `{}`", name)))?;
        if self.tensors[i].shape != t.shape {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for `{}`: {:?} vs {:?}",
                name, self.tensors[i].shape, t.shape
            )));
        }
        self.tensors[i] = t;
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.names.iter().zip(self.tensors.iter())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// One Adam update over the supplied per-parameter gradients. Parameters
    /// without an entry keep their value (their moments are not advanced
    /// either, matching a zero-gradient no-op only when the entry is an
    /// explicit all-zero vector).
    pub fn adam_step(&mut self, grads: &HashMap<String, Vec<f64>>, cfg: &AdamConfig) -> Result<()> {
        for (name, g) in grads {
            if !self.index.contains_key(name) {
                return Err(Error::Parameter(format!("gradient for unknown `{}`", name)));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient for tensor `{}`",
                    name
                )));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for (name, g) in grads {
            let i = self.index[name];
            if g.len() != self.tensors[i].numel() {
                return Err(Error::Dimension(format!(
                    "gradient size for `{}`: {} vs {}",
                    name,
                    g.len(),
                    self.tensors[i].numel()
                )));
            }
            for j in 0..g.len() {
                let m = &mut self.m[i][j];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g[j];
                let v = &mut self.v[i][j];
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g[j] * g[j];
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                self.tensors[i].data[j] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
