//! Named parameter storage and the AdamW optimizer (decoupled weight decay).

use std::collections::BTreeMap;

use crate::error::{shape_err, Result, TensorError};
use crate::tensor::Tensor;

/// Ordered collection of named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Per-parameter moment buffers plus the step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one AdamW update to every parameter that has a gradient.
    ///
    /// Gradients are validated before anything is mutated, so a rejected
    /// step leaves both parameters and state untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| TensorError::Checkpoint(format!("gradient for unknown parameter `{name}`")))?;
            if p.shape() != g.shape() {
                return shape_err("adamw_step", p.shape(), g.shape());
            }
            if !g.all_finite() {
                return Err(TensorError::NonFiniteGradient { param: name.clone() });
            }
        }

        self.step += 1;
        let AdamWConfig {
            learning_rate: lr,
            weight_decay: wd,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);

        for (name, g) in grads {
            let p = params.get_mut(name).expect("validated above");
            let st = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; g.numel()],
                v: vec![0.0; g.numel()],
            });
            for ((w, &gi), (m, v)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(st.m.iter_mut().zip(st.v.iter_mut()))
            {
                *m = b1 * *m + (1.0 - b1) * gi;
                *v = b2 * *v + (1.0 - b2) * gi * gi;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * wd * *w;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::scalar(value));
        p
    }

    fn grad(value: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("w".to_string(), Tensor::scalar(value))])
    }

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut p = single(0.7);
        let mut st = OptimizerState::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        st.step(&mut p, &grad(0.0)).unwrap();
        assert_eq!(p.get("w").unwrap().item(), 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = single(1.0);
        let mut st = OptimizerState::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        st.step(&mut p, &grad(1.0)).unwrap();
        assert!((p.get("w").unwrap().item() - 0.9999).abs() < 1e-10);
    }

    #[test]
    fn decoupled_decay_only() {
        let mut p = single(1.0);
        let mut st = OptimizerState::new(AdamWConfig::default());
        st.step(&mut p, &grad(0.0)).unwrap();
        assert!((p.get("w").unwrap().item() - 0.99999995).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = single(1.0);
        let mut st = OptimizerState::new(AdamWConfig::default());
        let err = st.step(&mut p, &grad(f64::NAN)).unwrap_err();
        assert_eq!(err, TensorError::NonFiniteGradient { param: "w".into() });
        assert_eq!(st.step_count(), 0);
        assert_eq!(p.get("w").unwrap().item(), 1.0);
    }
}
