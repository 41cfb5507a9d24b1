use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, TensorError};
use crate::{ParamStore, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TensorError::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step_count: u64,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[&Tensor<T>]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step_count: 0,
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        })
    }

    pub fn for_store(config: AdamConfig, store: &ParamStore<T>) -> Result<Self> {
        let values: Vec<_> = store.iter().map(|p| &p.value).collect();
        Self::new(config, &values)
    }

    /// One in-place update of `params` from `grads`.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return shape_err(format!(
                "adam: {} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                self.first_moment.len()
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return shape_err(format!(
                    "adam: param {:?} / grad {:?} / moment {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                ));
            }
        }
        self.step_count += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step_count as i32;
        let c1 = T::lit(1.0 / (1.0 - beta1.powi(t)));
        let c2 = T::lit(1.0 / (1.0 - beta2.powi(t)));
        let (b1, b2, lr, eps) = (T::lit(beta1), T::lit(beta2), T::lit(learning_rate), T::lit(epsilon));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (j, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = b1 * m[j] + one_b1 * gv;
                v[j] = b2 * v[j] + one_b2 * gv * gv;
                let mhat = m[j] * c1;
                let vhat = v[j] * c2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Update every parameter of `store` from its accumulated gradient.
    pub fn step_store(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        let (mut values, grads): (Vec<_>, Vec<_>) = store
            .iter_mut()
            .map(|p| (&mut p.value, &p.grad))
            .unzip();
        let grads: Vec<&Tensor<T>> = grads;
        self.step(&mut values, &grads)
    }
}
