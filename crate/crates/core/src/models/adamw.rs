use ndarray::{Array1, Array2};

use super::{Dense, Gradients, MlpModel};

/// AdamW hyper-parameters (decoupled weight decay).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    /// Task classifier defaults.
    pub fn main() -> Self {
        AdamWConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }

    /// Discriminator defaults.
    pub fn binary() -> Self {
        AdamWConfig {
            learning_rate: 5e-5,
            ..Self::main()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    config: AdamWConfig,
    first: Vec<Dense>,
    second: Vec<Dense>,
    step: u64,
}

fn zeros_like(model: &MlpModel) -> Vec<Dense> {
    model
        .layers()
        .iter()
        .map(|l| Dense {
            weight: Array2::zeros(l.weight.raw_dim()),
            bias: Array1::zeros(l.bias.raw_dim()),
        })
        .collect()
}

impl AdamWState {
    pub fn new(config: AdamWConfig, model: &MlpModel) -> Self {
        AdamWState {
            config,
            first: zeros_like(model),
            second: zeros_like(model),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Dense] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Dense] {
        &self.second
    }

    /// Zeroes both accumulators and the step counter, reshaped for `model`.
    pub fn reset(&mut self, model: &MlpModel) {
        self.first = zeros_like(model);
        self.second = zeros_like(model);
        self.step = 0;
    }

    /// One AdamW update:
    /// `p <- p - lr*wd*p`, then `p <- p - lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        assert_eq!(grads.layers.len(), self.first.len(), "gradient layer count");
        self.step += 1;
        let AdamWConfig {
            learning_rate: lr,
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;

        // m_hat / (sqrt(v_hat) + eps) rewritten with the bias corrections
        // folded into two scalars.
        let step_size = lr / bias1;
        let inv_sqrt_bias2 = 1.0 / bias2.sqrt();
        let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *p *= decay;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= step_size * *m / (v.sqrt() * inv_sqrt_bias2 + epsilon);
            }
        };

        for (((layer, m), v), g) in model
            .layers_mut()
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
            .zip(grads.layers.iter())
        {
            update(
                slice_mut(&mut layer.weight),
                slice_mut(&mut m.weight),
                slice_mut(&mut v.weight),
                g.weight.as_slice().expect("standard layout"),
            );
            update(
                layer.bias.as_slice_mut().expect("contiguous"),
                m.bias.as_slice_mut().expect("contiguous"),
                v.bias.as_slice_mut().expect("contiguous"),
                g.bias.as_slice().expect("contiguous"),
            );
        }
    }
}

fn slice_mut(a: &mut ndarray::Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}
