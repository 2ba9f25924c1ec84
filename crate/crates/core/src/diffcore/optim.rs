use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay.
///
/// Moments are keyed by parameter position in the store and created lazily,
/// so parameters registered after construction are picked up on their first
/// step.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Option<Tensor>>,
    second: Vec<Option<Tensor>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, index: usize) -> Option<(&Tensor, &Tensor)> {
        match (self.first.get(index)?, self.second.get(index)?) {
            (Some(m), Some(v)) => Some((m, v)),
            _ => None,
        }
    }

    /// Applies one update to every trainable parameter holding a gradient,
    /// then zeroes all gradients.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        if self.first.len() < store.len() {
            self.first.resize(store.len(), None);
            self.second.resize(store.len(), None);
        }
        for (i, p) in store.iter_mut().enumerate() {
            let Some(grad) = p.grad.take() else { continue };
            if !p.trainable {
                continue;
            }
            let m = self.first[i].get_or_insert_with(|| Tensor::zeros(grad.shape()));
            let v = self.second[i].get_or_insert_with(|| Tensor::zeros(grad.shape()));
            let values = p.value.data_mut();
            for k in 0..values.len() {
                let g = grad.data()[k];
                let mk = c.beta1 * m.data()[k] + (1.0 - c.beta1) * g;
                let vk = c.beta2 * v.data()[k] + (1.0 - c.beta2) * g * g;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let update = (mk / bias1) / ((vk / bias2).sqrt() + c.eps);
                values[k] -= c.lr * (update + c.weight_decay * values[k]);
            }
        }
        store.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, grad: f64) -> ParamStore {
        let mut store = ParamStore::new();
        let id = store.insert("w", Tensor::scalar(value)).unwrap();
        store.get_mut(id).grad = Some(Tensor::scalar(grad));
        store
    }

    #[test]
    fn zero_grad_without_decay_leaves_value() {
        let mut store = single(0.7, 0.0);
        let mut adam = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        adam.step(&mut store);
        assert_eq!(store.by_name("w").unwrap().value.item(), 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = single(1.0, 1.0);
        let mut adam = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        adam.step(&mut store);
        let w = store.by_name("w").unwrap();
        // m̂ = 1, v̂ = 1 after bias correction, so the step is lr / (1 + eps).
        assert!((w.value.item() - (1.0 - 0.001 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!(w.grad.is_none());
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        let mut store = single(0.5, 0.2);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg.clone());
        adam.step(&mut store);
        let id = store.id("w").unwrap();
        store.get_mut(id).grad = Some(Tensor::scalar(0.2));
        adam.step(&mut store);
        assert_eq!(adam.steps(), 2);

        let (mut w, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = 0.2;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 1e-3 * (mh / (vh.sqrt() + 1e-8) + 1e-5 * w);
        }
        let (mm, vv) = adam.moments(0).unwrap();
        assert!((mm.item() - m).abs() < 1e-15);
        assert!((vv.item() - v).abs() < 1e-15);
        assert!((store.value(id).item() - w).abs() < 1e-15);
    }
}
