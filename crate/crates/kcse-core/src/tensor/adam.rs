//! Bias-corrected Adam (Kingma & Ba).

use std::collections::BTreeMap;

use super::{Matrix, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Standard moments (0.9, 0.999, 1e-8); the learning rate is the only
    /// per-module choice.
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moment estimates plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    t: u64,
    first: BTreeMap<String, Matrix>,
    second: BTreeMap<String, Matrix>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig) -> Self {
        AdamState {
            cfg,
            t: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one update from the gradients accumulated in `store`, then
    /// clear them. Parameters without a gradient this step keep their
    /// moments untouched.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let bc1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        let grads = std::mem::take(store.grads_mut());
        for (name, grad) in &grads {
            let param = store
                .get_mut(name)
                .expect("gradient for unknown parameter");
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(grad.rows(), grad.cols()));
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(grad.rows(), grad.cols()));
            for k in 0..grad.len() {
                let g = grad.data()[k];
                let mk = self.cfg.beta1 * m.data()[k] + (1.0 - self.cfg.beta1) * g;
                let vk = self.cfg.beta2 * v.data()[k] + (1.0 - self.cfg.beta2) * g * g;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let m_hat = mk / bc1;
                let v_hat = vk / bc2;
                param.data_mut()[k] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", Matrix::scalar(v));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = scalar_store(1.25);
        store.accumulate_grad("p", &Matrix::scalar(0.0));
        let mut adam = AdamState::new(AdamConfig::with_lr(1e-3));
        adam.step(&mut store);
        assert_eq!(store.get("p").unwrap().data()[0], 1.25);
        assert_eq!(adam.step_count(), 1);
    }

    /// First step with grad 1: bias-corrected m_hat = v_hat = 1, so the
    /// update is exactly lr/(1 + eps).
    #[test]
    fn first_step_matches_hand_computation() {
        let mut store = scalar_store(0.0);
        store.accumulate_grad("p", &Matrix::scalar(1.0));
        let mut adam = AdamState::new(AdamConfig::with_lr(1e-3));
        adam.step(&mut store);
        let p = store.get("p").unwrap().data()[0];
        assert!((p - (-1e-3)).abs() < 1e-9, "p = {p}");
    }

    #[test]
    fn constant_gradient_decreases_parameter_monotonically() {
        let mut store = scalar_store(0.0);
        let mut adam = AdamState::new(AdamConfig::with_lr(1e-3));
        let mut prev = 0.0;
        for _ in 0..2 {
            store.accumulate_grad("p", &Matrix::scalar(1.0));
            adam.step(&mut store);
            let p = store.get("p").unwrap().data()[0];
            assert!(p < prev, "{p} not below {prev}");
            prev = p;
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut store = scalar_store(0.7);
        store.accumulate_grad("p", &Matrix::scalar(123.0));
        let mut adam = AdamState::new(AdamConfig::with_lr(0.0));
        adam.step(&mut store);
        assert_eq!(store.get("p").unwrap().data()[0], 0.7);
    }

    #[test]
    fn step_clears_gradients() {
        let mut store = scalar_store(0.0);
        store.accumulate_grad("p", &Matrix::scalar(1.0));
        let mut adam = AdamState::new(AdamConfig::with_lr(1e-3));
        adam.step(&mut store);
        assert!(store.grad("p").is_none());
    }
}
