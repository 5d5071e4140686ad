use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let (r, c) = value.shape();
        Parameter { grad: Tensor::zeros(r, c), m: Tensor::zeros(r, c), v: Tensor::zeros(r, c), step: 0, value }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let mut t = Tensor::zeros(rows, cols);
        if bound > 0.0 {
            for v in t.data_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Parameter::new(t)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::with_lr(1e-3)
    }
}

/// One bias-corrected Adam update; clears the gradient afterwards.
pub fn adam_step(param: &mut Parameter, cfg: &AdamConfig) {
    param.step += 1;
    let t = param.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let Parameter { value, grad, m, v, .. } = param;
    let it = value.data_mut().iter_mut().zip(grad.data()).zip(m.data_mut().iter_mut().zip(v.data_mut()));
    for ((x, &g), (m, v)) in it {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *x -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
    param.zero_grad();
}

/// Named, ordered collection of parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, p: Parameter) -> usize {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.params.push(p);
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, i: usize) -> &Parameter {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Parameter {
        &mut self.params[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.index_of(name).map(|i| &self.params[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.index_of(name).map(move |i| &mut self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// All parameter values concatenated in store order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn flatten_grads(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.grad.data().iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.scalar_count());
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().map(|p| p.grad.data().iter().map(|g| g * g).sum::<f64>()).sum::<f64>().sqrt()
    }

    /// Scales gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for p in &mut self.params {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= k);
            }
        }
    }

    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.params.iter_mut().for_each(|p| adam_step(p, cfg));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_is_lr_times_sign() {
        let mut p = Parameter::new(Tensor::scalar(1.0));
        p.grad = Tensor::scalar(0.5);
        adam_step(&mut p, &AdamConfig::with_lr(1e-3));
        let delta = 1.0 - p.value[(0, 0)];
        let want = 1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((delta - want).abs() < 1e-15, "{delta} vs {want}");
        assert!((delta - 9.99998e-4).abs() < 1e-8);
        assert_eq!(p.grad[(0, 0)], 0.0);
        assert_eq!(p.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut p = Parameter::new(Tensor::vector(vec![0.3, -0.2]));
        adam_step(&mut p, &AdamConfig::default());
        assert_eq!(p.value.data(), &[0.3, -0.2]);
    }

    #[test]
    fn identical_copies_follow_identical_trajectories() {
        let mut a = Parameter::new(Tensor::vector(vec![0.1, 0.2, 0.3]));
        let mut b = a.clone();
        for k in 0..50 {
            let g = Tensor::vector(vec![(k as f64).sin(), 0.1 * k as f64, -0.5]);
            a.grad = g.clone();
            b.grad = g;
            adam_step(&mut a, &AdamConfig::default());
            adam_step(&mut b, &AdamConfig::default());
        }
        assert_eq!(a, b);
    }

    #[test]
    fn clip_caps_norm() {
        let mut s = ParamStore::new();
        let mut p = Parameter::new(Tensor::vector(vec![0.0, 0.0]));
        p.grad = Tensor::vector(vec![3.0, 4.0]);
        s.insert("w", p);
        s.clip_grad_norm(1.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
    }
}
