use alloc::string::ToString;
use alloc::vec::Vec;

use num_traits::Float;

use super::{ParamStore, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self { kind: OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }, lr, max_grad_norm: Some(1.0) }
    }

    pub fn sgd(lr: f64) -> Self {
        Self { kind: OptimizerKind::Sgd, lr, max_grad_norm: None }
    }
}

/// Applies accumulated gradients to a store and clears them.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    pub config: OptimizerConfig,
    steps: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        Self { config, steps: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        let mut sq_norm = 0.0;
        for (name, t) in store.iter() {
            if let Some(g) = &t.grad {
                for &v in g {
                    if !v.is_finite() {
                        return Err(Error::NonFiniteGradient(name.to_string()));
                    }
                    sq_norm += v.as_f64() * v.as_f64();
                }
            }
        }
        let clip = match self.config.max_grad_norm {
            Some(max) if Float::sqrt(sq_norm) > max => max / Float::sqrt(sq_norm),
            _ => 1.0,
        };
        self.steps += 1;
        if self.first.len() < store.len() {
            self.first.resize(store.len(), Vec::new());
            self.second.resize(store.len(), Vec::new());
        }
        let lr = self.config.lr;
        for id in store.ids().collect::<Vec<_>>() {
            let t = store.get_mut(id);
            let Some(grad) = t.grad.take() else { continue };
            match self.config.kind {
                OptimizerKind::Sgd => {
                    let step = T::of(lr * clip);
                    for (p, &g) in t.data.iter_mut().zip(&grad) {
                        *p -= step * g;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let (m, v) = (&mut self.first[id.0], &mut self.second[id.0]);
                    if m.is_empty() {
                        m.resize(t.data.len(), T::zero());
                        v.resize(t.data.len(), T::zero());
                    }
                    let bc1 = 1.0 - Float::powi(beta1, self.steps as i32);
                    let bc2 = 1.0 - Float::powi(beta2, self.steps as i32);
                    let (b1, b2) = (T::of(beta1), T::of(beta2));
                    let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
                    let step = T::of(lr / bc1);
                    let inv_bc2 = T::of(1.0 / bc2);
                    let (eps, clip) = (T::of(eps), T::of(clip));
                    for i in 0..t.data.len() {
                        let g = grad[i] * clip;
                        m[i] = b1 * m[i] + one_b1 * g;
                        v[i] = b2 * v[i] + one_b2 * g * g;
                        t.data[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Init, Tensor};

    fn scalar_store(v: f64, grad: Option<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new(0);
        let mut t = Tensor::from_vec(&[1], alloc::vec![v]).unwrap();
        t.grad = grad.map(|g| alloc::vec![g]);
        s.insert("p".into(), t);
        s
    }

    #[test]
    fn sgd_step() {
        let mut s = scalar_store(1.0, Some(1.0));
        Optimizer::new(OptimizerConfig::sgd(0.1)).step(&mut s).unwrap();
        assert!((s.by_name("p").unwrap().data[0] - 0.9).abs() < 1e-15);
        assert!(s.by_name("p").unwrap().grad.is_none());
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        for cfg in [OptimizerConfig::sgd(0.1), OptimizerConfig::adam(1e-3)] {
            let mut s = ParamStore::<f32>::new(1);
            let id = s.add("w", &[4], Init::Uniform(1.0)).unwrap();
            let before = s.get(id).data.clone();
            s.get_mut(id).grad = Some(alloc::vec![0.0; 4]);
            Optimizer::new(cfg).step(&mut s).unwrap();
            assert_eq!(s.get(id).data, before);
        }
    }

    #[test]
    fn nan_grad_is_an_error() {
        let mut s = scalar_store(1.0, Some(f64::NAN));
        let err = Optimizer::new(OptimizerConfig::adam(1e-3)).step(&mut s).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient("p".into()));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut s = scalar_store(0.0, Some(3.0));
        let mut cfg = OptimizerConfig::adam(0.01);
        cfg.max_grad_norm = None;
        Optimizer::new(cfg).step(&mut s).unwrap();
        assert!((s.by_name("p").unwrap().data[0] + 0.01).abs() < 1e-9);
    }
}
