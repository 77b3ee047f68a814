//! Adam with global-norm gradient clipping.

use alloc::vec::Vec;

use crate::tensor::{Gradients, ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients whose global norm exceeds this are rescaled to it.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Adam {
            cfg,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Clips `grads` in place and applies one update. Returns the pre-clip
    /// global norm.
    pub fn step(&mut self, params: &mut ParamSet, grads: &mut Gradients) -> f64 {
        let norm = grads.global_norm();
        if norm > self.cfg.clip_norm {
            grads.scale(self.cfg.clip_norm / norm);
        }
        self.step += 1;
        let t = self.step as i32;
        let c = &self.cfg;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        for (k, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads.get(id).data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= c.lr * mh / (libm::sqrt(vh) + c.eps);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tape};

    #[test]
    fn minimizes_a_quadratic() {
        let mut params = ParamSet::new();
        let w = params.add("w", Tensor::vector(alloc::vec![3.0, -2.0]));
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..AdamConfig::default()
            },
            &params,
        );
        for _ in 0..300 {
            let mut grads = Gradients::zeros_like(&params);
            let tape_params = params.clone();
            let mut tape = Tape::new(&tape_params);
            let wv = tape.param(w);
            let sq = tape.mul(wv, wv).unwrap();
            let loss = tape.sum(sq);
            tape.backward(loss, &mut grads).unwrap();
            adam.step(&mut params, &mut grads);
        }
        assert_eq!(params.get(w).shape(), Shape::Vector(2));
        assert!(params.get(w).data().iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn clips_large_gradients() {
        let mut params = ParamSet::new();
        let w = params.add("w", Tensor::vector(alloc::vec![0.0; 4]));
        let mut grads = Gradients::zeros_like(&params);
        grads.buf(w).copy_from_slice(&[100.0, 0.0, 0.0, 0.0]);
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let norm = adam.step(&mut params, &mut grads);
        assert_eq!(norm, 100.0);
        assert!((grads.global_norm() - 5.0).abs() < 1e-12);
    }
}
