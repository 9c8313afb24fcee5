use serde::{Deserialize, Serialize};

use super::params::ParamStore;

/// Adam with decoupled weight decay; decay applies to matrices only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: ParamStore,
    v: ParamStore,
}

impl AdamW {
    pub fn new(params: &ParamStore, weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            let decay = if p.is_matrix() { self.weight_decay } else { 0.0 };
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * (mhat / (vhat.sqrt() + self.eps) + decay * p.data[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = ParamStore::default();
        p.add("w", vec![2], vec![1.0, -1.0]);
        let mut g = p.zeros_like();
        g.tensors[0].data = vec![0.3, -4.0];
        let mut opt = AdamW::new(&p, 0.01);
        opt.update(&mut p, &g, 0.1);
        assert!((p.tensors[0].data[0] - 0.9).abs() < 1e-6);
        assert!((p.tensors[0].data[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_quadratic() {
        let mut p = ParamStore::default();
        p.add("w", vec![1, 1], vec![3.0]);
        let mut opt = AdamW::new(&p, 0.0);
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            g.tensors[0].data[0] = 2.0 * (p.tensors[0].data[0] - 1.0);
            opt.update(&mut p, &g, 0.01);
        }
        assert!((p.tensors[0].data[0] - 1.0).abs() < 1e-3);
    }
}
