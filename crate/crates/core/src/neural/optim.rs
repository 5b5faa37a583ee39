use serde::{Deserialize, Serialize};

use super::store::ParamStore;
use super::tensor::Matrix;

/// Adam hyperparameters with global gradient-norm clipping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
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

/// Adam state; one moment pair per parameter, in store order.
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let m = store
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        let v = store
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Adam {
            cfg,
            t: 0,
            m,
            v,
        }
    }

    /// Clip the global gradient norm, apply one Adam update, zero gradients.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let norm: f64 = store
            .iter()
            .map(|p| p.grad.sq_norm())
            .sum::<f64>()
            .sqrt();
        let scale = if norm > self.cfg.clip_norm && norm > 0.0 {
            self.cfg.clip_norm / norm
        } else {
            1.0
        };
        let bc1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        for (k, p) in store.iter_mut().enumerate() {
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let value = p.value.data_mut();
            for (((g, m), v), w) in p
                .grad
                .data_mut()
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .zip(value.iter_mut())
            {
                let gc = *g * scale;
                *m = self.cfg.beta1 * *m + (1.0 - self.cfg.beta1) * gc;
                *v = self.cfg.beta2 * *v + (1.0 - self.cfg.beta2) * gc * gc;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= self.cfg.lr * mhat / (vhat.sqrt() + self.cfg.eps);
                *g = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tape::Tape;

    #[test]
    fn one_parameter_least_squares_converges() {
        // minimize (w*2 - 3)^2; optimum w = 1.5
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::from_vec(1, 1, vec![0.0]));
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..AdamConfig::default()
            },
            &store,
        );
        for _ in 0..2000 {
            let mut tape = Tape::new();
            let wn = tape.param(&store, w);
            let pred = tape.scale(wn, 2.0);
            let tgt = tape.add_scalar(pred, -3.0);
            let sq = tape.mul(tgt, tgt);
            let loss = tape.sum(sq);
            tape.backward_into(loss, &mut store).unwrap();
            adam.step(&mut store);
        }
        assert!((store.value(w).data()[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn clipping_bounds_update_magnitude() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::from_vec(1, 1, vec![0.0]));
        let mut adam = Adam::new(AdamConfig::default(), &store);
        store.grad_mut(w).data_mut()[0] = 1e9;
        adam.step(&mut store);
        // First Adam step magnitude is ~lr regardless of raw gradient size.
        assert!(store.value(w).data()[0].abs() <= 2e-3);
    }
}
