//! Adam optimizer over flat parameter slices.

use crate::num::Real;

use super::GradBuf;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamConfig<T> {
    pub fn with_lr(lr: T) -> Self {
        AdamConfig {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }
}

/// First/second-moment state is allocated lazily from the first step's
/// parameter shapes.
pub struct Adam<T> {
    pub cfg: AdamConfig<T>,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig<T>) -> Self {
        Adam {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &GradBuf<T>) {
        assert_eq!(params.len(), grads.slots.len(), "param/grad slot mismatch");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        }
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bias1 = T::one() - b1.powi(self.t as i32);
        let bias2 = T::one() - b2.powi(self.t as i32);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(&grads.slots)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), g.len(), "param/grad length mismatch");
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mhat = m[i] / bias1;
                let vhat = v[i] / bias2;
                p[i] -= self.cfg.lr * mhat / (vhat.sqrt() + self.cfg.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut x = vec![5.0f64, -3.0];
        let mut opt = Adam::new(AdamConfig::with_lr(0.1));
        for _ in 0..500 {
            let grads = GradBuf {
                slots: vec![vec![2.0 * x[0], 2.0 * x[1]]],
            };
            let mut slices = [x.as_mut_slice()];
            opt.step(&mut slices, &grads);
        }
        assert!(x[0].abs() < 1e-3 && x[1].abs() < 1e-3, "x = {x:?}");
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_identical() {
        let mut x = vec![1.25f32, -0.75, 0.0];
        let before = x.clone();
        let mut opt = Adam::new(AdamConfig::with_lr(0.0));
        for _ in 0..10 {
            let grads = GradBuf {
                slots: vec![vec![0.3, -0.7, 1.0]],
            };
            let mut slices = [x.as_mut_slice()];
            opt.step(&mut slices, &grads);
        }
        assert_eq!(x, before);
    }
}
