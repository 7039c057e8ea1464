//! Fully connected layer.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha12Rng;

use crate::num::Real;

use super::init::xavier_matrix;

/// `y = x W^T + b` with `W` of shape (out, in).
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

#[derive(Clone, Debug)]
pub struct LinearGrads<T> {
    pub dw: Array2<T>,
    pub db: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha12Rng) -> Self {
        Linear {
            w: xavier_matrix(rng, out_dim, in_dim, in_dim),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    /// `x`: (n, in) -> (n, out).
    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    /// `x` is the forward input; `dy`: (n, out). Returns dx and grads.
    pub fn backward(&self, x: &Array2<T>, dy: &Array2<T>) -> (Array2<T>, LinearGrads<T>) {
        let dx = dy.dot(&self.w);
        let dw = dy.t().dot(x);
        let db = dy.sum_axis(Axis(0));
        (dx, LinearGrads { dw, db })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let layer: Linear<f64> = Linear::new(3, 2, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| 0.1 * (i as f64) - 0.2 * (j as f64) + 0.05);

        // Scalar loss: sum of squared outputs.
        let loss = |l: &Linear<f64>, x: &Array2<f64>| -> f64 {
            l.forward(x).iter().map(|v| v * v).sum()
        };
        let y = layer.forward(&x);
        let dy = y.mapv(|v| 2.0 * v);
        let (dx, grads) = layer.backward(&x, &dy);

        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut lp = layer.clone();
                lp.w[[i, j]] += eps;
                let mut lm = layer.clone();
                lm.w[[i, j]] -= eps;
                let fd = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps);
                assert!((grads.dw[[i, j]] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
        for i in 0..2 {
            let mut lp = layer.clone();
            lp.b[i] += eps;
            let mut lm = layer.clone();
            lm.b[i] -= eps;
            let fd = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps);
            assert!((grads.db[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
        }
        for r in 0..4 {
            for c in 0..3 {
                let mut xp = x.clone();
                xp[[r, c]] += eps;
                let mut xm = x.clone();
                xm[[r, c]] -= eps;
                let fd = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * eps);
                assert!((dx[[r, c]] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }
}
