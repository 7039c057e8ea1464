//! Elementwise activations with explicit backward passes.
//!
//! tanh/sigmoid backwards take the forward *output*; relu-family backwards
//! take the forward *input*.

use ndarray::{Array, Dimension};

use crate::num::Real;

pub fn tanh<T: Real, D: Dimension>(x: &Array<T, D>) -> Array<T, D> {
    x.mapv(|v| v.tanh())
}

pub fn tanh_backward<T: Real, D: Dimension>(y: &Array<T, D>, dy: &Array<T, D>) -> Array<T, D> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &o| *d *= T::one() - o * o);
    dx
}

pub fn sigmoid<T: Real, D: Dimension>(x: &Array<T, D>) -> Array<T, D> {
    x.mapv(|v| T::one() / (T::one() + (-v).exp()))
}

pub fn sigmoid_backward<T: Real, D: Dimension>(y: &Array<T, D>, dy: &Array<T, D>) -> Array<T, D> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &o| *d *= o * (T::one() - o));
    dx
}

pub fn relu<T: Real, D: Dimension>(x: &Array<T, D>) -> Array<T, D> {
    x.mapv(|v| v.max(T::zero()))
}

pub fn relu_backward<T: Real, D: Dimension>(x: &Array<T, D>, dy: &Array<T, D>) -> Array<T, D> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        if v <= T::zero() {
            *d = T::zero();
        }
    });
    dx
}

pub fn leaky_relu<T: Real, D: Dimension>(x: &Array<T, D>, slope: T) -> Array<T, D> {
    x.mapv(|v| if v > T::zero() { v } else { slope * v })
}

pub fn leaky_relu_backward<T: Real, D: Dimension>(
    x: &Array<T, D>,
    dy: &Array<T, D>,
    slope: T,
) -> Array<T, D> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        if v <= T::zero() {
            *d *= slope;
        }
    });
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn fd_check(
        f: impl Fn(&Array1<f64>) -> f64,
        grad: impl Fn(&Array1<f64>) -> Array1<f64>,
        x: &Array1<f64>,
    ) {
        let g = grad(x);
        let eps = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let fd = (f(&xp) - f(&xm)) / (2.0 * eps);
            assert!(
                (g[i] - fd).abs() < 1e-7 * (1.0 + fd.abs()),
                "index {i}: analytic {} vs fd {fd}",
                g[i]
            );
        }
    }

    #[test]
    fn activation_gradients_match_finite_differences() {
        let x = Array1::from_vec(vec![-1.3, -0.2, 0.0001, 0.7, 2.1]);
        let ones = Array1::ones(5);

        fd_check(
            |x| tanh(x).sum(),
            |x| tanh_backward(&tanh(x), &ones),
            &x,
        );
        fd_check(
            |x| sigmoid(x).sum(),
            |x| sigmoid_backward(&sigmoid(x), &ones),
            &x,
        );
        fd_check(|x| relu(x).sum(), |x| relu_backward(x, &ones), &x);
        fd_check(
            |x| leaky_relu(x, 0.2).sum(),
            |x| leaky_relu_backward(x, &ones, 0.2),
            &x,
        );
    }
}
