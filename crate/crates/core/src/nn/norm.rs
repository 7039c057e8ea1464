//! Instance normalization and L2 normalization with backward passes.

use ndarray::{Array1, Array3};

use crate::num::Real;

const EPS: f64 = 1e-5;

pub struct InstanceNormCache<T> {
    /// Normalized activations (x - mean) / std, per channel.
    pub xhat: Array3<T>,
    inv_std: Vec<T>,
}

/// Per-channel normalization over the spatial dimensions of (C, H, W).
pub fn instance_norm_forward<T: Real>(x: &Array3<T>) -> (Array3<T>, InstanceNormCache<T>) {
    let (c, h, w) = x.dim();
    let n = T::of_usize(h * w);
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(c);
    for ci in 0..c {
        let mut mean = T::zero();
        for v in x.index_axis(ndarray::Axis(0), ci).iter() {
            mean += *v;
        }
        mean /= n;
        let mut var = T::zero();
        for v in x.index_axis(ndarray::Axis(0), ci).iter() {
            let d = *v - mean;
            var += d * d;
        }
        var /= n;
        let istd = T::one() / (var + T::of(EPS)).sqrt();
        inv_std.push(istd);
        for v in xhat.index_axis_mut(ndarray::Axis(0), ci).iter_mut() {
            *v = (*v - mean) * istd;
        }
    }
    let cache = InstanceNormCache {
        xhat: xhat.clone(),
        inv_std,
    };
    (xhat, cache)
}

/// Backward through instance normalization given d(loss)/d(xhat).
pub fn instance_norm_backward<T: Real>(cache: &InstanceNormCache<T>, dxhat: &Array3<T>) -> Array3<T> {
    let (c, h, w) = cache.xhat.dim();
    let n = T::of_usize(h * w);
    let mut dx = Array3::<T>::zeros((c, h, w));
    for ci in 0..c {
        let xh = cache.xhat.index_axis(ndarray::Axis(0), ci);
        let dh = dxhat.index_axis(ndarray::Axis(0), ci);
        let mut mean_d = T::zero();
        let mut mean_dx = T::zero();
        for (a, b) in dh.iter().zip(xh.iter()) {
            mean_d += *a;
            mean_dx += *a * *b;
        }
        mean_d /= n;
        mean_dx /= n;
        let istd = cache.inv_std[ci];
        let mut out = dx.index_axis_mut(ndarray::Axis(0), ci);
        for ((o, &d), &xhv) in out.iter_mut().zip(dh.iter()).zip(xh.iter()) {
            *o = istd * (d - mean_d - xhv * mean_dx);
        }
    }
    dx
}

/// Normalize a vector to unit L2 norm. Returns the output and the pre-norm
/// length (needed by the backward pass).
pub fn l2_normalize<T: Real>(x: &Array1<T>) -> (Array1<T>, T) {
    let norm = x.dot(x).sqrt().max(T::of(1e-12));
    (x.mapv(|v| v / norm), norm)
}

/// Backward through `y = x / |x|`: `dx = (dy - y (y . dy)) / |x|`.
pub fn l2_normalize_backward<T: Real>(y: &Array1<T>, norm: T, dy: &Array1<T>) -> Array1<T> {
    let proj = y.dot(dy);
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &o| *d = (*d - o * proj) / norm);
    dx
}
