//! Stand-in feature encoders: small convolutional networks ending in global
//! average pooling, a learnable linear layer, and L2 normalization.
//!
//! The spatial encoder embeds a rendered frame (memory query); the identity
//! encoder embeds a real frame (memory value and AdaIN conditioning input).
//! Both produce unit-norm vectors.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::nn::{
    instance_norm_backward, instance_norm_forward, l2_normalize, l2_normalize_backward,
    leaky_relu, leaky_relu_backward, Conv2d, ConvCache, GradBuf, InstanceNormCache, Linear,
    SeedStream,
};
use crate::num::Real;

const LRELU_SLOPE: f64 = 0.2;

/// Four stride-2 conv layers, global average pool, linear projection,
/// L2 normalization.
#[derive(Clone, Debug)]
pub struct ConvEncoder<T> {
    layers: Vec<Conv2d<T>>,
    proj: Linear<T>,
    pub out_dim: usize,
}

pub struct EncoderCache<T> {
    layer_caches: Vec<ConvCache<T>>,
    pre_acts: Vec<Array3<T>>,
    norms: Vec<Option<InstanceNormCache<T>>>,
    pooled: Array2<T>,
    pooled_shape: (usize, usize, usize),
    unit: Array1<T>,
    norm: T,
}

impl<T: Real> ConvEncoder<T> {
    pub fn new(base: usize, out_dim: usize, seeds: &mut SeedStream) -> Self {
        let widths = [base, 2 * base, 4 * base, 4 * base];
        let mut layers = Vec::with_capacity(4);
        let mut cin = 3;
        for &w in &widths {
            layers.push(Conv2d::new(cin, w, 4, 2, 1, &mut seeds.derive()));
            cin = w;
        }
        let proj = Linear::new(cin, out_dim, &mut seeds.derive());
        ConvEncoder {
            layers,
            proj,
            out_dim,
        }
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for c in &self.layers {
            out.push(c.w.as_slice().unwrap());
            out.push(c.b.as_slice().unwrap());
        }
        out.push(self.proj.w.as_slice().unwrap());
        out.push(self.proj.b.as_slice().unwrap());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for c in &mut self.layers {
            out.push(c.w.as_slice_mut().unwrap());
            out.push(c.b.as_slice_mut().unwrap());
        }
        out.push(self.proj.w.as_slice_mut().unwrap());
        out.push(self.proj.b.as_slice_mut().unwrap());
        out
    }

    /// Unit-norm embedding of an RGB frame.
    pub fn forward(&self, frame: &Array3<T>) -> Result<(Array1<T>, EncoderCache<T>)> {
        let (c, h, w) = frame.dim();
        if c != 3 {
            return Err(Error::config("encoder expects an RGB frame"));
        }
        if h < 16 || w < 16 {
            return Err(Error::config("frame too small for 4 stride-2 layers"));
        }
        let mut layer_caches = Vec::new();
        let mut pre_acts = Vec::new();
        let mut norms = Vec::new();
        let mut cur = frame.clone();
        let last = self.layers.len() - 1;
        for (i, conv) in self.layers.iter().enumerate() {
            let (y, cache) = conv.forward(&cur);
            layer_caches.push(cache);
            // No normalization on the first layer or on the last one (whose
            // spatial extent can collapse to 1x1, where instance statistics
            // erase the signal).
            let (pre, norm) = if i == 0 || i == last {
                (y, None)
            } else {
                let (n, nc) = instance_norm_forward(&y);
                (n, Some(nc))
            };
            let act = leaky_relu(&pre, T::of(LRELU_SLOPE));
            pre_acts.push(pre);
            norms.push(norm);
            cur = act;
        }
        // Global average pool.
        let (cc, hh, ww) = cur.dim();
        let n_spatial = T::of_usize(hh * ww);
        let mut pooled = Array2::<T>::zeros((1, cc));
        for ci in 0..cc {
            let mut acc = T::zero();
            for v in cur.index_axis(ndarray::Axis(0), ci).iter() {
                acc += *v;
            }
            pooled[[0, ci]] = acc / n_spatial;
        }
        let projected = self.proj.forward(&pooled);
        let raw = projected.row(0).to_owned();
        let (unit, norm) = l2_normalize(&raw);
        Ok((
            unit.clone(),
            EncoderCache {
                layer_caches,
                pre_acts,
                norms,
                pooled,
                pooled_shape: (cc, hh, ww),
                unit,
                norm,
            },
        ))
    }

    /// Backward from the gradient on the unit-norm embedding.
    pub fn backward(&self, cache: &EncoderCache<T>, d_embedding: &Array1<T>) -> GradBuf<T> {
        let d_raw = l2_normalize_backward(&cache.unit, cache.norm, d_embedding);
        let d_raw2 = d_raw
            .into_shape_with_order((1, self.out_dim))
            .unwrap();
        let (d_pooled, proj_grads) = self.proj.backward(&cache.pooled, &d_raw2);

        // Un-pool: spread the gradient uniformly over spatial positions.
        let (cc, hh, ww) = cache.pooled_shape;
        let scale = T::one() / T::of_usize(hh * ww);
        let mut d_cur = Array3::<T>::zeros((cc, hh, ww));
        for ci in 0..cc {
            let g = d_pooled[[0, ci]] * scale;
            d_cur.index_axis_mut(ndarray::Axis(0), ci).fill(g);
        }

        let mut grads_rev: Vec<(Array2<T>, Array1<T>)> = Vec::new();
        for i in (0..self.layers.len()).rev() {
            let dn = leaky_relu_backward(&cache.pre_acts[i], &d_cur, T::of(LRELU_SLOPE));
            let dy = match &cache.norms[i] {
                Some(nc) => instance_norm_backward(nc, &dn),
                None => dn,
            };
            let (dx, g) = self.layers[i].backward(&cache.layer_caches[i], &dy);
            grads_rev.push((g.dw, g.db));
            d_cur = dx;
        }

        let mut slots: Vec<Vec<T>> = Vec::new();
        grads_rev.reverse();
        for (dw, db) in grads_rev {
            slots.push(crate::nn::flatten(&dw));
            slots.push(crate::nn::flatten(&db));
        }
        slots.push(crate::nn::flatten(&proj_grads.dw));
        slots.push(crate::nn::flatten(&proj_grads.db));
        GradBuf { slots }
    }
}
