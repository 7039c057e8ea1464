//! Patch discriminator: convolutional classifier over a window of rendered
//! frames plus a checking frame, emitting a map of per-patch logits.

use ndarray::{s, Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::nn::{
    conv_out_dim, instance_norm_backward, instance_norm_forward, leaky_relu, leaky_relu_backward,
    Conv2d, ConvCache, GradBuf, InstanceNormCache, SeedStream,
};
use crate::num::Real;

const LRELU_SLOPE: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    pub window_frames: usize,
    pub downs: usize,
    layers: Vec<Conv2d<T>>,
    head: Conv2d<T>,
}

pub struct DiscCache<T> {
    layer_caches: Vec<ConvCache<T>>,
    pre_acts: Vec<Array3<T>>,
    norms: Vec<Option<InstanceNormCache<T>>>,
    head_cache: ConvCache<T>,
}

impl<T: Real> Discriminator<T> {
    /// `downs` stride-2 layers followed by one stride-1 layer and a 1-channel
    /// head, all 4x4 kernels with padding 1.
    pub fn new(window_frames: usize, downs: usize, base: usize, seeds: &mut SeedStream) -> Self {
        let in_ch = 3 * window_frames + 3;
        let mut layers = Vec::new();
        let mut cin = in_ch;
        let mut width = base;
        for _ in 0..downs {
            layers.push(Conv2d::new(cin, width, 4, 2, 1, &mut seeds.derive()));
            cin = width;
            width = (width * 2).min(base * 8);
        }
        layers.push(Conv2d::new(cin, width, 4, 1, 1, &mut seeds.derive()));
        let head = Conv2d::new(width, 1, 4, 1, 1, &mut seeds.derive());
        Discriminator {
            window_frames,
            downs,
            layers,
            head,
        }
    }

    /// Spatial size of the patch logit map for an input of side `n`,
    /// following the convolution arithmetic of the layer stack.
    pub fn logit_map_dim(&self, n: usize) -> usize {
        let mut d = n;
        for layer in &self.layers {
            d = conv_out_dim(d, layer.k, layer.stride, layer.pad);
        }
        conv_out_dim(d, self.head.k, self.head.stride, self.head.pad)
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for c in self.layers.iter().chain(std::iter::once(&self.head)) {
            out.push(c.w.as_slice().unwrap());
            out.push(c.b.as_slice().unwrap());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for c in self.layers.iter_mut().chain(std::iter::once(&mut self.head)) {
            out.push(c.w.as_slice_mut().unwrap());
            out.push(c.b.as_slice_mut().unwrap());
        }
        out
    }

    /// Patch logits for (window, checking frame).
    pub fn forward(&self, window: &Array3<T>, check: &Array3<T>) -> Result<(Array3<T>, DiscCache<T>)> {
        let (cw, h, w) = window.dim();
        let (cc, hc, wc) = check.dim();
        if cw != 3 * self.window_frames || cc != 3 {
            return Err(Error::config("discriminator channel mismatch"));
        }
        if (h, w) != (hc, wc) {
            return Err(Error::config("window and checking frame sizes differ"));
        }
        let mut x = Array3::<T>::zeros((cw + 3, h, w));
        x.slice_mut(s![..cw, .., ..]).assign(window);
        x.slice_mut(s![cw.., .., ..]).assign(check);

        let mut layer_caches = Vec::new();
        let mut pre_acts = Vec::new();
        let mut norms = Vec::new();
        let mut cur = x;
        for (i, conv) in self.layers.iter().enumerate() {
            let (y, cache) = conv.forward(&cur);
            layer_caches.push(cache);
            let (pre, norm) = if i == 0 {
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
        let (logits, head_cache) = self.head.forward(&cur);
        Ok((
            logits,
            DiscCache {
                layer_caches,
                pre_acts,
                norms,
                head_cache,
            },
        ))
    }

    /// Backward from logit gradients; returns (d_window, d_check) plus
    /// parameter gradients in `params()` order.
    pub fn backward(
        &self,
        cache: &DiscCache<T>,
        d_logits: &Array3<T>,
    ) -> (Array3<T>, Array3<T>, GradBuf<T>) {
        let (mut d_cur, head_grads) = self.head.backward(&cache.head_cache, d_logits);
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
        let cw = 3 * self.window_frames;
        let d_window = d_cur.slice(s![..cw, .., ..]).to_owned();
        let d_check = d_cur.slice(s![cw.., .., ..]).to_owned();

        let mut slots: Vec<Vec<T>> = Vec::new();
        grads_rev.reverse();
        for (dw, db) in grads_rev {
            slots.push(crate::nn::flatten(&dw));
            slots.push(crate::nn::flatten(&db));
        }
        slots.push(crate::nn::flatten(&head_grads.dw));
        slots.push(crate::nn::flatten(&head_grads.db));
        (d_window, d_check, GradBuf { slots })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn toy_disc() -> Discriminator<f64> {
        let mut seeds = SeedStream::new(21);
        Discriminator::new(3, 2, 2, &mut seeds)
    }

    #[test]
    fn logit_map_dims_follow_conv_arithmetic() {
        let d = toy_disc();
        let mut rng = StdRng::seed_from_u64(1);
        let window = Array3::from_shape_fn((9, 16, 16), |_| rng.gen_range(0.0..1.0));
        let check = Array3::from_shape_fn((3, 16, 16), |_| rng.gen_range(0.0..1.0));
        let (logits, _) = d.forward(&window, &check).unwrap();

        // Conv-arithmetic oracle: two stride-2 k4 p1 layers, one stride-1 k4
        // p1 layer, one stride-1 k4 p1 head.
        let chain = |mut n: usize| -> usize {
            n = (n + 2 - 4) / 2 + 1;
            n = (n + 2 - 4) / 2 + 1;
            n = n + 2 - 4 + 1;
            n + 2 - 4 + 1
        };
        let expect = chain(16);
        assert_eq!(logits.dim(), (1, expect, expect));
        assert_eq!(d.logit_map_dim(16), expect);
    }

    #[test]
    fn identical_inputs_give_identical_scores_and_extremes_stay_finite() {
        let d = toy_disc();
        let mut rng = StdRng::seed_from_u64(2);
        let window = Array3::from_shape_fn((9, 16, 16), |_| rng.gen_range(0.0..1.0));
        let check = Array3::from_shape_fn((3, 16, 16), |_| rng.gen_range(0.0..1.0));
        let (a, _) = d.forward(&window, &check).unwrap();
        let (b, _) = d.forward(&window, &check).unwrap();
        assert_eq!(a, b);

        for v in [0.0, 1.0] {
            let w0 = Array3::from_elem((9, 16, 16), v);
            let c0 = Array3::from_elem((3, 16, 16), v);
            let (l, _) = d.forward(&w0, &c0).unwrap();
            assert!(l.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn discriminator_gradients_match_finite_differences() {
        use crate::nn::gradcheck::{central_diff_at, rel_error, sample_indices};
        // One downsample so the 8x8 toy input survives the k4 head.
        let mut seeds = SeedStream::new(22);
        let d: Discriminator<f64> = Discriminator::new(3, 1, 2, &mut seeds);
        let mut rng = StdRng::seed_from_u64(3);
        let window = Array3::from_shape_fn((9, 8, 8), |_| rng.gen_range(0.0..1.0));
        let check = Array3::from_shape_fn((3, 8, 8), |_| rng.gen_range(0.0..1.0));

        let loss_of = |d: &Discriminator<f64>| -> f64 {
            let (l, _) = d.forward(&window, &check).unwrap();
            l.iter().map(|v| v * v).sum()
        };
        let (logits, cache) = d.forward(&window, &check).unwrap();
        let d_logits = logits.mapv(|v| 2.0 * v);
        let (_, d_check, grads) = d.backward(&cache, &d_logits);

        let eps = 1e-5;
        for slot in 0..grads.slots.len() {
            for &i in &sample_indices(grads.slots[slot].len(), 12) {
                let fd = central_diff_at(&d, eps, |m, dd| m.params_mut()[slot][i] += dd, loss_of);
                let err = rel_error(grads.slots[slot][i], fd, 1e-7);
                assert!(err < 1e-3, "slot {slot} index {i}: rel {err}");
            }
        }

        // Input gradient on the checking frame.
        for idx in [(0usize, 0usize, 0usize), (1, 3, 5), (2, 7, 7)] {
            let mut cp = check.clone();
            cp[idx] += eps;
            let mut cm = check.clone();
            cm[idx] -= eps;
            let lp = {
                let (l, _) = d.forward(&window, &cp).unwrap();
                l.iter().map(|v| v * v).sum::<f64>()
            };
            let lm = {
                let (l, _) = d.forward(&window, &cm).unwrap();
                l.iter().map(|v| v * v).sum::<f64>()
            };
            let fd = (lp - lm) / (2.0 * eps);
            assert!(
                (d_check[idx] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                "d_check {idx:?}: {} vs {fd}",
                d_check[idx]
            );
        }
    }
}
