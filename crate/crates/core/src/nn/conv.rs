//! 2-D convolution via im2col plus nearest-neighbor upsampling.

use ndarray::{Array1, Array2, Array3};
use rand_chacha::ChaCha12Rng;

use crate::num::Real;

use super::init::he_matrix;

/// Output length of a 1-D convolution: `floor((n + 2p - k)/s) + 1`.
pub fn conv_out_dim(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

/// Square-kernel convolution; weights stored as (out_c, in_c*k*k) so the
/// forward pass is a single matrix product against the im2col buffer.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub dw: Array2<T>,
    pub db: Array1<T>,
}

/// im2col buffer retained for the backward pass.
pub struct ConvCache<T> {
    cols: Array2<T>,
    in_shape: (usize, usize, usize),
}

impl<T: Real> Conv2d<T> {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let fan_in = in_c * k * k;
        Conv2d {
            w: he_matrix(rng, out_c, fan_in, fan_in),
            b: Array1::zeros(out_c),
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize, usize) {
        (
            self.out_c,
            conv_out_dim(h, self.k, self.stride, self.pad),
            conv_out_dim(w, self.k, self.stride, self.pad),
        )
    }

    fn im2col(&self, x: &Array3<T>) -> Array2<T> {
        let (c, h, w) = x.dim();
        let oh = conv_out_dim(h, self.k, self.stride, self.pad);
        let ow = conv_out_dim(w, self.k, self.stride, self.pad);
        let mut cols = Array2::<T>::zeros((c * self.k * self.k, oh * ow));
        for ci in 0..c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cols[[row, oy * ow + ox]] = x[[ci, iy as usize, ix as usize]];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<T>, shape: (usize, usize, usize)) -> Array3<T> {
        let (c, h, w) = shape;
        let oh = conv_out_dim(h, self.k, self.stride, self.pad);
        let ow = conv_out_dim(w, self.k, self.stride, self.pad);
        let mut dx = Array3::<T>::zeros(shape);
        for ci in 0..c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            dx[[ci, iy as usize, ix as usize]] += dcols[[row, oy * ow + ox]];
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Array3<T>) -> (Array3<T>, ConvCache<T>) {
        let in_shape = x.dim();
        debug_assert_eq!(in_shape.0, self.in_c, "channel mismatch");
        let (_, oh, ow) = self.out_shape(in_shape.1, in_shape.2);
        let cols = self.im2col(x);
        let mut flat = self.w.dot(&cols);
        for (mut row, &bias) in flat.rows_mut().into_iter().zip(self.b.iter()) {
            row.mapv_inplace(|v| v + bias);
        }
        let y = flat
            .into_shape_with_order((self.out_c, oh, ow))
            .expect("conv output reshape");
        (y, ConvCache { cols, in_shape })
    }

    pub fn backward(&self, cache: &ConvCache<T>, dy: &Array3<T>) -> (Array3<T>, ConvGrads<T>) {
        let (o, oh, ow) = dy.dim();
        debug_assert_eq!(o, self.out_c);
        let dy_flat = dy
            .to_owned()
            .into_shape_with_order((o, oh * ow))
            .expect("dy reshape");
        let dw = dy_flat.dot(&cache.cols.t());
        let db = dy_flat.sum_axis(ndarray::Axis(1));
        let dcols = self.w.t().dot(&dy_flat);
        let dx = self.col2im(&dcols, cache.in_shape);
        (dx, ConvGrads { dw, db })
    }
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2x<T: Real>(x: &Array3<T>) -> Array3<T> {
    let (c, h, w) = x.dim();
    Array3::from_shape_fn((c, 2 * h, 2 * w), |(ci, y, xx)| x[[ci, y / 2, xx / 2]])
}

/// Backward of nearest upsampling: sum each 2x2 block.
pub fn upsample2x_backward<T: Real>(dy: &Array3<T>) -> Array3<T> {
    let (c, h2, w2) = dy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Array3::<T>::zeros((c, h, w));
    for ci in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                dx[[ci, y / 2, x / 2]] += dy[[ci, y, x]];
            }
        }
    }
    dx
}
