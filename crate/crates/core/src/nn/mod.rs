//! Small neural-network toolkit: linear and convolution layers with
//! hand-written backward passes, instance normalization, activations, a
//! seeded initializer, and an Adam optimizer over flat parameter slices.
//!
//! Every layer exposes `forward` returning whatever cache its `backward`
//! needs; gradients mirror the parameter order exactly, so models can hand
//! `params_mut()` and a gradient buffer straight to [`Adam::step`].

mod activ;
mod adam;
mod conv;
pub mod gradcheck;
mod init;
mod linear;
mod norm;

pub use activ::{
    leaky_relu, leaky_relu_backward, relu, relu_backward, sigmoid, sigmoid_backward, tanh,
    tanh_backward,
};
pub use adam::{Adam, AdamConfig};
pub use conv::{conv_out_dim, upsample2x, upsample2x_backward, Conv2d, ConvCache, ConvGrads};
pub use init::{gaussian, he_matrix, xavier_matrix, SeedStream};
pub use linear::{Linear, LinearGrads};
pub use norm::{
    instance_norm_backward, instance_norm_forward, l2_normalize, l2_normalize_backward,
    InstanceNormCache,
};

use crate::num::Real;

/// Flatten an array in logical (row-major iteration) order regardless of the
/// underlying memory layout. Matrix products against transposed views can
/// come back column-major, so never flatten gradients through the raw buffer.
pub fn flatten<T: Real, D: ndarray::Dimension>(a: &ndarray::Array<T, D>) -> Vec<T> {
    a.iter().copied().collect()
}

/// Gradient buffer aligned one-to-one with a model's `params_mut()` order.
#[derive(Clone, Debug)]
pub struct GradBuf<T> {
    pub slots: Vec<Vec<T>>,
}

impl<T: Real> GradBuf<T> {
    pub fn zeros_like(params: &[&[T]]) -> Self {
        GradBuf {
            slots: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &GradBuf<T>, scale: T) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn has_nan(&self) -> bool {
        self.slots.iter().any(|s| s.iter().any(|x| !x.is_finite()))
    }
}
