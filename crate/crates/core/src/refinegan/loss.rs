//! GAN objective: saturating adversarial log-loss over patch logits, an L1
//! reconstruction term, an attention-magnitude term (per-pixel RMS of the
//! mask), and a total-variation smoothness term on the mask.

use ndarray::Array3;

use crate::num::Real;

/// Stage-2 loss weights.
#[derive(Clone, Copy, Debug)]
pub struct GanLossWeights<T> {
    /// L1 reconstruction weight.
    pub lambda1: T,
    /// Attention magnitude weight.
    pub lambda2: T,
    /// Attention total-variation weight.
    pub lambda3: T,
}

impl<T: Real> Default for GanLossWeights<T> {
    fn default() -> Self {
        GanLossWeights {
            lambda1: T::of(100.0),
            lambda2: T::of(2.0),
            lambda3: T::of(1e-5),
        }
    }
}

/// Numerically stable `ln(1 + e^x)`.
fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (T::one() + (-x.abs()).exp()).ln()
}

/// Mean over patches of `log sigmoid(logit)`: the "real" half of the
/// adversarial objective.
pub fn mean_log_sigmoid<T: Real>(logits: &Array3<T>) -> T {
    let n = T::of_usize(logits.len());
    -logits.iter().map(|&l| softplus(-l)).sum::<T>() / n
}

/// Mean over patches of `log(1 - sigmoid(logit))`: the "fake" half.
pub fn mean_log_one_minus_sigmoid<T: Real>(logits: &Array3<T>) -> T {
    let n = T::of_usize(logits.len());
    -logits.iter().map(|&l| softplus(l)).sum::<T>() / n
}

/// Mean absolute difference.
pub fn l1_term<T: Real>(a: &Array3<T>, b: &Array3<T>) -> T {
    let n = T::of_usize(a.len());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs())
        .sum::<T>()
        / n
}

/// Attention magnitude: the L2 norm of the mask averaged over pixels (RMS),
/// keeping the weight resolution-independent.
pub fn mask_magnitude<T: Real>(a: &Array3<T>) -> T {
    let n = T::of_usize(a.len());
    (a.iter().map(|&v| v * v).sum::<T>() / n).sqrt()
}

/// Total variation of the (1, H, W) mask: sum of squared vertical and
/// horizontal forward differences.
pub fn total_variation<T: Real>(a: &Array3<T>) -> T {
    let (_, h, w) = a.dim();
    let mut acc = T::zero();
    for y in 0..h {
        for x in 0..w {
            if y + 1 < h {
                let d = a[[0, y + 1, x]] - a[[0, y, x]];
                acc += d * d;
            }
            if x + 1 < w {
                let d = a[[0, y, x + 1]] - a[[0, y, x]];
                acc += d * d;
            }
        }
    }
    acc
}

/// Generator and discriminator scalar losses from one training pair.
///
/// The generator minimizes the saturating fake term plus the weighted
/// reconstruction and attention terms; the discriminator maximizes the
/// adversarial pair, i.e. minimizes its negation.
pub fn gan_loss<T: Real>(
    real_logits: &Array3<T>,
    fake_logits: &Array3<T>,
    refined: &Array3<T>,
    real_frame: &Array3<T>,
    attention: &Array3<T>,
    weights: &GanLossWeights<T>,
) -> (T, T) {
    let adv_real = mean_log_sigmoid(real_logits);
    let adv_fake = mean_log_one_minus_sigmoid(fake_logits);
    let g_loss = adv_fake
        + weights.lambda1 * l1_term(real_frame, refined)
        + weights.lambda2 * mask_magnitude(attention)
        + weights.lambda3 * total_variation(attention);
    let d_loss = -(adv_real + adv_fake);
    (g_loss, d_loss)
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

fn sigmoid_scalar<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// d/d logits of `-(mean log sigmoid(real) + mean log(1-sigmoid(fake)))`.
pub fn d_loss_logit_grads<T: Real>(
    real_logits: &Array3<T>,
    fake_logits: &Array3<T>,
) -> (Array3<T>, Array3<T>) {
    let n_r = T::of_usize(real_logits.len());
    let n_f = T::of_usize(fake_logits.len());
    let d_real = real_logits.mapv(|l| -(T::one() - sigmoid_scalar(l)) / n_r);
    let d_fake = fake_logits.mapv(|l| sigmoid_scalar(l) / n_f);
    (d_real, d_fake)
}

/// d/d logits of the generator's saturating fake term `mean log(1-sigma(l))`.
pub fn g_adv_logit_grad<T: Real>(fake_logits: &Array3<T>) -> Array3<T> {
    let n = T::of_usize(fake_logits.len());
    fake_logits.mapv(|l| -sigmoid_scalar(l) / n)
}

/// d/d refined of `lambda1 * L1(real, refined)` (sign subgradient).
pub fn l1_grad<T: Real>(refined: &Array3<T>, real_frame: &Array3<T>, lambda1: T) -> Array3<T> {
    let n = T::of_usize(refined.len());
    let mut g = refined.clone();
    g.zip_mut_with(real_frame, |o, &t| {
        *o = if *o > t {
            lambda1 / n
        } else if *o < t {
            -lambda1 / n
        } else {
            T::zero()
        };
    });
    g
}

/// d/d mask of `lambda2 * rms(mask) + lambda3 * tv(mask)`.
pub fn mask_grad<T: Real>(attention: &Array3<T>, lambda2: T, lambda3: T) -> Array3<T> {
    let (_, h, w) = attention.dim();
    let n = T::of_usize(attention.len());
    let rms = mask_magnitude(attention);
    let mut g = if rms > T::of(1e-12) {
        attention.mapv(|v| lambda2 * v / (n * rms))
    } else {
        Array3::zeros(attention.dim())
    };
    let two = T::of(2.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            if y + 1 < h {
                acc -= two * (attention[[0, y + 1, x]] - attention[[0, y, x]]);
            }
            if y > 0 {
                acc += two * (attention[[0, y, x]] - attention[[0, y - 1, x]]);
            }
            if x + 1 < w {
                acc -= two * (attention[[0, y, x + 1]] - attention[[0, y, x]]);
            }
            if x > 0 {
                acc += two * (attention[[0, y, x]] - attention[[0, y, x - 1]]);
            }
            g[[0, y, x]] += lambda3 * acc;
        }
    }
    g
}
