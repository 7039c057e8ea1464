//! GAN training loop and frozen-model inference.
//!
//! Per training sample: (1) the memory bank is written with the (spatial,
//! identity) pair and the threshold triplet loss updates the spatial
//! encoder, (2) one discriminator step, (3) one generator step (generator,
//! AdaIN MLP, and identity encoder together).

use ndarray::{s, Array3};

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig};
use crate::num::Real;

use super::loss::{d_loss_logit_grads, g_adv_logit_grad, gan_loss, l1_grad, mask_grad};
use super::memory::{smooth_retrieved, MemoryBank};
use super::{GanModel, GeneratorOutput};

/// One paired training frame: a window of rendered frames and the matching
/// ground-truth frame, both channel-first.
#[derive(Clone, Debug)]
pub struct GanSample<T> {
    /// (3 * window_frames, H, W).
    pub window: Array3<T>,
    /// (3, H, W).
    pub real: Array3<T>,
}

#[derive(Clone, Debug, Default)]
pub struct GanTrainReport<T> {
    pub generator_losses: Vec<T>,
    pub discriminator_losses: Vec<T>,
    pub triplet_losses: Vec<T>,
}

/// Train the model and memory bank over a paired corpus.
pub fn train<T: Real>(
    model: &mut GanModel<T>,
    bank: &mut MemoryBank<T>,
    corpus: &[GanSample<T>],
    epochs: usize,
) -> Result<GanTrainReport<T>> {
    if corpus.is_empty() {
        return Err(Error::invalid("gan training corpus is empty"));
    }
    let weights = model.cfg.loss_weights::<T>();
    let tau = T::of(model.cfg.tau);
    let margin = T::of(model.cfg.margin);
    let mut opt_g = Adam::new(AdamConfig::with_lr(T::of(model.cfg.lr_g)));
    let mut opt_d = Adam::new(AdamConfig::with_lr(T::of(model.cfg.lr_d)));
    let mut opt_spat = Adam::new(AdamConfig::with_lr(T::of(model.cfg.lr_enc)));
    let mut opt_iden = Adam::new(AdamConfig::with_lr(T::of(model.cfg.lr_enc)));

    let mut report = GanTrainReport::default();
    for epoch in 0..epochs {
        let snapshot = model.clone();
        let bank_snapshot = bank.clone();
        let mut g_sum = T::zero();
        let mut d_sum = T::zero();
        let mut t_sum = T::zero();
        for sample in corpus {
            let r_t = current_frame(model, &sample.window);

            // (1) Memory write + triplet loss on the spatial encoder.
            let (q, q_cache) = model.spatial_encoder.forward(&r_t)?;
            let (v, _) = model.identity_encoder.forward(&sample.real)?;
            bank.update(&q, &v, tau)?;
            let (t_loss, dq) = bank.threshold_triplet_loss(&q, &v, tau, margin);
            t_sum += t_loss;
            if t_loss > T::zero() {
                let grads = model.spatial_encoder.backward(&q_cache, &dq);
                if grads.has_nan() {
                    return abort(model, bank, snapshot, bank_snapshot, epoch);
                }
                let mut params = model.spatial_encoder.params_mut();
                opt_spat.step(&mut params, &grads);
            }

            // (2) Discriminator step on (real, fake) with the fake detached.
            let (fake_detached, _) = model.generator.forward(&sample.window, &v)?;
            let (real_logits, real_cache) =
                model.discriminator.forward(&sample.window, &sample.real)?;
            let (fake_logits, fake_cache) = model
                .discriminator
                .forward(&sample.window, &fake_detached.refined)?;
            let (g_loss_val, d_loss_val) = gan_loss(
                &real_logits,
                &fake_logits,
                &fake_detached.refined,
                &sample.real,
                &fake_detached.attention,
                &weights,
            );
            if !g_loss_val.is_finite() || !d_loss_val.is_finite() {
                return abort(model, bank, snapshot, bank_snapshot, epoch);
            }
            g_sum += g_loss_val;
            d_sum += d_loss_val;
            let (d_real_logits, d_fake_logits) = d_loss_logit_grads(&real_logits, &fake_logits);
            let (_, _, mut d_grads) = model.discriminator.backward(&real_cache, &d_real_logits);
            let (_, _, d_grads_fake) = model.discriminator.backward(&fake_cache, &d_fake_logits);
            d_grads.add_scaled(&d_grads_fake, T::one());
            if d_grads.has_nan() {
                return abort(model, bank, snapshot, bank_snapshot, epoch);
            }
            let mut params = model.discriminator.params_mut();
            opt_d.step(&mut params, &d_grads);

            // (3) Generator step (through the updated discriminator).
            let (v2, iden_cache) = model.identity_encoder.forward(&sample.real)?;
            let (out, gen_cache) = model.generator.forward(&sample.window, &v2)?;
            let (adv_logits, adv_cache) =
                model.discriminator.forward(&sample.window, &out.refined)?;
            let d_adv = g_adv_logit_grad(&adv_logits);
            let (_, d_refined_adv, _) = model.discriminator.backward(&adv_cache, &d_adv);
            let mut d_refined = l1_grad(&out.refined, &sample.real, weights.lambda1);
            d_refined += &d_refined_adv;
            let d_attention = mask_grad(&out.attention, weights.lambda2, weights.lambda3);
            let d_color = Array3::zeros(out.color.dim());
            let (g_grads, d_feature) =
                model
                    .generator
                    .backward(&gen_cache, &d_refined, &d_attention, &d_color);
            let iden_grads = model.identity_encoder.backward(&iden_cache, &d_feature);
            if g_grads.has_nan() || iden_grads.has_nan() {
                return abort(model, bank, snapshot, bank_snapshot, epoch);
            }
            let mut params = model.generator.params_mut();
            opt_g.step(&mut params, &g_grads);
            let mut params = model.identity_encoder.params_mut();
            opt_iden.step(&mut params, &iden_grads);
        }
        let n = T::of_usize(corpus.len());
        report.generator_losses.push(g_sum / n);
        report.discriminator_losses.push(d_sum / n);
        report.triplet_losses.push(t_sum / n);
    }
    Ok(report)
}

fn abort<T: Real, R>(
    model: &mut GanModel<T>,
    bank: &mut MemoryBank<T>,
    snapshot: GanModel<T>,
    bank_snapshot: MemoryBank<T>,
    epoch: usize,
) -> Result<R> {
    *model = snapshot;
    *bank = bank_snapshot;
    Err(Error::Diverged(format!(
        "gan loss became non-finite at epoch {epoch}; restored last good checkpoint"
    )))
}

fn current_frame<T: Real>(model: &GanModel<T>, window: &Array3<T>) -> Array3<T> {
    window
        .slice(s![3 * (model.cfg.window_frames - 1).., .., ..])
        .to_owned()
}

/// Inference over a frame sequence: retrieve identity features via the
/// memory bank, smooth them over adjacent frames, and generate.
pub fn refine_sequence<T: Real>(
    model: &GanModel<T>,
    bank: &MemoryBank<T>,
    windows: &[Array3<T>],
) -> Result<Vec<GeneratorOutput<T>>> {
    if windows.is_empty() {
        return Err(Error::invalid("no windows to refine"));
    }
    let mut features = Vec::with_capacity(windows.len());
    for window in windows {
        let r_t = current_frame(model, window);
        let (q, _) = model.spatial_encoder.forward(&r_t)?;
        features.push(bank.retrieve(&q)?);
    }
    let smoothed = smooth_retrieved(&features, model.cfg.smoothing_window)?;
    let mut outputs = Vec::with_capacity(windows.len());
    for (window, f) in windows.iter().zip(&smoothed) {
        let (out, _) = model.generator.forward(window, f)?;
        outputs.push(out);
    }
    Ok(outputs)
}
