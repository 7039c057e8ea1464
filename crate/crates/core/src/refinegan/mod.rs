//! Memory-augmented attention GAN that refines rendered frames into
//! realistic frames conditioned on identity features.

mod discriminator;
mod encoders;
mod generator;
mod loss;
mod memory;
mod train;

pub use discriminator::Discriminator;
pub use encoders::ConvEncoder;
pub use generator::{GenCache, Generator, GeneratorOutput};
pub use loss::{
    d_loss_logit_grads, g_adv_logit_grad, gan_loss, l1_grad, l1_term, mask_grad, mask_magnitude,
    mean_log_one_minus_sigmoid, mean_log_sigmoid, total_variation, GanLossWeights,
};
pub use memory::{smooth_retrieved, MemoryBank, MemorySlot, UpdateOutcome};
pub use train::{refine_sequence, train, GanSample, GanTrainReport};

use std::path::Path;

use ndarray::{s, Array1, Array3};

use crate::container::{ContainerReader, ContainerWriter};
use crate::error::{Error, Result};
use crate::nn::SeedStream;
use crate::num::Real;

/// Hyperparameters for the refinement GAN and its memory bank.
#[derive(Clone, Debug)]
pub struct GanConfig {
    /// Rendered frames per input window.
    pub window_frames: usize,
    pub gen_depth: usize,
    pub gen_base: usize,
    pub disc_downs: usize,
    pub disc_base: usize,
    pub enc_base: usize,
    /// Identity feature dimension D_f.
    pub feature_dim: usize,
    /// Spatial feature dimension D_s.
    pub spatial_dim: usize,
    /// Memory capacity K.
    pub capacity: usize,
    pub tau: f64,
    pub margin: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub lr_enc: f64,
    /// Temporal smoothing window for retrieved features.
    pub smoothing_window: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            window_frames: 3,
            gen_depth: 4,
            gen_base: 16,
            disc_downs: 2,
            disc_base: 16,
            enc_base: 8,
            feature_dim: 64,
            spatial_dim: 64,
            capacity: 512,
            tau: 0.5,
            margin: 0.2,
            lambda1: 100.0,
            lambda2: 2.0,
            lambda3: 1e-5,
            lr_g: 2e-4,
            lr_d: 2e-4,
            lr_enc: 2e-4,
            smoothing_window: 3,
            seed: 0x9a7,
        }
    }
}

impl GanConfig {
    /// Small configuration for tests and the desk-scale pipeline.
    pub fn toy() -> Self {
        GanConfig {
            gen_depth: 3,
            gen_base: 8,
            disc_base: 8,
            enc_base: 4,
            feature_dim: 16,
            spatial_dim: 16,
            capacity: 64,
            ..Default::default()
        }
    }

    pub fn loss_weights<T: Real>(&self) -> GanLossWeights<T> {
        GanLossWeights {
            lambda1: T::of(self.lambda1),
            lambda2: T::of(self.lambda2),
            lambda3: T::of(self.lambda3),
        }
    }
}

/// Generator, discriminator, and the two stand-in feature encoders.
#[derive(Clone, Debug)]
pub struct GanModel<T> {
    pub cfg: GanConfig,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub spatial_encoder: ConvEncoder<T>,
    pub identity_encoder: ConvEncoder<T>,
}

impl<T: Real> GanModel<T> {
    pub fn new(cfg: GanConfig) -> Self {
        let mut seeds = SeedStream::new(cfg.seed);
        let generator = Generator::new(
            cfg.window_frames,
            cfg.gen_depth,
            cfg.gen_base,
            cfg.feature_dim,
            &mut seeds,
        );
        let discriminator =
            Discriminator::new(cfg.window_frames, cfg.disc_downs, cfg.disc_base, &mut seeds);
        let spatial_encoder = ConvEncoder::new(cfg.enc_base, cfg.spatial_dim, &mut seeds);
        let identity_encoder = ConvEncoder::new(cfg.enc_base, cfg.feature_dim, &mut seeds);
        GanModel {
            cfg,
            generator,
            discriminator,
            spatial_encoder,
            identity_encoder,
        }
    }

    pub fn empty_bank(&self) -> MemoryBank<T> {
        MemoryBank::new(self.cfg.capacity, self.cfg.spatial_dim, self.cfg.feature_dim)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({
            "window_frames": self.cfg.window_frames,
            "gen_depth": self.cfg.gen_depth,
            "gen_base": self.cfg.gen_base,
            "disc_downs": self.cfg.disc_downs,
            "disc_base": self.cfg.disc_base,
            "enc_base": self.cfg.enc_base,
            "feature_dim": self.cfg.feature_dim,
            "spatial_dim": self.cfg.spatial_dim,
            "capacity": self.cfg.capacity,
            "tau": self.cfg.tau,
            "margin": self.cfg.margin,
            "seed": self.cfg.seed,
        });
        let mut w = ContainerWriter::new("gan-checkpoint").meta(meta);
        for (prefix, params) in [
            ("gen", self.generator.params()),
            ("disc", self.discriminator.params()),
            ("spat", self.spatial_encoder.params()),
            ("iden", self.identity_encoder.params()),
        ] {
            for (i, slice) in params.iter().enumerate() {
                w.push_real(format!("{prefix}_{i:03}"), &[slice.len()], slice);
            }
        }
        w.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = ContainerReader::open(path)?;
        if r.kind() != "gan-checkpoint" {
            return Err(Error::format(format!("expected gan-checkpoint, got {}", r.kind())));
        }
        let m = r.meta();
        let geti = |k: &str| m[k].as_u64().unwrap_or(0) as usize;
        let getf = |k: &str| m[k].as_f64().unwrap_or(0.0);
        let cfg = GanConfig {
            window_frames: geti("window_frames"),
            gen_depth: geti("gen_depth"),
            gen_base: geti("gen_base"),
            disc_downs: geti("disc_downs"),
            disc_base: geti("disc_base"),
            enc_base: geti("enc_base"),
            feature_dim: geti("feature_dim"),
            spatial_dim: geti("spatial_dim"),
            capacity: geti("capacity"),
            tau: getf("tau"),
            margin: getf("margin"),
            seed: m["seed"].as_u64().unwrap_or(0),
            ..Default::default()
        };
        let mut model = GanModel::new(cfg);
        for (prefix, params) in [
            ("gen", model.generator.params_mut()),
            ("disc", model.discriminator.params_mut()),
            ("spat", model.spatial_encoder.params_mut()),
            ("iden", model.identity_encoder.params_mut()),
        ] {
            for (i, slot) in params.into_iter().enumerate() {
                let data = r.real_array::<T>(&format!("{prefix}_{i:03}"))?;
                if data.len() != slot.len() {
                    return Err(Error::format(format!(
                        "checkpoint array {prefix}_{i:03} length mismatch"
                    )));
                }
                slot.copy_from_slice(&data);
            }
        }
        Ok(model)
    }
}

/// Persist a memory bank alongside a model checkpoint.
pub fn save_bank<T: Real>(bank: &MemoryBank<T>, path: impl AsRef<Path>) -> Result<()> {
    let meta = serde_json::json!({ "capacity": bank.capacity(), "len": bank.len() });
    let mut w = ContainerWriter::new("memory-bank").meta(meta);
    let slots = bank.slots();
    if !slots.is_empty() {
        let kd = slots[0].key.len();
        let vd = slots[0].value.len();
        let keys: Vec<T> = slots.iter().flat_map(|s| s.key.iter().copied()).collect();
        let values: Vec<T> = slots.iter().flat_map(|s| s.value.iter().copied()).collect();
        let ages: Vec<i32> = slots.iter().map(|s| s.age as i32).collect();
        w.push_real("keys", &[slots.len(), kd], &keys);
        w.push_real("values", &[slots.len(), vd], &values);
        w.push_i32("ages", &[slots.len()], ages);
    }
    w.write(path)
}

pub fn load_bank<T: Real>(path: impl AsRef<Path>, key_dim: usize, value_dim: usize) -> Result<MemoryBank<T>> {
    let r = ContainerReader::open(path)?;
    if r.kind() != "memory-bank" {
        return Err(Error::format(format!("expected memory-bank, got {}", r.kind())));
    }
    let capacity = r.meta()["capacity"].as_u64().unwrap_or(0) as usize;
    let len = r.meta()["len"].as_u64().unwrap_or(0) as usize;
    let mut bank = MemoryBank::new(capacity, key_dim, value_dim);
    if len == 0 {
        return Ok(bank);
    }
    let keys = r.real_array::<T>("keys")?;
    let values = r.real_array::<T>("values")?;
    let ages = r.i32_array("ages")?;
    bank.restore_slots(
        keys.chunks_exact(key_dim)
            .zip(values.chunks_exact(value_dim))
            .zip(&ages)
            .map(|((k, v), &a)| MemorySlot {
                key: Array1::from_vec(k.to_vec()),
                value: Array1::from_vec(v.to_vec()),
                age: a as u64,
            })
            .collect(),
    )?;
    Ok(bank)
}

/// (H, W, 3) image to (3, H, W) tensor.
pub fn hwc_to_chw<T: Real>(image: &Array3<T>) -> Array3<T> {
    let (h, w, c) = image.dim();
    Array3::from_shape_fn((c, h, w), |(ci, y, x)| image[[y, x, ci]])
}

/// (3, H, W) tensor to (H, W, 3) image.
pub fn chw_to_hwc<T: Real>(tensor: &Array3<T>) -> Array3<T> {
    let (c, h, w) = tensor.dim();
    Array3::from_shape_fn((h, w, c), |(y, x, ci)| tensor[[ci, y, x]])
}

/// Stack a window of (3, H, W) frames ending at index `t`, replicating the
/// first frame at the sequence start.
pub fn build_window<T: Real>(frames: &[Array3<T>], t: usize, window_frames: usize) -> Array3<T> {
    let (_, h, w) = frames[0].dim();
    let mut out = Array3::<T>::zeros((3 * window_frames, h, w));
    for k in 0..window_frames {
        let offset = (window_frames - 1) - k;
        let src = t.saturating_sub(offset);
        out.slice_mut(s![3 * k..3 * (k + 1), .., ..])
            .assign(&frames[src]);
    }
    out
}
