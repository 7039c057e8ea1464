//! Run configuration: a flat key-value text file plus programmatic defaults.
//!
//! Format: one `key = value` pair per line, `#` comments. The
//! `TALKINGHEAD_DATA` environment variable overrides `data_root`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::face3d::SyntheticBasisConfig;
use crate::refinegan::GanConfig;

use super::corpus::CorpusSpec;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub run_name: String,
    pub seed: u64,

    pub corpus: CorpusSpec,

    /// MFCC context window (ms); the desk-scale default keeps feature rows
    /// narrow so toy training stays fast.
    pub mfcc_context_ms: f64,
    pub mfcc_cepstra: usize,

    pub mapper_encoder_dim: usize,
    pub mapper_hidden_dim: usize,
    pub general_epochs: usize,
    pub general_lr: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    /// Frames of the target video used for personalization.
    pub finetune_frames: usize,

    pub gan: GanConfig,
    pub gan_epochs: usize,
    /// Frames per identity held out from GAN training for evaluation.
    pub gan_holdout: usize,

    /// Identity index acting as the target person.
    pub target_identity: usize,
    /// Identity index whose audio drives generation; equal to the target for
    /// self-reenactment evaluation.
    pub source_identity: usize,

    /// Keyframe window in seconds.
    pub keyframe_window_secs: f64,
    /// Blend weight pulling render poses toward matched-background poses.
    pub pose_blend: f64,

    pub use_finetune: bool,
    pub use_refiner: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_root: PathBuf::from("data"),
            run_name: "run".into(),
            seed: 7,
            corpus: CorpusSpec::default(),
            mfcc_context_ms: 40.0,
            mfcc_cepstra: 13,
            mapper_encoder_dim: 64,
            mapper_hidden_dim: 32,
            general_epochs: 60,
            general_lr: 1e-3,
            finetune_epochs: 80,
            finetune_lr: 5e-4,
            finetune_frames: 300,
            gan: GanConfig {
                gen_depth: 3,
                gen_base: 8,
                disc_base: 8,
                enc_base: 4,
                feature_dim: 16,
                spatial_dim: 16,
                capacity: 64,
                ..GanConfig::default()
            },
            gan_epochs: 3,
            gan_holdout: 20,
            target_identity: 0,
            source_identity: 0,
            keyframe_window_secs: 1.0,
            pose_blend: 0.5,
            use_finetune: true,
            use_refiner: true,
        }
    }
}

impl RunConfig {
    /// Apply the `TALKINGHEAD_DATA` override and derive seeded sub-configs.
    pub fn finalize(mut self) -> Self {
        if let Ok(root) = std::env::var("TALKINGHEAD_DATA") {
            if !root.is_empty() {
                self.data_root = PathBuf::from(root);
            }
        }
        self.corpus.seed = self.seed;
        self.corpus.basis.seed = self.seed.wrapping_add(0xba5e);
        self.gan.seed = self.seed.wrapping_add(0x9a7);
        self
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.data_root.join("corpus")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.data_root.join("runs").join(&self.run_name)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.run_dir().join("checkpoints")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::format(format!(
                    "config line {}: expected `key = value`, got `{raw}`",
                    n + 1
                )));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_map(&map)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let parse_err = |k: &str, v: &str| Error::format(format!("config key `{k}`: bad value `{v}`"));
        for (key, value) in map {
            match key.as_str() {
                "data_root" => cfg.data_root = PathBuf::from(value),
                "run_name" => cfg.run_name = value.clone(),
                "seed" => cfg.seed = value.parse().map_err(|_| parse_err(key, value))?,
                "corpus.identities" => {
                    cfg.corpus.identities = value.parse().map_err(|_| parse_err(key, value))?
                }
                "corpus.frames" => {
                    cfg.corpus.frames_per_identity =
                        value.parse().map_err(|_| parse_err(key, value))?
                }
                "corpus.frame_rate" => {
                    cfg.corpus.frame_rate = value.parse().map_err(|_| parse_err(key, value))?
                }
                "corpus.image_size" => {
                    cfg.corpus.image_size = value.parse().map_err(|_| parse_err(key, value))?
                }
                "corpus.detail_amplitude" => {
                    cfg.corpus.detail_amplitude =
                        value.parse().map_err(|_| parse_err(key, value))?
                }
                "corpus.noise_scale" => {
                    cfg.corpus.noise_scale = value.parse().map_err(|_| parse_err(key, value))?
                }
                "basis.subdivisions" => {
                    cfg.corpus.basis.subdivisions =
                        value.parse().map_err(|_| parse_err(key, value))?
                }
                "basis.dim_id" => {
                    cfg.corpus.basis.dim_id = value.parse().map_err(|_| parse_err(key, value))?
                }
                "basis.dim_exp" => {
                    cfg.corpus.basis.dim_exp = value.parse().map_err(|_| parse_err(key, value))?
                }
                "basis.dim_tex" => {
                    cfg.corpus.basis.dim_tex = value.parse().map_err(|_| parse_err(key, value))?
                }
                "mfcc.context_ms" => {
                    cfg.mfcc_context_ms = value.parse().map_err(|_| parse_err(key, value))?
                }
                "mfcc.cepstra" => {
                    cfg.mfcc_cepstra = value.parse().map_err(|_| parse_err(key, value))?
                }
                "mapper.encoder_dim" => {
                    cfg.mapper_encoder_dim = value.parse().map_err(|_| parse_err(key, value))?
                }
                "mapper.hidden_dim" => {
                    cfg.mapper_hidden_dim = value.parse().map_err(|_| parse_err(key, value))?
                }
                "mapper.general_epochs" => {
                    cfg.general_epochs = value.parse().map_err(|_| parse_err(key, value))?
                }
                "mapper.general_lr" => {
                    cfg.general_lr = value.parse().map_err(|_| parse_err(key, value))?
                }
                "mapper.finetune_epochs" => {
                    cfg.finetune_epochs = value.parse().map_err(|_| parse_err(key, value))?
                }
                "mapper.finetune_lr" => {
                    cfg.finetune_lr = value.parse().map_err(|_| parse_err(key, value))?
                }
                "mapper.finetune_frames" => {
                    cfg.finetune_frames = value.parse().map_err(|_| parse_err(key, value))?
                }
                "gan.epochs" => cfg.gan_epochs = value.parse().map_err(|_| parse_err(key, value))?,
                "gan.holdout" => {
                    cfg.gan_holdout = value.parse().map_err(|_| parse_err(key, value))?
                }
                "gan.depth" => {
                    cfg.gan.gen_depth = value.parse().map_err(|_| parse_err(key, value))?
                }
                "gan.base" => cfg.gan.gen_base = value.parse().map_err(|_| parse_err(key, value))?,
                "gan.capacity" => {
                    cfg.gan.capacity = value.parse().map_err(|_| parse_err(key, value))?
                }
                "target_identity" => {
                    cfg.target_identity = value.parse().map_err(|_| parse_err(key, value))?
                }
                "source_identity" => {
                    cfg.source_identity = value.parse().map_err(|_| parse_err(key, value))?
                }
                "keyframe_window_secs" => {
                    cfg.keyframe_window_secs = value.parse().map_err(|_| parse_err(key, value))?
                }
                "pose_blend" => cfg.pose_blend = value.parse().map_err(|_| parse_err(key, value))?,
                "use_finetune" => {
                    cfg.use_finetune = value.parse().map_err(|_| parse_err(key, value))?
                }
                "use_refiner" => {
                    cfg.use_refiner = value.parse().map_err(|_| parse_err(key, value))?
                }
                other => {
                    return Err(Error::format(format!("unknown config key `{other}`")));
                }
            }
        }
        Ok(cfg)
    }

    pub fn basis_config(&self) -> SyntheticBasisConfig {
        self.corpus.basis.clone()
    }
}
