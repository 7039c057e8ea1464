//! Synthetic paired corpus: seeded multi-sine audio whose band envelopes
//! drive expression and pose through a fixed, versioned map; rendered frames
//! plus "real" frames carrying identity-keyed high-frequency detail.
//!
//! The motion map is deliberately slow (envelope bandwidth well under the
//! frame rate) so inter-frame continuity terms stay small relative to the
//! prediction error of an untrained mapper.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::audiofeat::{write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::face3d::{save_basis, CoefficientSet, FaceBasis, Pose, SyntheticBasisConfig};
use crate::num::Real;
use crate::renderpipe::{render_coefficients, save_png, RenderedFrame};
use crate::tables::{read_matrix_csv, read_pose_csv, write_matrix_csv, write_pose_csv};
use crate::Camera64;

/// Sine carrier frequencies of the synthetic audio bands.
const BAND_FREQS: [f64; 4] = [220.0, 440.0, 880.0, 1760.0];
const AUDIO_SAMPLE_RATE: u32 = 16_000;

/// Corpus layout and generation parameters. The seed pins the corpus
/// bit-exactly: regenerating with the same spec writes identical bytes.
#[derive(Clone, Debug)]
pub struct CorpusSpec {
    pub identities: usize,
    pub frames_per_identity: usize,
    pub frame_rate: f64,
    pub image_size: usize,
    pub seed: u64,
    /// Amplitude of the identity-keyed detail added to "real" frames.
    pub detail_amplitude: f64,
    /// Amplitude of the low-pass noise added to expression/pose targets.
    pub noise_scale: f64,
    pub basis: SyntheticBasisConfig,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            identities: 2,
            frames_per_identity: 300,
            frame_rate: 25.0,
            image_size: 32,
            seed: 7,
            detail_amplitude: 0.12,
            noise_scale: 0.04,
            basis: SyntheticBasisConfig::default(),
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.identities == 0 || self.frames_per_identity == 0 || self.image_size == 0 {
            return Err(Error::config("corpus counts must be positive"));
        }
        if self.frame_rate <= 0.0 {
            return Err(Error::config("frame rate must be positive"));
        }
        Ok(())
    }

    pub fn camera(&self) -> Camera64 {
        // Focal chosen so the unit head at depth ~4.2 fills most of the frame.
        Camera64::centered(1.6 * self.image_size as f64, self.image_size)
    }
}

/// Fixed versioned map from 4 envelope bands to motion channels. Changing
/// these constants invalidates recorded regression baselines, so they are
/// spelled out rather than sampled.
const EXPRESSION_MAP: [[f64; 4]; 6] = [
    [1.1, -0.4, 0.2, 0.3],
    [-0.5, 0.9, 0.5, -0.2],
    [0.3, 0.6, -1.0, 0.4],
    [0.2, -0.3, 0.7, 0.9],
    [-0.8, 0.2, 0.4, -0.6],
    [0.4, 0.7, -0.3, -0.9],
];
const POSE_MAP: [[f64; 4]; 3] = [
    [0.9, -0.6, 0.3, 0.1],
    [-0.4, 1.0, -0.2, 0.5],
    [0.3, 0.2, 0.8, -0.7],
];

/// Per-identity ground truth kept in memory after generation or loading.
#[derive(Clone, Debug)]
pub struct IdentityData {
    pub alpha: Array1<f64>,
    pub delta: Array1<f64>,
    pub gamma: Array1<f64>,
    /// T x D_exp expression trajectory.
    pub beta: Array2<f64>,
    pub poses: Vec<Pose<f64>>,
    pub audio: AudioClip<f64>,
    pub dir: PathBuf,
}

impl IdentityData {
    pub fn frames(&self) -> usize {
        self.beta.nrows()
    }

    pub fn coefficients(&self, t: usize) -> CoefficientSet<f64> {
        CoefficientSet {
            alpha: self.alpha.clone(),
            beta: self.beta.row(t).to_owned(),
            delta: self.delta.clone(),
            gamma: self.gamma.clone(),
            pose: self.poses[t],
        }
    }

    pub fn rendered_frame_path(&self, t: usize) -> PathBuf {
        self.dir.join(format!("rendered/frame_{t:06}.png"))
    }

    pub fn real_frame_path(&self, t: usize) -> PathBuf {
        self.dir.join(format!("real/frame_{t:06}.png"))
    }
}

pub struct Corpus {
    pub spec_meta: serde_json::Value,
    pub basis: FaceBasis<f64>,
    pub identities: Vec<IdentityData>,
    pub frame_rate: f64,
    pub image_size: usize,
    pub root: PathBuf,
}

/// Slowly varying envelope in [0, 1]: two seeded sinusoids through a tanh.
fn envelope(rng: &mut ChaCha12Rng, frames: usize) -> Vec<f64> {
    let w1: f64 = rng.gen_range(0.015..0.05);
    let w2: f64 = rng.gen_range(0.02..0.06);
    let p1: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let p2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let a1: f64 = rng.gen_range(0.6..1.0);
    let a2: f64 = rng.gen_range(0.3..0.7);
    (0..frames)
        .map(|t| {
            let x = a1 * (w1 * t as f64 + p1).sin() + a2 * (w2 * t as f64 + p2).sin();
            0.5 * (1.0 + x.tanh())
        })
        .collect()
}

/// Box-smoothed noise track with the given amplitude.
fn lowpass_noise(rng: &mut ChaCha12Rng, frames: usize, amplitude: f64) -> Vec<f64> {
    let white: Vec<f64> = (0..frames).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let half = 4usize;
    (0..frames)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(frames - 1);
            let mean: f64 = white[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            amplitude * mean
        })
        .collect()
}

pub struct IdentityMotion {
    pub envelopes: Vec<Vec<f64>>,
    pub beta: Array2<f64>,
    pub poses: Vec<Pose<f64>>,
}

/// The fixed audio-envelope-to-motion function, personalized by per-identity
/// pose bias and scale.
pub fn motion_from_envelopes(
    envelopes: &[Vec<f64>],
    dim_exp: usize,
    pose_bias: [f64; 3],
    pose_scale: [f64; 3],
    noise_beta: &[Vec<f64>],
    noise_pose: &[Vec<f64>],
) -> (Array2<f64>, Vec<Pose<f64>>) {
    let frames = envelopes[0].len();
    let mut beta = Array2::<f64>::zeros((frames, dim_exp));
    let mut poses = Vec::with_capacity(frames);
    for t in 0..frames {
        let e: Vec<f64> = envelopes.iter().map(|band| 2.0 * (band[t] - 0.5)).collect();
        for d in 0..dim_exp {
            let row = EXPRESSION_MAP[d % EXPRESSION_MAP.len()];
            let mut acc = 0.0;
            for k in 0..4 {
                acc += row[k] * e[k];
            }
            beta[[t, d]] = 0.35 * acc.tanh() + noise_beta[d % noise_beta.len()][t];
        }
        let mut angles = [0.0f64; 3];
        for a in 0..3 {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += POSE_MAP[a][k] * e[k];
            }
            angles[a] = pose_bias[a] + pose_scale[a] * 0.20 * acc.tanh() + noise_pose[a][t];
        }
        poses.push(Pose::new(angles, [0.0, 0.0, 4.2]));
    }
    (beta, poses)
}

/// Identity-keyed procedural detail pattern added inside the face mask.
pub fn detail_pattern(
    rng: &mut ChaCha12Rng,
    size: usize,
    amplitude: f64,
) -> Array3<f64> {
    let kx: f64 = rng.gen_range(2.0..6.0);
    let ky: f64 = rng.gen_range(2.0..6.0);
    let phases: [f64; 3] = [
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
    ];
    let kx2: f64 = rng.gen_range(3.0..8.0);
    Array3::from_shape_fn((size, size, 3), |(y, x, c)| {
        let u = x as f64 / size as f64;
        let v = y as f64 / size as f64;
        let s = (std::f64::consts::TAU * (kx * u + ky * v) + phases[c]).sin()
            + 0.5 * (std::f64::consts::TAU * kx2 * (u - v)).cos();
        amplitude * 0.5 * s
    })
}

fn apply_detail(frame: &RenderedFrame<f64>, pattern: &Array3<f64>) -> Array3<f64> {
    let (h, w, _) = frame.image.dim();
    let mut out = frame.image.clone();
    for y in 0..h {
        for x in 0..w {
            if frame.mask[[y, x]] {
                for c in 0..3 {
                    out[[y, x, c]] = (out[[y, x, c]] + pattern[[y, x, c]]).clamp(0.0, 1.0);
                }
            }
        }
    }
    out
}

fn synthesize_audio(envelopes: &[Vec<f64>], frames: usize, frame_rate: f64) -> AudioClip<f64> {
    let sr = AUDIO_SAMPLE_RATE as f64;
    let total = (frames as f64 / frame_rate * sr).round() as usize;
    let mut samples = vec![0.0f64; total];
    for (k, env) in envelopes.iter().enumerate() {
        let freq = BAND_FREQS[k];
        for (i, s) in samples.iter_mut().enumerate() {
            let t_sec = i as f64 / sr;
            // Envelope linearly interpolated between video-frame samples.
            let pos = (t_sec * frame_rate).min((frames - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(frames - 1);
            let frac = pos - lo as f64;
            let e = env[lo] * (1.0 - frac) + env[hi] * frac;
            *s += 0.2 * e * (std::f64::consts::TAU * freq * t_sec).sin();
        }
    }
    AudioClip {
        samples,
        sample_rate: AUDIO_SAMPLE_RATE,
    }
}

/// Deterministic per-identity generation inputs, all derived from the spec
/// seed so every identity regenerates bit-identically.
pub struct IdentityParams {
    pub alpha: Array1<f64>,
    pub delta: Array1<f64>,
    pub gamma: Array1<f64>,
    pub pose_bias: [f64; 3],
    pub pose_scale: [f64; 3],
}

fn identity_params(rng: &mut ChaCha12Rng, basis: &FaceBasis<f64>) -> IdentityParams {
    let gauss = |rng: &mut ChaCha12Rng| -> f64 {
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let alpha = Array1::from_shape_fn(basis.dim_id(), |_| 0.15 * gauss(rng));
    let delta = Array1::from_shape_fn(basis.dim_tex(), |_| 0.2 * gauss(rng));
    let mut gamma = Array1::<f64>::zeros(27);
    for c in 0..3 {
        gamma[c * 9] = rng.gen_range(2.3..2.7); // ambient
        gamma[c * 9 + 2] = rng.gen_range(-0.25..0.25); // z band
        gamma[c * 9 + 3] = rng.gen_range(-0.15..0.15); // x band
    }
    let pose_bias = [
        rng.gen_range(-0.12..0.12),
        rng.gen_range(-0.12..0.12),
        rng.gen_range(-0.08..0.08),
    ];
    let pose_scale = [
        rng.gen_range(0.6..1.4),
        rng.gen_range(0.6..1.4),
        rng.gen_range(0.6..1.4),
    ];
    IdentityParams {
        alpha,
        delta,
        gamma,
        pose_bias,
        pose_scale,
    }
}

/// Generate the paired corpus on disk and return it in memory.
pub fn synthesize_corpus(spec: &CorpusSpec, root: impl AsRef<Path>) -> Result<Corpus> {
    spec.validate()?;
    let root = root.as_ref().to_path_buf();
    std::fs::create_dir_all(&root)?;

    let basis: FaceBasis<f64> = spec.basis.build();
    save_basis(&basis, root.join("basis.bin"))?;
    let camera = spec.camera();

    let spec_meta = serde_json::json!({
        "identities": spec.identities,
        "frames_per_identity": spec.frames_per_identity,
        "frame_rate": spec.frame_rate,
        "image_size": spec.image_size,
        "seed": spec.seed,
        "detail_amplitude": spec.detail_amplitude,
        "noise_scale": spec.noise_scale,
        "basis_subdivisions": spec.basis.subdivisions,
        "dim_id": basis.dim_id(),
        "dim_exp": basis.dim_exp(),
        "dim_tex": basis.dim_tex(),
    });
    std::fs::write(
        root.join("corpus.json"),
        serde_json::to_string_pretty(&spec_meta).map_err(|e| Error::format(e.to_string()))?,
    )?;

    let mut identities = Vec::with_capacity(spec.identities);
    for id in 0..spec.identities {
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9).wrapping_add(id as u64));
        let params = identity_params(&mut rng, &basis);
        let frames = spec.frames_per_identity;

        let envelopes: Vec<Vec<f64>> = (0..4).map(|_| envelope(&mut rng, frames)).collect();
        let noise_beta: Vec<Vec<f64>> = (0..basis.dim_exp())
            .map(|_| lowpass_noise(&mut rng, frames, spec.noise_scale))
            .collect();
        let noise_pose: Vec<Vec<f64>> = (0..3)
            .map(|_| lowpass_noise(&mut rng, frames, spec.noise_scale * 0.5))
            .collect();
        let (beta, poses) = motion_from_envelopes(
            &envelopes,
            basis.dim_exp(),
            params.pose_bias,
            params.pose_scale,
            &noise_beta,
            &noise_pose,
        );
        let audio = synthesize_audio(&envelopes, frames, spec.frame_rate);
        let pattern = detail_pattern(&mut rng, spec.image_size, spec.detail_amplitude);

        let dir = root.join(format!("id_{id:03}"));
        std::fs::create_dir_all(dir.join("rendered"))?;
        std::fs::create_dir_all(dir.join("real"))?;
        write_wav(&audio, dir.join("audio.wav"))?;
        write_matrix_csv(
            &params.alpha.clone().insert_axis(ndarray::Axis(0)),
            "a",
            dir.join("alpha.csv"),
        )?;
        write_matrix_csv(
            &params.delta.clone().insert_axis(ndarray::Axis(0)),
            "d",
            dir.join("delta.csv"),
        )?;
        write_matrix_csv(
            &params.gamma.clone().insert_axis(ndarray::Axis(0)),
            "g",
            dir.join("gamma.csv"),
        )?;
        write_matrix_csv(&beta, "b", dir.join("beta.csv"))?;
        write_pose_csv(&poses, dir.join("pose.csv"))?;

        let identity = IdentityData {
            alpha: params.alpha,
            delta: params.delta,
            gamma: params.gamma,
            beta,
            poses,
            audio,
            dir: dir.clone(),
        };
        for t in 0..frames {
            let coeffs = identity.coefficients(t);
            let frame = render_coefficients(&basis, &coeffs, &camera, None)?;
            save_png(&frame.image, identity.rendered_frame_path(t))?;
            let real = apply_detail(&frame, &pattern);
            save_png(&real, identity.real_frame_path(t))?;
        }
        identities.push(identity);
    }

    Ok(Corpus {
        spec_meta,
        basis,
        identities,
        frame_rate: spec.frame_rate,
        image_size: spec.image_size,
        root,
    })
}

/// Load a corpus previously written by [`synthesize_corpus`].
pub fn load_corpus(root: impl AsRef<Path>) -> Result<Corpus> {
    let root = root.as_ref().to_path_buf();
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("corpus.json"))?)
            .map_err(|e| Error::format(format!("corpus.json: {e}")))?;
    let basis = crate::face3d::load_basis::<f64>(root.join("basis.bin"))?;
    let count = meta["identities"].as_u64().unwrap_or(0) as usize;
    let frame_rate = meta["frame_rate"].as_f64().unwrap_or(25.0);
    let image_size = meta["image_size"].as_u64().unwrap_or(32) as usize;

    let mut identities = Vec::with_capacity(count);
    for id in 0..count {
        let dir = root.join(format!("id_{id:03}"));
        let single_row = |name: &str| -> Result<Array1<f64>> {
            let m: Array2<f64> = read_matrix_csv(dir.join(name))?;
            Ok(m.row(0).to_owned())
        };
        let audio = crate::audiofeat::read_wav::<f64>(dir.join("audio.wav"))?;
        identities.push(IdentityData {
            alpha: single_row("alpha.csv")?,
            delta: single_row("delta.csv")?,
            gamma: single_row("gamma.csv")?,
            beta: read_matrix_csv(dir.join("beta.csv"))?,
            poses: read_pose_csv(dir.join("pose.csv"))?,
            audio,
            dir,
        });
    }
    Ok(Corpus {
        spec_meta: meta,
        basis,
        identities,
        frame_rate,
        image_size,
        root,
    })
}
