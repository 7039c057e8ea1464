//! The two-stage workflow: general training, personalized fine-tuning,
//! audio-driven generation, and evaluation.

use std::path::PathBuf;

use ndarray::{Array1, Array2, Array3};

use crate::audio2coef::{
    self, MapperConfig, RecurrentMapper, SequenceSample, TrainOptions, TrainReport,
};
use crate::audiofeat::{compute_mfcc, AudioFeatureSequence, MfccConfig};
use crate::error::{Error, Result};
use crate::evalmetrics::{
    audio_pose_correlation, hs_score, lmd, pose_histogram, psnr, ssim, Correlation,
};
use crate::face3d::{project, CoefficientSet, FaceBasis, Pose};
use crate::num::Real;
use crate::refinegan::{
    self, build_window, chw_to_hwc, hwc_to_chw, load_bank, save_bank, GanModel, GanSample,
    MemoryBank,
};
use crate::renderpipe::{
    composite, extract_detailed_albedo, interpolate_backgrounds, load_png, match_background,
    render_coefficients, save_png, select_keyframes, BackgroundPlate,
};
use crate::tables::{read_pose_csv, write_matrix_csv, write_pose_csv};

use super::config::RunConfig;
use super::corpus::{load_corpus, synthesize_corpus, Corpus, IdentityData};
use super::report::{MetricReport, MetricRow};

pub fn mfcc_config(cfg: &RunConfig) -> MfccConfig {
    MfccConfig {
        context_ms: cfg.mfcc_context_ms,
        cepstral_coeffs: cfg.mfcc_cepstra,
        ..MfccConfig::default()
    }
}

/// Generate the synthetic corpus under the configured data root.
pub fn prepare(cfg: &RunConfig) -> Result<Corpus> {
    synthesize_corpus(&cfg.corpus, cfg.corpus_dir())
}

/// Per-identity training sequences: MFCC features aligned with ground-truth
/// expression and pose trajectories.
pub fn build_sequence_samples(cfg: &RunConfig, corpus: &Corpus) -> Result<Vec<SequenceSample<f64>>> {
    let mfcc_cfg = mfcc_config(cfg);
    corpus
        .identities
        .iter()
        .map(|id| {
            let audio = compute_mfcc(&id.audio, &mfcc_cfg, corpus.frame_rate)?;
            let frames = audio.len().min(id.frames());
            let pose_gt = Array2::from_shape_fn((frames, 6), |(t, k)| id.poses[t].to_vec6()[k]);
            Ok(SequenceSample {
                audio: AudioFeatureSequence {
                    features: audio.features.slice(ndarray::s![..frames, ..]).to_owned(),
                    frame_rate: audio.frame_rate,
                },
                beta_gt: id.beta.slice(ndarray::s![..frames, ..]).to_owned(),
                pose_gt,
            })
        })
        .collect()
}

fn write_loss_csv<T: Real>(losses: &[T], path: PathBuf) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(out, "{},{}", i, l.as_f64())?;
    }
    Ok(())
}

pub struct GeneralTraining {
    pub mapper: RecurrentMapper<f64>,
    pub mapper_report: TrainReport<f64>,
    pub gan: GanModel<f64>,
    pub bank: MemoryBank<f64>,
}

/// Stage-1 + stage-2 general training on the corpus; checkpoints and loss
/// curves persist under the run directory.
pub fn train_general_stage(cfg: &RunConfig) -> Result<GeneralTraining> {
    let corpus = load_corpus(cfg.corpus_dir())?;
    let samples = build_sequence_samples(cfg, &corpus)?;
    if samples.is_empty() {
        return Err(Error::invalid("corpus has no identities"));
    }
    std::fs::create_dir_all(cfg.checkpoint_dir())?;
    std::fs::create_dir_all(cfg.run_dir().join("logs"))?;

    let mapper_cfg = MapperConfig {
        input_dim: samples[0].audio.dim(),
        encoder_dim: cfg.mapper_encoder_dim,
        hidden_dim: cfg.mapper_hidden_dim,
        expression_dim: corpus.basis.dim_exp(),
        seed: cfg.seed.wrapping_add(1),
    };
    let mut mapper = RecurrentMapper::new(mapper_cfg);
    let opts = TrainOptions {
        epochs: cfg.general_epochs,
        lr: cfg.general_lr,
        weights: Default::default(),
        standardize_pose: true,
    };
    let mapper_report = audio2coef::train_general(&mut mapper, &samples, &opts)?;
    mapper.save(cfg.checkpoint_dir().join("mapper_general.bin"))?;
    write_loss_csv(
        &mapper_report.epoch_losses,
        cfg.run_dir().join("logs/loss_general.csv"),
    )?;

    // Stage-2 refiner training on (rendered window, real frame) pairs.
    let mut gan = GanModel::<f64>::new(cfg.gan.clone());
    let mut bank = gan.empty_bank();
    let gan_corpus = build_gan_corpus(&corpus, cfg.gan_holdout, cfg.gan.window_frames)?;
    let gan_report = refinegan::train(&mut gan, &mut bank, &gan_corpus, cfg.gan_epochs)?;
    gan.save(cfg.checkpoint_dir().join("gan.bin"))?;
    save_bank(&bank, cfg.checkpoint_dir().join("bank.bin"))?;
    write_loss_csv(
        &gan_report.generator_losses,
        cfg.run_dir().join("logs/loss_gan_generator.csv"),
    )?;
    write_loss_csv(
        &gan_report.discriminator_losses,
        cfg.run_dir().join("logs/loss_gan_discriminator.csv"),
    )?;

    Ok(GeneralTraining {
        mapper,
        mapper_report,
        gan,
        bank,
    })
}

/// Paired GAN training samples from every identity, excluding the last
/// `holdout` frames of each.
pub fn build_gan_corpus(
    corpus: &Corpus,
    holdout: usize,
    window_frames: usize,
) -> Result<Vec<GanSample<f64>>> {
    let mut out = Vec::new();
    for id in &corpus.identities {
        let rendered = load_frames_chw(id, id.frames(), true)?;
        let train_end = id.frames().saturating_sub(holdout).max(1);
        for t in 0..train_end {
            let window = build_window(&rendered, t, window_frames);
            let real = hwc_to_chw(&load_png::<f64>(id.real_frame_path(t))?);
            out.push(GanSample { window, real });
        }
    }
    Ok(out)
}

pub fn load_frames_chw(id: &IdentityData, count: usize, rendered: bool) -> Result<Vec<Array3<f64>>> {
    (0..count.min(id.frames()))
        .map(|t| {
            let path = if rendered {
                id.rendered_frame_path(t)
            } else {
                id.real_frame_path(t)
            };
            Ok(hwc_to_chw(&load_png::<f64>(path)?))
        })
        .collect()
}

/// Personalized fine-tuning on the target identity's leading frames.
pub fn finetune_stage(cfg: &RunConfig) -> Result<TrainReport<f64>> {
    finetune_stage_with_budget(cfg, cfg.finetune_frames, "mapper_personalized.bin")
}

pub fn finetune_stage_with_budget(
    cfg: &RunConfig,
    frames: usize,
    checkpoint_name: &str,
) -> Result<TrainReport<f64>> {
    let corpus = load_corpus(cfg.corpus_dir())?;
    let samples = build_sequence_samples(cfg, &corpus)?;
    let target = samples
        .get(cfg.target_identity)
        .ok_or_else(|| Error::config(format!("no identity {}", cfg.target_identity)))?;
    let truncated = audio2coef::truncate_sample(target, frames);

    let mut mapper =
        RecurrentMapper::<f64>::load(cfg.checkpoint_dir().join("mapper_general.bin"))?;
    let opts = TrainOptions {
        epochs: cfg.finetune_epochs,
        lr: cfg.finetune_lr,
        weights: Default::default(),
        standardize_pose: false,
    };
    let report = audio2coef::finetune(&mut mapper, &truncated, &opts)?;
    mapper.save(cfg.checkpoint_dir().join(checkpoint_name))?;
    write_loss_csv(
        &report.epoch_losses,
        cfg.run_dir().join("logs/loss_finetune.csv"),
    )?;
    Ok(report)
}

pub struct Stage1Output {
    pub beta: Array2<f64>,
    pub poses: Vec<Pose<f64>>,
}

/// Stage 1 inference: source audio to per-frame expression and pose,
/// written as CSV under `stage1/`.
pub fn run_stage1(cfg: &RunConfig) -> Result<Stage1Output> {
    run_stage1_with(cfg, "mapper_personalized.bin")
}

pub fn run_stage1_with(cfg: &RunConfig, personalized_ckpt: &str) -> Result<Stage1Output> {
    let corpus = load_corpus(cfg.corpus_dir())?;
    let source = corpus
        .identities
        .get(cfg.source_identity)
        .ok_or_else(|| Error::config(format!("no identity {}", cfg.source_identity)))?;
    let ckpt = if cfg.use_finetune {
        cfg.checkpoint_dir().join(personalized_ckpt)
    } else {
        cfg.checkpoint_dir().join("mapper_general.bin")
    };
    let mapper = RecurrentMapper::<f64>::load(ckpt)?;

    let features = compute_mfcc(&source.audio, &mfcc_config(cfg), corpus.frame_rate)?;
    let (beta, pose_mat) = mapper.forward(&features)?;
    let poses: Vec<Pose<f64>> = pose_mat
        .rows()
        .into_iter()
        .map(|r| Pose::from_vec6(&r.to_vec()).wrapped())
        .collect();

    let dir = cfg.run_dir().join("stage1");
    std::fs::create_dir_all(&dir)?;
    write_matrix_csv(&beta, "b", dir.join("beta.csv"))?;
    write_pose_csv(&poses, dir.join("pose.csv"))?;
    Ok(Stage1Output { beta, poses })
}

/// Stage 2: render the coefficient sequence, composite pose-matched
/// backgrounds, refine through the memory-augmented GAN, and write PNG
/// frames (plus a video when an external encoder is available).
pub fn run_stage2(cfg: &RunConfig, stage1: &Stage1Output) -> Result<Vec<PathBuf>> {
    let corpus = load_corpus(cfg.corpus_dir())?;
    let target = corpus
        .identities
        .get(cfg.target_identity)
        .ok_or_else(|| Error::config(format!("no identity {}", cfg.target_identity)))?;
    let camera = cfg.corpus.camera();
    let basis = &corpus.basis;

    // Albedo scheme: detailed albedo for the general mapping; the
    // low-frequency basis albedo when fine-tuning personalizes the refiner's
    // input distribution.
    let detailed = if cfg.use_finetune {
        None
    } else {
        let sample_count = target.frames().min(30);
        let frames: Result<Vec<Array3<f64>>> = (0..sample_count)
            .map(|t| load_png::<f64>(target.real_frame_path(t)))
            .collect();
        let coeffs: Vec<CoefficientSet<f64>> =
            (0..sample_count).map(|t| target.coefficients(t)).collect();
        Some(extract_detailed_albedo(&frames?, &coeffs, basis, &camera)?)
    };

    // Background machinery over the predicted pose track.
    let window = (corpus.frame_rate * cfg.keyframe_window_secs).round() as usize;
    let keys = select_keyframes(&stage1.poses, window.max(2))?;
    let target_poses: Vec<Pose<f64>> = target.poses.clone();
    let plates: Result<Vec<BackgroundPlate<f64>>> = keys
        .iter()
        .map(|&k| {
            let ix = match_background(&stage1.poses[k], &target_poses)?;
            Ok(BackgroundPlate {
                image: load_png::<f64>(target.real_frame_path(ix))?,
                source_index: ix,
                source_pose: target_poses[ix],
            })
        })
        .collect();
    let backgrounds = interpolate_backgrounds(&keys, &plates?, &stage1.poses, cfg.pose_blend)?;

    // Render with adjusted poses, composite, refine.
    let frames_dir = cfg.run_dir().join("stage2/frames");
    std::fs::create_dir_all(&frames_dir)?;
    let mut rendered_frames = Vec::with_capacity(backgrounds.len());
    let mut rendered_chw = Vec::with_capacity(backgrounds.len());
    let mut adjusted_poses = Vec::with_capacity(backgrounds.len());
    for (t, (_bg, pose)) in backgrounds.iter().enumerate() {
        let coeffs = CoefficientSet {
            alpha: target.alpha.clone(),
            beta: stage1.beta.row(t).to_owned(),
            delta: target.delta.clone(),
            gamma: target.gamma.clone(),
            pose: *pose,
        };
        let frame = render_coefficients(basis, &coeffs, &camera, detailed.as_ref())?;
        rendered_chw.push(hwc_to_chw(&frame.image));
        rendered_frames.push(frame);
        adjusted_poses.push(*pose);
    }
    write_pose_csv(&adjusted_poses, cfg.run_dir().join("stage2/pose_adjusted.csv"))?;

    let refined: Option<Vec<Array3<f64>>> = if cfg.use_refiner {
        let gan = GanModel::<f64>::load(cfg.checkpoint_dir().join("gan.bin"))?;
        let bank = load_bank::<f64>(
            cfg.checkpoint_dir().join("bank.bin"),
            gan.cfg.spatial_dim,
            gan.cfg.feature_dim,
        )?;
        let windows: Vec<Array3<f64>> = (0..rendered_chw.len())
            .map(|t| build_window(&rendered_chw, t, gan.cfg.window_frames))
            .collect();
        let outputs = refinegan::refine_sequence(&gan, &bank, &windows)?;
        Some(outputs.into_iter().map(|o| chw_to_hwc(&o.refined)).collect())
    } else {
        None
    };

    let mut paths = Vec::with_capacity(backgrounds.len());
    for (t, (bg, _)) in backgrounds.iter().enumerate() {
        let mut face = rendered_frames[t].clone();
        if let Some(refined) = &refined {
            face.image = refined[t].clone();
        }
        let full = composite(&face, bg)?;
        let path = frames_dir.join(format!("frame_{t:06}.png"));
        save_png(&full, &path)?;
        paths.push(path);
    }

    assemble_video(cfg, &frames_dir);
    Ok(paths)
}

/// Best-effort video assembly through an external encoder; PNG frames remain
/// the canonical output when no encoder is installed.
fn assemble_video(cfg: &RunConfig, frames_dir: &std::path::Path) {
    let out = cfg.run_dir().join("stage2/video.mp4");
    let status = std::process::Command::new("ffmpeg")
        .arg("-y")
        .arg("-framerate")
        .arg(format!("{}", cfg.corpus.frame_rate))
        .arg("-i")
        .arg(frames_dir.join("frame_%06d.png"))
        .arg("-pix_fmt")
        .arg("yuv420p")
        .arg(&out)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status();
    match status {
        Ok(s) if s.success() => log::info!("wrote {}", out.display()),
        Ok(_) | Err(_) => log::info!("external encoder unavailable; PNG frames only"),
    }
}

/// Deterministic mouth-region vertex indices: front-facing vertices in the
/// lower half of the mean face.
pub fn mouth_vertex_ids(basis: &FaceBasis<f64>) -> Vec<usize> {
    let mut ids = Vec::new();
    for v in 0..basis.vertex_count() {
        let y = basis.mean_shape[v * 3 + 1];
        let z = basis.mean_shape[v * 3 + 2];
        if z < -0.35 && (0.2..0.7).contains(&y) {
            ids.push(v);
        }
    }
    ids.truncate(24);
    ids
}

/// Landmark trajectories: mouth vertices projected per frame, (T, L, 2).
pub fn landmark_track(
    basis: &FaceBasis<f64>,
    alpha: &Array1<f64>,
    beta: &Array2<f64>,
    poses: &[Pose<f64>],
    camera: &crate::Camera64,
    mouth: &[usize],
) -> Result<Array3<f64>> {
    let t_len = beta.nrows().min(poses.len());
    let mut out = Array3::<f64>::zeros((t_len, mouth.len(), 2));
    for t in 0..t_len {
        let shape = crate::face3d::assemble_shape(basis, alpha, &beta.row(t).to_owned())?;
        let proj = project(&shape, &poses[t], camera)?;
        for (l, &v) in mouth.iter().enumerate() {
            out[[t, l, 0]] = proj.points[v][0];
            out[[t, l, 1]] = proj.points[v][1];
        }
    }
    Ok(out)
}

/// Compute one report row comparing generated frames/poses against the
/// target's ground truth.
#[allow(clippy::too_many_arguments)]
pub fn metric_row(
    label: &str,
    generated_frames: &[Array3<f64>],
    real_frames: &[Array3<f64>],
    generated_landmarks: &Array3<f64>,
    real_landmarks: &Array3<f64>,
    generated_poses: &[Pose<f64>],
    real_poses: &[Pose<f64>],
    audio_features: &AudioFeatureSequence<f64>,
    generated_angles: &Array2<f64>,
) -> Result<MetricRow> {
    let frames = generated_frames.len().min(real_frames.len());
    if frames == 0 {
        return Err(Error::invalid("no paired frames to evaluate"));
    }
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for t in 0..frames {
        psnr_sum += psnr(&generated_frames[t], &real_frames[t])?;
        ssim_sum += ssim(&generated_frames[t], &real_frames[t])?;
    }
    let lmd_value = lmd(generated_landmarks, real_landmarks, true)?;
    let hs = hs_score(
        &pose_histogram(real_poses)?,
        &pose_histogram(generated_poses)?,
    )?;
    let corr = match audio_pose_correlation(audio_features, generated_angles)? {
        Correlation::Coefficient(c) => Some(c),
        Correlation::Degenerate => None,
    };
    Ok(MetricRow {
        label: label.to_string(),
        psnr: psnr_sum / frames as f64,
        ssim: ssim_sum / frames as f64,
        lmd: lmd_value,
        hs,
        correlation: corr,
    })
}

/// Evaluate the generated sequence against the target identity's ground
/// truth; writes `eval/report.json` and `eval/report.csv`.
pub fn evaluate(cfg: &RunConfig) -> Result<MetricReport> {
    let corpus = load_corpus(cfg.corpus_dir())?;
    let target = corpus
        .identities
        .get(cfg.target_identity)
        .ok_or_else(|| Error::config(format!("no identity {}", cfg.target_identity)))?;
    let source = corpus
        .identities
        .get(cfg.source_identity)
        .ok_or_else(|| Error::config(format!("no identity {}", cfg.source_identity)))?;
    let camera = cfg.corpus.camera();

    let stage1_dir = cfg.run_dir().join("stage1");
    let beta: Array2<f64> = crate::tables::read_matrix_csv(stage1_dir.join("beta.csv"))?;
    let adjusted_poses = read_pose_csv::<f64>(cfg.run_dir().join("stage2/pose_adjusted.csv"))?;

    let frames_dir = cfg.run_dir().join("stage2/frames");
    let t_len = adjusted_poses.len().min(target.frames());
    let generated: Result<Vec<Array3<f64>>> = (0..t_len)
        .map(|t| load_png::<f64>(frames_dir.join(format!("frame_{t:06}.png"))))
        .collect();
    let generated = generated?;
    let real: Result<Vec<Array3<f64>>> = (0..t_len)
        .map(|t| load_png::<f64>(target.real_frame_path(t)))
        .collect();
    let real = real?;

    let mouth = mouth_vertex_ids(&corpus.basis);
    let gen_landmarks = landmark_track(
        &corpus.basis,
        &target.alpha,
        &beta,
        &adjusted_poses,
        &camera,
        &mouth,
    )?;
    let real_beta = target.beta.slice(ndarray::s![..t_len, ..]).to_owned();
    let real_landmarks = landmark_track(
        &corpus.basis,
        &target.alpha,
        &real_beta,
        &target.poses[..t_len],
        &camera,
        &mouth,
    )?;

    let features = compute_mfcc(&source.audio, &mfcc_config(cfg), corpus.frame_rate)?;
    let angle_len = adjusted_poses.len().min(features.len());
    let gen_angles = Array2::from_shape_fn((angle_len, 3), |(t, k)| adjusted_poses[t].angles[k]);
    let features = AudioFeatureSequence {
        features: features.features.slice(ndarray::s![..angle_len, ..]).to_owned(),
        frame_rate: features.frame_rate,
    };

    let row = metric_row(
        &cfg.run_name,
        &generated,
        &real,
        &gen_landmarks,
        &real_landmarks,
        &adjusted_poses[..t_len],
        &target.poses[..t_len],
        &features,
        &gen_angles,
    )?;

    let report = MetricReport { rows: vec![row] };
    let eval_dir = cfg.run_dir().join("eval");
    std::fs::create_dir_all(&eval_dir)?;
    report.to_json(eval_dir.join("report.json"))?;
    report.to_csv(eval_dir.join("report.csv"))?;
    Ok(report)
}

/// Fine-tune-length study: personalize with each budget, regenerate, and
/// evaluate; one metric row per length.
pub fn sweep_finetune_length(cfg: &RunConfig, lengths: &[usize]) -> Result<MetricReport> {
    let mut rows = Vec::new();
    for &len in lengths {
        let ckpt = format!("mapper_len{len}.bin");
        finetune_stage_with_budget(cfg, len, &ckpt)?;
        let sub = RunConfig {
            run_name: format!("{}_len{len}", cfg.run_name),
            ..cfg.clone()
        };
        std::fs::create_dir_all(sub.checkpoint_dir())?;
        // The sweep shares general checkpoints with the parent run.
        for file in ["mapper_general.bin", "gan.bin", "bank.bin"] {
            std::fs::copy(cfg.checkpoint_dir().join(file), sub.checkpoint_dir().join(file))?;
        }
        std::fs::copy(
            cfg.checkpoint_dir().join(&ckpt),
            sub.checkpoint_dir().join("mapper_personalized.bin"),
        )?;
        let stage1 = run_stage1(&sub)?;
        run_stage2(&sub, &stage1)?;
        let mut report = evaluate(&sub)?;
        let mut row = report.rows.remove(0);
        row.label = format!("finetune_{len}_frames");
        rows.push(row);
    }
    let report = MetricReport { rows };
    let eval_dir = cfg.run_dir().join("eval");
    std::fs::create_dir_all(&eval_dir)?;
    report.to_json(eval_dir.join("sweep.json"))?;
    report.to_csv(eval_dir.join("sweep.csv"))?;
    Ok(report)
}
