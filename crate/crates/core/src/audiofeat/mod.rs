//! MFCC front-end: converts mono audio into per-video-frame feature vectors
//! aligned to the video frame rate.
//!
//! Each video frame's feature vector concatenates the cepstra of all MFCC
//! frames inside a context window centered on the frame timestamp. With the
//! default configuration (16 kHz, 25 ms Hann window, 10 ms hop, 26 mel
//! filters, 13 cepstra, 280 ms context) a 25 fps video frame carries
//! 13 x 28 = 364 values.

mod fft;
mod wav;

pub use fft::power_spectrum;
pub use wav::{read_wav, write_wav};

use std::path::Path;

use ndarray::Array2;

use crate::container::{ContainerReader, ContainerWriter};
use crate::error::{Error, Result};
use crate::num::Real;

/// Mono PCM audio in [-1, 1].
#[derive(Clone, Debug)]
pub struct AudioClip<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> AudioClip<T> {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("audio contains non-finite samples"));
        }
        Ok(())
    }
}

/// Per-video-frame MFCC features: one row per frame.
#[derive(Clone, Debug)]
pub struct AudioFeatureSequence<T> {
    pub features: Array2<T>,
    /// Video frames per second.
    pub frame_rate: f64,
}

impl<T: Real> AudioFeatureSequence<T> {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("feature matrix contains NaN/Inf"));
        }
        Ok(())
    }

    /// Write one CSV row per video frame.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for row in self.features.rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{}", x.as_f64())).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_container(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({
            "frames": self.len(),
            "dim": self.dim(),
            "frame_rate": self.frame_rate,
        });
        let mut w = ContainerWriter::new("audio-features").meta(meta);
        w.push_real(
            "features",
            &[self.len(), self.dim()],
            self.features.as_slice().unwrap(),
        );
        w.write(path)
    }

    pub fn from_container(path: impl AsRef<Path>) -> Result<Self> {
        let r = ContainerReader::open(path)?;
        if r.kind() != "audio-features" {
            return Err(Error::format(format!("expected audio-features, got {}", r.kind())));
        }
        let shape = r.shape("features")?.to_vec();
        let data = r.real_array::<T>("features")?;
        let features = Array2::from_shape_vec((shape[0], shape[1]), data)
            .map_err(|e| Error::format(format!("features: {e}")))?;
        let frame_rate = r.meta()["frame_rate"].as_f64().unwrap_or(25.0);
        Ok(AudioFeatureSequence {
            features,
            frame_rate,
        })
    }
}

/// MFCC front-end parameters.
#[derive(Clone, Debug)]
pub struct MfccConfig {
    pub target_sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub mel_filters: usize,
    pub cepstral_coeffs: usize,
    /// Per-video-frame context window, centered on the frame timestamp.
    pub context_ms: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Energies are floored at this value before the log.
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            target_sample_rate: 16_000,
            window_ms: 25.0,
            hop_ms: 10.0,
            mel_filters: 26,
            cepstral_coeffs: 13,
            context_ms: 280.0,
            fmin_hz: 0.0,
            fmax_hz: 8_000.0,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    /// Small context for toy experiments (fewer columns per video frame).
    pub fn compact(mut self) -> Self {
        self.context_ms = 40.0;
        self
    }

    pub fn window_len(&self) -> usize {
        (self.target_sample_rate as f64 * self.window_ms / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.target_sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    pub fn fft_size(&self) -> usize {
        self.window_len().next_power_of_two()
    }

    pub fn context_frames(&self) -> usize {
        (self.context_ms / self.hop_ms).round() as usize
    }

    /// Columns per video frame.
    pub fn feature_dim(&self) -> usize {
        self.cepstral_coeffs * self.context_frames()
    }

    /// The value the 0th cepstral coefficient takes on digital silence.
    pub fn log_floor_constant(&self) -> f64 {
        self.log_floor.ln()
    }
}

/// Convert `hz` to the mel scale (O'Shaughnessy).
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank evaluated at exact bin frequencies.
///
/// Filter `m` rises from mel point `m` to `m+1` and falls to `m+2`, with the
/// `mel_filters + 2` points spaced uniformly in mel between `fmin` and `fmax`.
pub fn mel_filterbank<T: Real>(cfg: &MfccConfig) -> Vec<Vec<T>> {
    let n_bins = cfg.fft_size() / 2 + 1;
    let sr = cfg.target_sample_rate as f64;
    let mel_lo = hz_to_mel(cfg.fmin_hz);
    let mel_hi = hz_to_mel(cfg.fmax_hz.min(sr / 2.0));
    let points: Vec<f64> = (0..cfg.mel_filters + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.mel_filters + 1) as f64))
        .collect();

    let mut bank = Vec::with_capacity(cfg.mel_filters);
    for m in 0..cfg.mel_filters {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        let mut filt = vec![T::zero(); n_bins];
        for (k, w) in filt.iter_mut().enumerate() {
            let f = k as f64 * sr / cfg.fft_size() as f64;
            let value = if f >= lo && f <= center && center > lo {
                (f - lo) / (center - lo)
            } else if f > center && f <= hi && hi > center {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            *w = T::of(value);
        }
        bank.push(filt);
    }
    bank
}

/// Linear-interpolation resampler.
fn resample<T: Real>(samples: &[T], from: u32, to: u32) -> Vec<T> {
    if from == to {
        return samples.to_vec();
    }
    let ratio = from as f64 / to as f64;
    let out_len = (samples.len() as f64 / ratio).floor() as usize;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = pos.floor() as usize;
            let frac = T::of(pos - lo as f64);
            let a = samples[lo.min(samples.len() - 1)];
            let b = samples[(lo + 1).min(samples.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(ix: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = ix;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

/// One MFCC frame: Hann window, power spectrum, mel energies, floored log,
/// DCT-II with `alpha_0 = 1/M`, `alpha_k = 2/M` scaling (so the 0th cepstral
/// coefficient is the mean log mel energy).
fn mfcc_frame<T: Real>(
    frame: &[T],
    window: &[T],
    bank: &[Vec<T>],
    cfg: &MfccConfig,
) -> Vec<T> {
    let windowed: Vec<T> = frame.iter().zip(window).map(|(&x, &w)| x * w).collect();
    let power = fft::power_spectrum(&windowed, cfg.fft_size());
    let floor = T::of(cfg.log_floor);
    let log_energies: Vec<T> = bank
        .iter()
        .map(|filt| {
            let e: T = filt.iter().zip(&power).map(|(&w, &p)| w * p).sum();
            e.max(floor).ln()
        })
        .collect();

    let m = cfg.mel_filters;
    let mut ceps = Vec::with_capacity(cfg.cepstral_coeffs);
    for k in 0..cfg.cepstral_coeffs {
        let mut sum = T::zero();
        for (j, &le) in log_energies.iter().enumerate() {
            let ang = std::f64::consts::PI * k as f64 * (2.0 * j as f64 + 1.0) / (2.0 * m as f64);
            sum += le * T::of(ang.cos());
        }
        let alpha = if k == 0 { 1.0 / m as f64 } else { 2.0 / m as f64 };
        ceps.push(sum * T::of(alpha));
    }
    ceps
}

/// Compute per-video-frame MFCC features aligned to `frame_rate` fps.
///
/// The audio is reflect-padded so every video frame sees a full context
/// window; output rows are deterministic functions of the input samples.
pub fn compute_mfcc<T: Real>(
    clip: &AudioClip<T>,
    cfg: &MfccConfig,
    frame_rate: f64,
) -> Result<AudioFeatureSequence<T>> {
    clip.validate()?;
    if frame_rate <= 0.0 {
        return Err(Error::config("frame rate must be positive"));
    }
    let samples = resample(&clip.samples, clip.sample_rate, cfg.target_sample_rate);
    let sr = cfg.target_sample_rate as f64;
    let context_samples = (cfg.context_ms / 1000.0 * sr) as usize;
    if samples.len() < context_samples {
        return Err(Error::invalid(format!(
            "clip of {} samples is shorter than one {} ms context window",
            samples.len(),
            cfg.context_ms
        )));
    }

    let win = cfg.window_len();
    let hop = cfg.hop_len();
    let ctx = cfg.context_frames();
    let pad = (ctx / 2 + 1) * hop + win;

    let padded: Vec<T> = (-(pad as isize)..(samples.len() + pad) as isize)
        .map(|i| samples[reflect(i, samples.len())])
        .collect();

    let window: Vec<T> = (0..win)
        .map(|n| {
            T::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (win - 1) as f64).cos())
        })
        .collect();
    let bank = mel_filterbank::<T>(cfg);

    let n_frames = (padded.len() - win) / hop + 1;
    let frames: Vec<Vec<T>> = (0..n_frames)
        .map(|i| mfcc_frame(&padded[i * hop..i * hop + win], &window, &bank, cfg))
        .collect();

    let t_video = (samples.len() as f64 / sr * frame_rate).floor() as usize;
    let dim = cfg.feature_dim();
    let mut features = Array2::<T>::zeros((t_video, dim));
    for f in 0..t_video {
        // Center sample of video frame f, in padded coordinates.
        let center = (f as f64 / frame_rate * sr + pad as f64 - win as f64 / 2.0) / hop as f64;
        let center_ix = center.round() as isize;
        let start = center_ix - (ctx / 2) as isize;
        for c in 0..ctx {
            let ix = (start + c as isize).clamp(0, n_frames as isize - 1) as usize;
            for (k, &v) in frames[ix].iter().enumerate() {
                features[[f, c * cfg.cepstral_coeffs + k]] = v;
            }
        }
    }

    let out = AudioFeatureSequence {
        features,
        frame_rate,
    };
    out.validate()?;
    Ok(out)
}

/// L2 distance between two per-frame feature rows.
pub fn mfcc_distance<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::config(format!(
            "feature rows differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let sum: T = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn tone(freq: f64, secs: f64, sr: u32, amp: f64) -> AudioClip<f64> {
        let n = (secs * sr as f64) as usize;
        AudioClip {
            samples: (0..n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
                .collect(),
            sample_rate: sr,
        }
    }

    #[test]
    fn silence_rows_are_identical_with_floor_c0() {
        let clip = AudioClip::<f64> {
            samples: vec![0.0; 16000],
            sample_rate: 16000,
        };
        let cfg = MfccConfig::default();
        let seq = compute_mfcc(&clip, &cfg, 25.0).unwrap();
        assert_eq!(seq.len(), 25);
        assert_eq!(seq.dim(), 364);
        let first = seq.features.row(0).to_owned();
        for row in seq.features.rows() {
            for (a, b) in row.iter().zip(first.iter()) {
                assert_eq!(a, b, "silence rows must be bit-identical");
            }
        }
        // Every context slot's 0th cepstral coefficient is the floor constant.
        let c0 = seq.features[[0, 0]];
        assert!(
            (c0 - cfg.log_floor_constant()).abs() < 1e-9,
            "c0 = {c0}, expected {}",
            cfg.log_floor_constant()
        );
        // Higher cepstra vanish for constant log energies.
        assert!(seq.features[[0, 1]].abs() < 1e-9);
    }

    #[test]
    fn tone_peaks_in_the_bracketing_mel_filter() {
        let cfg = MfccConfig::default();
        let clip = tone(440.0, 1.0, 16000, 0.5);
        let bank = mel_filterbank::<f64>(&cfg);

        // Mel energies of one interior frame via the production FFT path.
        let win = cfg.window_len();
        let start = 8000;
        let window: Vec<f64> = (0..win)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (win - 1) as f64).cos())
            .collect();
        let frame: Vec<f64> = clip.samples[start..start + win]
            .iter()
            .zip(&window)
            .map(|(&x, &w)| x * w)
            .collect();
        let power = power_spectrum(&frame, cfg.fft_size());
        let energies: Vec<f64> = bank
            .iter()
            .map(|f| f.iter().zip(&power).map(|(&w, &p)| w * p).sum())
            .collect();

        let peak = energies
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;

        // The filter whose rising/falling band brackets 440 Hz.
        let mel_lo = hz_to_mel(cfg.fmin_hz);
        let mel_hi = hz_to_mel(cfg.fmax_hz);
        let points: Vec<f64> = (0..cfg.mel_filters + 2)
            .map(|i| {
                mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.mel_filters + 1) as f64)
            })
            .collect();
        let expected: Vec<usize> = (0..cfg.mel_filters)
            .filter(|&m| points[m] <= 440.0 && 440.0 <= points[m + 2])
            .collect();
        assert!(
            expected.contains(&peak),
            "peak filter {peak} not among bracketing filters {expected:?}"
        );

        // Independent oracle: naive DFT + locally built filterbank.
        let naive_power: Vec<f64> = (0..cfg.fft_size() / 2 + 1)
            .map(|k| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (t, &x) in frame.iter().enumerate() {
                    let ang =
                        -2.0 * std::f64::consts::PI * (k * t) as f64 / cfg.fft_size() as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                re * re + im * im
            })
            .collect();
        for (m, filt) in bank.iter().enumerate() {
            let oracle: f64 = filt.iter().zip(&naive_power).map(|(&w, &p)| w * p).sum();
            assert!(
                (energies[m] - oracle).abs() < 1e-6 * (1.0 + oracle.abs()),
                "filter {m}: {} vs oracle {}",
                energies[m],
                oracle
            );
        }
    }

    #[test]
    fn twelve_seconds_gives_the_finetuning_frame_budget() {
        let clip = tone(220.0, 12.0, 16000, 0.3);
        let seq = compute_mfcc(&clip, &MfccConfig::default(), 25.0).unwrap();
        assert_eq!(seq.len(), 300);
    }

    #[test]
    fn identical_clips_yield_bit_identical_features() {
        let clip = tone(330.0, 1.2, 16000, 0.4);
        let a = compute_mfcc(&clip, &MfccConfig::default(), 25.0).unwrap();
        let b = compute_mfcc(&clip, &MfccConfig::default(), 25.0).unwrap();
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn delay_by_video_periods_shifts_rows() {
        let sr = 16000u32;
        let fps = 25.0;
        let period = (sr as f64 / fps) as usize; // 640 samples
        let mut rng = StdRng::seed_from_u64(5);
        let base: Vec<f64> = (0..(2 * sr) as usize)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        let k = 3usize;
        let mut delayed = vec![0.0; k * period];
        delayed.extend_from_slice(&base);

        let cfg = MfccConfig::default();
        let orig = compute_mfcc(
            &AudioClip { samples: base, sample_rate: sr },
            &cfg,
            fps,
        )
        .unwrap();
        let shifted = compute_mfcc(
            &AudioClip { samples: delayed, sample_rate: sr },
            &cfg,
            fps,
        )
        .unwrap();

        // Interior rows only: skip enough rows for the context window plus
        // the delay to clear the reflected boundary.
        let margin = cfg.context_frames() / 4 + k + 1;
        for f in margin..orig.len() - margin {
            let a = orig.features.row(f);
            let b = shifted.features.row(f + k);
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x, y, "row {f} not bit-identical after shift");
            }
        }
    }

    #[test]
    fn scaling_raises_the_zeroth_cepstral_coefficient() {
        let clip = tone(440.0, 1.0, 16000, 0.2);
        let louder = AudioClip::<f64> {
            samples: clip.samples.iter().map(|&s| s * 2.0).collect(),
            sample_rate: clip.sample_rate,
        };
        let cfg = MfccConfig::default();
        let a = compute_mfcc(&clip, &cfg, 25.0).unwrap();
        let b = compute_mfcc(&louder, &cfg, 25.0).unwrap();
        for f in 0..a.len() {
            assert!(
                b.features[[f, 0]] > a.features[[f, 0]],
                "frame {f}: c0 did not increase"
            );
        }
    }

    #[test]
    fn short_clip_is_rejected_but_silence_is_not() {
        let cfg = MfccConfig::default();
        let short = AudioClip::<f64> {
            samples: vec![0.1; 1000],
            sample_rate: 16000,
        };
        assert!(matches!(compute_mfcc(&short, &cfg, 25.0), Err(Error::Invalid(_))));
        let silent = AudioClip::<f64> {
            samples: vec![0.0; 16000],
            sample_rate: 16000,
        };
        assert!(compute_mfcc(&silent, &cfg, 25.0).is_ok());
    }

    #[test]
    fn distance_axioms_and_oracle() {
        let a = vec![1.0, -2.0, 3.0];
        let b = vec![-1.0, 2.0, -3.0];
        assert_eq!(mfcc_distance(&a, &a).unwrap(), 0.0);
        // a = -b: distance is 2|a|.
        let norm_a = (1.0f64 + 4.0 + 9.0).sqrt();
        assert!((mfcc_distance(&a, &b).unwrap() - 2.0 * norm_a).abs() < 1e-12);

        let mut rng = StdRng::seed_from_u64(11);
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut oracle = 0.0;
        for i in 0..16 {
            oracle += (x[i] - y[i]) * (x[i] - y[i]);
        }
        let oracle = oracle.sqrt();
        assert!((mfcc_distance(&x, &y).unwrap() - oracle).abs() < 1e-12);
        assert!(
            (mfcc_distance(&x, &y).unwrap() - mfcc_distance(&y, &x).unwrap()).abs() < 1e-15,
            "symmetry"
        );
        assert!(mfcc_distance(&x, &vec![0.0; 5]).is_err());
    }

    #[test]
    fn resample_preserves_a_slow_ramp() {
        let samples: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let out = resample(&samples, 32000, 16000);
        assert_eq!(out.len(), 500);
        for (i, &v) in out.iter().enumerate() {
            assert!((v - 2.0 * i as f64 / 1000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_and_container_exports_round_trip() {
        let clip = tone(330.0, 0.6, 16000, 0.4);
        let cfg = MfccConfig::default().compact();
        let seq = compute_mfcc(&clip, &cfg, 25.0).unwrap();
        let dir = std::env::temp_dir().join("tf_feat_test");
        std::fs::create_dir_all(&dir).unwrap();
        seq.to_csv(dir.join("f.csv")).unwrap();
        let text = std::fs::read_to_string(dir.join("f.csv")).unwrap();
        assert_eq!(text.lines().count(), seq.len());

        seq.to_container(dir.join("f.bin")).unwrap();
        let back = AudioFeatureSequence::<f64>::from_container(dir.join("f.bin")).unwrap();
        assert_eq!(back.len(), seq.len());
        assert_eq!(back.dim(), seq.dim());
        // Container stores f32; agreement is to f32 precision.
        for (a, b) in seq.features.iter().zip(back.features.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
