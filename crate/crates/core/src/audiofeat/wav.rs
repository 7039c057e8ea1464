//! WAV ingestion and export (PCM 16-bit; stereo downmixed by averaging).

use std::path::Path;

use crate::error::{Error, Result};
use crate::num::Real;

use super::AudioClip;

pub fn read_wav<T: Real>(path: impl AsRef<Path>) -> Result<AudioClip<T>> {
    let mut reader =
        hound::WavReader::open(&path).map_err(|e| Error::format(format!("wav open: {e}")))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format(format!(
            "expected 16-bit PCM wav, got {:?} {} bits",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::format(format!("unsupported channel count {channels}")));
    }
    let raw: std::result::Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let raw = raw.map_err(|e| Error::format(format!("wav decode: {e}")))?;
    let scale = T::of(1.0 / 32768.0);
    let samples: Vec<T> = if channels == 1 {
        raw.iter().map(|&s| T::of(s as f64) * scale).collect()
    } else {
        raw.chunks_exact(2)
            .map(|lr| T::of((lr[0] as f64 + lr[1] as f64) / 2.0) * scale)
            .collect()
    };
    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
    })
}

pub fn write_wav<T: Real>(clip: &AudioClip<T>, path: impl AsRef<Path>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer =
        hound::WavWriter::create(&path, spec).map_err(|e| Error::format(format!("wav create: {e}")))?;
    for &s in &clip.samples {
        let v = (s.as_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer
            .write_sample(v)
            .map_err(|e| Error::format(format!("wav write: {e}")))?;
    }
    writer
        .finalize()
        .map_err(|e| Error::format(format!("wav finalize: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mono_round_trip_within_quantization() {
        let dir = std::env::temp_dir().join("tf_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mono.wav");
        let clip = AudioClip::<f64> {
            samples: (0..1600).map(|i| (0.05 * i as f64).sin() * 0.8).collect(),
            sample_rate: 16000,
        };
        write_wav(&clip, &path).unwrap();
        let back: AudioClip<f64> = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.samples.len(), clip.samples.len());
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }

    #[test]
    fn stereo_is_downmixed_by_averaging() {
        let dir = std::env::temp_dir().join("tf_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for i in 0..100i16 {
            w.write_sample(i * 100).unwrap(); // left
            w.write_sample(-i * 100).unwrap(); // right: averages to zero
        }
        w.finalize().unwrap();
        let clip: AudioClip<f64> = read_wav(&path).unwrap();
        assert_eq!(clip.samples.len(), 100);
        assert!(clip.samples.iter().all(|&s| s.abs() < 1e-9));
    }
}
