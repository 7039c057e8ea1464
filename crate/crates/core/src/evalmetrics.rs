//! Evaluation suite: PSNR, SSIM, landmark distance, head-pose similarity
//! (1 minus normalized 1-Wasserstein between Euler-angle histograms), and the
//! audio-pose correlation analysis.

use ndarray::{Array2, Array3};

use crate::audiofeat::{mfcc_distance, AudioFeatureSequence};
use crate::error::{Error, Result};
use crate::face3d::Pose;
use crate::num::Real;

/// PSNR in dB for images valued in [0,1]; identical images report the
/// documented 100 dB cap.
pub fn psnr<T: Real>(a: &Array3<T>, b: &Array3<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::config("psnr inputs must share dimensions"));
    }
    let n = T::of_usize(a.len());
    let mse: T = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        / n;
    let cap = T::of(100.0);
    if mse == T::zero() {
        return Ok(cap);
    }
    let ten = T::of(10.0);
    Ok((ten * (T::one() / mse).log10()).min(cap))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window<T: Real>() -> Array2<T> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = Array2::<T>::zeros((SSIM_WINDOW, SSIM_WINDOW));
    let mut total = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - half;
            let dx = x as f64 - half;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[[y, x]] = T::of(v);
            total += v;
        }
    }
    w.mapv_inplace(|v| v / T::of(total));
    w
}

/// Mean local SSIM over all fully interior 11x11 Gaussian windows, averaged
/// over color channels. Dynamic range 1, k1 = 0.01, k2 = 0.03.
pub fn ssim<T: Real>(a: &Array3<T>, b: &Array3<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::config("ssim inputs must share dimensions"));
    }
    let (h, w, channels) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window"
        )));
    }
    let win = gaussian_window::<T>();
    let c1 = T::of(SSIM_K1 * SSIM_K1);
    let c2 = T::of(SSIM_K2 * SSIM_K2);

    let mut acc = T::zero();
    let mut count = 0usize;
    for c in 0..channels {
        for oy in 0..=h - SSIM_WINDOW {
            for ox in 0..=w - SSIM_WINDOW {
                let mut mu_a = T::zero();
                let mut mu_b = T::zero();
                for wy in 0..SSIM_WINDOW {
                    for wx in 0..SSIM_WINDOW {
                        let g = win[[wy, wx]];
                        mu_a += g * a[[oy + wy, ox + wx, c]];
                        mu_b += g * b[[oy + wy, ox + wx, c]];
                    }
                }
                let mut var_a = T::zero();
                let mut var_b = T::zero();
                let mut cov = T::zero();
                for wy in 0..SSIM_WINDOW {
                    for wx in 0..SSIM_WINDOW {
                        let g = win[[wy, wx]];
                        let da = a[[oy + wy, ox + wx, c]] - mu_a;
                        let db = b[[oy + wy, ox + wx, c]] - mu_b;
                        var_a += g * da * da;
                        var_b += g * db * db;
                        cov += g * da * db;
                    }
                }
                let two = T::of(2.0);
                let num = (two * mu_a * mu_b + c1) * (two * cov + c2);
                let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                acc += num / den;
                count += 1;
            }
        }
    }
    Ok(acc / T::of_usize(count))
}

/// Mean Euclidean landmark distance in pixels over frames and landmarks,
/// with optional per-frame centroid alignment (the shared evaluation
/// protocol); landmark arrays are (T, L, 2).
pub fn lmd<T: Real>(generated: &Array3<T>, reference: &Array3<T>, align: bool) -> Result<T> {
    if generated.dim() != reference.dim() {
        return Err(Error::config("landmark arrays must share dimensions"));
    }
    let (t_len, l_len, two) = generated.dim();
    if two != 2 {
        return Err(Error::config("landmarks must be 2-D points"));
    }
    if t_len == 0 || l_len == 0 {
        return Err(Error::invalid("landmark arrays are empty"));
    }

    let mut acc = T::zero();
    for t in 0..t_len {
        let mut offset = [T::zero(); 2];
        if align {
            // Align centroids per frame before measuring.
            for k in 0..2 {
                let mut cg = T::zero();
                let mut cr = T::zero();
                for l in 0..l_len {
                    cg += generated[[t, l, k]];
                    cr += reference[[t, l, k]];
                }
                offset[k] = (cr - cg) / T::of_usize(l_len);
            }
        }
        for l in 0..l_len {
            let dx = generated[[t, l, 0]] + offset[0] - reference[[t, l, 0]];
            let dy = generated[[t, l, 1]] + offset[1] - reference[[t, l, 1]];
            acc += (dx * dx + dy * dy).sqrt();
        }
    }
    Ok(acc / T::of_usize(t_len * l_len))
}

/// Per-angle normalized histograms of pitch/yaw/roll over fixed 1-degree
/// bins spanning [-90, 90] degrees.
#[derive(Clone, Debug)]
pub struct PoseHistogram<T> {
    /// (3, bins) normalized counts; rows are pitch, yaw, roll.
    pub hist: Array2<T>,
    pub bin_width_deg: f64,
    pub support_deg: (f64, f64),
    /// Samples clamped into edge bins because they fell outside the support.
    pub clamped: usize,
}

impl<T: Real> PoseHistogram<T> {
    pub fn bins(&self) -> usize {
        self.hist.ncols()
    }
}

/// Histogram a pose sequence's Euler angles (radians in, degrees binned).
pub fn pose_histogram<T: Real>(poses: &[Pose<T>]) -> Result<PoseHistogram<T>> {
    pose_histogram_with(poses, 1.0, (-90.0, 90.0))
}

pub fn pose_histogram_with<T: Real>(
    poses: &[Pose<T>],
    bin_width_deg: f64,
    support_deg: (f64, f64),
) -> Result<PoseHistogram<T>> {
    if poses.is_empty() {
        return Err(Error::invalid("pose sequence is empty"));
    }
    let bins = ((support_deg.1 - support_deg.0) / bin_width_deg).round() as usize;
    let mut hist = Array2::<T>::zeros((3, bins));
    let mut clamped = 0usize;
    let rad2deg = 180.0 / std::f64::consts::PI;
    for p in poses {
        for axis in 0..3 {
            let deg = p.angles[axis].as_f64() * rad2deg;
            let raw = ((deg - support_deg.0) / bin_width_deg).floor();
            let ix = if raw < 0.0 {
                clamped += 1;
                0
            } else if raw >= bins as f64 {
                clamped += 1;
                bins - 1
            } else {
                raw as usize
            };
            hist[[axis, ix]] += T::one();
        }
    }
    if clamped > 0 {
        log::warn!("pose histogram clamped {clamped} out-of-range angle samples");
    }
    let total = T::of_usize(poses.len());
    hist.mapv_inplace(|v| v / total);
    Ok(PoseHistogram {
        hist,
        bin_width_deg,
        support_deg,
        clamped,
    })
}

/// 1-D Wasserstein-1 distance between two normalized histograms on the same
/// binning, computed from cumulative differences and normalized so that unit
/// masses in the two outermost bins are at distance exactly 1.
pub fn wasserstein1_normalized<T: Real>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() || p.len() < 2 {
        return Err(Error::config("histograms must share a binning with >= 2 bins"));
    }
    let mut cp = T::zero();
    let mut cq = T::zero();
    let mut acc = T::zero();
    for k in 0..p.len() - 1 {
        cp += p[k];
        cq += q[k];
        acc += (cp - cq).abs();
    }
    Ok(acc / T::of_usize(p.len() - 1))
}

/// Head-pose similarity: `1 - W1` averaged over the three Euler angles.
pub fn hs_score<T: Real>(real: &PoseHistogram<T>, generated: &PoseHistogram<T>) -> Result<T> {
    if real.bins() != generated.bins()
        || real.bin_width_deg != generated.bin_width_deg
        || real.support_deg != generated.support_deg
    {
        return Err(Error::config("histograms must share the same binning"));
    }
    let mut total = T::zero();
    for axis in 0..3 {
        let p: Vec<T> = real.hist.row(axis).to_vec();
        let q: Vec<T> = generated.hist.row(axis).to_vec();
        total += wasserstein1_normalized(&p, &q)?;
    }
    Ok(T::one() - total / T::of(3.0))
}

/// Outcome of the audio-pose correlation analysis. A `Degenerate` result
/// flags zero variance in one of the paired distance samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Correlation<T> {
    Coefficient(T),
    Degenerate,
}

impl<T: Real> Correlation<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Correlation::Coefficient(v) => Some(*v),
            Correlation::Degenerate => None,
        }
    }
}

/// Pearson correlation between audio-feature distances and pose-angle
/// distances over spherical feature neighborhoods of radius `0.5 * |s|`.
///
/// For every frame `t`, every other frame whose feature vector lies within
/// half the norm of `s_t` contributes a paired sample (feature L2 distance,
/// angle L2 distance).
pub fn audio_pose_correlation<T: Real>(
    features: &AudioFeatureSequence<T>,
    angles: &Array2<T>,
) -> Result<Correlation<T>> {
    let t_len = features.len();
    if t_len < 3 {
        return Err(Error::invalid("need at least 3 frames for the correlation"));
    }
    if angles.nrows() != t_len || angles.ncols() != 3 {
        return Err(Error::config(format!(
            "angles must be {t_len} x 3, got {:?}",
            angles.dim()
        )));
    }

    let rows: Vec<Vec<T>> = (0..t_len)
        .map(|t| features.features.row(t).to_vec())
        .collect();
    let norms: Vec<T> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x * x).sum::<T>().sqrt())
        .collect();

    let mut d_audio = Vec::new();
    let mut d_pose = Vec::new();
    for t in 0..t_len {
        let radius = T::of(0.5) * norms[t];
        for u in 0..t_len {
            if u == t {
                continue;
            }
            let da = mfcc_distance(&rows[t], &rows[u])?;
            if da <= radius {
                let mut dp = T::zero();
                for k in 0..3 {
                    let d = angles[[t, k]] - angles[[u, k]];
                    dp += d * d;
                }
                d_audio.push(da);
                d_pose.push(dp.sqrt());
            }
        }
    }
    if d_audio.is_empty() {
        return Err(Error::invalid(
            "every feature neighborhood is empty at radius 0.5|s|",
        ));
    }

    let n = T::of_usize(d_audio.len());
    let mean_a = d_audio.iter().copied().sum::<T>() / n;
    let mean_p = d_pose.iter().copied().sum::<T>() / n;
    let mut var_a = T::zero();
    let mut var_p = T::zero();
    let mut cov = T::zero();
    for i in 0..d_audio.len() {
        let da = d_audio[i] - mean_a;
        let dp = d_pose[i] - mean_p;
        var_a += da * da;
        var_p += dp * dp;
        cov += da * dp;
    }
    if var_a <= T::zero() || var_p <= T::zero() {
        return Ok(Correlation::Degenerate);
    }
    Ok(Correlation::Coefficient(cov / (var_a * var_p).sqrt()))
}
