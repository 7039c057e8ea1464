//! Keyframe selection, pose-based background matching, and background
//! interpolation between keyframes.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::face3d::Pose;
use crate::num::Real;

/// A background matched from the input video.
#[derive(Clone, Debug)]
pub struct BackgroundPlate<T> {
    pub image: Array3<T>,
    pub source_index: usize,
    pub source_pose: Pose<T>,
}

/// Keyframe indices: frames that are the argmin or argmax of any Euler angle
/// within a centered sliding window (ties to the lower index), plus the first
/// and last frame; strictly increasing.
pub fn select_keyframes<T: Real>(poses: &[Pose<T>], window: usize) -> Result<Vec<usize>> {
    if poses.is_empty() {
        return Err(Error::invalid("pose sequence is empty"));
    }
    let n = poses.len();
    let half = (window.max(1)) / 2;
    let mut keys = vec![0usize, n - 1];
    for axis in 0..3 {
        for i in 0..n {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let mut arg_min = lo;
            let mut arg_max = lo;
            for j in lo..=hi {
                if poses[j].angles[axis] < poses[arg_min].angles[axis] {
                    arg_min = j;
                }
                if poses[j].angles[axis] > poses[arg_max].angles[axis] {
                    arg_max = j;
                }
            }
            if arg_min == i || arg_max == i {
                keys.push(i);
            }
        }
    }
    keys.sort_unstable();
    keys.dedup();
    Ok(keys)
}

/// Squared pose distance for background matching: angles compared in degrees,
/// translations in model units down-weighted by 0.1.
pub fn pose_distance_sq<T: Real>(a: &Pose<T>, b: &Pose<T>) -> T {
    let rad2deg = T::of(180.0) / T::PI();
    let mut acc = T::zero();
    for k in 0..3 {
        let d = (a.angles[k] - b.angles[k]) * rad2deg;
        acc += d * d;
    }
    let wt = T::of(0.1);
    for k in 0..3 {
        let d = a.translation[k] - b.translation[k];
        acc += wt * d * d;
    }
    acc
}

/// Index of the input frame whose pose is nearest to the query; ties break to
/// the smaller frame index.
pub fn match_background<T: Real>(query: &Pose<T>, input_poses: &[Pose<T>]) -> Result<usize> {
    if input_poses.is_empty() {
        return Err(Error::invalid("input video has no frames to match"));
    }
    let mut best = 0usize;
    let mut best_d = pose_distance_sq(query, &input_poses[0]);
    for (i, p) in input_poses.iter().enumerate().skip(1) {
        let d = pose_distance_sq(query, p);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

fn lerp_pose<T: Real>(a: &Pose<T>, b: &Pose<T>, u: T) -> Pose<T> {
    let one = T::one();
    let mut angles = [T::zero(); 3];
    let mut translation = [T::zero(); 3];
    for k in 0..3 {
        angles[k] = a.angles[k] * (one - u) + b.angles[k] * u;
        translation[k] = a.translation[k] * (one - u) + b.translation[k] * u;
    }
    Pose::new(angles, translation)
}

/// Per-frame backgrounds and adjusted render poses between keyframes.
///
/// Between consecutive keyframes the background plates cross-dissolve
/// linearly in time. Each frame's render pose is blended toward the
/// time-interpolated matched-background pose with weight `pose_blend`
/// (0 keeps the predicted pose, 1 adopts the background pose).
pub fn interpolate_backgrounds<T: Real>(
    key_indices: &[usize],
    key_plates: &[BackgroundPlate<T>],
    predicted_poses: &[Pose<T>],
    pose_blend: T,
) -> Result<Vec<(Array3<T>, Pose<T>)>> {
    if key_indices.len() < 2 {
        return Err(Error::invalid("need at least 2 keyframes to interpolate"));
    }
    if key_indices.len() != key_plates.len() {
        return Err(Error::config("keyframe indices and plates must pair up"));
    }
    if !key_indices.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("keyframe indices must be strictly increasing"));
    }
    let first = key_indices[0];
    let last = *key_indices.last().unwrap();
    if last >= predicted_poses.len() {
        return Err(Error::config("keyframe index past the pose sequence"));
    }

    let one = T::one();
    let mut out = Vec::with_capacity(last - first + 1);
    let mut seg = 0usize;
    for f in first..=last {
        while f > key_indices[seg + 1] {
            seg += 1;
        }
        let (k1, k2) = (key_indices[seg], key_indices[seg + 1]);
        let u = if k2 == k1 {
            T::zero()
        } else {
            T::of_usize(f - k1) / T::of_usize(k2 - k1)
        };
        let p1 = &key_plates[seg];
        let p2 = &key_plates[seg + 1];
        let mut bg = p1.image.mapv(|v| v * (one - u));
        bg.zip_mut_with(&p2.image, |acc, &v| *acc += v * u);
        let bg_pose = lerp_pose(&p1.source_pose, &p2.source_pose, u);
        let adjusted = lerp_pose(&predicted_poses[f], &bg_pose, pose_blend);
        out.push((bg, adjusted));
    }
    Ok(out)
}
