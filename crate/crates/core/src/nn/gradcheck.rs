//! Finite-difference gradient verification helpers.
//!
//! Used by module tests and the acceptance suite to compare analytic
//! gradients against central differences on toy configurations.

use crate::num::Real;

/// Central difference of `loss` under a parameter perturbation.
///
/// `perturb` must add its argument to exactly one parameter entry; the model
/// is cloned for each evaluation so `loss` sees a consistent state.
pub fn central_diff_at<M: Clone, T: Real>(
    model: &M,
    eps: T,
    perturb: impl Fn(&mut M, T),
    loss: impl Fn(&M) -> T,
) -> T {
    let mut plus = model.clone();
    perturb(&mut plus, eps);
    let lp = loss(&plus);
    let mut minus = model.clone();
    perturb(&mut minus, -eps);
    let lm = loss(&minus);
    (lp - lm) / (eps + eps)
}

/// Relative error with an absolute floor: entries where both the analytic and
/// numeric gradients are below `floor` auto-pass (below FD resolution).
pub fn rel_error<T: Real>(analytic: T, numeric: T, floor: T) -> T {
    let denom = analytic.abs().max(numeric.abs());
    if denom < floor {
        T::zero()
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Deterministic strided subset of `0..len`, at most `max` indices.
pub fn sample_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        let stride = len / max;
        (0..max).map(|i| i * stride).collect()
    }
}
