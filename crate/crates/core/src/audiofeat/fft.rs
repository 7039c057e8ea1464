//! Minimal iterative radix-2 FFT for the MFCC front-end.

use crate::num::Real;

/// In-place radix-2 Cooley-Tukey FFT. `re`/`im` length must be a power of 2.
pub fn fft<T: Real>(re: &mut [T], im: &mut [T]) {
    let n = re.len();
    debug_assert_eq!(n, im.len());
    debug_assert!(n.is_power_of_two());

    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let ang = -T::of(2.0) * T::PI() / T::of_usize(len);
        let (w_im, w_re) = ang.sin_cos();
        let mut start = 0;
        while start < n {
            let mut cur_re = T::one();
            let mut cur_im = T::zero();
            for k in 0..len / 2 {
                let a = start + k;
                let b = start + k + len / 2;
                let tr = re[b] * cur_re - im[b] * cur_im;
                let ti = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
            start += len;
        }
        len <<= 1;
    }
}

/// Power spectrum of a real signal zero-padded to `fft_size`: returns the
/// `fft_size/2 + 1` non-negative frequency bins of `|X(k)|^2`.
pub fn power_spectrum<T: Real>(signal: &[T], fft_size: usize) -> Vec<T> {
    let mut re = vec![T::zero(); fft_size];
    let mut im = vec![T::zero(); fft_size];
    let copy = signal.len().min(fft_size);
    re[..copy].copy_from_slice(&signal[..copy]);
    fft(&mut re, &mut im);
    (0..fft_size / 2 + 1)
        .map(|k| re[k] * re[k] + im[k] * im[k])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive DFT oracle.
    fn dft_power(signal: &[f64], n: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0..n / 2 + 1 {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &x) in signal.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            out.push(re * re + im * im);
        }
        out
    }

    #[test]
    fn fft_power_matches_naive_dft() {
        let signal: Vec<f64> = (0..100)
            .map(|i| (0.3 * i as f64).sin() + 0.5 * (0.11 * i as f64).cos())
            .collect();
        let fast = power_spectrum(&signal, 128);
        let slow = dft_power(&signal, 128);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
