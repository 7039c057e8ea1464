//! Real spherical-harmonics shading for Lambertian irradiance.
//!
//! Bands l = 0..2 give 9 real basis functions, ordered lexicographically in
//! (l, m): (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2).
//! Constants use the Condon-Shortley-free real convention.

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::num::Real;

/// Number of real SH basis functions for 3 bands.
pub const SH_BASIS_COUNT: usize = 9;

// sqrt(1/(4pi)), sqrt(3/(4pi)), sqrt(15/(4pi)), sqrt(5/(16pi)), sqrt(15/(16pi))
const C0: f64 = 0.28209479177387814;
const C1: f64 = 0.4886025119029199;
const C2: f64 = 1.0925484305920792;
const C3: f64 = 0.31539156525252005;
const C4: f64 = 0.5462742152960396;

/// Evaluate all 9 real SH basis functions at unit direction `n = [x, y, z]`.
pub fn sh_basis<T: Real>(n: [T; 3]) -> [T; SH_BASIS_COUNT] {
    let [x, y, z] = n;
    let three = T::of(3.0);
    [
        T::of(C0),
        T::of(C1) * y,
        T::of(C1) * z,
        T::of(C1) * x,
        T::of(C2) * x * y,
        T::of(C2) * y * z,
        T::of(C3) * (three * z * z - T::one()),
        T::of(C2) * x * z,
        T::of(C4) * (x * x - y * y),
    ]
}

fn check_unit<T: Real>(normal: [T; 3]) -> Result<()> {
    let norm2 = normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2];
    if (norm2 - T::one()).abs() > T::of(1e-3) {
        return Err(Error::invalid(format!(
            "normal must be unit length, |n|^2 = {norm2}"
        )));
    }
    Ok(())
}

/// Scalar shading factor for one channel: `sum_b gamma_b * Phi_b(n)`.
///
/// `gamma9` holds the 9 coefficients of a single color channel.
pub fn sh_shading<T: Real>(normal: [T; 3], gamma9: &[T]) -> Result<T> {
    if gamma9.len() != SH_BASIS_COUNT {
        return Err(Error::config(format!(
            "per-channel gamma must have {SH_BASIS_COUNT} entries, got {}",
            gamma9.len()
        )));
    }
    check_unit(normal)?;
    let basis = sh_basis(normal);
    let mut acc = T::zero();
    for b in 0..SH_BASIS_COUNT {
        acc += gamma9[b] * basis[b];
    }
    Ok(acc)
}

/// Per-channel irradiance `albedo_c * sum_b gamma_{c,b} Phi_b(n)`.
///
/// `gamma` is the full 27-vector, channel-major (`gamma[c*9 + b]`).
pub fn sh_irradiance<T: Real>(
    normal: [T; 3],
    albedo: [T; 3],
    gamma: &ArrayView1<T>,
) -> Result<[T; 3]> {
    if gamma.len() != 3 * SH_BASIS_COUNT {
        return Err(Error::config(format!(
            "gamma must have {} entries, got {}",
            3 * SH_BASIS_COUNT,
            gamma.len()
        )));
    }
    check_unit(normal)?;
    let basis = sh_basis(normal);
    let mut out = [T::zero(); 3];
    for c in 0..3 {
        let mut acc = T::zero();
        for b in 0..SH_BASIS_COUNT {
            acc += gamma[c * SH_BASIS_COUNT + b] * basis[b];
        }
        out[c] = albedo[c] * acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Independent oracle: the 9 real SH polynomials with constants computed
    /// from their closed forms rather than hard-wired decimals.
    fn sh_oracle(n: [f64; 3]) -> [f64; 9] {
        use std::f64::consts::PI;
        let (x, y, z) = (n[0], n[1], n[2]);
        let k00 = (1.0 / (4.0 * PI)).sqrt();
        let k1 = (3.0 / (4.0 * PI)).sqrt();
        let k2m2 = 0.5 * (15.0 / PI).sqrt();
        let k20 = 0.25 * (5.0 / PI).sqrt();
        let k22 = 0.25 * (15.0 / PI).sqrt();
        [
            k00,
            k1 * y,
            k1 * z,
            k1 * x,
            k2m2 * x * y,
            k2m2 * y * z,
            k20 * (3.0 * z * z - 1.0),
            k2m2 * x * z,
            k22 * (x * x - y * y),
        ]
    }

    fn random_unit(rng: &mut StdRng) -> [f64; 3] {
        loop {
            let v: [f64; 3] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 0.1 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }

    #[test]
    fn zero_gamma_gives_zero_irradiance() {
        let gamma = Array1::<f64>::zeros(27);
        let out = sh_irradiance([0.0, 0.0, 1.0], [0.5, 0.6, 0.7], &gamma.view()).unwrap();
        assert_eq!(out, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_band_is_direction_independent() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut gamma = Array1::<f64>::zeros(27);
        gamma[0] = 2.0; // R constant band
        gamma[9] = 1.5; // G
        gamma[18] = 0.5; // B
        let albedo = [0.4, 0.8, 1.0];
        let reference = sh_irradiance([0.0, 0.0, 1.0], albedo, &gamma.view()).unwrap();
        for c in 0..3 {
            let expect = albedo[c] * gamma[c * 9] * C0;
            assert!((reference[c] - expect).abs() < 1e-14);
        }
        for _ in 0..32 {
            let n = random_unit(&mut rng);
            let got = sh_irradiance(n, albedo, &gamma.view()).unwrap();
            for c in 0..3 {
                assert!((got[c] - reference[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matches_symbolic_sh_oracle() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let n = random_unit(&mut rng);
            let gamma = Array1::from_shape_fn(27, |_| rng.gen_range(-1.0..1.0));
            let albedo = [
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            ];
            let got = sh_irradiance(n, albedo, &gamma.view()).unwrap();
            let basis = sh_oracle(n);
            for c in 0..3 {
                let mut expect = 0.0;
                for b in 0..9 {
                    expect += gamma[c * 9 + b] * basis[b];
                }
                expect *= albedo[c];
                assert!(
                    (got[c] - expect).abs() < 1e-12,
                    "channel {c}: {} vs oracle {expect}",
                    got[c]
                );
            }
        }
    }

    #[test]
    fn irradiance_is_linear_in_albedo_and_gamma() {
        let mut rng = StdRng::seed_from_u64(23);
        let n = random_unit(&mut rng);
        let g1 = Array1::from_shape_fn(27, |_| rng.gen_range(-1.0..1.0));
        let g2 = Array1::from_shape_fn(27, |_| rng.gen_range(-1.0..1.0));
        let albedo = [0.3, 0.5, 0.9];

        let sum = sh_irradiance(n, albedo, &(&g1 + &g2).view()).unwrap();
        let a = sh_irradiance(n, albedo, &g1.view()).unwrap();
        let b = sh_irradiance(n, albedo, &g2.view()).unwrap();
        for c in 0..3 {
            assert!((sum[c] - (a[c] + b[c])).abs() < 1e-12);
        }

        let scaled = sh_irradiance(n, [0.6, 1.0, 1.8].map(|x| x * 0.5), &g1.view()).unwrap();
        for c in 0..3 {
            assert!((scaled[c] - a[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn non_unit_normal_is_rejected() {
        let gamma = Array1::<f64>::zeros(27);
        let err = sh_irradiance([0.0, 0.0, 2.0], [1.0, 1.0, 1.0], &gamma.view()).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }
}
