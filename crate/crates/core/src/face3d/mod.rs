//! Parametric 3D face model: shape/texture assembly from coefficients,
//! spherical-harmonics irradiance, perspective projection, and a landmark
//! least-squares fitter.

mod basis;
mod fit;
mod project;
mod sh;

pub use basis::{icosphere, load_basis, save_basis, write_obj, SyntheticBasisConfig};
pub use fit::{fit_to_landmarks, FitOptions, FitReport};
pub use project::{project, rotation_matrix, Projection};
pub use sh::{sh_basis, sh_irradiance, sh_shading, SH_BASIS_COUNT};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::num::Real;

/// Number of spherical-harmonics illumination coefficients (9 per RGB channel).
pub const GAMMA_DIM: usize = 27;
/// Pose degrees of freedom: 3 Euler angles + 3 translation components.
pub const POSE_DIM: usize = 6;

/// Rigid head pose: Euler angles (pitch about X, yaw about Y, roll about Z,
/// radians) plus a translation in model units.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose<T> {
    /// `[pitch, yaw, roll]` in radians; each lies in `(-pi, pi]`.
    pub angles: [T; 3],
    /// `[tx, ty, tz]` in model units.
    pub translation: [T; 3],
}

impl<T: Real> Pose<T> {
    pub fn new(angles: [T; 3], translation: [T; 3]) -> Self {
        Pose { angles, translation }
    }

    pub fn from_vec6(v: &[T]) -> Self {
        assert_eq!(v.len(), POSE_DIM);
        Pose {
            angles: [v[0], v[1], v[2]],
            translation: [v[3], v[4], v[5]],
        }
    }

    pub fn to_vec6(&self) -> [T; POSE_DIM] {
        [
            self.angles[0],
            self.angles[1],
            self.angles[2],
            self.translation[0],
            self.translation[1],
            self.translation[2],
        ]
    }

    /// Wrap all angles into `(-pi, pi]`.
    pub fn wrapped(mut self) -> Self {
        for a in &mut self.angles {
            *a = wrap_angle(*a);
        }
        self
    }

    pub fn is_wrapped(&self) -> bool {
        let pi = T::PI();
        self.angles.iter().all(|&a| a > -pi && a <= pi)
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut x = a % two_pi;
    if x <= -T::PI() {
        x += two_pi;
    } else if x > T::PI() {
        x -= two_pi;
    }
    x
}

/// One frame's full coefficient vector: identity, expression, texture,
/// illumination, and pose.
#[derive(Clone, Debug)]
pub struct CoefficientSet<T> {
    pub alpha: Array1<T>,
    pub beta: Array1<T>,
    pub delta: Array1<T>,
    /// 27 illumination coefficients, channel-major: `gamma[c*9 + b]` for
    /// channel `c` in R,G,B order and band index `b` (see [`sh_basis`]).
    pub gamma: Array1<T>,
    pub pose: Pose<T>,
}

impl<T: Real> CoefficientSet<T> {
    pub fn zeros(dim_id: usize, dim_exp: usize, dim_tex: usize) -> Self {
        CoefficientSet {
            alpha: Array1::zeros(dim_id),
            beta: Array1::zeros(dim_exp),
            delta: Array1::zeros(dim_tex),
            gamma: Array1::zeros(GAMMA_DIM),
            pose: Pose::default(),
        }
    }

    /// Total coefficient dimension `D_id + D_exp + D_tex + 27 + 6`.
    pub fn total_dim(&self) -> usize {
        self.alpha.len() + self.beta.len() + self.delta.len() + GAMMA_DIM + POSE_DIM
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.len() != GAMMA_DIM {
            return Err(Error::config(format!(
                "gamma must have {} entries, got {}",
                GAMMA_DIM,
                self.gamma.len()
            )));
        }
        if !self.pose.is_wrapped() {
            return Err(Error::invalid("pose angles must lie in (-pi, pi]"));
        }
        Ok(())
    }
}

/// Linear face basis: mean shape/texture plus identity, expression and
/// texture modes. Vectors of length `3V` are laid out per vertex
/// (`x0 y0 z0 x1 y1 z1 ...`, or `r g b` for texture).
#[derive(Clone, Debug)]
pub struct FaceBasis<T> {
    pub mean_shape: Array1<T>,
    pub mean_texture: Array1<T>,
    pub basis_id: Array2<T>,
    pub basis_exp: Array2<T>,
    pub basis_tex: Array2<T>,
    pub triangles: Vec<[usize; 3]>,
}

impl<T: Real> FaceBasis<T> {
    pub fn vertex_count(&self) -> usize {
        self.mean_shape.len() / 3
    }

    pub fn dim_id(&self) -> usize {
        self.basis_id.ncols()
    }

    pub fn dim_exp(&self) -> usize {
        self.basis_exp.ncols()
    }

    pub fn dim_tex(&self) -> usize {
        self.basis_tex.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mean_shape.len();
        if n % 3 != 0 || n == 0 {
            return Err(Error::config("mean shape length must be a nonzero multiple of 3"));
        }
        if self.mean_texture.len() != n {
            return Err(Error::config("mean texture length must match mean shape"));
        }
        for (name, m) in [
            ("identity", &self.basis_id),
            ("expression", &self.basis_exp),
            ("texture", &self.basis_tex),
        ] {
            if m.nrows() != n {
                return Err(Error::config(format!(
                    "{name} basis has {} rows, expected {n}",
                    m.nrows()
                )));
            }
        }
        let v = n / 3;
        for (i, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&ix| ix >= v) {
                return Err(Error::config(format!("triangle {i} indexes past vertex count {v}")));
            }
        }
        Ok(())
    }
}

/// A realized face: vertex positions, per-vertex albedo and unit normals.
#[derive(Clone, Debug)]
pub struct FaceMesh<T> {
    /// V x 3 positions.
    pub vertices: Array2<T>,
    /// V x 3 albedo, clamped to [0,1].
    pub albedo: Array2<T>,
    /// V x 3 unit normals.
    pub normals: Array2<T>,
    pub triangles: Vec<[usize; 3]>,
}

impl<T: Real> FaceMesh<T> {
    /// Build a mesh from assembled vertices/albedo, computing area-weighted
    /// per-vertex normals.
    pub fn new(vertices: Array2<T>, albedo: Array2<T>, triangles: Vec<[usize; 3]>) -> Self {
        let normals = vertex_normals(&vertices, &triangles);
        FaceMesh {
            vertices,
            albedo,
            normals,
            triangles,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let tol = T::of(1e-6);
        for (i, n) in self.normals.rows().into_iter().enumerate() {
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if (norm - T::one()).abs() > tol {
                return Err(Error::invalid(format!("normal {i} has norm {norm}")));
            }
        }
        for &a in self.albedo.iter() {
            if a < T::zero() || a > T::one() {
                return Err(Error::invalid("albedo outside [0,1]"));
            }
        }
        Ok(())
    }
}

/// Area-weighted vertex normals; degenerate vertices fall back to +Z.
pub fn vertex_normals<T: Real>(vertices: &Array2<T>, triangles: &[[usize; 3]]) -> Array2<T> {
    let v = vertices.nrows();
    let mut acc = Array2::<T>::zeros((v, 3));
    for tri in triangles {
        let p0 = [vertices[[tri[0], 0]], vertices[[tri[0], 1]], vertices[[tri[0], 2]]];
        let p1 = [vertices[[tri[1], 0]], vertices[[tri[1], 1]], vertices[[tri[1], 2]]];
        let p2 = [vertices[[tri[2], 0]], vertices[[tri[2], 1]], vertices[[tri[2], 2]]];
        let e1 = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
        let e2 = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
        // Cross product magnitude carries the area weighting.
        let n = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ];
        for &ix in tri {
            for k in 0..3 {
                acc[[ix, k]] += n[k];
            }
        }
    }
    for mut row in acc.rows_mut() {
        let norm = (row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt();
        if norm > T::of(1e-12) {
            for k in 0..3 {
                row[k] /= norm;
            }
        } else {
            row[0] = T::zero();
            row[1] = T::zero();
            row[2] = T::one();
        }
    }
    acc
}

/// Perspective pinhole camera. Image coordinates: x right, y down, origin at
/// the top-left pixel corner; the camera looks along +Z.
#[derive(Clone, Copy, Debug)]
pub struct Camera<T> {
    /// Focal length in pixels (shared by both axes).
    pub focal: T,
    /// Principal point in pixels.
    pub principal: [T; 2],
    pub width: usize,
    pub height: usize,
}

impl<T: Real> Camera<T> {
    pub fn new(focal: T, principal: [T; 2], width: usize, height: usize) -> Result<Self> {
        let cam = Camera {
            focal,
            principal,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera centered on a `size`x`size` image with a given focal length.
    pub fn centered(focal: T, size: usize) -> Self {
        let half = T::of_usize(size) / T::of(2.0);
        Camera {
            focal,
            principal: [half, half],
            width: size,
            height: size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.focal <= T::zero() {
            return Err(Error::config("camera focal length must be positive"));
        }
        let (w, h) = (T::of_usize(self.width), T::of_usize(self.height));
        if self.principal[0] < T::zero()
            || self.principal[0] > w
            || self.principal[1] < T::zero()
            || self.principal[1] > h
        {
            return Err(Error::config("principal point must lie inside the image"));
        }
        Ok(())
    }
}

/// `S_bar + B_id * alpha + B_exp * beta`, reshaped to V x 3.
pub fn assemble_shape<T: Real>(
    basis: &FaceBasis<T>,
    alpha: &Array1<T>,
    beta: &Array1<T>,
) -> Result<Array2<T>> {
    if alpha.len() != basis.dim_id() {
        return Err(Error::config(format!(
            "identity coefficients: expected {}, got {}",
            basis.dim_id(),
            alpha.len()
        )));
    }
    if beta.len() != basis.dim_exp() {
        return Err(Error::config(format!(
            "expression coefficients: expected {}, got {}",
            basis.dim_exp(),
            beta.len()
        )));
    }
    let flat = &basis.mean_shape + &basis.basis_id.dot(alpha) + &basis.basis_exp.dot(beta);
    let v = basis.vertex_count();
    Ok(flat.into_shape_with_order((v, 3)).expect("3V vector reshape"))
}

/// `T_bar + B_tex * delta`, clamped to [0,1] and reshaped to V x 3.
pub fn assemble_texture<T: Real>(basis: &FaceBasis<T>, delta: &Array1<T>) -> Result<Array2<T>> {
    if delta.len() != basis.dim_tex() {
        return Err(Error::config(format!(
            "texture coefficients: expected {}, got {}",
            basis.dim_tex(),
            delta.len()
        )));
    }
    let mut flat = &basis.mean_texture + &basis.basis_tex.dot(delta);
    flat.mapv_inplace(|x| x.max(T::zero()).min(T::one()));
    let v = basis.vertex_count();
    Ok(flat.into_shape_with_order((v, 3)).expect("3V vector reshape"))
}

/// Realize a full mesh from a coefficient set (low-frequency basis albedo).
pub fn assemble_mesh<T: Real>(basis: &FaceBasis<T>, coeffs: &CoefficientSet<T>) -> Result<FaceMesh<T>> {
    let vertices = assemble_shape(basis, &coeffs.alpha, &coeffs.beta)?;
    let albedo = assemble_texture(basis, &coeffs.delta)?;
    Ok(FaceMesh::new(vertices, albedo, basis.triangles.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn toy_basis() -> FaceBasis<f64> {
        // 4 vertices, hand-written modes.
        let mean_shape = array![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let mean_texture = Array1::from_elem(12, 0.5);
        let mut basis_id = Array2::zeros((12, 2));
        basis_id[[0, 0]] = 1.0;
        basis_id[[4, 1]] = 1.0;
        let mut basis_exp = Array2::zeros((12, 2));
        basis_exp[[8, 0]] = 1.0;
        basis_exp[[11, 1]] = 1.0;
        let mut basis_tex = Array2::zeros((12, 2));
        basis_tex[[1, 0]] = 1.0;
        basis_tex[[2, 1]] = 1.0;
        FaceBasis {
            mean_shape,
            mean_texture,
            basis_id,
            basis_exp,
            basis_tex,
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        }
    }

    #[test]
    fn zero_coefficients_reproduce_the_mean() {
        let basis = toy_basis();
        let shape = assemble_shape(&basis, &Array1::zeros(2), &Array1::zeros(2)).unwrap();
        for (i, row) in shape.rows().into_iter().enumerate() {
            for k in 0..3 {
                assert_eq!(row[k], basis.mean_shape[i * 3 + k]);
            }
        }
        let tex = assemble_texture(&basis, &Array1::zeros(2)).unwrap();
        assert!(tex.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn assembly_matches_dense_matrix_product_oracle() {
        let basis = toy_basis();
        let mut rng = StdRng::seed_from_u64(7);
        let alpha = Array1::from_shape_fn(2, |_| rng.gen_range(-1.0..1.0));
        let beta = Array1::from_shape_fn(2, |_| rng.gen_range(-1.0..1.0));
        let shape = assemble_shape(&basis, &alpha, &beta).unwrap();

        // Independent elementwise oracle: explicit loops over the 3V entries.
        for i in 0..12 {
            let mut expect = basis.mean_shape[i];
            for j in 0..2 {
                expect += basis.basis_id[[i, j]] * alpha[j];
                expect += basis.basis_exp[[i, j]] * beta[j];
            }
            assert!((shape[[i / 3, i % 3]] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn paper_scale_dims_are_accepted() {
        // D_id=80, D_exp=64, D_tex=80 on a small vertex count.
        let v = 10;
        let basis = FaceBasis::<f64> {
            mean_shape: Array1::zeros(3 * v),
            mean_texture: Array1::zeros(3 * v),
            basis_id: Array2::zeros((3 * v, 80)),
            basis_exp: Array2::zeros((3 * v, 64)),
            basis_tex: Array2::zeros((3 * v, 80)),
            triangles: vec![[0, 1, 2]],
        };
        basis.validate().unwrap();
        let shape = assemble_shape(&basis, &Array1::zeros(80), &Array1::zeros(64)).unwrap();
        assert_eq!(shape.len(), 3 * v);
        let coeffs = CoefficientSet::<f64>::zeros(80, 64, 80);
        assert_eq!(coeffs.total_dim(), 257);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let basis = toy_basis();
        let err = assemble_shape(&basis, &Array1::zeros(3), &Array1::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(assemble_texture(&basis, &Array1::zeros(5)).is_err());
    }

    #[test]
    fn shape_assembly_is_linear_in_alpha() {
        let basis = toy_basis();
        let mut rng = StdRng::seed_from_u64(11);
        let a1 = Array1::from_shape_fn(2, |_| rng.gen_range(-1.0..1.0));
        let a2 = Array1::from_shape_fn(2, |_| rng.gen_range(-1.0..1.0));
        let b = Array1::from_shape_fn(2, |_| rng.gen_range(-1.0..1.0));

        let lhs = assemble_shape(&basis, &(&a1 + &a2), &b).unwrap();
        let base = assemble_shape(&basis, &a1, &b).unwrap();
        let extra = basis
            .basis_id
            .dot(&a2)
            .into_shape_with_order((4, 3))
            .unwrap();
        let rhs = &base + &extra;
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            let denom = r.abs().max(1.0);
            assert!((l - r).abs() / denom < 1e-9);
        }
    }

    #[test]
    fn angle_wrapping_stays_in_half_open_interval() {
        use std::f64::consts::PI;
        assert!((wrap_angle(PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn vertex_normals_of_a_flat_triangle_point_up() {
        let vertices: Array2<f64> = array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let normals = vertex_normals(&vertices, &[[0, 1, 2]]);
        for row in normals.rows() {
            assert!((row[2].abs() - 1.0).abs() < 1e-12);
        }
    }
}
