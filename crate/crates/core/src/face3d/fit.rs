//! Landmark least-squares fitter: recovers pose and shape coefficients from
//! 2D landmark correspondences by alternating damped Gauss-Newton updates on
//! the pose block and the coefficient block.
//!
//! This is plumbing that stands in for a learned photometric reconstructor;
//! texture and illumination carry no landmark signal, so `delta` and `gamma`
//! come back zero.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::num::Real;

use super::{project, Camera, CoefficientSet, FaceBasis, Pose};

#[derive(Clone, Debug)]
pub struct FitOptions<T> {
    pub max_outer_iters: usize,
    /// Ridge weight on the squared identity-coefficient norm.
    pub reg_alpha: T,
    /// Ridge weight on the squared expression-coefficient norm.
    pub reg_beta: T,
    /// Ridge weight on the squared texture-coefficient norm (texture is not
    /// observable from landmarks; the weight keeps it pinned at zero).
    pub reg_delta: T,
    /// Stop when the RMSE improves by less than this between outer rounds.
    pub tol_px: T,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        FitOptions {
            max_outer_iters: 40,
            reg_alpha: T::of(1e-3),
            reg_beta: T::of(1e-3),
            reg_delta: T::of(1e-2),
            tol_px: T::of(1e-10),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FitReport<T> {
    /// Reprojection root-mean-square error in pixels at the returned solution.
    pub rmse: T,
    pub iterations: usize,
    /// False when the iteration budget ran out before the tolerance was met;
    /// the returned coefficients are then best-so-far.
    pub converged: bool,
}

/// Landmark-restricted view of a basis: only the rows of the selected
/// vertices, so residual evaluation is O(L) not O(V).
struct LandmarkBasis<T> {
    mean: Array1<T>,
    basis_id: Array2<T>,
    basis_exp: Array2<T>,
}

impl<T: Real> LandmarkBasis<T> {
    fn new(basis: &FaceBasis<T>, landmark_vertices: &[usize]) -> Self {
        let l = landmark_vertices.len();
        let mut mean = Array1::zeros(3 * l);
        let mut basis_id = Array2::zeros((3 * l, basis.dim_id()));
        let mut basis_exp = Array2::zeros((3 * l, basis.dim_exp()));
        for (row, &v) in landmark_vertices.iter().enumerate() {
            for k in 0..3 {
                mean[row * 3 + k] = basis.mean_shape[v * 3 + k];
                for j in 0..basis.dim_id() {
                    basis_id[[row * 3 + k, j]] = basis.basis_id[[v * 3 + k, j]];
                }
                for j in 0..basis.dim_exp() {
                    basis_exp[[row * 3 + k, j]] = basis.basis_exp[[v * 3 + k, j]];
                }
            }
        }
        LandmarkBasis {
            mean,
            basis_id,
            basis_exp,
        }
    }

    fn positions(&self, alpha: &Array1<T>, beta: &Array1<T>) -> Array2<T> {
        let flat = &self.mean + &self.basis_id.dot(alpha) + &self.basis_exp.dot(beta);
        let l = self.mean.len() / 3;
        flat.into_shape_with_order((l, 3)).expect("landmark reshape")
    }
}

struct Params<T> {
    pose: [T; 6],
    alpha: Array1<T>,
    beta: Array1<T>,
}

/// Residual vector (2L entries): projected landmark minus target, in pixels.
/// Landmarks that fall behind the camera contribute a large fixed penalty so
/// the optimizer backs away from degenerate poses.
fn residuals<T: Real>(
    params: &Params<T>,
    lm_basis: &LandmarkBasis<T>,
    targets: &[[T; 2]],
    camera: &Camera<T>,
) -> Array1<T> {
    let positions = lm_basis.positions(&params.alpha, &params.beta);
    let pose = Pose::from_vec6(&params.pose);
    let proj = project(&positions, &pose, camera).expect("camera validated by caller");
    let penalty = T::of(1e4);
    let mut r = Array1::zeros(2 * targets.len());
    for i in 0..targets.len() {
        if proj.visible[i] {
            r[2 * i] = proj.points[i][0] - targets[i][0];
            r[2 * i + 1] = proj.points[i][1] - targets[i][1];
        } else {
            r[2 * i] = penalty;
            r[2 * i + 1] = penalty;
        }
    }
    r
}

fn objective<T: Real>(r: &Array1<T>, params: &Params<T>, opts: &FitOptions<T>) -> T {
    let data: T = r.iter().map(|&x| x * x).sum();
    let reg = opts.reg_alpha * params.alpha.dot(&params.alpha)
        + opts.reg_beta * params.beta.dot(&params.beta);
    data + reg
}

/// Which parameter block a Gauss-Newton step updates. Alternation between
/// the pose and coefficient blocks finds the basin; the joint step removes
/// the slow zigzag block descent exhibits near the optimum.
enum Block {
    Pose,
    Coefficients,
    Joint,
}

/// Fit pose and identity/expression coefficients to 2D landmarks.
///
/// `landmark_vertices[i]` is the mesh vertex observed at `landmarks[i]`.
/// Requires at least 6 correspondences.
pub fn fit_to_landmarks<T: Real>(
    landmarks: &[[T; 2]],
    landmark_vertices: &[usize],
    basis: &FaceBasis<T>,
    camera: &Camera<T>,
    opts: &FitOptions<T>,
) -> Result<(CoefficientSet<T>, FitReport<T>)> {
    if landmarks.len() < 6 {
        return Err(Error::invalid(format!(
            "need at least 6 landmark correspondences, got {}",
            landmarks.len()
        )));
    }
    if landmarks.len() != landmark_vertices.len() {
        return Err(Error::invalid("landmarks and vertex indices must pair up"));
    }
    camera.validate()?;
    basis.validate()?;
    let v = basis.vertex_count();
    if let Some(&bad) = landmark_vertices.iter().find(|&&ix| ix >= v) {
        return Err(Error::invalid(format!("landmark vertex {bad} out of range")));
    }

    let lm_basis = LandmarkBasis::new(basis, landmark_vertices);

    // Depth init from similar triangles: mesh radius ~ |mean shape| rows,
    // landmark spread gives the apparent radius in pixels.
    let l = landmarks.len();
    let mut cx = T::zero();
    let mut cy = T::zero();
    for p in landmarks {
        cx += p[0];
        cy += p[1];
    }
    cx /= T::of_usize(l);
    cy /= T::of_usize(l);
    let mut spread = T::zero();
    for p in landmarks {
        spread += (p[0] - cx) * (p[0] - cx) + (p[1] - cy) * (p[1] - cy);
    }
    spread = (spread / T::of_usize(l)).sqrt().max(T::of(1.0));
    let mut radius = T::zero();
    for i in 0..l {
        let row = lm_basis.mean.slice(ndarray::s![3 * i..3 * i + 3]);
        radius += (row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt();
    }
    radius = (radius / T::of_usize(l)).max(T::of(1e-3));
    let z0 = (camera.focal * radius / spread).max(T::of(0.5));

    let mut params = Params {
        pose: [T::zero(), T::zero(), T::zero(), T::zero(), T::zero(), z0],
        alpha: Array1::zeros(basis.dim_id()),
        beta: Array1::zeros(basis.dim_exp()),
    };

    let mut best = (
        objective(&residuals(&params, &lm_basis, landmarks, camera), &params, opts),
        params.pose,
        params.alpha.clone(),
        params.beta.clone(),
    );
    let mut converged = false;
    let mut iterations = 0;
    let mut prev_obj = best.0;

    for outer in 0..opts.max_outer_iters {
        iterations = outer + 1;
        // Rigid warm-up: settle the pose before letting the shape move, so
        // coefficients do not absorb what is really a rotation.
        let blocks: &[Block] = if outer < 3 {
            &[Block::Pose]
        } else {
            &[Block::Pose, Block::Coefficients, Block::Joint]
        };
        for block in blocks {
            gauss_newton_step(&mut params, block, &lm_basis, landmarks, camera, opts);
        }
        let obj = objective(&residuals(&params, &lm_basis, landmarks, camera), &params, opts);
        if obj < best.0 {
            best = (obj, params.pose, params.alpha.clone(), params.beta.clone());
        }
        let improvement = (prev_obj - obj).abs();
        prev_obj = obj;
        if improvement.sqrt() < opts.tol_px || obj.sqrt() < T::of(1e-9) {
            converged = true;
            break;
        }
    }

    let (_, pose6, alpha, beta) = best;
    let final_params = Params {
        pose: pose6,
        alpha: alpha.clone(),
        beta: beta.clone(),
    };
    let r = residuals(&final_params, &lm_basis, landmarks, camera);
    let rmse = (r.iter().map(|&x| x * x).sum::<T>() / T::of_usize(r.len())).sqrt();
    if !converged {
        log::warn!("landmark fit hit the iteration budget; returning best-so-far (rmse {rmse})");
    }

    let mut coeffs = CoefficientSet::zeros(basis.dim_id(), basis.dim_exp(), basis.dim_tex());
    coeffs.alpha = alpha;
    coeffs.beta = beta;
    coeffs.pose = Pose::from_vec6(&pose6).wrapped();
    Ok((
        coeffs,
        FitReport {
            rmse,
            iterations,
            converged,
        },
    ))
}

fn gauss_newton_step<T: Real>(
    params: &mut Params<T>,
    block: &Block,
    lm_basis: &LandmarkBasis<T>,
    targets: &[[T; 2]],
    camera: &Camera<T>,
    opts: &FitOptions<T>,
) {
    let alpha_len = params.alpha.len();
    let coeff_len = alpha_len + params.beta.len();
    // The joint block orders parameters [pose(6), alpha, beta].
    let n = match block {
        Block::Pose => 6,
        Block::Coefficients => coeff_len,
        Block::Joint => 6 + coeff_len,
    };
    let m = 2 * targets.len();
    let h = T::of(1e-5);

    let coeff_index = |block: &Block, i: usize| -> Option<usize> {
        match block {
            Block::Pose => None,
            Block::Coefficients => Some(i),
            Block::Joint => i.checked_sub(6),
        }
    };
    let get = |p: &Params<T>, i: usize| -> T {
        match coeff_index(block, i) {
            None => p.pose[i],
            Some(c) => {
                if c < alpha_len {
                    p.alpha[c]
                } else {
                    p.beta[c - alpha_len]
                }
            }
        }
    };
    let set = |p: &mut Params<T>, i: usize, v: T| match coeff_index(block, i) {
        None => p.pose[i] = v,
        Some(c) => {
            if c < alpha_len {
                p.alpha[c] = v;
            } else {
                p.beta[c - alpha_len] = v;
            }
        }
    };
    let reg = |i: usize| -> T {
        match coeff_index(block, i) {
            None => T::zero(),
            Some(c) => {
                if c < alpha_len {
                    opts.reg_alpha
                } else {
                    opts.reg_beta
                }
            }
        }
    };

    let r0 = residuals(params, lm_basis, targets, camera);

    // Central-difference Jacobian, one column per block parameter.
    let mut jac = Array2::<T>::zeros((m, n));
    for j in 0..n {
        let orig = get(params, j);
        set(params, j, orig + h);
        let rp = residuals(params, lm_basis, targets, camera);
        set(params, j, orig - h);
        let rm = residuals(params, lm_basis, targets, camera);
        set(params, j, orig);
        let scale = T::one() / (h + h);
        for i in 0..m {
            jac[[i, j]] = (rp[i] - rm[i]) * scale;
        }
    }

    // Normal equations of the ridge-regularized objective.
    let jt_j = jac.t().dot(&jac);
    let mut grad = jac.t().dot(&r0);
    for i in 0..n {
        grad[i] += reg(i) * get(params, i);
    }

    let obj0 = objective(&r0, params, opts);
    let mut damping = T::of(1e-6);
    for _attempt in 0..8 {
        let mut lhs = jt_j.clone();
        for i in 0..n {
            lhs[[i, i]] += reg(i) + damping * (T::one() + jt_j[[i, i]]);
        }
        let Some(delta) = solve_spd(&lhs, &grad) else {
            damping *= T::of(10.0);
            continue;
        };
        let saved: Vec<T> = (0..n).map(|i| get(params, i)).collect();
        for i in 0..n {
            set(params, i, saved[i] - delta[i]);
        }
        let obj = objective(&residuals(params, lm_basis, targets, camera), params, opts);
        if obj < obj0 {
            return; // accepted
        }
        for (i, &v) in saved.iter().enumerate() {
            set(params, i, v);
        }
        damping *= T::of(10.0);
    }
    // No improving step found at any damping; leave the block unchanged.
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face3d::{assemble_shape, SyntheticBasisConfig};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn basis() -> FaceBasis<f64> {
        SyntheticBasisConfig {
            subdivisions: 2,
            ..Default::default()
        }
        .build()
    }

    /// Deterministic pick of front-facing vertices as landmark stand-ins.
    fn landmark_vertices(basis: &FaceBasis<f64>, count: usize) -> Vec<usize> {
        let mut picked = Vec::new();
        for v in 0..basis.vertex_count() {
            if basis.mean_shape[v * 3 + 2] > 0.35 {
                picked.push(v);
            }
        }
        picked.into_iter().step_by(2).take(count).collect()
    }

    fn project_landmarks(
        basis: &FaceBasis<f64>,
        vertices: &[usize],
        alpha: &Array1<f64>,
        beta: &Array1<f64>,
        pose: &Pose<f64>,
        camera: &Camera<f64>,
    ) -> Vec<[f64; 2]> {
        let shape = assemble_shape(basis, alpha, beta).unwrap();
        let proj = project(&shape, pose, camera).unwrap();
        vertices.iter().map(|&v| proj.points[v]).collect()
    }

    #[test]
    fn render_then_fit_round_trip_recovers_pose() {
        let basis = basis();
        let camera = Camera::centered(220.0, 128);
        let lm_verts = landmark_vertices(&basis, 24);
        assert!(lm_verts.len() >= 20);

        let mut rng = StdRng::seed_from_u64(42);
        let alpha = Array1::from_shape_fn(basis.dim_id(), |_| 0.15 * rng.gen_range(-1.0..1.0));
        let beta = Array1::from_shape_fn(basis.dim_exp(), |_| 0.15 * rng.gen_range(-1.0..1.0));
        let pose = Pose::new([-0.18, 0.25, 0.10], [0.06, -0.09, 4.2]);
        let landmarks = project_landmarks(&basis, &lm_verts, &alpha, &beta, &pose, &camera);

        let (fit, report) =
            fit_to_landmarks(&landmarks, &lm_verts, &basis, &camera, &FitOptions::default())
                .unwrap();
        for k in 0..3 {
            assert!(
                (fit.pose.angles[k] - pose.angles[k]).abs() < 1e-3,
                "angle {k}: fit {} vs true {}",
                fit.pose.angles[k],
                pose.angles[k]
            );
        }
        assert!(
            report.rmse < 0.5,
            "reprojection rmse too high: {}",
            report.rmse
        );
    }

    #[test]
    fn zero_coefficient_landmarks_recover_near_zero_coefficients() {
        let basis = basis();
        let camera = Camera::centered(220.0, 128);
        let lm_verts = landmark_vertices(&basis, 24);
        let alpha = Array1::zeros(basis.dim_id());
        let beta = Array1::zeros(basis.dim_exp());
        let pose = Pose::new([0.05, -0.1, 0.0], [0.0, 0.0, 4.0]);
        let landmarks = project_landmarks(&basis, &lm_verts, &alpha, &beta, &pose, &camera);

        let (fit, _) =
            fit_to_landmarks(&landmarks, &lm_verts, &basis, &camera, &FitOptions::default())
                .unwrap();
        let coeff_norm = fit.alpha.dot(&fit.alpha).sqrt() + fit.beta.dot(&fit.beta).sqrt();
        assert!(coeff_norm < 1e-2, "coefficients not shrunk to zero: {coeff_norm}");
    }

    #[test]
    fn too_few_landmarks_is_a_precondition_error() {
        let basis = basis();
        let camera = Camera::centered(220.0, 128);
        let lms = vec![[0.0, 0.0]; 5];
        let verts = vec![0, 1, 2, 3, 4];
        assert!(matches!(
            fit_to_landmarks(&lms, &verts, &basis, &camera, &FitOptions::default()),
            Err(Error::Invalid(_))
        ));
    }
}
