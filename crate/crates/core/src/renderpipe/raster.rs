//! Z-buffered barycentric rasterization with per-vertex SH shading
//! (Gouraud interpolation, screen-space barycentrics).

use ndarray::{Array1, Array2, Array3};

use crate::error::Result;
use crate::face3d::{
    assemble_mesh, project, rotation_matrix, sh_irradiance, Camera, CoefficientSet, FaceBasis,
    FaceMesh, Pose,
};
use crate::num::Real;

use super::RenderedFrame;

/// Rasterize a mesh under a pose, camera, and SH illumination.
///
/// Per-vertex irradiance uses the pose-rotated normals (illumination lives in
/// camera space); colors are interpolated across triangles and clamped to
/// [0,1]. Occlusion resolves to the strictly nearest depth; a fully
/// off-screen face yields an empty mask and a warning, not an error.
pub fn rasterize<T: Real>(
    mesh: &FaceMesh<T>,
    pose: &Pose<T>,
    camera: &Camera<T>,
    gamma: &Array1<T>,
) -> Result<RenderedFrame<T>> {
    camera.validate()?;
    let proj = project(&mesh.vertices, pose, camera)?;
    let rot = rotation_matrix(pose.angles);

    // Per-vertex shaded colors from rotated normals.
    let v_count = mesh.vertex_count();
    let mut colors = Array2::<T>::zeros((v_count, 3));
    for v in 0..v_count {
        let n = [
            mesh.normals[[v, 0]],
            mesh.normals[[v, 1]],
            mesh.normals[[v, 2]],
        ];
        let mut world_n = [T::zero(); 3];
        for i in 0..3 {
            world_n[i] = rot[i][0] * n[0] + rot[i][1] * n[1] + rot[i][2] * n[2];
        }
        let albedo = [
            mesh.albedo[[v, 0]],
            mesh.albedo[[v, 1]],
            mesh.albedo[[v, 2]],
        ];
        let rgb = sh_irradiance(world_n, albedo, &gamma.view())?;
        for c in 0..3 {
            colors[[v, c]] = rgb[c].max(T::zero()).min(T::one());
        }
    }

    let (h, w) = (camera.height, camera.width);
    let mut image = Array3::<T>::zeros((h, w, 3));
    let mut mask = Array2::from_elem((h, w), false);
    let mut depth = Array2::from_elem((h, w), T::infinity());

    for tri in &mesh.triangles {
        if tri.iter().any(|&ix| !proj.visible[ix]) {
            continue;
        }
        let p0 = proj.points[tri[0]];
        let p1 = proj.points[tri[1]];
        let p2 = proj.points[tri[2]];
        let z = [proj.depths[tri[0]], proj.depths[tri[1]], proj.depths[tri[2]]];

        let min_x = p0[0].min(p1[0]).min(p2[0]).floor().as_f64().max(0.0) as usize;
        let max_x = (p0[0].max(p1[0]).max(p2[0]).ceil().as_f64()).min(w as f64 - 1.0) as usize;
        let min_y = p0[1].min(p1[1]).min(p2[1]).floor().as_f64().max(0.0) as usize;
        let max_y = (p0[1].max(p1[1]).max(p2[1]).ceil().as_f64()).min(h as f64 - 1.0) as usize;
        if min_x > max_x || min_y > max_y {
            continue;
        }

        let area = edge(p0, p1, p2);
        if area.abs() < T::of(1e-12) {
            continue; // degenerate in screen space
        }
        let inv_area = T::one() / area;

        for py in min_y..=max_y {
            for px in min_x..=max_x {
                let pt = [
                    T::of_usize(px) + T::of(0.5),
                    T::of_usize(py) + T::of(0.5),
                ];
                let w0 = edge(p1, p2, pt) * inv_area;
                let w1 = edge(p2, p0, pt) * inv_area;
                let w2 = edge(p0, p1, pt) * inv_area;
                if w0 < T::zero() || w1 < T::zero() || w2 < T::zero() {
                    continue;
                }
                let d = w0 * z[0] + w1 * z[1] + w2 * z[2];
                if d < depth[[py, px]] {
                    depth[[py, px]] = d;
                    mask[[py, px]] = true;
                    for c in 0..3 {
                        let col = w0 * colors[[tri[0], c]]
                            + w1 * colors[[tri[1], c]]
                            + w2 * colors[[tri[2], c]];
                        image[[py, px, c]] = col.max(T::zero()).min(T::one());
                    }
                }
            }
        }
    }

    let frame = RenderedFrame {
        image,
        mask,
        depth,
        pose: *pose,
    };
    if frame.mask_is_empty() {
        log::warn!("rasterized face is fully off-screen (empty mask)");
    }
    Ok(frame)
}

/// Signed twice-area of the triangle (a, b, p).
fn edge<T: Real>(a: [T; 2], b: [T; 2], p: [T; 2]) -> T {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Assemble a mesh from coefficients and rasterize it, optionally replacing
/// the basis albedo with a detailed per-vertex albedo.
pub fn render_coefficients<T: Real>(
    basis: &FaceBasis<T>,
    coeffs: &CoefficientSet<T>,
    camera: &Camera<T>,
    detailed_albedo: Option<&Array2<T>>,
) -> Result<RenderedFrame<T>> {
    let mut mesh = assemble_mesh(basis, coeffs)?;
    if let Some(albedo) = detailed_albedo {
        mesh.albedo = albedo.clone();
    }
    rasterize(&mesh, &coeffs.pose, camera, &coeffs.gamma)
}
