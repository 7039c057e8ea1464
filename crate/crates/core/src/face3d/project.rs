//! Rigid transform and perspective projection onto the image plane.

use ndarray::Array2;

use crate::error::Result;
use crate::num::Real;

use super::{Camera, Pose};

/// Depth below which a vertex counts as behind the camera.
const NEAR_EPS: f64 = 1e-9;

/// Composite rotation for pose angles `[pitch, yaw, roll]`.
///
/// Intrinsic rotations applied roll (Z) first, then pitch (X), then yaw (Y):
/// `R = Rz(roll) * Rx(pitch) * Ry(yaw)` acting on column vectors.
pub fn rotation_matrix<T: Real>(angles: [T; 3]) -> [[T; 3]; 3] {
    let (sp, cp) = angles[0].sin_cos();
    let (sy, cy) = angles[1].sin_cos();
    let (sr, cr) = angles[2].sin_cos();

    let rx = [
        [T::one(), T::zero(), T::zero()],
        [T::zero(), cp, -sp],
        [T::zero(), sp, cp],
    ];
    let ry = [
        [cy, T::zero(), sy],
        [T::zero(), T::one(), T::zero()],
        [-sy, T::zero(), cy],
    ];
    let rz = [
        [cr, -sr, T::zero()],
        [sr, cr, T::zero()],
        [T::zero(), T::zero(), T::one()],
    ];
    mat_mul(&rz, &mat_mul(&rx, &ry))
}

fn mat_mul<T: Real>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Result of projecting a vertex set: pixel coordinates, view-space depths,
/// and a per-vertex visibility flag (false when the vertex sits at or behind
/// the camera plane). Coordinates of invisible vertices are zeroed.
#[derive(Clone, Debug)]
pub struct Projection<T> {
    pub points: Vec<[T; 2]>,
    pub depths: Vec<T>,
    pub visible: Vec<bool>,
}

impl<T: Real> Projection<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Rotate, translate, and perspective-project `vertices` (V x 3).
pub fn project<T: Real>(
    vertices: &Array2<T>,
    pose: &Pose<T>,
    camera: &Camera<T>,
) -> Result<Projection<T>> {
    camera.validate()?;
    let rot = rotation_matrix(pose.angles);
    let t = pose.translation;
    let near = T::of(NEAR_EPS);

    let n = vertices.nrows();
    let mut points = Vec::with_capacity(n);
    let mut depths = Vec::with_capacity(n);
    let mut visible = Vec::with_capacity(n);
    for row in vertices.rows() {
        let p = [row[0], row[1], row[2]];
        let mut q = [T::zero(); 3];
        for i in 0..3 {
            q[i] = rot[i][0] * p[0] + rot[i][1] * p[1] + rot[i][2] * p[2] + t[i];
        }
        let depth = q[2];
        if depth > near {
            let inv = T::one() / depth;
            points.push([
                camera.focal * q[0] * inv + camera.principal[0],
                camera.focal * q[1] * inv + camera.principal[1],
            ]);
            depths.push(depth);
            visible.push(true);
        } else {
            points.push([T::zero(); 2]);
            depths.push(depth);
            visible.push(false);
        }
    }
    Ok(Projection {
        points,
        depths,
        visible,
    })
}
