//! Synthetic face basis generation plus basis container I/O and OBJ export.
//!
//! The synthetic basis stands in for license-restricted scan-derived bases:
//! the mean shape is an icosphere "head", and each identity/expression/
//! texture mode is Gaussian noise diffused over the mesh graph so modes look
//! like smooth deformations. Columns are orthonormalized, so coefficient
//! distances are geometric distances.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::container::{ContainerReader, ContainerWriter};
use crate::error::{Error, Result};
use crate::linalg::orthonormalize_columns;
use crate::num::Real;

use super::{FaceBasis, FaceMesh};

/// Configuration for the synthetic orthonormal basis.
#[derive(Clone, Debug)]
pub struct SyntheticBasisConfig {
    /// Icosphere subdivision level; level 3 gives 642 vertices.
    pub subdivisions: usize,
    pub dim_id: usize,
    pub dim_exp: usize,
    pub dim_tex: usize,
    /// Graph-Laplacian smoothing passes applied to each raw mode.
    pub smooth_iters: usize,
    pub seed: u64,
}

impl Default for SyntheticBasisConfig {
    fn default() -> Self {
        SyntheticBasisConfig {
            subdivisions: 3,
            dim_id: 8,
            dim_exp: 6,
            dim_tex: 8,
            smooth_iters: 12,
            seed: 0x7fa_ce,
        }
    }
}

impl SyntheticBasisConfig {
    /// Paper-scale coefficient dimensions (80 + 64 + 80).
    pub fn paper_scale(mut self) -> Self {
        self.dim_id = 80;
        self.dim_exp = 64;
        self.dim_tex = 80;
        self
    }

    pub fn build<T: Real>(&self) -> FaceBasis<T> {
        synthetic_basis(self)
    }
}

/// Unit icosphere: vertices on the unit sphere plus a triangle list.
pub fn icosphere(subdivisions: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    for v in &mut vertices {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        *v = [v[0] / n, v[1] / n, v[2] / n];
    }
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint = std::collections::HashMap::<(usize, usize), usize>::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&ix) = midpoint.get(&key) {
                return ix;
            }
            let pa = vertices[a];
            let pb = vertices[b];
            let mut m = [
                (pa[0] + pb[0]) / 2.0,
                (pa[1] + pb[1]) / 2.0,
                (pa[2] + pb[2]) / 2.0,
            ];
            let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
            m = [m[0] / n, m[1] / n, m[2] / n];
            vertices.push(m);
            let ix = vertices.len() - 1;
            midpoint.insert(key, ix);
            ix
        };
        for tri in &triangles {
            let [a, b, c] = *tri;
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }
    (vertices, triangles)
}

fn adjacency(vertex_count: usize, triangles: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); vertex_count];
    for tri in triangles {
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            if !adj[a].contains(&b) {
                adj[a].push(b);
            }
            if !adj[b].contains(&a) {
                adj[b].push(a);
            }
        }
    }
    adj
}

/// One Laplacian smoothing pass over a per-vertex 3-channel field.
fn smooth_field(field: &mut [f64], adj: &[Vec<usize>]) {
    let v = adj.len();
    let prev = field.to_vec();
    for i in 0..v {
        let neighbors = &adj[i];
        if neighbors.is_empty() {
            continue;
        }
        for k in 0..3 {
            let mut avg = 0.0;
            for &j in neighbors {
                avg += prev[j * 3 + k];
            }
            avg /= neighbors.len() as f64;
            field[i * 3 + k] = 0.5 * prev[i * 3 + k] + 0.5 * avg;
        }
    }
}

fn synthetic_basis<T: Real>(cfg: &SyntheticBasisConfig) -> FaceBasis<T> {
    let (vertices, triangles) = icosphere(cfg.subdivisions);
    let v = vertices.len();
    let adj = adjacency(v, &triangles);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    let mut mean_shape = Array1::<T>::zeros(3 * v);
    for (i, p) in vertices.iter().enumerate() {
        for k in 0..3 {
            mean_shape[i * 3 + k] = T::of(p[k]);
        }
    }

    // Smooth skin-toned mean texture varying gently with height.
    let mut mean_texture = Array1::<T>::zeros(3 * v);
    for (i, p) in vertices.iter().enumerate() {
        let z = p[2];
        let rgb = [
            (0.80 + 0.05 * z).clamp(0.0, 1.0),
            (0.62 + 0.04 * z).clamp(0.0, 1.0),
            (0.52 + 0.03 * z).clamp(0.0, 1.0),
        ];
        for k in 0..3 {
            mean_texture[i * 3 + k] = T::of(rgb[k]);
        }
    }

    let make_modes = |dims: usize, rng: &mut ChaCha12Rng| -> Array2<T> {
        let mut m = Array2::<T>::zeros((3 * v, dims));
        for j in 0..dims {
            let mut field: Vec<f64> = (0..3 * v)
                .map(|_| {
                    // Box-Muller from two uniforms keeps the draw count fixed
                    // regardless of rand's gaussian implementation details.
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            for _ in 0..cfg.smooth_iters {
                smooth_field(&mut field, &adj);
            }
            for i in 0..3 * v {
                m[[i, j]] = T::of(field[i]);
            }
        }
        orthonormalize_columns(&mut m);
        m
    };

    let basis_id = make_modes(cfg.dim_id, &mut rng);
    let basis_exp = make_modes(cfg.dim_exp, &mut rng);
    let basis_tex = make_modes(cfg.dim_tex, &mut rng);

    FaceBasis {
        mean_shape,
        mean_texture,
        basis_id,
        basis_exp,
        basis_tex,
        triangles,
    }
}

/// Serialize a basis into the shared binary container.
///
/// Array order: mean shape, mean texture, identity/expression/texture bases,
/// triangle indices; the header carries dims, vertex and triangle counts.
pub fn save_basis<T: Real>(basis: &FaceBasis<T>, path: impl AsRef<Path>) -> Result<()> {
    basis.validate()?;
    let v = basis.vertex_count();
    let f = basis.triangles.len();
    let meta = serde_json::json!({
        "vertices": v,
        "triangles": f,
        "dim_id": basis.dim_id(),
        "dim_exp": basis.dim_exp(),
        "dim_tex": basis.dim_tex(),
    });
    let mut w = ContainerWriter::new("face-basis").meta(meta);
    w.push_real("mean_shape", &[3 * v], basis.mean_shape.as_slice().unwrap());
    w.push_real("mean_texture", &[3 * v], basis.mean_texture.as_slice().unwrap());
    w.push_real(
        "basis_id",
        &[3 * v, basis.dim_id()],
        basis.basis_id.as_slice().unwrap(),
    );
    w.push_real(
        "basis_exp",
        &[3 * v, basis.dim_exp()],
        basis.basis_exp.as_slice().unwrap(),
    );
    w.push_real(
        "basis_tex",
        &[3 * v, basis.dim_tex()],
        basis.basis_tex.as_slice().unwrap(),
    );
    let tris: Vec<i32> = basis
        .triangles
        .iter()
        .flat_map(|t| t.iter().map(|&ix| ix as i32))
        .collect();
    w.push_i32("triangles", &[f, 3], tris);
    w.write(path)
}

/// Load a basis container (synthetic or externally converted paper-scale).
pub fn load_basis<T: Real>(path: impl AsRef<Path>) -> Result<FaceBasis<T>> {
    let r = ContainerReader::open(path)?;
    if r.kind() != "face-basis" {
        return Err(Error::format(format!(
            "expected a face-basis container, found kind `{}`",
            r.kind()
        )));
    }
    let mean_shape = Array1::from_vec(r.real_array::<T>("mean_shape")?);
    let mean_texture = Array1::from_vec(r.real_array::<T>("mean_texture")?);
    let read_matrix = |name: &str| -> Result<Array2<T>> {
        let shape = r.shape(name)?.to_vec();
        if shape.len() != 2 {
            return Err(Error::format(format!("array `{name}` is not 2-D")));
        }
        let data = r.real_array::<T>(name)?;
        Array2::from_shape_vec((shape[0], shape[1]), data)
            .map_err(|e| Error::format(format!("array `{name}`: {e}")))
    };
    let basis_id = read_matrix("basis_id")?;
    let basis_exp = read_matrix("basis_exp")?;
    let basis_tex = read_matrix("basis_tex")?;
    let tri_raw = r.i32_array("triangles")?;
    if tri_raw.len() % 3 != 0 {
        return Err(Error::format("triangle array length must be a multiple of 3"));
    }
    let triangles: Vec<[usize; 3]> = tri_raw
        .chunks_exact(3)
        .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
        .collect();
    let basis = FaceBasis {
        mean_shape,
        mean_texture,
        basis_id,
        basis_exp,
        basis_tex,
        triangles,
    };
    basis.validate()?;
    Ok(basis)
}

/// Debug export: ASCII OBJ with per-vertex colors carried in a trailing
/// comment on each `v` line (`v x y z # r g b`).
pub fn write_obj<T: Real>(mesh: &FaceMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# talkingface mesh export, colors as trailing comments")?;
    for (pos, color) in mesh.vertices.rows().into_iter().zip(mesh.albedo.rows()) {
        writeln!(
            out,
            "v {} {} {} # {} {} {}",
            pos[0].as_f64(),
            pos[1].as_f64(),
            pos[2].as_f64(),
            color[0].as_f64(),
            color[1].as_f64(),
            color[2].as_f64()
        )?;
    }
    for tri in &mesh.triangles {
        writeln!(out, "f {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_vertex_counts_follow_subdivision() {
        assert_eq!(icosphere(0).0.len(), 12);
        assert_eq!(icosphere(1).0.len(), 42);
        assert_eq!(icosphere(2).0.len(), 162);
        let (v, t) = icosphere(3);
        assert_eq!(v.len(), 642);
        assert_eq!(t.len(), 1280);
        for p in &v {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_basis_has_orthonormal_columns() {
        let cfg = SyntheticBasisConfig {
            subdivisions: 1,
            ..Default::default()
        };
        let basis: FaceBasis<f64> = cfg.build();
        basis.validate().unwrap();
        for m in [&basis.basis_id, &basis.basis_exp, &basis.basis_tex] {
            for i in 0..m.ncols() {
                for j in 0..m.ncols() {
                    let dot = m.column(i).dot(&m.column(j));
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn synthetic_basis_is_seed_deterministic() {
        let cfg = SyntheticBasisConfig {
            subdivisions: 1,
            ..Default::default()
        };
        let a: FaceBasis<f64> = cfg.build();
        let b: FaceBasis<f64> = cfg.build();
        assert_eq!(a.basis_id, b.basis_id);
        assert_eq!(a.basis_exp, b.basis_exp);
    }

    #[test]
    fn smoothing_makes_neighboring_entries_correlated() {
        // Expression modes should look like deformations, not white noise:
        // neighboring vertices move together.
        let cfg = SyntheticBasisConfig {
            subdivisions: 2,
            ..Default::default()
        };
        let basis: FaceBasis<f64> = cfg.build();
        let (vertices, triangles) = icosphere(2);
        let adj = adjacency(vertices.len(), &triangles);
        let col = basis.basis_exp.column(0);
        let mut num = 0.0;
        let mut count = 0.0;
        for (i, neighbors) in adj.iter().enumerate() {
            for &j in neighbors {
                for k in 0..3 {
                    num += col[i * 3 + k] * col[j * 3 + k];
                    count += 1.0;
                }
            }
        }
        let var = col.dot(&col) / col.len() as f64;
        let neighbor_corr = (num / count) / var;
        assert!(
            neighbor_corr > 0.5,
            "neighbor correlation too low: {neighbor_corr}"
        );
    }

    #[test]
    fn basis_container_round_trips() {
        let cfg = SyntheticBasisConfig {
            subdivisions: 1,
            ..Default::default()
        };
        let basis: FaceBasis<f32> = cfg.build();
        let dir = std::env::temp_dir().join("tf_basis_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("basis.bin");
        save_basis(&basis, &path).unwrap();
        let loaded: FaceBasis<f32> = load_basis(&path).unwrap();
        assert_eq!(loaded.vertex_count(), basis.vertex_count());
        assert_eq!(loaded.triangles, basis.triangles);
        // f32 storage means an f32 basis round-trips exactly.
        assert_eq!(loaded.basis_id, basis.basis_id);
        assert_eq!(loaded.mean_texture, basis.mean_texture);
    }
}
