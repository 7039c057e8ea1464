//! CSV import/export for pose sequences and numeric matrices.
//!
//! Pose CSV columns: `frame,pitch,yaw,roll,tx,ty,tz` (angles in radians).

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::face3d::Pose;
use crate::num::Real;

pub const POSE_CSV_HEADER: &str = "frame,pitch,yaw,roll,tx,ty,tz";

pub fn write_pose_csv<T: Real>(poses: &[Pose<T>], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{POSE_CSV_HEADER}")?;
    for (i, p) in poses.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i,
            p.angles[0].as_f64(),
            p.angles[1].as_f64(),
            p.angles[2].as_f64(),
            p.translation[0].as_f64(),
            p.translation[1].as_f64(),
            p.translation[2].as_f64()
        )?;
    }
    Ok(())
}

pub fn read_pose_csv<T: Real>(path: impl AsRef<Path>) -> Result<Vec<Pose<T>>> {
    let text = std::fs::read_to_string(&path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == POSE_CSV_HEADER => {}
        other => {
            return Err(Error::format(format!(
                "pose csv must start with `{POSE_CSV_HEADER}`, found {other:?}"
            )))
        }
    }
    let mut poses = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::format(format!(
                "pose csv line {} has {} fields, expected 7",
                n + 2,
                fields.len()
            )));
        }
        let mut vals = [0.0f64; 6];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = fields[k + 1]
                .trim()
                .parse()
                .map_err(|e| Error::format(format!("pose csv line {}: {e}", n + 2)))?;
        }
        poses.push(Pose::new(
            [T::of(vals[0]), T::of(vals[1]), T::of(vals[2])],
            [T::of(vals[3]), T::of(vals[4]), T::of(vals[5])],
        ));
    }
    Ok(poses)
}

/// Write a numeric matrix with a leading frame-index column.
pub fn write_matrix_csv<T: Real>(
    matrix: &Array2<T>,
    value_prefix: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let cols: Vec<String> = (0..matrix.ncols())
        .map(|c| format!("{value_prefix}{c}"))
        .collect();
    writeln!(out, "frame,{}", cols.join(","))?;
    for (i, row) in matrix.rows().into_iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| format!("{}", v.as_f64())).collect();
        writeln!(out, "{},{}", i, vals.join(","))?;
    }
    Ok(())
}

/// Read a matrix written by [`write_matrix_csv`] (frame column dropped).
pub fn read_matrix_csv<T: Real>(path: impl AsRef<Path>) -> Result<Array2<T>> {
    let text = std::fs::read_to_string(&path)?;
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        let mut row = Vec::with_capacity(fields.len().saturating_sub(1));
        for v in &fields[1..] {
            row.push(T::of(v.trim().parse::<f64>().map_err(|e| {
                Error::format(format!("csv line {}: {e}", n + 1))
            })?));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok(Array2::zeros((0, 0)));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::format("ragged csv rows"));
    }
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / cols, cols), flat)
        .map_err(|e| Error::format(format!("csv shape: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_csv_round_trips() {
        let dir = std::env::temp_dir().join("tf_tables_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pose.csv");
        let poses: Vec<Pose<f64>> = (0..5)
            .map(|i| {
                Pose::new(
                    [0.1 * i as f64, -0.05 * i as f64, 0.02],
                    [0.0, 0.1, 4.0 + i as f64 * 0.01],
                )
            })
            .collect();
        write_pose_csv(&poses, &path).unwrap();
        let back: Vec<Pose<f64>> = read_pose_csv(&path).unwrap();
        assert_eq!(back.len(), poses.len());
        for (a, b) in poses.iter().zip(&back) {
            for k in 0..3 {
                assert!((a.angles[k] - b.angles[k]).abs() < 1e-12);
                assert!((a.translation[k] - b.translation[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_csv_round_trips() {
        let dir = std::env::temp_dir().join("tf_tables_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("beta.csv");
        let m = Array2::from_shape_fn((4, 3), |(i, j)| i as f64 * 0.3 - j as f64 * 0.11);
        write_matrix_csv(&m, "b", &path).unwrap();
        let back: Array2<f64> = read_matrix_csv(&path).unwrap();
        assert_eq!(back.dim(), (4, 3));
        for (a, b) in m.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = std::env::temp_dir().join("tf_tables_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "x,y\n1,2\n").unwrap();
        assert!(read_pose_csv::<f64>(&path).is_err());
    }
}
