//! Binary container: a JSON-text header followed by raw little-endian arrays.
//!
//! The same format carries face bases, audio features, and model/bank
//! checkpoints. Layout:
//!
//! ```text
//! [8-byte magic "TFCB0001"] [u32 LE header length] [header JSON] [array data]
//! ```
//!
//! The header records the container kind, free-form metadata, and for every
//! array its name, dtype (`f32` or `i32`), shape, and absolute byte offset.
//! Float payloads are little-endian 32-bit; index payloads are little-endian
//! 32-bit signed integers.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

const MAGIC: &[u8; 8] = b"TFCB0001";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    #[serde(default)]
    meta: serde_json::Value,
    arrays: Vec<ArrayEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    /// Absolute byte offset of the array payload from the start of the file.
    offset: u64,
    /// Element count (product of shape).
    len: usize,
}

enum Payload {
    F32(Vec<f32>),
    I32(Vec<i32>),
}

/// Builder that accumulates named arrays and writes them in one pass.
pub struct ContainerWriter {
    kind: String,
    meta: serde_json::Value,
    arrays: Vec<(String, Vec<usize>, Payload)>,
}

impl ContainerWriter {
    pub fn new(kind: impl Into<String>) -> Self {
        ContainerWriter {
            kind: kind.into(),
            meta: serde_json::Value::Null,
            arrays: Vec::new(),
        }
    }

    pub fn meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = meta;
        self
    }

    pub fn push_f32(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays
            .push((name.into(), shape.to_vec(), Payload::F32(data)));
    }

    /// Convenience: narrow a generic scalar slice to f32 for storage.
    pub fn push_real<T: Real>(&mut self, name: impl Into<String>, shape: &[usize], data: &[T]) {
        let narrowed: Vec<f32> = data.iter().map(|x| x.as_f32()).collect();
        self.push_f32(name, shape, narrowed);
    }

    pub fn push_i32(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<i32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays
            .push((name.into(), shape.to_vec(), Payload::I32(data)));
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        // Two-pass: serialize the header with provisional zero offsets to learn
        // its byte length, then fill in real offsets.
        let mut entries: Vec<ArrayEntry> = self
            .arrays
            .iter()
            .map(|(name, shape, payload)| ArrayEntry {
                name: name.clone(),
                dtype: match payload {
                    Payload::F32(_) => "f32".into(),
                    Payload::I32(_) => "i32".into(),
                },
                shape: shape.clone(),
                offset: 0,
                len: shape.iter().product(),
            })
            .collect();

        let provisional = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: entries.clone(),
        };
        let provisional_json = serde_json::to_vec(&provisional)
            .map_err(|e| Error::format(format!("header encode: {e}")))?;

        // Offsets use the provisional header length; rewriting offsets as fixed
        // width u64-in-JSON can change the length, so pad the header to a fixed
        // size instead.
        let header_capacity = provisional_json.len() + 24 * entries.len() + 16;
        let data_start = (8 + 4 + header_capacity) as u64;
        let mut cursor = data_start;
        for (entry, (_, _, payload)) in entries.iter_mut().zip(&self.arrays) {
            entry.offset = cursor;
            let bytes = match payload {
                Payload::F32(v) => v.len() * 4,
                Payload::I32(v) => v.len() * 4,
            };
            cursor += bytes as u64;
        }

        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: entries,
        };
        let mut header_json = serde_json::to_vec(&header)
            .map_err(|e| Error::format(format!("header encode: {e}")))?;
        if header_json.len() > header_capacity {
            return Err(Error::format("container header overflow"));
        }
        header_json.resize(header_capacity, b' ');

        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(header_capacity as u32).to_le_bytes())?;
        w.write_all(&header_json)?;
        for (_, _, payload) in &self.arrays {
            match payload {
                Payload::F32(v) => {
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                Payload::I32(v) => {
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// In-memory view of a container file.
pub struct ContainerReader {
    header: Header,
    bytes: Vec<u8>,
}

impl ContainerReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(&path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::format("not a container file (bad magic)"));
        }
        let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        if bytes.len() < 12 + header_len {
            return Err(Error::format("container truncated in header"));
        }
        let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])
            .map_err(|e| Error::format(format!("header decode: {e}")))?;
        Ok(ContainerReader { header, bytes })
    }

    pub fn kind(&self) -> &str {
        &self.header.kind
    }

    pub fn meta(&self) -> &serde_json::Value {
        &self.header.meta
    }

    pub fn array_names(&self) -> Vec<&str> {
        self.header.arrays.iter().map(|a| a.name.as_str()).collect()
    }

    fn entry(&self, name: &str) -> Result<&ArrayEntry> {
        self.header
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::format(format!("container has no array `{name}`")))
    }

    pub fn shape(&self, name: &str) -> Result<&[usize]> {
        Ok(&self.entry(name)?.shape)
    }

    pub fn f32_array(&self, name: &str) -> Result<Vec<f32>> {
        let entry = self.entry(name)?;
        if entry.dtype != "f32" {
            return Err(Error::format(format!("array `{name}` is not f32")));
        }
        self.read_slice(entry.offset as usize, entry.len, |b| {
            f32::from_le_bytes([b[0], b[1], b[2], b[3]])
        })
    }

    pub fn i32_array(&self, name: &str) -> Result<Vec<i32>> {
        let entry = self.entry(name)?;
        if entry.dtype != "i32" {
            return Err(Error::format(format!("array `{name}` is not i32")));
        }
        self.read_slice(entry.offset as usize, entry.len, |b| {
            i32::from_le_bytes([b[0], b[1], b[2], b[3]])
        })
    }

    /// Read an f32 array widened to the crate scalar.
    pub fn real_array<T: Real>(&self, name: &str) -> Result<Vec<T>> {
        Ok(self
            .f32_array(name)?
            .into_iter()
            .map(|x| T::of(x as f64))
            .collect())
    }

    fn read_slice<E>(&self, offset: usize, len: usize, decode: impl Fn(&[u8]) -> E) -> Result<Vec<E>> {
        let end = offset + len * 4;
        if end > self.bytes.len() {
            return Err(Error::format("container truncated in payload"));
        }
        Ok(self.bytes[offset..end].chunks_exact(4).map(decode).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_arrays_and_meta() {
        let dir = std::env::temp_dir().join("tf_container_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.bin");

        let mut w = ContainerWriter::new("test-kind")
            .meta(serde_json::json!({"vertices": 4, "triangles": 2}));
        w.push_f32("a", &[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        w.push_i32("tris", &[2, 3], vec![0, 1, 2, 0, 2, 3]);
        w.write(&path).unwrap();

        let r = ContainerReader::open(&path).unwrap();
        assert_eq!(r.kind(), "test-kind");
        assert_eq!(r.meta()["vertices"], 4);
        assert_eq!(r.shape("a").unwrap(), &[2, 3]);
        assert_eq!(r.f32_array("a").unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        assert_eq!(r.i32_array("tris").unwrap(), vec![0, 1, 2, 0, 2, 3]);
        assert!(r.f32_array("missing").is_err());
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = std::env::temp_dir().join("tf_container_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        std::fs::write(&path, b"NOTACONTAINER").unwrap();
        assert!(ContainerReader::open(&path).is_err());
    }
}
