//! Vector file formats.
//!
//! JSONL: one `{"id": ..., "vector": [...]}` object per line, values at f32
//! precision, with an optional leading header object carrying the schema and
//! the config snapshot hash of the run that wrote the file.
//!
//! Binary sidecar: magic `RPRMVEC1`, then u32 little-endian count, u32
//! little-endian dimension, then count×dimension little-endian f32 values in
//! the same order as the JSONL lines.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EmbeddingError;

pub const VEC_SCHEMA: &str = "rprm-vec/1";
pub const BINARY_MAGIC: &[u8; 8] = b"RPRMVEC1";

#[derive(Debug, Serialize, Deserialize)]
struct VectorHeader {
    schema: String,
    config_hash: String,
}

#[derive(Debug, Serialize)]
struct VectorRowOut<'a> {
    id: &'a str,
    vector: Vec<f32>,
}

#[derive(Debug, Deserialize)]
struct VectorRowIn {
    id: String,
    vector: Vec<f64>,
}

fn bad(path: &Path, message: impl Into<String>) -> EmbeddingError {
    EmbeddingError::BadFile {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// JSONL vector-file content. Values are narrowed to f32, matching the
/// binary sidecar exactly.
pub fn vector_file_contents(entries: &[(String, Vec<f64>)], config_hash: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(hash) = config_hash {
        let header = VectorHeader {
            schema: VEC_SCHEMA.to_string(),
            config_hash: hash.to_string(),
        };
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
    }
    for (id, vector) in entries {
        let row = VectorRowOut {
            id,
            vector: vector.iter().map(|&x| x as f32).collect(),
        };
        out.push_str(&serde_json::to_string(&row).expect("row serializes"));
        out.push('\n');
    }
    out
}

/// Write a JSONL vector file. See [`vector_file_contents`].
pub fn write_vector_file(
    path: &Path,
    entries: &[(String, Vec<f64>)],
    config_hash: Option<&str>,
) -> Result<(), EmbeddingError> {
    fs::write(path, vector_file_contents(entries, config_hash))
        .map_err(|e| bad(path, e.to_string()))
}

/// Read a JSONL vector file, skipping a leading header object if present.
pub fn read_vector_file(path: &Path) -> Result<Vec<(String, Vec<f64>)>, EmbeddingError> {
    let content = fs::read_to_string(path).map_err(|e| bad(path, e.to_string()))?;
    let mut entries = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(trimmed) {
                if crate::corpus::is_header_line(&value) {
                    continue;
                }
            }
        }
        let row: VectorRowIn = serde_json::from_str(trimmed)
            .map_err(|e| bad(path, format!("line {}: {e}", idx + 1)))?;
        entries.push((row.id, row.vector));
    }
    Ok(entries)
}

/// Binary sidecar bytes for `vectors` (all the same dimension).
pub fn binary_sidecar_contents(vectors: &[Vec<f64>]) -> Result<Vec<u8>, EmbeddingError> {
    let dim = vectors.first().map(Vec::len).unwrap_or(0);
    for v in vectors {
        if v.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let mut bytes = Vec::with_capacity(16 + vectors.len() * dim * 4);
    bytes.extend_from_slice(BINARY_MAGIC);
    bytes.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in vectors {
        for &x in v {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(bytes)
}

/// Write the binary sidecar for `vectors` (all the same dimension).
pub fn write_binary_sidecar(path: &Path, vectors: &[Vec<f64>]) -> Result<(), EmbeddingError> {
    let bytes = binary_sidecar_contents(vectors)?;
    fs::write(path, bytes).map_err(|e| bad(path, e.to_string()))
}

/// Read a binary sidecar back as f64 vectors.
pub fn read_binary_sidecar(path: &Path) -> Result<Vec<Vec<f64>>, EmbeddingError> {
    let bytes = fs::read(path).map_err(|e| bad(path, e.to_string()))?;
    if bytes.len() < 16 || &bytes[..8] != BINARY_MAGIC {
        return Err(bad(path, "missing RPRMVEC1 magic"));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = 16 + count * dim * 4;
    if bytes.len() != expected {
        return Err(bad(
            path,
            format!(
                "expected {expected} bytes for {count}x{dim}, found {}",
                bytes.len()
            ),
        ));
    }
    let mut vectors = Vec::with_capacity(count);
    let mut offset = 16;
    for _ in 0..count {
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            let raw: [u8; 4] = bytes[offset..offset + 4].try_into().unwrap();
            v.push(f32::from_le_bytes(raw) as f64);
            offset += 4;
        }
        vectors.push(v);
    }
    Ok(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("rprm-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn jsonl_roundtrip_with_header() {
        let path = tmp("vectors.jsonl");
        let entries = vec![
            ("a".to_string(), vec![0.5, -1.25]),
            ("b".to_string(), vec![2.0, 3.5]),
        ];
        write_vector_file(&path, &entries, Some("deadbeef")).unwrap();
        let content = fs::read_to_string(&path).unwrap();
        assert!(content.lines().next().unwrap().contains("deadbeef"));
        let back = read_vector_file(&path).unwrap();
        assert_eq!(back, entries);
    }

    #[test]
    fn jsonl_without_header_reads() {
        let path = tmp("plain.jsonl");
        fs::write(&path, "{\"id\":\"x\",\"vector\":[1.0,2.0]}\n").unwrap();
        let back = read_vector_file(&path).unwrap();
        assert_eq!(back, vec![("x".to_string(), vec![1.0, 2.0])]);
    }

    #[test]
    fn binary_roundtrip_matches_f32_narrowing() {
        let path = tmp("vectors.bin");
        let vectors = vec![vec![0.1, 0.2, 0.3], vec![1.5, -2.5, 3.0]];
        write_binary_sidecar(&path, &vectors).unwrap();
        let back = read_binary_sidecar(&path).unwrap();
        for (orig, read) in vectors.iter().zip(&back) {
            for (&o, &r) in orig.iter().zip(read) {
                assert_eq!(o as f32, r as f32);
                assert_eq!(r, (o as f32) as f64);
            }
        }
    }

    #[test]
    fn binary_truncation_detected() {
        let path = tmp("short.bin");
        write_binary_sidecar(&path, &[vec![1.0, 2.0]]).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(read_binary_sidecar(&path).is_err());
    }
}
