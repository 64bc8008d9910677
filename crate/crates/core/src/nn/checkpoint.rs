//! Checkpoint files: a one-line JSON manifest naming every tensor,
//! followed by a raw little-endian f32 payload. Offsets are element
//! offsets into the payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::ModelParams;
use super::tensor::Tensor;
use super::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("checkpoint version {found} unsupported (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("checkpoint payload truncated: tensor {name} needs {need} elements, payload has {have}")]
    Truncated {
        name: String,
        need: usize,
        have: usize,
    },
}

pub fn save_checkpoint<S: Scalar>(
    params: &ModelParams<S>,
    path: &Path,
) -> Result<(), CheckpointError> {
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, tensor) in params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: tensor.shape().to_vec(),
            offset,
        });
        offset += tensor.numel();
    }
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        tensors,
    };
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut writer, &manifest)?;
    writer.write_all(b"\n")?;
    for (_, tensor) in params.iter() {
        for v in tensor.data() {
            let bits = v.to_f64().expect("scalar converts") as f32;
            writer.write_all(&bits.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<ModelParams<S>, CheckpointError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        reader.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
    }
    let manifest: Manifest = serde_json::from_slice(&header)?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: manifest.version,
        });
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let elements = payload.len() / 4;

    let mut params = ModelParams::default();
    for entry in manifest.tensors {
        let numel: usize = entry.shape.iter().product();
        if entry.offset + numel > elements {
            return Err(CheckpointError::Truncated {
                name: entry.name,
                need: entry.offset + numel,
                have: elements,
            });
        }
        let data: Vec<S> = (0..numel)
            .map(|i| {
                let at = (entry.offset + i) * 4;
                let bits = [
                    payload[at],
                    payload[at + 1],
                    payload[at + 2],
                    payload[at + 3],
                ];
                S::fr(f32::from_le_bytes(bits) as f64)
            })
            .collect();
        params.insert(entry.name, Tensor::new(entry.shape, data));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_for_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut params: ModelParams<f32> = ModelParams::default();
        params.insert("a.w", Tensor::matrix(2, 3, vec![1.5, -2.25, 0.1, 0.0, 3.5, -0.875]));
        params.insert("a.b", Tensor::row(vec![0.5, -0.5, 1.0]));
        save_checkpoint(&params, &path).unwrap();
        let back: ModelParams<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(params, back);
        // Insertion order survives.
        let names: Vec<&str> = back.names().collect();
        assert_eq!(names, ["a.w", "a.b"]);
    }

    #[test]
    fn manifest_shape_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(
            &path,
            b"{\"version\":1,\"tensors\":[{\"name\":\"w\",\"shape\":[4,4],\"offset\":0}]}\n\x00\x00\x00\x00",
        )
        .unwrap();
        match load_checkpoint::<f32>(&path) {
            Err(CheckpointError::Truncated { name, .. }) => assert_eq!(name, "w"),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn version_gate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.ckpt");
        std::fs::write(&path, b"{\"version\":9,\"tensors\":[]}\n").unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&path),
            Err(CheckpointError::Version { found: 9 })
        ));
    }
}
