//! Self-describing checkpoint container: a JSON header (network config,
//! epoch, metrics snapshot, scenario, seed, tensor index) followed by the
//! raw little-endian f64 tensor data. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::unet::{NetConfig, UNet};

const MAGIC: &[u8; 8] = b"WCKPT01\n";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file: {path}")]
    BadMagic { path: PathBuf },
    #[error("corrupt checkpoint header: {0}")]
    BadHeader(String),
    #[error("tensor {name} shape mismatch: checkpoint {stored:?}, model {expected:?}")]
    TensorShape {
        name: String,
        stored: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
}

/// Everything about a checkpoint except the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub scenario: Option<String>,
    pub seed: u64,
    /// Validation metrics snapshot at save time.
    pub metrics: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: NetConfig,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save(net: &UNet, meta: &CheckpointMeta, path: &Path) -> Result<(), CheckpointError> {
    let mut tensors: Vec<TensorEntry> = Vec::new();
    let mut blobs: Vec<Vec<f64>> = Vec::new();
    net.visit_params(&mut |name, p| {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: p.value.shape().to_vec(),
        });
        blobs.push(p.value.iter().copied().collect());
    });
    net.visit_buffers(&mut |name, buf| {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: vec![buf.len()],
        });
        blobs.push(buf.iter().copied().collect());
    });
    let header = Header {
        config: net.config,
        meta: meta.clone(),
        tensors,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| CheckpointError::BadHeader(e.to_string()))?;

    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    f.write_all(MAGIC).map_err(io_err(path))?;
    f.write_all(&(header_json.len() as u64).to_le_bytes())
        .map_err(io_err(path))?;
    f.write_all(&header_json).map_err(io_err(path))?;
    for blob in blobs {
        for v in blob {
            f.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
        }
    }
    f.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(UNet, CheckpointMeta), CheckpointError> {
    let mut f = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(io_err(path))?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut len_bytes = [0u8; 8];
    f.read_exact(&mut len_bytes).map_err(io_err(path))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    f.read_exact(&mut header_json).map_err(io_err(path))?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;

    let mut data: std::collections::BTreeMap<String, ArrayD<f64>> = Default::default();
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        f.read_exact(&mut raw).map_err(io_err(path))?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let arr = ArrayD::from_shape_vec(ndarray::IxDyn(&entry.shape), values)
            .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
        data.insert(entry.name.clone(), arr);
    }

    // Rebuild the network and overwrite every parameter and buffer.
    let mut net = UNet::new(header.config, 0);
    let mut error: Option<CheckpointError> = None;
    net.visit_params_mut(&mut |name, p| {
        if error.is_some() {
            return;
        }
        match data.get(name) {
            Some(arr) if arr.shape() == p.value.shape() => p.value.assign(arr),
            Some(arr) => {
                error = Some(CheckpointError::TensorShape {
                    name: name.to_string(),
                    stored: arr.shape().to_vec(),
                    expected: p.value.shape().to_vec(),
                })
            }
            None => error = Some(CheckpointError::MissingTensor(name.to_string())),
        }
    });
    net.visit_buffers_mut(&mut |name, buf| {
        if error.is_some() {
            return;
        }
        match data.get(name) {
            Some(arr) if arr.len() == buf.len() => {
                for (dst, src) in buf.iter_mut().zip(arr.iter()) {
                    *dst = *src;
                }
            }
            Some(arr) => {
                error = Some(CheckpointError::TensorShape {
                    name: name.to_string(),
                    stored: arr.shape().to_vec(),
                    expected: vec![buf.len()],
                })
            }
            None => error = Some(CheckpointError::MissingTensor(name.to_string())),
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    Ok((net, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layers::BnStats;
    use ndarray::Array4;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn round_trip_reproduces_forward_bitwise() {
        let cfg = NetConfig {
            depth: 2,
            base_channels: 4,
            in_channels: 3,
            bn_stats: BnStats::Batch,
        };
        let mut net = UNet::new(cfg, 42);
        // Perturb running stats so buffers are non-trivial.
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = Array4::from_shape_fn((2, 3, 8, 8), |_| rng.gen::<f64>());
        let _ = net.forward(&x, true).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.wckpt");
        let meta = CheckpointMeta {
            epoch: 3,
            scenario: Some("mask".into()),
            seed: 42,
            metrics: serde_json::json!({"val_recall": 0.5}),
        };
        save(&net, &meta, &path).unwrap();
        let (mut net2, meta2) = load(&path).unwrap();
        assert_eq!(meta2.epoch, 3);
        assert_eq!(meta2.scenario.as_deref(), Some("mask"));

        let a = net.forward(&x, false).unwrap();
        let b = net2.forward(&x, false).unwrap();
        // Bitwise equality of every output value.
        for (va, vb) in a.iter().zip(b.iter()) {
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn save_is_byte_deterministic() {
        let cfg = NetConfig {
            depth: 2,
            base_channels: 4,
            in_channels: 3,
            bn_stats: BnStats::Batch,
        };
        let net = UNet::new(cfg, 9);
        let dir = tempfile::tempdir().unwrap();
        let meta = CheckpointMeta {
            epoch: 0,
            scenario: None,
            seed: 9,
            metrics: serde_json::Value::Null,
        };
        let p1 = dir.path().join("a.wckpt");
        let p2 = dir.path().join("b.wckpt");
        save(&net, &meta, &p1).unwrap();
        save(&net, &meta, &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.wckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(
            load(&path),
            Err(CheckpointError::BadMagic { .. })
        ));
    }
}
