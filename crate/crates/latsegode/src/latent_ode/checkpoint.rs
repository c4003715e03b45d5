//! Single-file model checkpoints.
//!
//! Layout (see `docs/checkpoint-format.md` for the byte-level contract):
//!   magic `LSEGODE\0` · version u32 LE · header length u32 LE ·
//!   JSON header (config, seed lineage, parameter manifest) ·
//!   parameter arrays as little-endian f64 in manifest order.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{LatentOdeModel, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LSEGODE\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// JSON header stored inside a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: ModelConfig,
    pub seed_lineage: Vec<u64>,
    pub params: Vec<ParamEntry>,
}

fn malformed(path: &Path, msg: impl Into<String>) -> Error {
    Error::MalformedFile { path: path.display().to_string(), msg: msg.into() }
}

pub fn save_checkpoint(model: &LatentOdeModel, path: &Path) -> Result<()> {
    let mut params = Vec::new();
    model.for_each_param(&mut |name, t| {
        params.push((name, t.clone()));
    });
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        seed_lineage: model.seed_lineage.clone(),
        params: params
            .iter()
            .map(|(name, t)| ParamEntry { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
    };
    let header = serde_json::to_vec(&meta)?;

    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for (_, t) in &params {
        for &x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<LatentOdeModel> {
    let file = fs::File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| malformed(path, "file shorter than the magic header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(malformed(path, "bad magic bytes; not a checkpoint file"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| malformed(path, "missing version field"))?;
    let version = u32::from_le_bytes(u32buf);
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    r.read_exact(&mut u32buf)
        .map_err(|_| malformed(path, "missing header length"))?;
    let header_len = u32::from_le_bytes(u32buf) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)
        .map_err(|_| malformed(path, "truncated header"))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&header).map_err(|e| malformed(path, format!("bad header: {e}")))?;

    let mut tensors = Vec::with_capacity(meta.params.len());
    for entry in &meta.params {
        let numel: usize = entry.shape.iter().product();
        let mut data = vec![0.0f64; numel];
        for slot in data.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| {
                malformed(path, format!("truncated parameter array `{}`", entry.name))
            })?;
            *slot = f64::from_le_bytes(b);
        }
        tensors.push(Tensor::new(entry.shape.clone(), data)?);
    }

    rebuild_model(&meta, tensors, path)
}

/// Load and require an exact architecture match.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<LatentOdeModel> {
    let model = load_checkpoint(path)?;
    if &model.config != expected {
        return Err(Error::invalid(format!(
            "checkpoint architecture does not match the requested configuration \
             (checkpoint latent_dim={}, requested latent_dim={})",
            model.config.latent_dim, expected.latent_dim
        )));
    }
    Ok(model)
}

fn rebuild_model(
    meta: &CheckpointMeta,
    tensors: Vec<Tensor>,
    path: &Path,
) -> Result<LatentOdeModel> {
    // construct a skeleton with the right shapes, then overwrite every
    // parameter in canonical order
    let mut model = LatentOdeModel::new(meta.config.clone(), 0)
        .map_err(|e| malformed(path, format!("header config invalid: {e}")))?;
    let expected = model.param_shapes();
    if expected.len() != tensors.len() {
        return Err(malformed(
            path,
            format!("expected {} parameter arrays, found {}", expected.len(), tensors.len()),
        ));
    }
    for (want, got) in expected.iter().zip(tensors.iter()) {
        if want != got.shape() {
            return Err(malformed(
                path,
                format!("parameter shape mismatch: {:?} vs {:?}", want, got.shape()),
            ));
        }
    }
    let mut it = tensors.into_iter();
    model.for_each_param_mut(&mut |t| *t = it.next().expect("length checked"));
    model.seed_lineage = meta.seed_lineage.clone();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent_ode::ModelConfig;
    use crate::ode::SolverConfig;

    fn small() -> LatentOdeModel {
        let config = ModelConfig {
            data_dim: 2,
            latent_dim: 3,
            encoder_hidden_dim: 5,
            encoder_field_hidden: vec![7],
            latent_field_hidden: vec![6],
            decoder_hidden: vec![4],
            obs_variance: 0.01,
            encoder_substeps: 5,
            latent_solver: SolverConfig::dopri5(1e-5, 1e-6),
        };
        LatentOdeModel::new(config, 42).unwrap()
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut model = small();
        model.seed_lineage.push(777);
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();

        assert_eq!(back.config, model.config);
        assert_eq!(back.seed_lineage, model.seed_lineage);
        let mut orig = Vec::new();
        model.for_each_param(&mut |_, t| orig.push(t.clone()));
        let mut loaded = Vec::new();
        back.for_each_param(&mut |_, t| loaded.push(t.clone()));
        for (a, b) in orig.iter().zip(&loaded) {
            let bits_a: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn truncated_file_reports_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&small(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::MalformedFile { .. }) => {}
            other => panic!("expected MalformedFile, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&small(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99; // version field
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::VersionMismatch { .. })));
    }

    #[test]
    fn architecture_mismatch_rejected_when_config_demanded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&small(), &path).unwrap();
        let mut other = small().config;
        other.latent_dim = 4;
        assert!(load_checkpoint_expecting(&path, &other).is_err());
        assert!(load_checkpoint_expecting(&path, &small().config).is_ok());
    }

    #[test]
    fn junk_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::MalformedFile { .. })));
    }
}
