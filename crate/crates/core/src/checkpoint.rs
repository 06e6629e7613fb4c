//! Supernet checkpoints: a JSON manifest plus a flat little-endian f64 dump.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Group;
use crate::error::{shape_err, Error, Result};
use crate::sampler::RelaxationConfig;
use crate::space::{SpaceConfig, SuperNet};

pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: Group,
    pub shape: Vec<usize>,
    /// Offset into the dump, in f64 elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub space: SpaceConfig,
    pub relaxation: RelaxationConfig,
    pub tensors: Vec<TensorEntry>,
    pub crc32: u32,
}

/// Writes `checkpoint.json` and `params.bin` into `dir`.
pub fn save_checkpoint(net: &SuperNet, dir: impl AsRef<Path>) -> Result<CheckpointManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut bytes = Vec::new();
    let mut tensors = Vec::with_capacity(net.store.len());
    let mut offset = 0;
    for (_, p) in net.store.iter() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            group: p.group,
            shape: p.value.shape().to_vec(),
            offset,
        });
        offset += p.value.len();
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        space: net.config.clone(),
        relaxation: net.relaxation,
        tensors,
        crc32: crc32fast::hash(&bytes),
    };
    std::fs::write(dir.join(PARAMS_FILE), &bytes)?;
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Rebuilds a supernet from a checkpoint directory.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<SuperNet> {
    let dir = dir.as_ref();
    let manifest: CheckpointManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let bytes = std::fs::read(dir.join(PARAMS_FILE))?;
    let computed = crc32fast::hash(&bytes);
    if computed != manifest.crc32 {
        return Err(Error::Checksum { stored: manifest.crc32, computed });
    }
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse { offset: bytes.len(), message: "dump is not a whole number of f64".into() });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let mut net = SuperNet::new(manifest.space.clone(), manifest.relaxation, 0)?;
    if net.store.len() != manifest.tensors.len() {
        return shape_err(format!(
            "checkpoint lists {} tensors, the space has {}",
            manifest.tensors.len(),
            net.store.len()
        ));
    }
    let ids: Vec<_> = net.store.iter().map(|(id, _)| id).collect();
    for (id, entry) in ids.into_iter().zip(&manifest.tensors) {
        let p = net.store.get_mut(id);
        if p.name != entry.name || p.value.shape() != entry.shape.as_slice() {
            return shape_err(format!(
                "checkpoint tensor {} {:?} does not match {} {:?}",
                entry.name,
                entry.shape,
                p.name,
                p.value.shape()
            ));
        }
        let end = entry.offset + p.value.len();
        if end > values.len() {
            return Err(Error::Parse { offset: 8 * values.len(), message: format!("dump ends inside {}", entry.name) });
        }
        p.value.data_mut().copy_from_slice(&values[entry.offset..end]);
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::derive;

    #[test]
    fn roundtrip_preserves_values_and_derivation() {
        let cfg = SpaceConfig { width: 4, ..SpaceConfig::default() };
        let mut net = SuperNet::new(cfg, RelaxationConfig::default(), 3).unwrap();
        let gamma = net.arch.gamma[1].param;
        net.store.get_mut(gamma).value.data_mut()[2] = 3.0;
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&net, dir.path()).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        for (id, p) in net.store.iter() {
            assert_eq!(back.store.get(id).value, p.value);
        }
        assert_eq!(derive(&back).unwrap(), derive(&net).unwrap());
        assert_eq!(back.store.get(gamma).value.data()[2], 3.0);
    }

    #[test]
    fn corrupted_dump_is_rejected() {
        let cfg = SpaceConfig { width: 4, ..SpaceConfig::default() };
        let net = SuperNet::new(cfg, RelaxationConfig::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&net, dir.path()).unwrap();
        let path = dir.path().join(PARAMS_FILE);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[10] ^= 1;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checksum { .. })));
    }
}
