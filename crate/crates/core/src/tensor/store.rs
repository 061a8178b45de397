use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";

/// Named trainable tensors, iterated in lexicographic path order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ManifestEntry {
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a trainable copy of `value`. Fails on duplicate paths.
    pub fn insert(&mut self, path: impl Into<String>, value: Tensor) -> Result<()> {
        let path = path.into();
        if self.entries.contains_key(&path) {
            return Err(Error::Contract(format!("duplicate parameter path {path}")));
        }
        let leaf = if value.requires_grad() && value.is_leaf() {
            value
        } else {
            value.to_param()
        };
        self.entries.insert(path, leaf);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Result<&Tensor> {
        self.entries
            .get(path)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {path}")))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    /// Replaces the tensor under an existing path, keeping the shape.
    pub fn set(&mut self, path: &str, value: Tensor) -> Result<()> {
        let slot = self
            .entries
            .get_mut(path)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {path}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::shape("ParamStore::set", slot.shape(), value.shape()));
        }
        *slot = value.to_param();
        Ok(())
    }

    pub fn set_data(&mut self, path: &str, data: Vec<f64>) -> Result<()> {
        let shape = self.get(path)?.shape().to_vec();
        self.set(path, Tensor::new(&shape, data)?)
    }

    /// Swaps in new values for an existing leaf, keeping it trainable.
    pub fn replace_data(&mut self, path: &str, data: Vec<f64>) -> Result<()> {
        let slot = self
            .entries
            .get_mut(path)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {path}")))?;
        if slot.len() != data.len() {
            return Err(Error::shape("ParamStore::replace_data", slot.shape(), &[data.len()]));
        }
        *slot = slot.with_data(data);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn paths(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn zero_grad(&self) {
        self.entries.values().for_each(Tensor::zero_grad);
    }

    /// True when both stores hold the same paths, shapes and bit patterns.
    pub fn bit_eq(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((pa, a), (pb, b))| {
                pa == pb
                    && a.shape() == b.shape()
                    && a.data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// Writes `manifest.json` and `params.bin` (little-endian f64) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = BTreeMap::new();
        let mut blob = Vec::with_capacity(self.num_scalars() * 8);
        for (path, t) in &self.entries {
            manifest.insert(
                path.clone(),
                ManifestEntry {
                    shape: t.shape().to_vec(),
                    dtype: "f64".into(),
                    offset: blob.len() as u64,
                },
            );
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        fs::write(dir.join(BLOB_FILE), blob)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let blob_path = dir.join(BLOB_FILE);
        for p in [&manifest_path, &blob_path] {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        let manifest: BTreeMap<String, ManifestEntry> =
            serde_json::from_slice(&fs::read(&manifest_path)?)?;
        let blob = fs::read(&blob_path)?;
        let mut store = ParamStore::new();
        for (path, entry) in manifest {
            if entry.dtype != "f64" {
                return Err(Error::Checkpoint(format!(
                    "{path}: unsupported dtype {}",
                    entry.dtype
                )));
            }
            let n: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start + n * 8;
            if end > blob.len() {
                return Err(Error::Checkpoint(format!(
                    "{path}: blob too short ({} bytes, need {end})",
                    blob.len()
                )));
            }
            let data = blob[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.insert(path, Tensor::param(&entry.shape, data)?)?;
        }
        Ok(store)
    }
}
