//! Named parameter tensors and their on-disk checkpoint format.
//!
//! A checkpoint is a directory holding `manifest.json` (names, shapes,
//! byte offsets, free-form metadata) and `weights.f32`, the tensors'
//! values concatenated as little-endian `f32` in manifest order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.json";
pub const WEIGHTS: &str = "weights.f32";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint manifest {path}: {source}")]
    Manifest {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("weights file {path} holds {actual} bytes, manifest expects {expected}")]
    Length { path: String, expected: usize, actual: usize },
    #[error("parameter {name}: checkpoint shape {found:?}, model expects {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("parameter {0} missing from checkpoint")]
    Missing(String),
    #[error("checkpoint holds unexpected parameter {0}")]
    Unexpected(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `weights.f32`.
    pub offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub params: Vec<ParamEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// Ordered collection of named tensors.
#[derive(Clone, Debug)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Rc<Tensor<T>>>,
    index: HashMap<String, usize>,
    pub metadata: serde_json::Value,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
            metadata: serde_json::Value::Null,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(Rc::new(value));
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| self.tensors[i].as_ref())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = *self.index.get(name)?;
        Some(Rc::make_mut(&mut self.tensors[i]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter().map(|t| t.as_ref()))
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor<T> {
        Rc::make_mut(&mut self.tensors[i])
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Moves every tensor into `g` as a leaf, tracked when `trainable`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound<'_, T> {
        let vars = self.tensors.iter().map(|t| g.shared(Rc::clone(t), trainable)).collect();
        Bound { set: self, vars }
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        let mut out = ParamSet::new();
        for (n, t) in self.iter() {
            out.insert(n, t.cast());
        }
        out.metadata = self.metadata.clone();
        out
    }

    /// Prefixes every name, for storing several networks in one checkpoint.
    pub fn prefixed(&self, prefix: &str) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (n, t) in self.iter() {
            out.insert(format!("{prefix}{n}"), t.clone());
        }
        out
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (n, t) in self.iter() {
            if let Some(rest) = n.strip_prefix(prefix) {
                out.insert(rest, t.clone());
            }
        }
        out
    }

    pub fn extend(&mut self, other: &ParamSet<T>) {
        for (n, t) in other.iter() {
            self.insert(n, t.clone());
        }
    }

    /// Checks that names and shapes agree exactly with `template`.
    pub fn check_layout<U: Scalar>(&self, template: &ParamSet<U>) -> Result<(), CheckpointError> {
        for (n, t) in template.iter() {
            let mine = self.get(n).ok_or_else(|| CheckpointError::Missing(n.to_string()))?;
            if mine.shape() != t.shape() {
                return Err(CheckpointError::Shape {
                    name: n.to_string(),
                    expected: t.shape().to_vec(),
                    found: mine.shape().to_vec(),
                });
            }
        }
        if let Some(extra) = self.names.iter().find(|n| template.get(n).is_none()) {
            return Err(CheckpointError::Unexpected(extra.clone()));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), CheckpointError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CheckpointError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut bytes = Vec::with_capacity(self.num_values() * 4);
        let mut params = Vec::with_capacity(self.len());
        for (name, t) in self.iter() {
            params.push(ParamEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset: bytes.len(),
            });
            for v in t.data() {
                bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        let manifest = CheckpointManifest {
            params,
            metadata: self.metadata.clone(),
        };
        let wpath = dir.join(WEIGHTS);
        fs::write(&wpath, &bytes).map_err(io(&wpath))?;
        let mpath = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&mpath, text).map_err(io(&mpath))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ParamSet<T>, CheckpointError> {
        let mpath = dir.join(MANIFEST);
        let text = fs::read_to_string(&mpath).map_err(|source| CheckpointError::Io {
            path: mpath.display().to_string(),
            source,
        })?;
        let manifest: CheckpointManifest =
            serde_json::from_str(&text).map_err(|source| CheckpointError::Manifest {
                path: mpath.display().to_string(),
                source,
            })?;
        let wpath = dir.join(WEIGHTS);
        let bytes = fs::read(&wpath).map_err(|source| CheckpointError::Io {
            path: wpath.display().to_string(),
            source,
        })?;
        let expected = manifest
            .params
            .iter()
            .map(|p| p.offset + 4 * p.shape.iter().product::<usize>())
            .max()
            .unwrap_or(0);
        if bytes.len() != expected {
            return Err(CheckpointError::Length {
                path: wpath.display().to_string(),
                expected,
                actual: bytes.len(),
            });
        }
        let mut out = ParamSet::new();
        for p in &manifest.params {
            let n: usize = p.shape.iter().product();
            let data = bytes[p.offset..p.offset + 4 * n]
                .chunks_exact(4)
                .map(|c| T::from_f64_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            out.insert(p.name.clone(), Tensor::new(p.shape.clone(), data));
        }
        out.metadata = manifest.metadata;
        Ok(out)
    }
}

/// A [`ParamSet`] bound into a graph.
pub struct Bound<'a, T> {
    set: &'a ParamSet<T>,
    vars: Vec<Var>,
}

impl<T: Scalar> Bound<'_, T> {
    pub fn var(&self, name: &str) -> Var {
        match self.set.index.get(name) {
            Some(&i) => self.vars[i],
            None => panic!("no parameter named {name}"),
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParamSet::<f32>::new();
        p.insert("a.weight", Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE, 1e-30, 7.0]));
        p.insert("a.bias", Tensor::new(vec![2], vec![0.1, -0.2]));
        p.metadata = serde_json::json!({"epoch": 3});
        p.save(dir.path()).unwrap();
        let q = ParamSet::<f32>::load(dir.path()).unwrap();
        assert_eq!(q.names(), p.names());
        for ((_, a), (_, b)) in p.iter().zip(q.iter()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(q.metadata["epoch"], 3);
    }

    #[test]
    fn truncated_weights_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParamSet::<f32>::new();
        p.insert("w", Tensor::new(vec![4], vec![1.0; 4]));
        p.save(dir.path()).unwrap();
        std::fs::write(dir.path().join(WEIGHTS), [0u8; 12]).unwrap();
        assert!(matches!(ParamSet::<f32>::load(dir.path()), Err(CheckpointError::Length { .. })));
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let mut a = ParamSet::<f32>::new();
        a.insert("w", Tensor::zeros(&[2, 2]));
        let mut b = ParamSet::<f32>::new();
        b.insert("w", Tensor::zeros(&[2, 3]));
        assert!(matches!(a.check_layout(&b), Err(CheckpointError::Shape { .. })));
        let empty = ParamSet::<f32>::new();
        assert!(matches!(empty.check_layout(&b), Err(CheckpointError::Missing(_))));
    }
}
