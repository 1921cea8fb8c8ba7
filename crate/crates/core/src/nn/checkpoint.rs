//! JSON container of named, shaped `f64` arrays.
//!
//! Values are written in shortest round-trip decimal form and parsed with
//! exact rounding, so a write/read cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Mat;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayStore {
    pub format_version: u32,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
    pub arrays: Vec<NamedArray>,
}

impl Default for ArrayStore {
    fn default() -> Self {
        ArrayStore {
            format_version: FORMAT_VERSION,
            meta: serde_json::Map::new(),
            arrays: Vec::new(),
        }
    }
}

impl ArrayStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, m: &Mat) -> Result<()> {
        let name = name.into();
        if !m.is_finite() {
            return Err(Error::NonFinite(format!("array {name}")));
        }
        if self.arrays.iter().any(|a| a.name == name) {
            return Err(Error::Checkpoint(format!("duplicate array {name}")));
        }
        self.arrays.push(NamedArray {
            name,
            shape: [m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Mat> {
        let a = self
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))?;
        Mat::from_vec(a.shape[0], a.shape[1], a.data.clone())
            .map_err(|e| Error::Checkpoint(format!("array {name}: {e}")))
    }

    /// Like [`ArrayStore::get`] but also checks the shape.
    pub fn get_shaped(&self, name: &str, rows: usize, cols: usize) -> Result<Mat> {
        let m = self.get(name)?;
        if m.shape() != (rows, cols) {
            return Err(Error::Checkpoint(format!(
                "array {name} has shape {:?}, expected {rows}x{cols}",
                m.shape()
            )));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let store: ArrayStore =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if store.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                store.format_version
            )));
        }
        Ok(store)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
