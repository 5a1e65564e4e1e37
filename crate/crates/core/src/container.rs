//! Binary container shared by datasets, checkpoints and learned projections.
//!
//! Layout: the 8-byte magic `MODSCALE`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then the payload as little-endian `f64` values. The
//! header lists named arrays with their shapes; the payload stores them back
//! to back in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MODSCALE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ArraySpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Value,
    arrays: Vec<ArraySpec>,
}

/// Decoded container contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: Value,
    pub arrays: Vec<(ArraySpec, Vec<f64>)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: Value) -> Self {
        Container {
            kind: kind.into(),
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        let spec = ArraySpec {
            name: name.into(),
            shape,
        };
        if spec.len() != data.len() {
            return Err(Error::shape(spec.len(), data.len()));
        }
        self.arrays.push((spec, data));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<(&ArraySpec, &[f64])> {
        self.arrays
            .iter()
            .find(|(s, _)| s.name == name)
            .map(|(s, d)| (s, d.as_slice()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self.arrays.iter().map(|(s, _)| s.clone()).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let payload: usize = self.arrays.iter().map(|(_, d)| d.len()).sum();
        let mut out = Vec::with_capacity(16 + json.len() + 8 * payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, data) in &self.arrays {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Container> {
        let bad = |msg: String| Error::Format {
            path: path.to_path_buf(),
            msg,
        };
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing container magic".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..16 + len)
            .ok_or_else(|| bad("header extends past end of file".into()))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut rest = &bytes[16 + len..];
        let expected: usize = header.arrays.iter().map(|s| s.len()).sum();
        if rest.len() != 8 * expected {
            return Err(bad(format!(
                "payload has {} bytes, header describes {} values",
                rest.len(),
                expected
            )));
        }
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for spec in header.arrays {
            let (chunk, tail) = rest.split_at(8 * spec.len());
            let data = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            arrays.push((spec, data));
            rest = tail;
        }
        Ok(Container {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Container> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Container::from_bytes(&bytes, path)
    }
}
