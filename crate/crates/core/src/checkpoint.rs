//! Self-describing binary container for named parameter arrays.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "AMCICKPT"
//! version      u32       currently 1
//! n_meta       u32
//!   key_len    u32, key bytes (UTF-8)
//!   val_len    u32, value bytes (UTF-8)
//! n_arrays     u32
//!   name_len   u32, name bytes (UTF-8)
//!   count      u64
//!   values     count x f64 (IEEE-754 binary64)
//! ```
//!
//! Metadata keys are written in sorted order, arrays in insertion order,
//! so identical contents serialize to identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"AMCICKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid UTF-8 in checkpoint string")]
    Utf8,
    #[error("missing array `{0}`")]
    MissingArray(String),
    #[error("missing metadata key `{0}`")]
    MissingMeta(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub arrays: Vec<(String, Vec<f64>)>,
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, CheckpointError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(CheckpointError::Malformed(format!("string length {len}")));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| CheckpointError::Utf8)
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str, CheckpointError> {
        self.metadata.get(key).map(String::as_str).ok_or_else(|| CheckpointError::MissingMeta(key.to_string()))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        let raw = self.meta(key)?;
        raw.parse().map_err(|_| CheckpointError::Malformed(format!("metadata `{key}` = `{raw}`")))
    }

    pub fn push_array(&mut self, name: &str, values: &[f64]) {
        self.arrays.push((name.to_string(), values.to_vec()));
    }

    pub fn array(&self, name: &str) -> Result<&[f64], CheckpointError> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| CheckpointError::MissingArray(name.to_string()))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.metadata.len() as u32).to_le_bytes())?;
        for (k, v) in &self.metadata {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for (name, values) in &self.arrays {
            write_str(&mut w, name)?;
            w.write_all(&(values.len() as u64).to_le_bytes())?;
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let mut ck = Checkpoint::new();
        for _ in 0..read_u32(&mut r)? {
            let k = read_str(&mut r)?;
            let v = read_str(&mut r)?;
            ck.metadata.insert(k, v);
        }
        for _ in 0..read_u32(&mut r)? {
            let name = read_str(&mut r)?;
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            let count = u64::from_le_bytes(b8);
            if count > 1 << 32 {
                return Err(CheckpointError::Malformed(format!("array `{name}` length {count}")));
            }
            let mut values = Vec::with_capacity(count as usize);
            for _ in 0..count {
                r.read_exact(&mut b8)?;
                values.push(f64::from_le_bytes(b8));
            }
            ck.arrays.push((name, values));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
