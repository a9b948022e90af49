//! Binary checkpoint container: 8-byte magic, `u32` LE kind tag, `u32` LE
//! format version, then a bincode payload.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SUECKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Kind {
    Spectral = 1,
    Mlp = 2,
    Cca = 3,
    Alignment = 4,
    Parametric = 5,
}

pub fn encode<T: Serialize>(kind: Kind, value: &T) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    bincode::serialize_into(&mut out, value).map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(out)
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8], kind: Kind) -> Result<T> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Serialization("not a checkpoint file".into()));
    }
    let tag = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if tag != kind as u32 {
        return Err(Error::Serialization(format!(
            "checkpoint holds kind {tag}, expected {:?}",
            kind
        )));
    }
    let version = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Serialization(format!("unsupported checkpoint version {version}")));
    }
    bincode::deserialize(&bytes[16..]).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn save<T: Serialize>(path: &Path, kind: Kind, value: &T) -> Result<()> {
    let bytes = encode(kind, value)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: Kind) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, kind)
}
