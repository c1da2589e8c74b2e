//! Versioned JSON files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} is not a valid {kind} file: {msg}")]
    Corrupt { path: String, kind: String, msg: String },
    #[error("{path} has format version {found}, expected {expected}")]
    Version { path: String, found: u32, expected: u32 },
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    kind: &'a str,
    version: u32,
    payload: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    kind: String,
    version: u32,
    payload: T,
}

#[derive(Deserialize)]
struct Header {
    kind: String,
    version: u32,
}

/// Writes `value` tagged with `kind` and the format version. The file is
/// written next to its destination and renamed into place.
pub fn save<T: Serialize>(kind: &str, value: &T, path: &Path) -> Result<(), PersistError> {
    let io = |source| PersistError::Io { path: path.display().to_string(), source };
    let json = serde_json::to_vec(&EnvelopeOut { kind, version: FORMAT_VERSION, payload: value })
        .expect("in-memory values serialize");
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&json).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load<T: DeserializeOwned>(kind: &str, path: &Path) -> Result<T, PersistError> {
    let shown = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| PersistError::Io { path: shown.clone(), source })?;
    let corrupt = |msg: String| PersistError::Corrupt { path: shown.clone(), kind: kind.to_string(), msg };
    let header: Header = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
    if header.kind != kind {
        return Err(corrupt(format!("contains a {} file", header.kind)));
    }
    if header.version != FORMAT_VERSION {
        return Err(PersistError::Version { path: shown, found: header.version, expected: FORMAT_VERSION });
    }
    let env: EnvelopeIn<T> = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
    debug_assert_eq!(env.kind, kind);
    debug_assert_eq!(env.version, FORMAT_VERSION);
    Ok(env.payload)
}
