//! Versioned JSON model archives.
//!
//! An archive is `{version, kind, checksum, payload}` where the checksum is
//! the SHA-256 of the canonical payload serialization. Payloads carry the
//! architecture config, named parameter arrays at full decimal precision, any
//! extra state (binners, count tables, feature maps), and a provenance block
//! (seed, effective config, input-file hashes, auxiliary references).

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::neural::{Matrix, ParamStore};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    version: u32,
    kind: String,
    checksum: String,
    payload: serde_json::Value,
}

/// Where a run came from: everything needed to reproduce it.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Effective configuration as sorted key=value pairs.
    pub config: BTreeMap<String, String>,
    /// Input files by name and content hash.
    pub data: Vec<FileRef>,
    /// Auxiliary model archives referenced by content hash.
    #[serde(default)]
    pub aux: Vec<AuxRef>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileRef {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuxRef {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

pub fn file_ref(path: &Path) -> Result<FileRef> {
    Ok(FileRef {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        sha256: sha256_file(path)?,
    })
}

/// Serialize a payload under the archive envelope and write it.
pub fn save<P: Serialize>(path: &Path, kind: &str, payload: &P) -> Result<()> {
    let payload = serde_json::to_value(payload)
        .map_err(|e| Error::Archive(format!("payload serialization: {e}")))?;
    let canonical = serde_json::to_string(&payload)
        .map_err(|e| Error::Archive(format!("payload canonicalization: {e}")))?;
    let envelope = Envelope {
        version: FORMAT_VERSION,
        kind: kind.to_string(),
        checksum: sha256_hex(canonical.as_bytes()),
        payload,
    };
    let text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| Error::Archive(format!("archive serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Load and verify an archive of the expected kind.
pub fn load<P: DeserializeOwned>(path: &Path, kind: &str) -> Result<P> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Archive(format!("cannot read {}: {e}", path.display())))?;
    let envelope: Envelope = serde_json::from_str(&text)
        .map_err(|e| Error::Archive(format!("{}: not an archive: {e}", path.display())))?;
    if envelope.version != FORMAT_VERSION {
        return Err(Error::Archive(format!(
            "{}: format version {} but this build reads version {FORMAT_VERSION}",
            path.display(),
            envelope.version
        )));
    }
    if envelope.kind != kind {
        return Err(Error::Archive(format!(
            "{}: archive kind `{}`, expected `{kind}`",
            path.display(),
            envelope.kind
        )));
    }
    let canonical = serde_json::to_string(&envelope.payload)
        .map_err(|e| Error::Archive(format!("payload canonicalization: {e}")))?;
    let checksum = sha256_hex(canonical.as_bytes());
    if checksum != envelope.checksum {
        return Err(Error::Archive(format!(
            "{}: checksum mismatch (archive says {}, payload hashes to {checksum})",
            path.display(),
            envelope.checksum
        )));
    }
    serde_json::from_value(envelope.payload)
        .map_err(|e| Error::Archive(format!("{}: bad payload: {e}", path.display())))
}

/// Kind tag of an archive on disk, without verifying it.
pub fn peek_kind(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Archive(format!("cannot read {}: {e}", path.display())))?;
    let envelope: Envelope = serde_json::from_str(&text)
        .map_err(|e| Error::Archive(format!("{}: not an archive: {e}", path.display())))?;
    Ok(envelope.kind)
}

/// Export a store's parameters, refusing non-finite values (JSON has no inf).
pub fn export_params(store: &ParamStore) -> Result<BTreeMap<String, Matrix>> {
    for p in store.iter() {
        if !p.value.all_finite() {
            return Err(Error::Archive(format!(
                "parameter {} contains non-finite values",
                p.name
            )));
        }
    }
    Ok(store.export())
}
