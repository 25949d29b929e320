//! Provenance stamping and small JSON helpers shared by every artifact the
//! pipeline writes. Artifacts embed the resolved configuration and seed of
//! the command that produced them, so any output can be replayed exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Record of the command invocation that produced an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

/// Serializes `value` as pretty-printed JSON with a trailing newline.
/// Identical values produce byte-identical files.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::other)?;
    out.write_all(b"\n")?;
    out.flush()
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> std::io::Result<T> {
    let reader = BufReader::new(File::open(path)?);
    serde_json::from_reader(reader).map_err(std::io::Error::other)
}

/// Hex SHA-256 of a token list, used to tie artifacts to the vocabulary that
/// produced them.
pub fn token_list_digest(tokens: &[String]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for t in tokens {
        hasher.update(t.as_bytes());
        hasher.update(b"\n");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
