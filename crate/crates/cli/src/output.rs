//! Provenance records and atomic file output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const GENERATOR: &str = concat!("nvepr-cli ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub generator: &'static str,
    pub seed: Option<u64>,
    /// SHA-256 of the canonical JSON of the effective settings.
    pub config_sha256: String,
    pub input_sha256: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Provenance {
    pub fn new<T: Serialize>(settings: &T, seed: Option<u64>, input: Option<&[u8]>) -> Self {
        let canonical = serde_json::to_vec(settings).expect("settings serialize");
        Self { generator: GENERATOR, seed, config_sha256: sha256_hex(&canonical), input_sha256: input.map(sha256_hex) }
    }

    pub fn comment_lines(&self) -> Vec<String> {
        let mut out = vec![format!("generator={}", self.generator)];
        if let Some(s) = self.seed {
            out.push(format!("seed={s}"));
        }
        out.push(format!("config_sha256={}", self.config_sha256));
        if let Some(h) = &self.input_sha256 {
            out.push(format!("input_sha256={h}"));
        }
        out
    }
}

/// Write `contents` to `path` via a temporary file in the same directory and a
/// rename, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    let Some(path) = path else {
        let mut out = std::io::stdout().lock();
        return out.write_all(contents.as_bytes()).map_err(|e| CliError::Io(e.to_string()));
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        emit(Some(&p), "one\n").unwrap();
        emit(Some(&p), "two\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn provenance_is_stable() {
        let a = Provenance::new(&("x", 1), Some(3), None);
        let b = Provenance::new(&("x", 1), Some(3), None);
        assert_eq!(a, b);
        assert_eq!(a.comment_lines()[1], "seed=3");
    }
}
