//! Small shared helpers: atomic file writes and stable seed derivation.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Write `bytes` to `path` atomically: write a sibling temp file, then rename.
///
/// A failed write never leaves a partial file at `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// FNV-1a 64-bit hash. Stable across runs and platforms, unlike the std hasher.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive a per-call RNG seed from a base seed and a list of string parts.
///
/// Used wherever randomness must be reproducible independently of call
/// order (per-query shuffles, per-window oracle noise).
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut buf = Vec::with_capacity(16 + parts.iter().map(|p| p.len() + 1).sum::<usize>());
    buf.extend_from_slice(&base.to_le_bytes());
    for p in parts {
        buf.push(0x1f); // unit separator so ("ab","c") != ("a","bc")
        buf.extend_from_slice(p.as_bytes());
    }
    fnv1a(&buf)
}
