//! File digests, seed derivation and atomic writes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes =
        fs::read(path).with_context(|| format!("reading {} for digest", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Stage seeds all derive from the single top-level seed.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes through a temporary name in the same directory, renaming only on
/// success so a failed stage never leaves a partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

/// Runs a writer against a temporary name, then renames into place.
pub fn write_atomic_with(
    path: &Path,
    writer: impl FnOnce(&Path) -> numex::Result<()>,
) -> Result<()> {
    let tmp = temp_path(path);
    writer(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

/// Errors with a pointer at the producing stage when an input is missing.
pub fn require_input(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        anyhow::bail!(
            "input {} does not exist; run the `{producer}` stage first",
            path.display()
        );
    }
    Ok(())
}
