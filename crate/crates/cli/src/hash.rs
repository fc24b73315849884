//! SHA-256 digests of input files and directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use modekit::{Error, Result};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Relative paths of every file under `root`, sorted.
fn files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let dir = root.join(&rel);
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            let name = rel.join(entry.file_name());
            if entry.file_type().map_err(|e| io_err(&dir, e))?.is_dir() {
                stack.push(name);
            } else {
                out.push(name);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digest of a file, or of a directory as the sorted list of
/// `relative-path NUL file-digest` lines.
pub fn path_digest(path: &Path) -> Result<String> {
    if !path.is_dir() {
        return file_digest(path);
    }
    let mut h = Sha256::new();
    for rel in files(path)? {
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0u8]);
        h.update(file_digest(&path.join(&rel))?.as_bytes());
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

/// `[{path, sha256}]` for every file under `root` except `skip`.
pub fn tree_digests(root: &Path, skip: &[&str]) -> Result<Value> {
    let mut out = Vec::new();
    for rel in files(root)? {
        let name = rel.to_string_lossy().replace('\\', "/");
        if skip.contains(&name.as_str()) {
            continue;
        }
        out.push(json!({ "path": name, "sha256": file_digest(&root.join(&rel))? }));
    }
    Ok(Value::Array(out))
}
