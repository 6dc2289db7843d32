use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use unmask_core::{Error, Result};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::Argument(format!("{}: no such file or directory", path.display()))
    } else {
        Error::Data(format!("{}: {e}", path.display()))
    }
}

/// SHA-256 of a file, or of a directory's sorted `name\0digest\n` listing.
pub fn digest(path: &Path) -> Result<String> {
    let meta = std::fs::metadata(path).map_err(|e| io_err(path, e))?;
    if !meta.is_dir() {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        return Ok(hex::encode(Sha256::digest(&bytes)));
    }
    let mut names: Vec<_> = std::fs::read_dir(path)
        .map_err(|e| io_err(path, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name())
        .collect();
    names.sort();
    let mut hasher = Sha256::new();
    for name in names {
        let d = digest(&path.join(&name))?;
        hasher.update(name.to_string_lossy().as_bytes());
        hasher.update(b"\0");
        hasher.update(d.as_bytes());
        hasher.update(b"\n");
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn input_entry(role: &str, path: &Path) -> Result<Value> {
    Ok(json!({
        "role": role,
        "path": path.display().to_string(),
        "sha256": digest(path)?,
    }))
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}
