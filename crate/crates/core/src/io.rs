//! Atomic file and directory writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

fn parent_of(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Write `bytes` to a temp file beside `path`, then rename over it.
pub fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent_of(path);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Populate a temp directory beside `path` with `fill`, then move it into
/// place. On any error nothing is left at `path`.
pub fn write_dir_atomic(path: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = parent_of(path);
    let tmp = tempfile::Builder::new()
        .prefix(".cusprune-")
        .tempdir_in(parent)
        .map_err(|e| Error::io(parent, e))?;
    fill(tmp.path())?;
    if path.is_dir() {
        fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    let staged = tmp.keep();
    fs::rename(&staged, path).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        Error::io(path, e)
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path.to_path_buf())),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn read_string(path: &Path) -> Result<String> {
    String::from_utf8(read_file(path)?).map_err(|_| Error::Invalid(format!("{} is not UTF-8", path.display())))
}
