//! Atomic output helpers: results land in a temporary file that is renamed
//! into place only after a fully successful write.

use std::path::Path;

use anyhow::{Context, Result};

/// Runs `write` against a temporary path in the target's directory, then
/// renames it onto `path`.
pub fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .with_context(|| format!("creating temporary file next to {}", path.display()))?;
    let tmp_path = tmp.into_temp_path();
    write(&tmp_path)?;
    tmp_path
        .persist(path)
        .with_context(|| format!("renaming temporary file onto {}", path.display()))?;
    Ok(())
}

/// Writes text to `path` atomically, or to stdout when no path is given.
pub fn emit_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, |tmp| {
            std::fs::write(tmp, text).with_context(|| format!("writing {}", path.display()))
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
