use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::errors::CliError;

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Temp files are born 0600; artifacts should be ordinary files.
fn relax_mode(path: &Path) {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let _ = std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o644));
    }
}

/// Stage in a temp file in the destination directory, then rename: readers
/// never see a partial artifact, and parallel writers cannot interleave.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = parent_dir(path);
    let mut tmp = NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    relax_mode(path);
    Ok(())
}

pub fn write_json_atomic(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// The WAV encoder wants a real path, so reserve a temp name and rename after.
pub fn write_wav_atomic(path: &Path, rec: &soundobj::Recording) -> Result<(), CliError> {
    let tmp = NamedTempFile::new_in(parent_dir(path))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
        .into_temp_path();
    soundobj::write_wav(&tmp, rec)?;
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    relax_mode(path);
    Ok(())
}
