//! Library half of the `workbench` binary: file formats, flag-value
//! parsing and the command implementations.
//!
//! Everything that touches untrusted input (scenario JSON, noise
//! specs) lives here so it can be exercised by unit tests and fuzz
//! targets without going through a subprocess.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

pub mod commands;
pub mod csv;
pub mod noise_spec;
pub mod scenario_file;

/// Errors carrying the process exit code contract:
/// usage problems exit 2, runtime/invariant failures exit 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad flags, malformed files, unparsable values — exit 2.
    Usage(String),
    /// Valid request that failed: invariant violations, degenerate
    /// inputs, I/O trouble, a falsified property — exit 1.
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

/// Writes `contents` to `path` atomically (temp file in the same
/// directory, then rename), so readers never observe a half-written
/// artifact.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Failure(format!("cannot create temp file in {}: {e}", dir.display())))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))?;
    // Temp files are created 0600; widen to the usual artifact mode so
    // the atomic write is not observable through file permissions.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let _ = tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644));
    }
    tmp.persist(path)
        .map_err(|e| CliError::Failure(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

/// Seed resolution: an explicit flag wins, then the `WORKBENCH_SEED`
/// environment variable, then 0.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("WORKBENCH_SEED") {
        Ok(text) => text.trim().parse::<u64>().map_err(|_| {
            CliError::Usage(format!(
                "WORKBENCH_SEED must be an unsigned 64-bit integer, got {text:?}"
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(CliError::Usage(format!("cannot read WORKBENCH_SEED: {e}"))),
    }
}
