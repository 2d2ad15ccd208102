use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Cursor, Read};
use std::path::{Path, PathBuf};

use zip::ZipArchive;

use super::SandboxError;
use crate::paths::confined_relative;

/// Directory inside every workspace reserved for the engine's own files.
pub(crate) const RESERVED_DIR: &str = ".codeval";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractionLimits {
    /// Cap on the total uncompressed bytes written across all archives.
    pub max_total_bytes: u64,
}

impl Default for ExtractionLimits {
    fn default() -> Self {
        ExtractionLimits {
            max_total_bytes: 256 * 1024 * 1024,
        }
    }
}

/// A per-evaluation directory holding the extracted submission and
/// support files. The directory is removed on [`destroy_workspace`] or drop.
#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    manifest: Vec<PathBuf>,
}

impl Workspace {
    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Files extracted into the workspace, relative to the root, sorted.
    pub fn manifest(&self) -> &[PathBuf] {
        &self.manifest
    }

    /// Absolute path of a workspace-relative path. Returns `None` for paths
    /// that would leave the workspace.
    pub fn resolve(&self, relative: &Path) -> Option<PathBuf> {
        confined_relative(&relative.to_string_lossy()).map(|p| self.root.join(p))
    }

    pub fn is_live(&self) -> bool {
        self.root.is_dir()
    }

    pub fn destroy(&mut self) {
        match fs::remove_dir_all(&self.root) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => log::warn!("failed to remove workspace {}: {e}", self.root.display()),
        }
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        self.destroy();
    }
}

/// Removes the workspace directory. Calling it again is a no-op.
pub fn destroy_workspace(workspace: &mut Workspace) {
    workspace.destroy();
}

/// Creates a workspace under the system temporary directory with default
/// limits. See [`create_workspace_in`].
pub fn create_workspace<A: AsRef<[u8]>>(
    submission_archive: &[u8],
    support_archives: &[A],
) -> Result<Workspace, SandboxError> {
    create_workspace_in(
        &std::env::temp_dir(),
        submission_archive,
        support_archives,
        ExtractionLimits::default(),
    )
}

/// Extracts the submission into a fresh directory under `base`, then each
/// support archive over it, so instructor files replace student files of
/// the same name. On any error the directory is removed.
pub fn create_workspace_in<A: AsRef<[u8]>>(
    base: &Path,
    submission_archive: &[u8],
    support_archives: &[A],
    limits: ExtractionLimits,
) -> Result<Workspace, SandboxError> {
    let root = tempfile::Builder::new().prefix("codeval-").tempdir_in(base)?.keep();
    let mut workspace = Workspace {
        root,
        manifest: Vec::new(),
    };

    let mut budget = limits.max_total_bytes;
    let mut files = BTreeSet::new();
    let archives = std::iter::once(submission_archive).chain(support_archives.iter().map(|a| a.as_ref()));
    for bytes in archives {
        // Drop runs destroy() if this fails.
        extract_into(&workspace.root, bytes, &mut budget, &mut files)?;
    }
    workspace.manifest = files.into_iter().collect();
    Ok(workspace)
}

struct PlannedEntry {
    index: usize,
    path: PathBuf,
    is_dir: bool,
}

fn extract_into(
    root: &Path,
    bytes: &[u8],
    budget: &mut u64,
    files: &mut BTreeSet<PathBuf>,
) -> Result<(), SandboxError> {
    let mut archive = ZipArchive::new(Cursor::new(bytes)).map_err(|e| SandboxError::Extraction(e.to_string()))?;

    // Validate every entry before writing anything.
    let mut plan = Vec::with_capacity(archive.len());
    let mut declared: u64 = 0;
    for index in 0..archive.len() {
        let entry = archive
            .by_index_raw(index)
            .map_err(|e| SandboxError::Extraction(e.to_string()))?;
        let name = entry.name().to_string();
        let path = confined_relative(&name)
            .ok_or_else(|| SandboxError::Security(format!("{name:?} escapes the workspace")))?;
        if path.starts_with(RESERVED_DIR) {
            return Err(SandboxError::Security(format!("{name:?} uses a reserved directory")));
        }
        if entry.is_symlink() {
            return Err(SandboxError::Security(format!("{name:?} is a symbolic link")));
        }
        declared = declared.saturating_add(entry.size());
        plan.push(PlannedEntry {
            index,
            path,
            is_dir: entry.is_dir(),
        });
    }
    if declared > *budget {
        return Err(SandboxError::Limit(format!(
            "archive declares {declared} bytes, {} allowed",
            *budget
        )));
    }

    for item in plan {
        let target = root.join(&item.path);
        if item.is_dir {
            fs::create_dir_all(&target)?;
            continue;
        }
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        if target.is_dir() {
            fs::remove_dir_all(&target)?;
        }
        let entry = archive
            .by_index(item.index)
            .map_err(|e| SandboxError::Extraction(e.to_string()))?;
        let executable = entry.unix_mode().is_some_and(|m| m & 0o111 != 0);
        let mut out = fs::File::create(&target)?;
        // Declared sizes can lie; count what is actually inflated.
        let written = io::copy(&mut entry.take(*budget + 1), &mut out)
            .map_err(|e| SandboxError::Extraction(format!("{}: {e}", item.path.display())))?;
        if written > *budget {
            return Err(SandboxError::Limit(format!(
                "{} exceeds the extraction budget",
                item.path.display()
            )));
        }
        *budget -= written;
        set_mode(&target, executable)?;
        files.insert(item.path);
    }
    Ok(())
}

#[cfg(unix)]
fn set_mode(path: &Path, executable: bool) -> io::Result<()> {
    use std::os::unix::fs::PermissionsExt;
    let mode = if executable { 0o755 } else { 0o644 };
    fs::set_permissions(path, fs::Permissions::from_mode(mode))
}

#[cfg(not(unix))]
fn set_mode(_path: &Path, _executable: bool) -> io::Result<()> {
    Ok(())
}
