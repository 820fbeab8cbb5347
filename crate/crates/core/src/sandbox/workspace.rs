use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::SandboxError;
use crate::model::TemplateDescriptor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    root: PathBuf,
    origin_scaffolds: Vec<PathBuf>,
    writable: bool,
}

impl Workspace {
    /// Copies each `(subdir, source)` tree under `dest/subdir` and keeps a
    /// pristine side copy for later resets.
    pub fn from_mounts(dest: &Path, mounts: &[(String, PathBuf)]) -> Result<Self, SandboxError> {
        if dest.exists() {
            let mut entries = fs::read_dir(dest).map_err(|e| SandboxError::io(dest, e))?;
            if entries.next().is_some() {
                return Err(SandboxError::DestinationNotEmpty(dest.to_path_buf()));
            }
        }
        fs::create_dir_all(dest).map_err(|e| SandboxError::io(dest, e))?;
        let root = dest.canonicalize().map_err(|e| SandboxError::io(dest, e))?;
        for (subdir, source) in mounts {
            if !source.is_dir() {
                return Err(SandboxError::io(
                    source,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "scaffold directory missing"),
                ));
            }
            copy_tree(source, &root.join(subdir))?;
        }
        let ws = Self { root, origin_scaffolds: mounts.iter().map(|(_, s)| s.clone()).collect(), writable: true };
        ws.snapshot()?;
        Ok(ws)
    }

    /// Adopts an existing directory without taking a pristine copy.
    pub fn open(root: &Path) -> Result<Self, SandboxError> {
        let root = root.canonicalize().map_err(|e| SandboxError::io(root, e))?;
        Ok(Self { root, origin_scaffolds: Vec::new(), writable: true })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn origin_scaffolds(&self) -> &[PathBuf] {
        &self.origin_scaffolds
    }

    pub fn writable(&self) -> bool {
        self.writable
    }

    pub fn read_only(mut self) -> Self {
        self.writable = false;
        self
    }

    pub fn pristine_path(&self) -> PathBuf {
        let name = self.root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.root.with_file_name(format!(".{name}.pristine"))
    }

    /// Replaces the pristine copy with the current tree.
    pub fn snapshot(&self) -> Result<(), SandboxError> {
        let pristine = self.pristine_path();
        if pristine.exists() {
            fs::remove_dir_all(&pristine).map_err(|e| SandboxError::io(&pristine, e))?;
        }
        copy_tree(&self.root, &pristine)
    }

    pub fn digest(&self) -> Result<String, SandboxError> {
        tree_digest(&self.root)
    }

    pub fn resolve(&self, requested: &str) -> Result<PathBuf, SandboxError> {
        resolve_path(self, requested)
    }

    /// Workspace-relative rendering of an absolute path inside the jail.
    pub fn relative<'a>(&self, path: &'a Path) -> Option<&'a Path> {
        path.strip_prefix(&self.root).ok()
    }
}

pub fn create_workspace(templates: &[&TemplateDescriptor], dest: &Path) -> Result<Workspace, SandboxError> {
    let mounts: Vec<(String, PathBuf)> =
        templates.iter().map(|t| (t.kind.subdir().to_string(), t.scaffold_path.clone())).collect();
    Workspace::from_mounts(dest, &mounts)
}

pub fn reset_workspace(ws: &Workspace) -> Result<Workspace, SandboxError> {
    let pristine = ws.pristine_path();
    if !pristine.is_dir() {
        return Err(SandboxError::PristineMissing(pristine));
    }
    for entry in fs::read_dir(&ws.root).map_err(|e| SandboxError::io(&ws.root, e))? {
        let path = entry.map_err(|e| SandboxError::io(&ws.root, e))?.path();
        let meta = fs::symlink_metadata(&path).map_err(|e| SandboxError::io(&path, e))?;
        let removed = if meta.is_dir() { fs::remove_dir_all(&path) } else { fs::remove_file(&path) };
        removed.map_err(|e| SandboxError::io(&path, e))?;
    }
    copy_into(&pristine, &ws.root)?;
    Ok(ws.clone())
}

/// Lexical normalization: drops `.`, folds `..` against prior components.
/// `..` above the filesystem root is kept so the jail check rejects it.
pub fn normalize_lexical(path: &Path) -> PathBuf {
    let mut out: Vec<Component> = Vec::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => match out.last() {
                Some(Component::Normal(_)) => {
                    out.pop();
                }
                _ => out.push(c),
            },
            other => out.push(other),
        }
    }
    out.iter().collect()
}

pub fn resolve_path(ws: &Workspace, requested: &str) -> Result<PathBuf, SandboxError> {
    let jail = || SandboxError::JailViolation { requested: requested.to_string(), root: ws.root.clone() };
    if requested.contains('\0') {
        return Err(jail());
    }
    let raw = Path::new(requested);
    let joined = if raw.is_absolute() { raw.to_path_buf() } else { ws.root.join(raw) };
    let lexical = normalize_lexical(&joined);
    if !lexical.starts_with(&ws.root) {
        return Err(jail());
    }
    // Resolve symlinks on the deepest existing ancestor; the rest cannot
    // contain links yet.
    let mut existing = lexical.as_path();
    let mut rest: Vec<&std::ffi::OsStr> = Vec::new();
    while fs::symlink_metadata(existing).is_err() {
        match (existing.parent(), existing.file_name()) {
            (Some(parent), Some(name)) => {
                rest.push(name);
                existing = parent;
            }
            _ => return Err(jail()),
        }
    }
    let mut resolved = existing.canonicalize().map_err(|_| jail())?;
    for name in rest.iter().rev() {
        resolved.push(name);
    }
    if !resolved.starts_with(&ws.root) {
        return Err(jail());
    }
    Ok(resolved)
}

/// sha256 over every entry's relative path, type, executable bit and
/// contents (link target for symlinks), in sorted path order.
pub fn tree_digest(root: &Path) -> Result<String, SandboxError> {
    digest_where(root, |_| true)
}

/// Directories holding state a running app writes on its own.
pub const RUNTIME_DIRS: &[&str] = &["node_modules", "data", "__pycache__", ".git"];

/// [`tree_digest`] minus [`RUNTIME_DIRS`], so two trees built by the same
/// edits compare equal even if only one of them was ever started.
pub fn source_digest(root: &Path) -> Result<String, SandboxError> {
    digest_where(root, |e| !(e.file_type().is_dir() && RUNTIME_DIRS.iter().any(|d| e.file_name() == *d)))
}

fn digest_where(root: &Path, keep: impl FnMut(&walkdir::DirEntry) -> bool) -> Result<String, SandboxError> {
    let mut hasher = Sha256::new();
    for entry in WalkDir::new(root).min_depth(1).sort_by_file_name().into_iter().filter_entry(keep) {
        let entry = entry.map_err(|e| SandboxError::io(root, e.into()))?;
        let path = entry.path();
        let rel = path.strip_prefix(root).unwrap();
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        let ft = entry.file_type();
        if ft.is_symlink() {
            let target = fs::read_link(path).map_err(|e| SandboxError::io(path, e))?;
            hasher.update(b"L");
            hasher.update(target.to_string_lossy().as_bytes());
        } else if ft.is_dir() {
            hasher.update(b"D");
        } else {
            let meta = entry.metadata().map_err(|e| SandboxError::io(path, e.into()))?;
            let exec = meta.permissions().mode() & 0o111 != 0;
            let bytes = fs::read(path).map_err(|e| SandboxError::io(path, e))?;
            hasher.update(if exec { b"X" } else { b"F" });
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
        hasher.update([0]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn copy_tree(src: &Path, dst: &Path) -> Result<(), SandboxError> {
    fs::create_dir_all(dst).map_err(|e| SandboxError::io(dst, e))?;
    copy_into(src, dst)
}

/// Copies the contents of `src` into existing `dst`, keeping permissions,
/// symlinks and modification times.
fn copy_into(src: &Path, dst: &Path) -> Result<(), SandboxError> {
    let mut dirs = Vec::new();
    for entry in WalkDir::new(src).min_depth(1).sort_by_file_name() {
        let entry = entry.map_err(|e| SandboxError::io(src, e.into()))?;
        let from = entry.path();
        let to = dst.join(from.strip_prefix(src).unwrap());
        let ft = entry.file_type();
        if ft.is_symlink() {
            let target = fs::read_link(from).map_err(|e| SandboxError::io(from, e))?;
            std::os::unix::fs::symlink(&target, &to).map_err(|e| SandboxError::io(&to, e))?;
        } else if ft.is_dir() {
            fs::create_dir_all(&to).map_err(|e| SandboxError::io(&to, e))?;
            dirs.push((from.to_path_buf(), to));
        } else {
            fs::copy(from, &to).map_err(|e| SandboxError::io(&to, e))?;
            copy_mtime(from, &to)?;
        }
    }
    // directory mtimes change as children land, so stamp them last
    for (from, to) in dirs.iter().rev() {
        copy_mtime(from, to)?;
    }
    Ok(())
}

fn copy_mtime(from: &Path, to: &Path) -> Result<(), SandboxError> {
    let meta = fs::metadata(from).map_err(|e| SandboxError::io(from, e))?;
    let mtime = filetime::FileTime::from_last_modification_time(&meta);
    filetime::set_file_mtime(to, mtime).map_err(|e| SandboxError::io(to, e))
}
