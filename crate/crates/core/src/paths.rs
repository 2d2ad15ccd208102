use std::path::{Component, Path, PathBuf};

/// Returns the normalized form of `raw` if it names a location strictly
/// inside some root: not absolute, no drive prefix, no `..` components,
/// and not empty. Backslashes count as separators.
pub(crate) fn confined_relative(raw: &str) -> Option<PathBuf> {
    if raw.is_empty() || raw.starts_with('/') || raw.starts_with('\\') {
        return None;
    }
    let unified = raw.replace('\\', "/");
    // Windows drive letters such as `C:` are absolute even without a slash.
    if unified.len() >= 2 && unified.as_bytes()[1] == b':' {
        return None;
    }
    let mut out = PathBuf::new();
    for comp in Path::new(&unified).components() {
        match comp {
            Component::Normal(part) => out.push(part),
            Component::CurDir => {}
            Component::ParentDir | Component::RootDir | Component::Prefix(_) => return None,
        }
    }
    if out.as_os_str().is_empty() {
        None
    } else {
        Some(out)
    }
}
