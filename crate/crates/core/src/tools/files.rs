use std::fs;
use std::path::{Path, PathBuf};

use globset::{Glob, GlobBuilder, GlobMatcher, GlobSet, GlobSetBuilder};
use regex::Regex;
use serde_json::Value;
use walkdir::WalkDir;

use super::{str_arg, ToolResult, ToolRuntime};

const GLOB_CHARS: [char; 4] = ['*', '?', '[', '{'];

fn is_binary(bytes: &[u8]) -> bool {
    bytes[..bytes.len().min(8192)].contains(&0) || std::str::from_utf8(bytes).is_err()
}

fn truncate(text: &str, cap: usize) -> String {
    if text.len() <= cap {
        return text.to_string();
    }
    let mut end = cap;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    format!(
        "{}\n[truncated: showing first {end} of {} bytes; use offset and limit to read further]",
        &text[..end],
        text.len()
    )
}

fn ignore_set(patterns: &[String]) -> GlobSet {
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        if let Ok(g) = Glob::new(p) {
            b.add(g);
        }
    }
    b.build().unwrap_or_else(|_| GlobSet::empty())
}

/// Files under `base`, sorted by path, skipping ignored directory names.
fn walk_files(base: &Path, ignore: &GlobSet) -> Vec<PathBuf> {
    WalkDir::new(base)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !ignore.is_match(e.file_name()))
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .collect()
}

pub(super) fn read_file(rt: &ToolRuntime, args: &Value) -> ToolResult {
    let requested = str_arg(args, "path").unwrap_or_default();
    let path = match rt.resolve(requested) {
        Ok(p) => p,
        Err(e) => return ToolResult::error(e.to_string()),
    };
    if path.is_dir() {
        return ToolResult::error(format!("{} is a directory, not a file", path.display()));
    }
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return ToolResult::error(format!("file not found: {}", path.display()))
        }
        Err(e) => return ToolResult::error(format!("cannot read {}: {e}", path.display())),
    };
    if is_binary(&bytes) {
        return ToolResult::error(format!("{} is a binary file ({} bytes)", path.display(), bytes.len()));
    }
    let text = String::from_utf8(bytes).expect("checked utf-8");
    let offset = args.get("offset").and_then(Value::as_u64);
    let limit = args.get("limit").and_then(Value::as_u64);
    if offset.is_none() && limit.is_none() {
        return ToolResult::ok(truncate(&text, rt.config().read_file_cap_bytes));
    }
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let start = offset.unwrap_or(1) as usize - 1;
    if start >= lines.len() && !(start == 0 && lines.is_empty()) {
        return ToolResult::error(format!(
            "offset {} is past the end of {} ({} lines)",
            start + 1,
            path.display(),
            lines.len()
        ));
    }
    let end = limit.map_or(lines.len(), |l| (start + l as usize).min(lines.len()));
    ToolResult::ok(truncate(&lines[start..end].concat(), rt.config().read_file_cap_bytes))
}

pub(super) fn write_file(rt: &ToolRuntime, args: &Value) -> ToolResult {
    let requested = str_arg(args, "path").unwrap_or_default();
    let content = str_arg(args, "content").unwrap_or_default();
    let path = match rt.resolve_writable(requested) {
        Ok(p) => p,
        Err(e) => return ToolResult::error(e),
    };
    if path.is_dir() {
        return ToolResult::error(format!("{} is a directory", path.display()));
    }
    let existed = path.exists();
    if let Some(parent) = path.parent() {
        if let Err(e) = fs::create_dir_all(parent) {
            return ToolResult::error(format!("cannot create {}: {e}", parent.display()));
        }
    }
    if let Err(e) = fs::write(&path, content) {
        return ToolResult::error(format!("cannot write {}: {e}", path.display()));
    }
    rt.stamp(&path);
    let verb = if existed { "Overwrote" } else { "Created" };
    ToolResult::ok(format!("{verb} file {} ({} bytes).", path.display(), content.len()))
}

pub(super) fn list_directory(rt: &ToolRuntime, args: &Value) -> ToolResult {
    let requested = str_arg(args, "path").unwrap_or_default();
    let path = match rt.resolve(requested) {
        Ok(p) => p,
        Err(e) => return ToolResult::error(e.to_string()),
    };
    if !path.is_dir() {
        return ToolResult::error(format!("{} is not a directory", path.display()));
    }
    let mut patterns = rt.config().ignore_globs.clone();
    if let Some(extra) = args.get("ignore").and_then(Value::as_array) {
        patterns.extend(extra.iter().filter_map(Value::as_str).map(str::to_string));
    }
    let ignore = ignore_set(&patterns);
    let entries = match fs::read_dir(&path) {
        Ok(e) => e,
        Err(e) => return ToolResult::error(format!("cannot list {}: {e}", path.display())),
    };
    let mut dirs = Vec::new();
    let mut files = Vec::new();
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if ignore.is_match(&name) {
            continue;
        }
        if entry.path().is_dir() {
            dirs.push(name);
        } else {
            files.push(name);
        }
    }
    dirs.sort();
    files.sort();
    if dirs.is_empty() && files.is_empty() {
        return ToolResult::ok(format!("Directory {} is empty.", path.display()));
    }
    let mut out = format!("Directory listing for {}:\n", path.display());
    for d in dirs {
        out.push_str(&format!("[DIR] {d}\n"));
    }
    for f in files {
        out.push_str(&f);
        out.push('\n');
    }
    ToolResult::ok(out)
}

/// Splits a pattern into its literal directory prefix and the glob part.
fn split_pattern(pattern: &str) -> (String, String) {
    let mut base = Vec::new();
    let mut parts = pattern.split('/').peekable();
    let absolute = pattern.starts_with('/');
    while let Some(part) = parts.peek() {
        if part.contains(GLOB_CHARS) {
            break;
        }
        let part = parts.next().unwrap();
        if parts.peek().is_none() {
            // the final literal component is the file name itself
            let glob = globset::escape(part);
            let base = if base.is_empty() && !absolute { ".".to_string() } else { base.join("/") };
            return (if base.is_empty() { "/".into() } else { base }, glob);
        }
        base.push(part);
    }
    let rest: Vec<&str> = parts.collect();
    let base = base.join("/");
    let base = if base.is_empty() {
        if absolute {
            "/".into()
        } else {
            ".".into()
        }
    } else {
        base
    };
    (base, rest.join("/"))
}

fn matcher(pattern: &str) -> Result<GlobMatcher, String> {
    GlobBuilder::new(pattern)
        .literal_separator(true)
        .build()
        .map(|g| g.compile_matcher())
        .map_err(|e| format!("invalid glob pattern `{pattern}`: {e}"))
}

/// Matching files for a pattern, lexicographic by path.
fn expand(rt: &ToolRuntime, pattern: &str, within: Option<&str>) -> Result<(PathBuf, Vec<PathBuf>), String> {
    let (prefix, rest) = split_pattern(pattern);
    let base_req = match within {
        Some(dir) if !Path::new(&prefix).is_absolute() => format!("{dir}/{prefix}"),
        _ => prefix,
    };
    let base = rt.resolve(&base_req).map_err(|e| e.to_string())?;
    let m = matcher(&rest)?;
    if !base.is_dir() {
        return Ok((base, Vec::new()));
    }
    let ignore = ignore_set(&rt.config().ignore_globs);
    let files = walk_files(&base, &ignore)
        .into_iter()
        .filter(|f| f.strip_prefix(&base).map(|rel| m.is_match(rel)).unwrap_or(false))
        .collect();
    Ok((base, files))
}

pub(super) fn glob(rt: &ToolRuntime, args: &Value) -> ToolResult {
    let pattern = str_arg(args, "pattern").unwrap_or_default();
    let (base, files) = match expand(rt, pattern, str_arg(args, "path")) {
        Ok(r) => r,
        Err(e) => return ToolResult::error(e),
    };
    if files.is_empty() {
        return ToolResult::ok(format!("No files found matching \"{pattern}\" within {}", base.display()));
    }
    let mut stamped: Vec<(i64, u32, PathBuf)> = files
        .into_iter()
        .map(|f| {
            let ft = fs::metadata(&f)
                .map(|m| filetime::FileTime::from_last_modification_time(&m))
                .unwrap_or_else(|_| filetime::FileTime::zero());
            (ft.unix_seconds(), ft.nanoseconds(), f)
        })
        .collect();
    stamped.sort_by(|a, b| (b.0, b.1).cmp(&(a.0, a.1)).then_with(|| a.2.cmp(&b.2)));
    let mut out = format!(
        "Found {} file(s) matching \"{pattern}\" within {}, sorted by modification time (newest first):\n",
        stamped.len(),
        base.display()
    );
    for (_, _, f) in stamped {
        out.push_str(&f.display().to_string());
        out.push('\n');
    }
    ToolResult::ok(out)
}

pub(super) fn search_file_content(rt: &ToolRuntime, args: &Value) -> ToolResult {
    let pattern = str_arg(args, "pattern").unwrap_or_default();
    let re = match Regex::new(pattern) {
        Ok(r) => r,
        Err(e) => return ToolResult::error(format!("invalid regular expression: {e}")),
    };
    let base = match rt.resolve(str_arg(args, "path").unwrap_or(".")) {
        Ok(p) => p,
        Err(e) => return ToolResult::error(e.to_string()),
    };
    let include = match str_arg(args, "include").map(|g| Glob::new(g).map(|g| g.compile_matcher())) {
        None => None,
        Some(Ok(m)) => Some(m),
        Some(Err(e)) => return ToolResult::error(format!("invalid include glob: {e}")),
    };
    let files =
        if base.is_file() { vec![base.clone()] } else { walk_files(&base, &ignore_set(&rt.config().ignore_globs)) };
    let cap = rt.config().search_max_matches;
    let mut hits = Vec::new();
    let mut truncated = false;
    'files: for file in files {
        if let Some(m) = &include {
            let rel = file.strip_prefix(&base).unwrap_or(&file);
            if !m.is_match(rel) && !file.file_name().is_some_and(|n| m.is_match(n)) {
                continue;
            }
        }
        let Ok(bytes) = fs::read(&file) else { continue };
        if is_binary(&bytes) {
            continue;
        }
        let text = String::from_utf8_lossy(&bytes);
        for (i, line) in text.lines().enumerate() {
            if re.is_match(line) {
                if hits.len() == cap {
                    truncated = true;
                    break 'files;
                }
                hits.push(format!("{}:{}:{}", file.display(), i + 1, line));
            }
        }
    }
    if hits.is_empty() {
        return ToolResult::ok(format!("No matches found for pattern \"{pattern}\" in {}", base.display()));
    }
    let mut out = format!("Found {} match(es) for pattern \"{pattern}\" in {}:\n", hits.len(), base.display());
    for h in hits {
        out.push_str(&h);
        out.push('\n');
    }
    if truncated {
        out.push_str(&format!("[truncated: stopped after {cap} matches]\n"));
    }
    ToolResult::ok(out)
}

pub(super) fn read_many_files(rt: &ToolRuntime, args: &Value) -> ToolResult {
    let entries: Vec<&str> = args
        .get("paths")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    let mut files: Vec<PathBuf> = Vec::new();
    let mut notes = Vec::new();
    for entry in &entries {
        let found = if entry.contains(GLOB_CHARS) {
            match expand(rt, entry, None) {
                Ok((_, f)) => f,
                Err(e) => return ToolResult::error(e),
            }
        } else {
            match rt.resolve(entry) {
                Ok(p) if p.is_file() => vec![p],
                Ok(_) => Vec::new(),
                Err(e) => return ToolResult::error(e.to_string()),
            }
        };
        if found.is_empty() {
            notes.push(format!("[no file matched `{entry}`]\n"));
        }
        for f in found {
            if !files.contains(&f) {
                files.push(f);
            }
        }
    }
    if files.is_empty() {
        return ToolResult::error(format!("no files matched any of: {}", entries.join(", ")));
    }
    let cap = rt.config().read_file_cap_bytes;
    let mut out = String::new();
    for f in files {
        out.push_str(&format!("--- {} ---\n", f.display()));
        match fs::read(&f) {
            Ok(bytes) if is_binary(&bytes) => out.push_str("[skipped binary file]\n"),
            Ok(bytes) => {
                let text = truncate(&String::from_utf8(bytes).expect("checked utf-8"), cap);
                out.push_str(&text);
                if !text.ends_with('\n') {
                    out.push('\n');
                }
            }
            Err(e) => out.push_str(&format!("[unreadable: {e}]\n")),
        }
    }
    for n in notes {
        out.push_str(&n);
    }
    ToolResult::ok(out)
}

pub(super) fn replace(rt: &ToolRuntime, args: &Value) -> ToolResult {
    let requested = str_arg(args, "path").unwrap_or_default();
    let old = str_arg(args, "old_string").unwrap_or_default();
    let new = str_arg(args, "new_string").unwrap_or_default();
    let expected = args.get("expected_replacements").and_then(Value::as_u64).unwrap_or(1) as usize;
    let path = match rt.resolve_writable(requested) {
        Ok(p) => p,
        Err(e) => return ToolResult::error(e),
    };
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return ToolResult::error(format!("file not found: {}", path.display()))
        }
        Err(e) => return ToolResult::error(format!("cannot read {}: {e}", path.display())),
    };
    let found = text.matches(old).count();
    if found == 0 {
        return ToolResult::error(format!("old_string not found in {}; file unchanged", path.display()));
    }
    if found != expected {
        return ToolResult::error(format!(
            "expected {expected} replacement(s) but found {found} occurrence(s) of old_string in {}; file unchanged",
            path.display()
        ));
    }
    let updated = text.replace(old, new);
    let tmp = path
        .with_file_name(format!(".{}.replace-tmp", path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()));
    let written = fs::write(&tmp, &updated)
        .and_then(|_| fs::metadata(&path))
        .and_then(|m| fs::set_permissions(&tmp, m.permissions()))
        .and_then(|_| fs::rename(&tmp, &path));
    if let Err(e) = written {
        let _ = fs::remove_file(&tmp);
        return ToolResult::error(format!("cannot write {}: {e}; file unchanged", path.display()));
    }
    rt.stamp(&path);
    ToolResult::ok(format!("Replaced {found} occurrence(s) in {}.", path.display()))
}
