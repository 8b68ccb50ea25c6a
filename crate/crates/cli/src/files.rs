//! Atomic file writes and small JSON helpers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

/// Writes `bytes` to a temporary sibling and renames it over `path`, so
/// readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Input(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

/// Serializes rows with a header into CSV bytes.
pub fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Input(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Input(e.to_string()))
}

/// Reads every row of a CSV file, first checking the header against
/// `expected`.
pub fn read_csv<T: DeserializeOwned>(path: &Path, expected: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::format(path, format!("{other:?}")),
    })?;
    let header = r.headers().map_err(|e| CliError::format(path, e))?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(CliError::format(
            path,
            format!("header is `{}`, expected `{}`", header.iter().collect::<Vec<_>>().join(","), expected.join(",")),
        ));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::format(path, format!("row {}: {e}", i + 2))))
        .collect()
}

/// Applies `key.path=value` overrides to a serializable value. Values parse
/// as JSON when they can and are taken as strings otherwise.
pub fn apply_overrides<T: Serialize + DeserializeOwned>(base: &T, overrides: &[String]) -> Result<T> {
    if overrides.is_empty() {
        return serde_json::to_value(base)
            .and_then(serde_json::from_value)
            .map_err(|e| CliError::Input(e.to_string()));
    }
    let mut root = serde_json::to_value(base).map_err(|e| CliError::Input(e.to_string()))?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("override `{item}` is not of the form key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut root;
        for part in key.split('.') {
            let map = node
                .as_object_mut()
                .ok_or_else(|| CliError::Input(format!("override `{key}`: `{part}` is not inside an object")))?;
            node = map.entry(part).or_insert(Value::Null);
        }
        *node = value;
    }
    serde_json::from_value(root).map_err(|e| CliError::Input(format!("after overrides: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Inner {
        rate: f64,
        name: String,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Outer {
        k: usize,
        inner: Inner,
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let base = Outer { k: 1, inner: Inner { rate: 0.5, name: "a".into() } };
        let out = apply_overrides(&base, &["k=7".into(), "inner.rate=2.5".into(), "inner.name=b".into()]).unwrap();
        assert_eq!(out, Outer { k: 7, inner: Inner { rate: 2.5, name: "b".into() } });
        assert!(apply_overrides(&base, &["k".into()]).is_err());
        assert!(apply_overrides(&base, &["k=oops".into()]).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
