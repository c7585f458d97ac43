//! Plain-text label, class-mapping and split files.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One integer class id per line; the count must equal `expected`.
pub fn parse_labels(text: &str, expected: usize) -> Result<Vec<usize>> {
    let mut labels = Vec::with_capacity(expected);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let id = line.parse::<usize>().map_err(|_| {
            Error::Data(format!("line {}: {line:?} is not a class id", i + 1))
        })?;
        labels.push(id);
    }
    if labels.len() != expected {
        return Err(Error::Data(format!(
            "label count mismatch: expected {expected}, found {}",
            labels.len()
        )));
    }
    Ok(labels)
}

pub fn read_labels(path: impl AsRef<Path>, expected: usize) -> Result<Vec<usize>> {
    let path = path.as_ref();
    parse_labels(&read_text(path)?, expected)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn format_labels(labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    write_text(path.as_ref(), &format_labels(labels))
}

/// Dense class-id ↔ name mapping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMapping {
    names: Vec<String>,
}

impl ClassMapping {
    pub fn new(names: Vec<String>) -> Self {
        ClassMapping { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Lines `id name`; ids must cover `0..C` exactly once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(usize, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (id, name) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Data(format!("mapping line {}: expected \"id name\"", i + 1)))?;
            let id = id
                .parse::<usize>()
                .map_err(|_| Error::Data(format!("mapping line {}: {id:?} is not an id", i + 1)))?;
            if entries.iter().any(|(e, _)| *e == id) {
                return Err(Error::Data(format!("mapping line {}: duplicate id {id}", i + 1)));
            }
            entries.push((id, name.trim().to_string()));
        }
        entries.sort_by_key(|(id, _)| *id);
        if let Some((pos, (id, _))) = entries.iter().enumerate().find(|(pos, (id, _))| pos != id) {
            return Err(Error::Data(format!(
                "mapping ids are not dense: expected {pos}, found {id}"
            )));
        }
        Ok(ClassMapping {
            names: entries.into_iter().map(|(_, n)| n).collect(),
        })
    }

    pub fn to_text(&self) -> String {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| format!("{i} {n}\n"))
            .collect()
    }
}

pub fn read_mapping(path: impl AsRef<Path>) -> Result<ClassMapping> {
    let path = path.as_ref();
    ClassMapping::parse(&read_text(path)?)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_mapping(path: impl AsRef<Path>, mapping: &ClassMapping) -> Result<()> {
    write_text(path.as_ref(), &mapping.to_text())
}

/// One video id per line, unique.
pub fn parse_split(text: &str) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::Data(format!("split line {}: duplicate id {id}", i + 1)));
        }
        ids.push(id.to_string());
    }
    Ok(ids)
}

pub fn read_split(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    parse_split(&read_text(path)?).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_split(path: impl AsRef<Path>, ids: &[String]) -> Result<()> {
    let text: String = ids.iter().map(|id| format!("{id}\n")).collect();
    write_text(path.as_ref(), &text)
}
