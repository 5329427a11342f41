//! File formats: degree sequences (newline-delimited integers or a JSON
//! object `{"n": N, "counts": {"d": count}}`) and degree laws (a JSON object
//! mapping degree to probability, optionally under a `"probs"` key).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::degrees::{DegreeSequence, ProbabilityVector};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct CountsFile {
    n: usize,
    counts: BTreeMap<String, u64>,
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn parse_key(path: &Path, k: &str) -> Result<u32> {
    k.trim()
        .parse()
        .map_err(|_| parse_err(path, format!("degree key {k:?} is not an integer")))
}

/// Parses either format from a string; `path` only labels errors.
pub fn parse_degrees(text: &str, path: &Path) -> Result<DegreeSequence> {
    if text.trim_start().starts_with('{') {
        let f: CountsFile =
            serde_json::from_str(text).map_err(|e| parse_err(path, e.to_string()))?;
        let mut counts = BTreeMap::new();
        for (k, c) in f.counts {
            *counts.entry(parse_key(path, &k)?).or_insert(0) += c;
        }
        let total: u64 = counts.values().sum();
        if total != f.n as u64 {
            return Err(parse_err(
                path,
                format!("counts sum to {total} but n = {}", f.n),
            ));
        }
        return DegreeSequence::from_counts(&counts);
    }
    let mut degrees = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let d = line.parse::<u32>().map_err(|_| {
            parse_err(
                path,
                format!("line {}: {line:?} is not a degree", line_no + 1),
            )
        })?;
        degrees.push(d);
    }
    DegreeSequence::new(degrees)
}

pub fn read_degrees(path: &Path) -> Result<DegreeSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_degrees(&text, path)
}

pub fn degrees_text(ds: &DegreeSequence) -> String {
    let mut s = String::with_capacity(ds.n() * 3);
    for d in ds.degrees() {
        s.push_str(&d.to_string());
        s.push('\n');
    }
    s
}

pub fn degrees_json(ds: &DegreeSequence) -> String {
    let f = CountsFile {
        n: ds.n(),
        counts: ds
            .counts()
            .into_iter()
            .map(|(k, c)| (k.to_string(), c))
            .collect(),
    };
    serde_json::to_string_pretty(&f).expect("serializable")
}

/// Writes text format unless the path ends in `.json`.
pub fn write_degrees(ds: &DegreeSequence, path: &Path) -> Result<()> {
    let body = if path.extension().is_some_and(|e| e == "json") {
        degrees_json(ds)
    } else {
        degrees_text(ds)
    };
    write_atomic(path, body.as_bytes())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DistFile {
    Wrapped { probs: BTreeMap<String, f64> },
    Flat(BTreeMap<String, f64>),
}

pub fn parse_dist(text: &str, path: &Path) -> Result<ProbabilityVector> {
    let f: DistFile = serde_json::from_str(text).map_err(|e| parse_err(path, e.to_string()))?;
    let map = match f {
        DistFile::Wrapped { probs } | DistFile::Flat(probs) => probs,
    };
    let mut support = Vec::with_capacity(map.len());
    for (k, p) in map {
        support.push((parse_key(path, &k)?, p));
    }
    ProbabilityVector::new(support)
}

pub fn read_dist(path: &Path) -> Result<ProbabilityVector> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dist(&text, path)
}

pub fn dist_json(dist: &ProbabilityVector) -> String {
    let map: BTreeMap<String, f64> = dist
        .support()
        .iter()
        .map(|&(k, p)| (k.to_string(), p))
        .collect();
    serde_json::to_string_pretty(&map).expect("serializable")
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Renders a CSV through a writer callback and writes it atomically.
pub fn write_csv_atomic(
    path: &Path,
    render: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    render(&mut buf).map_err(|e| Error::io(path, e))?;
    write_atomic(path, &buf)
}
