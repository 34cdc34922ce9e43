//! Suffixed literals and the `key = value` text format shared by the
//! platform config, advisor profiles and calibration parameter files.
//!
//! Sizes are binary (`4K`, `64KiB`, `1MiB` and `16M` are all powers of
//! 1024). Frequencies and bandwidths are decimal (`300MHz`, `4.8GB/s`).

use std::path::Path;

use crate::error::{Error, Result};

const KIB: u64 = 1024;
const MIB: u64 = 1024 * KIB;
const GIB: u64 = 1024 * MIB;

fn split_number(s: &str) -> (&str, &str) {
    let end = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '_' || c == 'e' || c == '-' || c == '+'))
        .unwrap_or(s.len());
    // "e" only counts as an exponent when followed by a digit or sign.
    let (num, rest) = s.split_at(end);
    if num.ends_with('e') {
        return (&num[..num.len() - 1], &s[num.len() - 1..]);
    }
    (num, rest)
}

fn parse_f64(num: &str, original: &str) -> Result<f64, String> {
    let cleaned = num.replace('_', "");
    cleaned
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid number in {original:?}"))
}

/// Parses a byte size such as `4096`, `4K`, `64KiB`, `1MiB` or `2G`.
pub fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (num, unit) = split_number(s);
    let mult = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" | "kib" => KIB,
        "m" | "mb" | "mib" => MIB,
        "g" | "gb" | "gib" => GIB,
        other => return Err(format!("unknown size unit {other:?} in {s:?}")),
    };
    let cleaned = num.replace('_', "");
    let value: u64 = cleaned
        .parse()
        .map_err(|_| format!("invalid size {s:?} (expected an integer with optional K/M/G suffix)"))?;
    value
        .checked_mul(mult)
        .ok_or_else(|| format!("size {s:?} overflows"))
}

/// Parses either a comma separated list of sizes or a doubling range
/// `LO..HI` (both ends inclusive, `LO` doubled until it exceeds `HI`).
pub fn parse_size_list(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    if let Some((lo, hi)) = s.split_once("..") {
        let lo = parse_size(lo)?;
        let hi = parse_size(hi)?;
        if lo == 0 {
            return Err(format!("range start must be positive in {s:?}"));
        }
        if lo > hi {
            return Err(format!("empty range {s:?}"));
        }
        let mut out = Vec::new();
        let mut v = lo;
        while v <= hi {
            out.push(v);
            v = match v.checked_mul(2) {
                Some(n) => n,
                None => break,
            };
        }
        return Ok(out);
    }
    let sizes = s
        .split(',')
        .map(parse_size)
        .collect::<Result<Vec<_>, _>>()?;
    if sizes.is_empty() {
        return Err("empty size list".into());
    }
    Ok(sizes)
}

/// Parses a frequency such as `300MHz` or `1.2GHz` into Hz.
pub fn parse_freq(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (num, unit) = split_number(s);
    let mult = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "hz" => 1.0,
        "khz" => 1e3,
        "mhz" => 1e6,
        "ghz" => 1e9,
        other => return Err(format!("unknown frequency unit {other:?} in {s:?}")),
    };
    let v = parse_f64(num, s)? * mult;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(format!("frequency {s:?} is not a whole number of Hz"));
    }
    Ok(v as u64)
}

/// Parses a duration such as `2us`, `1.5ns` or `0.001` (seconds).
pub fn parse_duration(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (num, unit) = split_number(s);
    let mult = match unit.trim() {
        "" | "s" => 1.0,
        "ms" => 1e-3,
        "us" | "µs" => 1e-6,
        "ns" => 1e-9,
        "ps" => 1e-12,
        other => return Err(format!("unknown time unit {other:?} in {s:?}")),
    };
    Ok(parse_f64(num, s)? * mult)
}

/// Parses a bandwidth such as `4.8GB/s` or `600MB/s` into bytes per second.
pub fn parse_rate(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (num, unit) = split_number(s);
    let mult = match unit.trim() {
        "" | "B/s" => 1.0,
        "KB/s" | "kB/s" => 1e3,
        "MB/s" => 1e6,
        "GB/s" => 1e9,
        "KiB/s" => KIB as f64,
        "MiB/s" => MIB as f64,
        "GiB/s" => GIB as f64,
        other => return Err(format!("unknown bandwidth unit {other:?} in {s:?}")),
    };
    Ok(parse_f64(num, s)? * mult)
}

pub fn parse_real(s: &str) -> Result<f64, String> {
    parse_f64(s.trim(), s)
}

pub fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true/false, got {s:?}")),
    }
}

/// Renders a byte count with the largest exact binary suffix.
pub fn format_size(bytes: u64) -> String {
    if bytes >= GIB && bytes % GIB == 0 {
        format!("{}GiB", bytes / GIB)
    } else if bytes >= MIB && bytes % MIB == 0 {
        format!("{}MiB", bytes / MIB)
    } else if bytes >= KIB && bytes % KIB == 0 {
        format!("{}KiB", bytes / KIB)
    } else {
        format!("{bytes}B")
    }
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// A parsed `key = value` document with optional `[section]` headers.
///
/// `#` starts a comment anywhere on a line. Keys are case-sensitive and
/// may appear once per section.
#[derive(Debug, Clone, Default)]
pub struct KvDocument {
    pub path: std::path::PathBuf,
    pub entries: Vec<KvEntry>,
}

impl KvDocument {
    pub fn parse(text: &str, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut section = String::new();
        let mut entries: Vec<KvEntry> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(&path, line_no, "unterminated section header"))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(&path, line_no, format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::parse(&path, line_no, "empty key"));
            }
            if entries.iter().any(|e| e.section == section && e.key == key) {
                return Err(Error::parse(&path, line_no, format!("duplicate key {key:?}")));
            }
            entries.push(KvEntry {
                section: section.clone(),
                key,
                value: value.trim().to_string(),
                line: line_no,
            });
        }
        Ok(Self { path, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn section<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a KvEntry> + 'a {
        self.entries.iter().filter(move |e| e.section == name)
    }

    /// Converts a value with `f`, attaching file:line to any failure.
    pub fn convert<T>(&self, entry: &KvEntry, f: impl FnOnce(&str) -> Result<T, String>) -> Result<T> {
        f(&entry.value).map_err(|msg| Error::parse(&self.path, entry.line, format!("{}: {msg}", entry.key)))
    }

    pub fn unknown_key(&self, entry: &KvEntry) -> Error {
        let section = if entry.section.is_empty() {
            String::new()
        } else {
            format!(" in section [{}]", entry.section)
        };
        Error::parse(&self.path, entry.line, format!("unknown key {:?}{section}", entry.key))
    }
}
