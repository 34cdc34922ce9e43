//! Scenario files: declarative stage lists.
//!
//! ```text
//! # comment
//! scenario <name>                 starts a pipeline; a file may hold several
//! background <true|false>         memory-intensive work runs alongside (default false)
//! repeat <n>                      the stage list runs n times (default 1)
//! buffer <name> <size>            a named, line-aligned buffer
//! cpu <stage> [in=a,b] [out=c] [pattern=sequential|makeable_sequential|irregular]
//! accel <stage> [in=..] [out=..] time=<duration>
//! accel <stage> [in=..] [out=..] throughput=<rate>   time = (in + out bytes) / rate
//! tx <buffer>                     CPU to PL transfer
//! rx <buffer>                     PL to CPU transfer
//! pl2pl <buffer>                  PL to PL transfer
//! end
//! ```
//!
//! A transfer's buffer must be an output of the nearest compute stage
//! before it: a `cpu` stage for `tx`, an `accel` stage for `rx` and
//! `pl2pl`. A buffer may appear in both `in` and `out` of a CPU stage
//! (read-modify-write).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::platform::{Direction, WritePattern};
use crate::units;

use super::{Pipeline, Stage};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub path: PathBuf,
    pub pipelines: Vec<Pipeline>,
}

struct Builder {
    name: String,
    line: usize,
    background: bool,
    repeat: u64,
    buffers: Vec<(String, u64)>,
    index: HashMap<String, usize>,
    stages: Vec<Stage>,
    stage_lines: Vec<usize>,
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl Builder {
    fn buffer_ids(&self, names: &[String], path: &Path, line: usize) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.index
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::parse(path, line, format!("unknown buffer {n:?}")))
            })
            .collect()
    }

    fn finish(self, path: &Path) -> Result<Pipeline> {
        let p = Pipeline {
            name: self.name,
            background_memory_intensive: self.background,
            repeat: self.repeat,
            buffers: self.buffers,
            stages: self.stages,
        };
        if let Err((i, msg)) = p.check() {
            let line = i.map_or(self.line, |i| self.stage_lines[i]);
            return Err(Error::parse(path, line, msg));
        }
        Ok(p)
    }
}

pub fn parse_scenarios(text: &str, path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let mut cur: Option<Builder> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(path, line, msg);
        let mut words = content.split_whitespace();
        let keyword = words.next().unwrap_or_default();
        let args: Vec<&str> = words.collect();

        if keyword == "scenario" {
            if cur.is_some() {
                return Err(err("previous scenario is missing `end`".into()));
            }
            let [name] = args[..] else {
                return Err(err("expected `scenario <name>`".into()));
            };
            if out.iter().any(|p: &Pipeline| p.name == name) {
                return Err(err(format!("duplicate scenario {name:?}")));
            }
            cur = Some(Builder {
                name: name.to_string(),
                line,
                background: false,
                repeat: 1,
                buffers: Vec::new(),
                index: HashMap::new(),
                stages: Vec::new(),
                stage_lines: Vec::new(),
            });
            continue;
        }
        let Some(b) = cur.as_mut() else {
            return Err(err(format!("`{keyword}` outside a scenario block")));
        };
        match keyword {
            "end" => {
                if !args.is_empty() {
                    return Err(err("`end` takes no arguments".into()));
                }
                out.push(cur.take().expect("checked above").finish(path)?);
            }
            "background" => {
                let [v] = args[..] else {
                    return Err(err("expected `background <true|false>`".into()));
                };
                b.background = units::parse_bool(v).map_err(err)?;
            }
            "repeat" => {
                let [v] = args[..] else {
                    return Err(err("expected `repeat <count>`".into()));
                };
                b.repeat = v
                    .parse::<u64>()
                    .ok()
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| err(format!("repeat count must be a positive integer, got {v:?}")))?;
            }
            "buffer" => {
                let [name, size] = args[..] else {
                    return Err(err("expected `buffer <name> <size>`".into()));
                };
                if b.index.contains_key(name) {
                    return Err(err(format!("duplicate buffer {name:?}")));
                }
                let size = units::parse_size(size).map_err(err)?;
                b.index.insert(name.to_string(), b.buffers.len());
                b.buffers.push((name.to_string(), size));
            }
            "tx" | "rx" | "pl2pl" => {
                let [name] = args[..] else {
                    return Err(err(format!("expected `{keyword} <buffer>`")));
                };
                let buffer = b.buffer_ids(&[name.to_string()], path, line)?[0];
                let direction: Direction = keyword.parse().map_err(err)?;
                b.stages.push(Stage::Transfer { buffer, direction });
                b.stage_lines.push(line);
            }
            "cpu" | "accel" => {
                let Some((&label, attrs)) = args.split_first() else {
                    return Err(err(format!("expected `{keyword} <stage> ...`")));
                };
                if label.contains('=') {
                    return Err(err(format!("`{keyword}` needs a stage name before its attributes")));
                }
                let mut inputs = Vec::new();
                let mut outputs = Vec::new();
                let mut pattern = None;
                let mut time = None;
                let mut throughput = None;
                for attr in attrs {
                    let Some((k, v)) = attr.split_once('=') else {
                        return Err(err(format!("expected key=value, got {attr:?}")));
                    };
                    match (keyword, k) {
                        (_, "in") => inputs = b.buffer_ids(&split_list(v), path, line)?,
                        (_, "out") => outputs = b.buffer_ids(&split_list(v), path, line)?,
                        ("cpu", "pattern") => pattern = Some(v.parse::<WritePattern>().map_err(err)?),
                        ("accel", "time") => time = Some(units::parse_duration(v).map_err(err)?),
                        ("accel", "throughput") => throughput = Some(units::parse_rate(v).map_err(err)?),
                        _ => return Err(err(format!("unknown `{keyword}` attribute {k:?}"))),
                    }
                }
                let stage = if keyword == "cpu" {
                    Stage::Cpu {
                        label: label.to_string(),
                        inputs,
                        outputs,
                        pattern: pattern.unwrap_or(WritePattern::Sequential),
                    }
                } else {
                    let time = match (time, throughput) {
                        (Some(t), None) => super::AccelTime::Fixed(t),
                        (None, Some(r)) if r > 0.0 => super::AccelTime::Throughput(r),
                        (None, Some(_)) => return Err(err("accelerator throughput must be positive".into())),
                        _ => return Err(err("`accel` needs exactly one of time= or throughput=".into())),
                    };
                    Stage::Accel {
                        label: label.to_string(),
                        inputs,
                        outputs,
                        time,
                    }
                };
                b.stages.push(stage);
                b.stage_lines.push(line);
            }
            other => return Err(err(format!("unknown keyword {other:?}"))),
        }
    }
    if let Some(b) = cur {
        return Err(Error::parse(path, b.line, format!("scenario {:?} is missing `end`", b.name)));
    }
    if out.is_empty() {
        return Err(Error::parse(path, 1, "no scenario blocks found"));
    }
    Ok(ScenarioFile {
        path: path.to_path_buf(),
        pipelines: out,
    })
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenarios(&text, path)
}
