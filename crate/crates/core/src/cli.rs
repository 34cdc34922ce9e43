//! Command-line front end.
//!
//! ```text
//! iocc [--config FILE] [--seed N] [--output-format csv|table] <command>
//!
//!   sweep     --direction tx|rx|pl2pl [--sizes 4K..32M] [--output FILE]
//!   advise    --profile FILE [--mode tree|rank]
//!   pipeline  --scenario FILE [--output FILE]
//!   calibrate [--anchors FILE] [--output FILE]
//! ```
//!
//! Sizes are suffixed literals (`4K`, `64KiB`, `16M`), comma lists, or a
//! doubling range `LO..HI`. When `--output-format` is absent, `sweep`
//! writes CSV, `calibrate` writes a `[calibration]` settings section and
//! the other commands write aligned tables.
//!
//! Exit status is 0 on success, 1 for a usage error and 2 when an input
//! file or the model rejects the request.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::advisor::{format_ranking, rank_all, recommend, write_ranking_csv};
use crate::config::Settings;
use crate::error::{Error, Result};
use crate::interconnect::{
    calibrate, format_residuals, format_sweep_table, load_anchors, raw_bandwidth_rows, shipped_anchors, sweep,
    write_residuals_csv, write_sweep_csv,
};
use crate::pipeline::{
    compare_file, format_comparison_table, load_scenarios, parse_scenarios, write_pipeline_csv, ScenarioFile,
    SHIPPED_SCENARIOS,
};
use crate::platform::{Direction, WorkloadProfile};
use crate::units::{self, KvDocument};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdviseMode {
    /// Walk the decision tree and print its rationale.
    Tree,
    /// Cost every legal path with the simulator and rank them.
    Rank,
}

#[derive(Debug, Parser)]
#[command(name = "iocc", version, about = "I/O cache coherence performance model for SoC-FPGA designs")]
pub struct Cli {
    /// Settings file with platform, [sw_cost] and [calibration] keys.
    #[arg(long = "config", global = true, value_name = "FILE")]
    pub config_file: Option<PathBuf>,

    /// Seed of the cache replacement generator (overrides the settings file).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    #[arg(long = "output-format", global = true, value_enum, value_name = "FORMAT")]
    pub output_format: Option<OutputFormat>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Raw bandwidth of each interface setup across buffer sizes.
    Sweep {
        #[arg(long, value_parser = parse_direction)]
        direction: Direction,
        #[arg(long, value_parser = parse_sizes, default_value = "4K..32M")]
        sizes: Sizes,
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Recommend an interface path for one buffer described by a profile file.
    Advise {
        #[arg(long = "profile", value_name = "FILE")]
        profile_file: PathBuf,
        #[arg(long, value_enum, default_value = "tree")]
        mode: AdviseMode,
    },
    /// Compare pure and advised path assignments for the pipelines of a scenario file.
    Pipeline {
        #[arg(long = "scenario", value_name = "FILE")]
        scenario_file: PathBuf,
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Fit the timing coefficients to a bandwidth anchor file.
    Calibrate {
        /// Anchor CSV; the built-in anchor set when absent.
        #[arg(long = "anchors", value_name = "FILE")]
        anchor_file: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
}

/// Validated, strictly ascending list of buffer sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sizes(pub Vec<u64>);

fn parse_sizes(s: &str) -> std::result::Result<Sizes, String> {
    let sizes = units::parse_size_list(s)?;
    if sizes.contains(&0) {
        return Err("sizes must be positive".into());
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err("sizes must be strictly ascending".into());
    }
    Ok(Sizes(sizes))
}

fn parse_direction(s: &str) -> std::result::Result<Direction, String> {
    s.parse()
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status. Nothing is printed to the process streams
/// directly.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DATA
        }
    }
}

fn load_settings(cli: &Cli) -> Result<Settings> {
    let mut s = match &cli.config_file {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        s.platform.seed = seed;
    }
    Ok(s)
}

/// Reads a scenario file. A missing file named like one of the shipped
/// scenarios (`dog.scn`, `sgemm.scn`, `dnn.scn`) falls back to the
/// built-in copy.
fn read_scenarios(path: &Path) -> Result<ScenarioFile> {
    if !path.exists() {
        if let Some((_, text)) = SHIPPED_SCENARIOS
            .iter()
            .find(|(name, _)| path.file_name().is_some_and(|f| f == *name))
        {
            return parse_scenarios(text, path);
        }
    }
    load_scenarios(path)
}

fn emit(output: Option<&Path>, stdout: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, bytes).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => stdout.write_all(bytes).map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

/// Runs an already parsed command line.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let settings = load_settings(cli)?;
    let Settings {
        platform,
        calibration,
        sw_cost,
    } = &settings;
    match &cli.command {
        Command::Sweep {
            direction,
            sizes,
            output,
        } => {
            let rows = raw_bandwidth_rows(*direction);
            let records = sweep(&sizes.0, *direction, &rows, platform, calibration)?;
            let mut buf = Vec::new();
            match cli.output_format.unwrap_or(OutputFormat::Csv) {
                OutputFormat::Csv => write_sweep_csv(&records, &mut buf)?,
                OutputFormat::Table => buf.extend_from_slice(format_sweep_table(&records, platform).as_bytes()),
            }
            emit(output.as_deref(), stdout, &buf)
        }
        Command::Advise { profile_file, mode } => {
            let profile = WorkloadProfile::from_kv(&KvDocument::load(profile_file)?)?;
            let format = cli.output_format.unwrap_or(OutputFormat::Table);
            let mut buf = Vec::new();
            match (mode, format) {
                (AdviseMode::Tree, OutputFormat::Table) => {
                    buf.extend_from_slice(recommend(&profile).rationale_text().as_bytes());
                }
                (AdviseMode::Tree, OutputFormat::Csv) => {
                    let rec = recommend(&profile);
                    let mut w = csv::Writer::from_writer(&mut buf);
                    w.write_record(["node_id", "question", "answer"])?;
                    for n in &rec.rationale {
                        w.write_record([n.node_id, n.question, n.answer.as_str()])?;
                    }
                    w.write_record(["recommendation", "", rec.path.id()])?;
                    w.flush().map_err(|e| Error::Csv(e.into()))?;
                }
                (AdviseMode::Rank, OutputFormat::Table) => {
                    let ranking = rank_all(&profile, platform, calibration, sw_cost)?;
                    buf.extend_from_slice(format_ranking(&profile, &ranking).as_bytes());
                }
                (AdviseMode::Rank, OutputFormat::Csv) => {
                    let ranking = rank_all(&profile, platform, calibration, sw_cost)?;
                    write_ranking_csv(&ranking, &mut buf)?;
                }
            }
            emit(None, stdout, &buf)
        }
        Command::Pipeline { scenario_file, output } => {
            let file = read_scenarios(scenario_file)?;
            let comparisons = compare_file(&file, platform, calibration, sw_cost)?;
            let mut buf = Vec::new();
            match cli.output_format.unwrap_or(OutputFormat::Table) {
                OutputFormat::Csv => write_pipeline_csv(&comparisons, &mut buf)?,
                OutputFormat::Table => buf.extend_from_slice(format_comparison_table(&comparisons).as_bytes()),
            }
            emit(output.as_deref(), stdout, &buf)
        }
        Command::Calibrate { anchor_file, output } => {
            let anchors = match anchor_file {
                Some(path) => load_anchors(path)?,
                None => shipped_anchors(),
            };
            let cal = calibrate(&anchors, platform)?;
            let mut buf = Vec::new();
            match cli.output_format {
                Some(OutputFormat::Csv) => write_residuals_csv(&cal, &mut buf)?,
                Some(OutputFormat::Table) => buf.extend_from_slice(format_residuals(&cal).as_bytes()),
                None => {
                    buf.extend_from_slice(cal.params.to_kv().as_bytes());
                    for line in format_residuals(&cal).lines() {
                        buf.extend_from_slice(format!("# {line}\n").as_bytes());
                    }
                }
            }
            emit(output.as_deref(), stdout, &buf)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("iocc").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_name_the_flag() {
        let (code, _, err) = run_args(&["sweep", "--direction", "sideways"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--direction"), "{err}");
        let (code, _, err) = run_args(&["sweep", "--direction", "tx", "--sizes", "32M..4K"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--sizes"), "{err}");
        let (code, _, err) = run_args(&["advise"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--profile"), "{err}");
        let (code, _, _) = run_args(&[]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn help_is_not_an_error() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("sweep") && out.contains("calibrate"), "{out}");
    }

    #[test]
    fn sweep_single_size() {
        let (code, out, err) = run_args(&["sweep", "--direction", "tx", "--sizes", "64K"]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert_eq!(out.lines().count(), 6);
        assert!(out.starts_with("path,direction,pre_state,size_bytes"));
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let (code, _, err) = run_args(&["advise", "--profile", "/nonexistent/p.prof"]);
        assert_eq!(code, EXIT_DATA);
        assert!(err.contains("/nonexistent/p.prof"), "{err}");
    }
}
