use std::path::{Path, PathBuf};
use std::process::Command;

use iocc::interconnect::{raw_bandwidth_rows, read_sweep_csv, sweep, CalibrationParams};
use iocc::pipeline::{compare_file, format_comparison_table, load_scenarios, read_pipeline_csv};
use iocc::platform::{Direction, PlatformConfig};
use iocc::swcost::SwCostParams;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn data(rel: &str) -> String {
    crate_dir().join(rel).display().to_string()
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn iocc(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_iocc"))
        .args(args)
        .current_dir(crate_dir())
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(crate_dir().join("tests/data/golden").join(name)).unwrap()
}

#[test]
fn advise_tree_goldens() {
    for name in ["pl2pl", "small_tx", "irregular_tx", "large_rx"] {
        let r = iocc(&["advise", "--profile", &data(&format!("data/profiles/{name}.prof")), "--mode", "tree"]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        assert_eq!(r.stdout, golden(&format!("advise_{name}.txt")), "{name}");
    }
}

#[test]
fn pl2pl_profile_gives_one_node_rationale() {
    let r = iocc(&["advise", "--profile", "data/profiles/pl2pl.prof"]);
    assert_eq!(r.code, 0);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("direction |"));
    assert_eq!(lines[1], "=> HP (NC)");
}

#[test]
fn advise_rank_lists_legal_paths() {
    let r = iocc(&["advise", "--profile", "data/profiles/small_tx.prof", "--mode", "rank", "--output-format", "csv"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines[0], "rank,path,hw_transfer_s,maintenance_s,barrier_s,cpu_access_penalty_s,total_s");
    assert_eq!(lines.len(), 5);
    let r = iocc(&["advise", "--profile", "data/profiles/pl2pl.prof", "--mode", "rank", "--output-format", "csv"]);
    assert_eq!(r.stdout.lines().count(), 3);
}

#[test]
fn sweep_csv_reproduces_the_five_setups() {
    let r = iocc(&["sweep", "--direction", "tx", "--sizes", "4K..32M"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let records = read_sweep_csv(&r.stdout).unwrap();
    assert_eq!(records.len(), 5 * 14);
    let sizes: Vec<u64> = (0..14).map(|i| 4096u64 << i).collect();
    let cfg = PlatformConfig::default();
    let expected = sweep(&sizes, Direction::CpuToPl, &raw_bandwidth_rows(Direction::CpuToPl), &cfg, &CalibrationParams::default()).unwrap();
    assert_eq!(records, expected);
}

#[test]
fn pipeline_table_matches_library_output_byte_for_byte() {
    let r = iocc(&["pipeline", "--scenario", "data/scenarios/dog.scn"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let file = load_scenarios(crate_dir().join("data/scenarios/dog.scn")).unwrap();
    let cmp = compare_file(&file, &PlatformConfig::default(), &CalibrationParams::default(), &SwCostParams::default()).unwrap();
    assert_eq!(r.stdout, format_comparison_table(&cmp));
}

#[test]
fn shipped_scenario_names_resolve_without_a_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_iocc"))
        .args(["pipeline", "--scenario", "dog.scn"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let here = iocc(&["pipeline", "--scenario", "data/scenarios/dog.scn"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), here.stdout);
}

#[test]
fn pipeline_csv_round_trips_and_output_flag_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sgemm.csv");
    let r = iocc(&[
        "--output-format",
        "csv",
        "pipeline",
        "--scenario",
        "data/scenarios/sgemm.scn",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.is_empty());
    let rows = read_pipeline_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(rows.iter().any(|row| row.assignment == "optimized"));
}

#[test]
fn output_is_byte_identical_across_runs() {
    for args in [
        vec!["sweep", "--direction", "rx", "--sizes", "4K,1M,8M"],
        vec!["--seed", "7", "pipeline", "--scenario", "data/scenarios/dnn.scn"],
        vec!["advise", "--profile", "data/profiles/large_rx.prof", "--mode", "rank"],
    ] {
        let a = iocc(&args);
        let b = iocc(&args);
        assert_eq!(a.code, 0, "{}", a.stderr);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    let default_seed = iocc(&["sweep", "--direction", "tx", "--sizes", "256K..4M"]);
    let seed0 = iocc(&["--seed", "0", "sweep", "--direction", "tx", "--sizes", "256K..4M"]);
    assert_eq!(default_seed.stdout, seed0.stdout);
}

#[test]
fn calibrate_output_is_a_loadable_settings_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("fit.conf");
    let r = iocc(&["calibrate", "--output", conf.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let with_fit = iocc(&["--config", conf.to_str().unwrap(), "sweep", "--direction", "tx", "--sizes", "1M"]);
    let defaults = iocc(&["sweep", "--direction", "tx", "--sizes", "1M"]);
    assert_eq!(with_fit.code, 0, "{}", with_fit.stderr);
    let a = read_sweep_csv(&with_fit.stdout).unwrap();
    let b = read_sweep_csv(&defaults.stdout).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.bandwidth_bps / y.bandwidth_bps - 1.0).abs() < 1e-4);
    }
}

fn assert_usage_error(args: &[&str], flag: &str) {
    let r = iocc(args);
    assert_eq!(r.code, 1, "{args:?}: {}", r.stderr);
    assert!(r.stderr.contains(flag), "{args:?}: {}", r.stderr);
    assert!(!r.stderr.contains("panicked"));
}

#[test]
fn usage_errors_exit_one_and_name_the_flag() {
    assert_usage_error(&["sweep", "--direction", "up"], "--direction");
    assert_usage_error(&["sweep", "--direction", "tx", "--sizes", "8K..4K"], "--sizes");
    assert_usage_error(&["sweep", "--direction", "tx", "--bogus"], "--bogus");
    assert_usage_error(&["advise", "--profile", "p.prof", "--mode", "guess"], "--mode");
    assert_usage_error(&["--output-format", "xml", "sweep", "--direction", "tx"], "--output-format");
    assert_usage_error(&["--seed", "minus-one", "sweep", "--direction", "tx"], "--seed");
    assert_usage_error(&["pipeline"], "--scenario");
    let r = iocc(&[]);
    assert_eq!(r.code, 1);
}

fn assert_data_error(args: &[&str], location: &str) {
    let r = iocc(args);
    assert_eq!(r.code, 2, "{args:?}: {}", r.stderr);
    assert!(r.stderr.contains(location), "{args:?}: {}", r.stderr);
    assert!(!r.stderr.contains("panicked"));
    assert!(r.stdout.is_empty());
}

#[test]
fn data_errors_exit_two_with_file_and_line() {
    assert_data_error(&["pipeline", "--scenario", "tests/data/bad/bad_time.scn"], "bad_time.scn:5:");
    assert_data_error(&["calibrate", "--anchors", "tests/data/bad/bad_direction.csv"], "bad_direction.csv:3:");
    assert_data_error(&["advise", "--profile", "tests/data/bad/bad_pattern.prof"], "bad_pattern.prof:4:");
    assert_data_error(
        &["--config", "tests/data/bad/bad_key.conf", "sweep", "--direction", "tx"],
        "bad_key.conf:3:",
    );
    assert_data_error(&["advise", "--profile", "no/such/file.prof"], "no/such/file.prof");
    // a scenario file handed to the profile reader
    assert_data_error(&["advise", "--profile", "data/scenarios/dog.scn"], "dog.scn:");
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let r = iocc(&[flag]);
        assert_eq!(r.code, 0);
        assert!(!r.stdout.is_empty());
    }
    assert!(Path::new(env!("CARGO_BIN_EXE_iocc")).exists());
}
