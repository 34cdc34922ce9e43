//! End-to-end pipelines of CPU stages, transfers and accelerator stages,
//! executed in order against one evolving cache.

mod scenario;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advisor;
use crate::cache::{classify_write_stream, AccessKind, AllocationDecision, CacheState, StreamSummary, FOREIGN_BASE};
use crate::error::{Error, Result};
use crate::interconnect::{simulate_transfer_in_place, CalibrationParams};
use crate::platform::{
    ConsumeLatency, CostBreakdown, CpuRole, Direction, InterfacePath, PlatformConfig, RegionKind, TransferSpec,
    WorkloadProfile, WritePattern,
};
use crate::swcost::{self, CpuStage, StageCost, SwCostParams};

pub use scenario::{load_scenarios, parse_scenarios, ScenarioFile};

/// Scenario files shipped with the crate: `(file name, contents)`.
pub const SHIPPED_SCENARIOS: [(&str, &str); 3] = [
    ("dog.scn", include_str!("../../data/scenarios/dog.scn")),
    ("sgemm.scn", include_str!("../../data/scenarios/sgemm.scn")),
    ("dnn.scn", include_str!("../../data/scenarios/dnn.scn")),
];

pub fn shipped_scenarios() -> Vec<ScenarioFile> {
    SHIPPED_SCENARIOS
        .iter()
        .map(|(name, text)| parse_scenarios(text, name).expect("shipped scenario parses"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AccelTime {
    Fixed(f64),
    /// Bytes per second over the stage's inputs plus outputs.
    Throughput(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stage {
    Cpu {
        label: String,
        inputs: Vec<usize>,
        outputs: Vec<usize>,
        pattern: WritePattern,
    },
    Transfer {
        buffer: usize,
        direction: Direction,
    },
    Accel {
        label: String,
        inputs: Vec<usize>,
        outputs: Vec<usize>,
        time: AccelTime,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub name: String,
    pub background_memory_intensive: bool,
    /// The stage list runs this many times back to back.
    pub repeat: u64,
    /// Buffer names and sizes; stages refer to them by index.
    pub buffers: Vec<(String, u64)>,
    pub stages: Vec<Stage>,
}

impl Pipeline {
    pub fn transfer_count(&self) -> usize {
        self.stages.iter().filter(|s| matches!(s, Stage::Transfer { .. })).count()
    }

    /// Stage indices of the transfers, in order.
    pub fn transfer_stages(&self) -> Vec<usize> {
        (0..self.stages.len())
            .filter(|&i| matches!(self.stages[i], Stage::Transfer { .. }))
            .collect()
    }

    pub fn stage_label(&self, i: usize) -> String {
        match &self.stages[i] {
            Stage::Cpu { label, .. } | Stage::Accel { label, .. } => label.clone(),
            Stage::Transfer { buffer, direction } => format!("{} {}", direction.id(), self.buffers[*buffer].0),
        }
    }

    fn stage_kind(&self, i: usize) -> &'static str {
        match &self.stages[i] {
            Stage::Cpu { .. } => "cpu",
            Stage::Accel { .. } => "accel",
            Stage::Transfer { direction, .. } => direction.id(),
        }
    }

    fn touches(stage: &Stage, buffer: usize) -> (bool, bool) {
        match stage {
            Stage::Cpu { inputs, outputs, .. } | Stage::Accel { inputs, outputs, .. } => {
                (inputs.contains(&buffer), outputs.contains(&buffer))
            }
            Stage::Transfer { .. } => (false, false),
        }
    }

    fn prev_compute(&self, i: usize) -> Option<usize> {
        (0..i).rev().find(|&j| !matches!(self.stages[j], Stage::Transfer { .. }))
    }

    fn next_compute(&self, i: usize) -> Option<usize> {
        (i + 1..self.stages.len()).find(|&j| !matches!(self.stages[j], Stage::Transfer { .. }))
    }

    /// First compute stage after `i` that reads `buffer`.
    fn consumer(&self, i: usize, buffer: usize) -> Option<usize> {
        (i + 1..self.stages.len()).find(|&j| Self::touches(&self.stages[j], buffer).0)
    }

    /// Structural checks. On failure returns the offending stage, if any.
    pub(crate) fn check(&self) -> std::result::Result<(), (Option<usize>, String)> {
        if self.transfer_count() == 0 {
            return Err((None, format!("scenario {:?} needs at least one transfer", self.name)));
        }
        if self.repeat == 0 {
            return Err((None, "repeat must be at least 1".into()));
        }
        for (i, stage) in self.stages.iter().enumerate() {
            let check_ids = |ids: &[usize]| ids.iter().all(|&b| b < self.buffers.len());
            match stage {
                Stage::Cpu { inputs, outputs, .. } | Stage::Accel { inputs, outputs, .. } => {
                    if !check_ids(inputs) || !check_ids(outputs) {
                        return Err((Some(i), "stage refers to an unknown buffer".into()));
                    }
                    if let Stage::Accel {
                        time: AccelTime::Fixed(t),
                        ..
                    } = stage
                    {
                        if !(t.is_finite() && *t >= 0.0) {
                            return Err((Some(i), "accelerator time must be non-negative".into()));
                        }
                    }
                }
                Stage::Transfer { buffer, direction } => {
                    if *buffer >= self.buffers.len() {
                        return Err((Some(i), "transfer of an unknown buffer".into()));
                    }
                    let name = &self.buffers[*buffer].0;
                    let producer = self.prev_compute(i);
                    let ok = match (direction, producer.map(|j| &self.stages[j])) {
                        (Direction::CpuToPl, Some(Stage::Cpu { outputs, .. })) => outputs.contains(buffer),
                        (Direction::PlToCpu | Direction::PlToPl, Some(Stage::Accel { outputs, .. })) => {
                            outputs.contains(buffer)
                        }
                        _ => false,
                    };
                    if !ok {
                        let who = if *direction == Direction::CpuToPl { "cpu" } else { "accel" };
                        return Err((
                            Some(i),
                            format!("buffer {name:?} must be an output of the {who} stage right before this transfer"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Line-aligned base address of every buffer.
    fn layout(&self, line: u64) -> Vec<u64> {
        let mut next = 0;
        self.buffers
            .iter()
            .map(|(_, size)| {
                let base = next;
                next += size.div_ceil(line).max(1) * line;
                base
            })
            .collect()
    }

    /// Bytes a CPU stage moves, inputs plus outputs.
    fn cpu_bytes(&self, stage: &Stage) -> u64 {
        match stage {
            Stage::Cpu { inputs, outputs, .. } => inputs.iter().chain(outputs).map(|&b| self.buffers[b].1).sum(),
            _ => 0,
        }
    }
}

/// Workload profile of each transfer, inferred from its neighbours.
///
/// * `cpu_role`: the CPU stage that produced (TX) or consumes (RX) the
///   buffer. Touching it only as output is mostly-write, only as input is
///   mostly-read, both is mixed.
/// * `write_pattern`: that CPU stage's pattern.
/// * `consume_latency`: immediate when the consumer is the next compute
///   stage after the transfer, delayed otherwise.
/// * `intervening_traffic_bytes`: bytes moved by CPU stages strictly
///   between producer and consumer.
/// * PL-to-PL transfers have no CPU side and get fixed placeholder fields.
pub fn infer_profiles(p: &Pipeline) -> Vec<WorkloadProfile> {
    p.transfer_stages()
        .into_iter()
        .map(|i| {
            let Stage::Transfer { buffer, direction } = p.stages[i] else {
                unreachable!()
            };
            let producer = p.prev_compute(i).unwrap_or(0);
            let consumer = p.consumer(i, buffer);
            let cpu_stage = match direction {
                Direction::CpuToPl => Some(producer),
                Direction::PlToCpu => consumer,
                Direction::PlToPl => None,
            };
            let (cpu_role, write_pattern) = match cpu_stage.map(|j| (&p.stages[j], j)) {
                Some((stage @ Stage::Cpu { pattern, .. }, _)) => {
                    let role = match Pipeline::touches(stage, buffer) {
                        (true, true) => CpuRole::MixedReadWrite,
                        (false, true) => CpuRole::MostlyWrite,
                        _ => CpuRole::MostlyRead,
                    };
                    (role, *pattern)
                }
                _ => (CpuRole::MostlyRead, WritePattern::Sequential),
            };
            let consume_latency = match consumer {
                Some(c) if Some(c) == p.next_compute(i) => ConsumeLatency::Immediate,
                _ if direction == Direction::PlToPl => ConsumeLatency::Immediate,
                _ => ConsumeLatency::Delayed,
            };
            let end = consumer.unwrap_or(p.stages.len());
            let intervening = if direction == Direction::PlToPl {
                0
            } else {
                (producer + 1..end).map(|j| p.cpu_bytes(&p.stages[j])).sum()
            };
            WorkloadProfile {
                buffer_bytes: p.buffers[buffer].1,
                direction,
                cpu_role,
                write_pattern,
                consume_latency,
                intervening_traffic_bytes: intervening,
                background_memory_intensive: p.background_memory_intensive,
            }
        })
        .collect()
}

/// One path per transfer, from the decision tree.
pub fn advised_assignment(p: &Pipeline) -> Vec<InterfacePath> {
    infer_profiles(p).iter().map(|prof| advisor::recommend(prof).path).collect()
}

/// `path` on every transfer that can use it. Transfers it cannot carry
/// (PL to PL) stay on the HP port with the same allocation type, so a
/// pure HPC or ACP design falls back to HP (C).
pub fn pure_assignment(p: &Pipeline, path: InterfacePath) -> Vec<InterfacePath> {
    p.transfer_stages()
        .into_iter()
        .map(|i| match p.stages[i] {
            Stage::Transfer { direction, .. } if path.is_legal_for(direction) => path,
            _ if path.region_kind() == RegionKind::NonCacheable => InterfacePath::HpNc,
            _ => InterfacePath::HpC,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub label: String,
    pub kind: &'static str,
    pub path: Option<InterfacePath>,
    /// CPU work at cacheable speed, or accelerator time.
    pub compute_s: f64,
    pub cost: CostBreakdown,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub scenario: String,
    pub assignment: String,
    pub stages: Vec<StageReport>,
    pub end_to_end_s: f64,
    /// Barrier costs include the contended multiplier.
    pub contended_barriers: bool,
}

impl PipelineReport {
    fn sum(&self, f: impl Fn(&StageReport) -> f64) -> f64 {
        self.stages.iter().map(f).sum()
    }

    pub fn cpu_s(&self) -> f64 {
        self.sum(|s| if s.kind == "cpu" { s.total_s } else { 0.0 })
    }

    pub fn accel_s(&self) -> f64 {
        self.sum(|s| if s.kind == "accel" { s.total_s } else { 0.0 })
    }

    pub fn transfer_s(&self) -> f64 {
        self.sum(|s| s.cost.hw_transfer_s)
    }

    pub fn maintenance_s(&self) -> f64 {
        self.sum(|s| s.cost.maintenance_s + s.cost.barrier_s)
    }

    pub fn cpu_penalty_s(&self) -> f64 {
        self.sum(|s| s.cost.cpu_access_penalty_s)
    }
}

/// Region swept by background work. Each sweep uses fresh addresses.
const BACKGROUND_BASE: u64 = FOREIGN_BASE + (1 << 44);

/// Bytes per store when a pattern gives no contiguous runs.
const IRREGULAR_STORE_BYTES: u64 = 4;

pub fn run_pipeline(
    p: &Pipeline,
    assignment: &[InterfacePath],
    label: &str,
    config: &PlatformConfig,
    params: &CalibrationParams,
    sw: &SwCostParams,
) -> Result<PipelineReport> {
    let transfers = p.transfer_stages();
    if assignment.len() != transfers.len() {
        return Err(Error::Spec(format!(
            "assignment covers {} transfers but {:?} has {}",
            assignment.len(),
            p.name,
            transfers.len()
        )));
    }
    let mut kinds: Vec<Option<RegionKind>> = vec![None; p.buffers.len()];
    for (&i, &path) in transfers.iter().zip(assignment) {
        let Stage::Transfer { buffer, direction } = p.stages[i] else {
            unreachable!()
        };
        if !path.is_legal_for(direction) {
            return Err(Error::Spec(format!("{path} cannot carry {}", p.stage_label(i))));
        }
        let kind = path.region_kind();
        match kinds[buffer] {
            Some(k) if k != kind => {
                return Err(Error::Spec(format!(
                    "buffer {:?} would be mapped both cacheable and non-cacheable",
                    p.buffers[buffer].0
                )))
            }
            _ => kinds[buffer] = Some(kind),
        }
    }
    let kinds: Vec<RegionKind> = kinds.into_iter().map(|k| k.unwrap_or(RegionKind::Cacheable)).collect();
    let bases = p.layout(config.line_bytes());
    let mut cache = CacheState::fresh(config);
    let mut background_cursor = BACKGROUND_BASE;
    let contended = p.background_memory_intensive;

    let mut stages: Vec<StageReport> = (0..p.stages.len())
        .map(|i| StageReport {
            label: p.stage_label(i),
            kind: p.stage_kind(i),
            path: None,
            compute_s: 0.0,
            cost: CostBreakdown::default(),
            total_s: 0.0,
        })
        .collect();
    for (&i, &path) in transfers.iter().zip(assignment) {
        stages[i].path = Some(path);
    }

    for _ in 0..p.repeat {
        let mut t = 0;
        for (i, stage) in p.stages.iter().enumerate() {
            let (compute, cost) = match stage {
                Stage::Cpu {
                    inputs,
                    outputs,
                    pattern,
                    ..
                } => {
                    let mut sc = StageCost::default();
                    let mut add = |piece: CpuStage| {
                        let b = swcost::cpu_stage_breakdown(&piece, config.l2_size_bytes, sw);
                        sc.baseline_s += b.baseline_s;
                        sc.penalty_s += b.penalty_s;
                    };
                    for &b in inputs {
                        add(CpuStage {
                            bytes_read: p.buffers[b].1,
                            bytes_written: 0,
                            pattern: *pattern,
                            src_kind: kinds[b],
                            dst_kind: RegionKind::Cacheable,
                        });
                        if kinds[b] == RegionKind::Cacheable {
                            cache.touch_range(bases[b], p.buffers[b].1, AccessKind::Read);
                        }
                    }
                    for &b in outputs {
                        let size = p.buffers[b].1;
                        add(CpuStage {
                            bytes_read: 0,
                            bytes_written: size,
                            pattern: *pattern,
                            src_kind: RegionKind::Cacheable,
                            dst_kind: kinds[b],
                        });
                        if kinds[b] == RegionKind::Cacheable {
                            let stream = StreamSummary {
                                sequential_run_bytes: if *pattern == WritePattern::Sequential {
                                    size
                                } else {
                                    IRREGULAR_STORE_BYTES.min(size)
                                },
                                total_bytes: size,
                                write_only: inputs.is_empty(),
                            };
                            let allocate = classify_write_stream(&stream, config.bypass_threshold_bytes)
                                == AllocationDecision::AllocateLines;
                            let lines: Vec<u64> = cache.lines_spanned(bases[b], size).collect();
                            for line in lines {
                                cache.access(line, AccessKind::Write, allocate);
                            }
                        }
                    }
                    (sc.baseline_s, CostBreakdown::new(0.0, 0.0, 0.0, sc.penalty_s))
                }
                Stage::Accel {
                    inputs, outputs, time, ..
                } => {
                    let secs = match *time {
                        AccelTime::Fixed(s) => s,
                        AccelTime::Throughput(rate) => {
                            inputs.iter().chain(outputs).map(|&b| p.buffers[b].1).sum::<u64>() as f64 / rate
                        }
                    };
                    (secs, CostBreakdown::default())
                }
                Stage::Transfer { buffer, direction } => {
                    let path = assignment[t];
                    t += 1;
                    let (base, size) = (bases[*buffer], p.buffers[*buffer].1);
                    if size == 0 {
                        (0.0, CostBreakdown::default())
                    } else {
                        if contended {
                            cache.touch_range(background_cursor, config.l2_size_bytes, AccessKind::Read);
                            background_cursor += config.l2_size_bytes;
                        }
                        let maintained = path == InterfacePath::HpC;
                        if maintained && *direction != Direction::PlToCpu {
                            cache.flush_range(base, size);
                        }
                        let spec = TransferSpec::new(size, *direction, path).at(base);
                        let timing = simulate_transfer_in_place(&spec, &mut cache, config, params)?;
                        if maintained && *direction == Direction::PlToCpu {
                            cache.invalidate_range(base, size);
                        }
                        let m = if maintained {
                            swcost::maintenance_cost(&[size], contended, sw)
                        } else {
                            Default::default()
                        };
                        (0.0, CostBreakdown::new(timing.elapsed_s, m.flush_s, m.barrier_s, 0.0))
                    }
                }
            };
            let r = &mut stages[i];
            r.compute_s += compute;
            r.cost = r.cost.plus(&cost);
        }
    }
    for s in &mut stages {
        s.total_s = s.compute_s + s.cost.total_s;
    }
    let end_to_end_s = stages.iter().map(|s| s.total_s).sum();
    Ok(PipelineReport {
        scenario: p.name.clone(),
        assignment: label.to_string(),
        stages,
        end_to_end_s,
        contended_barriers: contended && assignment.contains(&InterfacePath::HpC),
    })
}

pub const OPTIMIZED_LABEL: &str = "optimized";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub scenario: String,
    pub profiles: Vec<WorkloadProfile>,
    pub optimized_assignment: Vec<InterfacePath>,
    /// The four pure baselines in path order, then the optimized run.
    pub reports: Vec<PipelineReport>,
}

impl Comparison {
    pub fn optimized(&self) -> &PipelineReport {
        self.reports.last().expect("five reports")
    }

    pub fn baseline(&self, path: InterfacePath) -> &PipelineReport {
        let i = InterfacePath::ALL.iter().position(|&q| q == path).expect("known path");
        &self.reports[i]
    }

    /// `1 - optimized / baseline`.
    pub fn improvement_over(&self, path: InterfacePath) -> f64 {
        1.0 - self.optimized().end_to_end_s / self.baseline(path).end_to_end_s
    }

    /// Slowest over fastest end-to-end time among the five reports.
    pub fn spread(&self) -> f64 {
        let times = self.reports.iter().map(|r| r.end_to_end_s);
        let max = times.clone().fold(f64::MIN, f64::max);
        let min = times.fold(f64::MAX, f64::min);
        max / min
    }
}

pub fn compare_assignments(
    p: &Pipeline,
    config: &PlatformConfig,
    params: &CalibrationParams,
    sw: &SwCostParams,
) -> Result<Comparison> {
    let profiles = infer_profiles(p);
    let optimized: Vec<InterfacePath> = profiles.iter().map(|prof| advisor::recommend(prof).path).collect();
    let mut runs: Vec<(String, Vec<InterfacePath>)> = InterfacePath::ALL
        .iter()
        .map(|&path| (path.to_string(), pure_assignment(p, path)))
        .collect();
    runs.push((OPTIMIZED_LABEL.to_string(), optimized.clone()));
    let reports = runs
        .par_iter()
        .map(|(label, a)| run_pipeline(p, a, label, config, params, sw))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        scenario: p.name.clone(),
        profiles,
        optimized_assignment: optimized,
        reports,
    })
}

/// Compares every pipeline of a scenario file.
pub fn compare_file(
    file: &ScenarioFile,
    config: &PlatformConfig,
    params: &CalibrationParams,
    sw: &SwCostParams,
) -> Result<Vec<Comparison>> {
    file.pipelines
        .par_iter()
        .map(|p| compare_assignments(p, config, params, sw))
        .collect()
}

fn us(s: f64) -> String {
    format!("{:.1}", s * 1e6)
}

/// Aligned summary table, one block per pipeline, times in microseconds.
pub fn format_comparison_table(comparisons: &[Comparison]) -> String {
    let mut out = String::new();
    for (n, c) in comparisons.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        out.push_str(&format!("scenario {}\n", c.scenario));
        let mut rows = vec![vec![
            "assignment".to_string(),
            "cpu_us".into(),
            "cpu_penalty_us".into(),
            "transfer_us".into(),
            "maintenance_us".into(),
            "accel_us".into(),
            "end_to_end_us".into(),
            "vs_optimized".into(),
        ]];
        let best = c.optimized().end_to_end_s;
        for r in &c.reports {
            rows.push(vec![
                r.assignment.clone(),
                us(r.cpu_s()),
                us(r.cpu_penalty_s()),
                us(r.transfer_s()),
                us(r.maintenance_s()),
                us(r.accel_s()),
                us(r.end_to_end_s),
                format!("{:.3}", r.end_to_end_s / best),
            ]);
        }
        out.push_str(&crate::table::render(&rows));
        let p = &c.reports[0];
        let transfers: Vec<&StageReport> = p.stages.iter().filter(|s| s.path.is_some()).collect();
        out.push_str("optimized paths:");
        for (s, path) in transfers.iter().zip(&c.optimized_assignment) {
            out.push_str(&format!(" [{} -> {}]", s.label, path));
        }
        out.push('\n');
        if c.reports.iter().any(|r| r.contended_barriers) {
            out.push_str("note: barriers priced as contended (background memory load)\n");
        }
    }
    out
}

pub const PIPELINE_CSV_HEADER: [&str; 12] = [
    "scenario",
    "assignment",
    "stage_index",
    "stage",
    "kind",
    "path",
    "compute_s",
    "hw_transfer_s",
    "maintenance_s",
    "barrier_s",
    "cpu_access_penalty_s",
    "total_s",
];

/// One CSV row per stage of every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineCsvRow {
    pub scenario: String,
    pub assignment: String,
    pub stage_index: usize,
    pub stage: String,
    pub kind: String,
    pub path: String,
    pub compute_s: f64,
    pub hw_transfer_s: f64,
    pub maintenance_s: f64,
    pub barrier_s: f64,
    pub cpu_access_penalty_s: f64,
    pub total_s: f64,
}

pub fn write_pipeline_csv(comparisons: &[Comparison], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PIPELINE_CSV_HEADER)?;
    let f = |x: f64| format!("{x:e}");
    for c in comparisons {
        for r in &c.reports {
            for (i, s) in r.stages.iter().enumerate() {
                w.write_record([
                    r.scenario.clone(),
                    r.assignment.clone(),
                    i.to_string(),
                    s.label.clone(),
                    s.kind.to_string(),
                    s.path.map_or(String::new(), |p| p.id().to_string()),
                    f(s.compute_s),
                    f(s.cost.hw_transfer_s),
                    f(s.cost.maintenance_s),
                    f(s.cost.barrier_s),
                    f(s.cost.cpu_access_penalty_s),
                    f(s.total_s),
                ])?;
            }
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: "<output>".into(),
        source,
    })
}

pub fn read_pipeline_csv(text: &str) -> Result<Vec<PipelineCsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != PIPELINE_CSV_HEADER {
        return Err(Error::parse("<csv>", 1, format!("unexpected header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
