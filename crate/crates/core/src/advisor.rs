//! Strategy advice: the risk-averse decision tree, and a ranking of every
//! legal path by modeled total cost.
//!
//! The two modes are deliberately separate. `recommend` never consults the
//! cost model; `rank_all` never consults the tree.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::cache::{AccessKind, CacheState, FOREIGN_BASE};
use crate::error::{Error, Result};
use crate::interconnect::{simulate_transfer_in_place, CalibrationParams, TransferTiming};
use crate::platform::{
    ConsumeLatency, CostBreakdown, CpuRole, Direction, InterfacePath, PlatformConfig, PreState, RegionKind,
    TransferSpec, WorkloadProfile, WritePattern,
};
use crate::swcost::{self, CpuStage, SwCostParams};
use crate::units::format_size;

/// Buffers strictly larger than this go to HPC.
pub const LARGE_BUFFER_BYTES: u64 = 16 << 20;
/// Buffers strictly smaller than this may use ACP.
pub const SMALL_BUFFER_BYTES: u64 = 64 << 10;
/// Intervening traffic strictly above this evicts the buffer.
pub const INTERVENING_LIMIT_BYTES: u64 = 16 << 20;

/// `alpha / raw_bandwidth + software_cost`, with `alpha` in bytes.
pub fn total_cost(alpha: f64, raw_bandwidth: f64, software_cost: f64) -> Result<f64> {
    if !(raw_bandwidth > 0.0) {
        return Err(Error::Domain(format!("raw bandwidth must be positive, got {raw_bandwidth}")));
    }
    if !(alpha >= 0.0 && software_cost >= 0.0) {
        return Err(Error::Domain(format!(
            "alpha and software cost must be non-negative, got {alpha} and {software_cost}"
        )));
    }
    Ok(alpha / raw_bandwidth + software_cost)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecisionNode {
    pub node_id: &'static str,
    pub question: &'static str,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub path: InterfacePath,
    pub rationale: Vec<DecisionNode>,
    /// Tree mode gives no number.
    pub estimated_cost: Option<CostBreakdown>,
}

impl Recommendation {
    /// One `node_id | question | answer` line per node, then the result.
    pub fn rationale_text(&self) -> String {
        let mut s = String::new();
        for n in &self.rationale {
            s.push_str(&format!("{} | {} | {}\n", n.node_id, n.question, n.answer));
        }
        s.push_str(&format!("=> {}\n", self.path));
        s
    }
}

impl fmt::Display for Recommendation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rationale_text())
    }
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

/// Walks the decision tree. Total over every profile.
pub fn recommend(profile: &WorkloadProfile) -> Recommendation {
    let mut trace = Vec::new();
    let mut node = |node_id, question, answer: String| {
        trace.push(DecisionNode {
            node_id,
            question,
            answer,
        })
    };
    let path = 'tree: {
        node("direction", "Which way does the data flow?", profile.direction.to_string());
        match profile.direction {
            Direction::PlToPl => break 'tree InterfacePath::HpNc,
            Direction::PlToCpu => break 'tree InterfacePath::Hpc,
            Direction::CpuToPl => {}
        }

        let mostly_write = profile.cpu_role == CpuRole::MostlyWrite;
        node("cpu_role", "Does the CPU mostly write the buffer?", yes_no(mostly_write));
        if mostly_write {
            let sequential = profile.write_pattern != WritePattern::Irregular;
            node(
                "write_pattern",
                "Are the CPU writes sequential, or can they be made sequential?",
                profile.write_pattern.to_string(),
            );
            if sequential {
                break 'tree InterfacePath::HpNc;
            }
        }

        let large = profile.buffer_bytes > LARGE_BUFFER_BYTES;
        node("large_buffer", "Is the buffer larger than 16 MiB?", yes_no(large));
        if large {
            break 'tree InterfacePath::Hpc;
        }

        let small_now =
            profile.buffer_bytes < SMALL_BUFFER_BYTES && profile.consume_latency == ConsumeLatency::Immediate;
        node(
            "small_immediate",
            "Is the buffer smaller than 64 KiB and read by the accelerator immediately?",
            yes_no(small_now),
        );
        if small_now {
            break 'tree InterfacePath::Acp;
        }

        let evicting = profile.intervening_traffic_bytes > INTERVENING_LIMIT_BYTES;
        node(
            "intervening_traffic",
            "Can work between producer and consumer touch more than 16 MiB?",
            yes_no(evicting),
        );
        if evicting {
            break 'tree InterfacePath::Hpc;
        }

        node(
            "background_load",
            "Do memory-intensive tasks run in the background?",
            yes_no(profile.background_memory_intensive),
        );
        if profile.background_memory_intensive {
            break 'tree InterfacePath::Hpc;
        }
        InterfacePath::HpC
    };
    Recommendation {
        path,
        rationale: trace,
        estimated_cost: None,
    }
}

/// Region used for traffic from unrelated work. Disjoint from both the
/// buffer and the warm-start fill.
const UNRELATED_BASE: u64 = FOREIGN_BASE + (1 << 40);

/// CPU loads and stores on the buffer implied by a profile, in bytes.
///
/// The producer of a CPU-to-PL buffer writes all of it and the consumer of
/// a PL-to-CPU buffer reads all of it; the role adds the other side.
pub fn cpu_accesses(profile: &WorkloadProfile) -> (u64, u64) {
    let s = profile.buffer_bytes;
    let (reads, writes) = match profile.cpu_role {
        CpuRole::MostlyWrite => (0, s),
        CpuRole::MixedReadWrite => (s, s),
        CpuRole::MostlyRead => (s, 0),
    };
    match profile.direction {
        Direction::CpuToPl => (reads, writes.max(s)),
        Direction::PlToCpu => (reads.max(s), writes),
        Direction::PlToPl => (0, 0),
    }
}

/// Cache state of the buffer just before the transfer: the CPU last
/// wrote a CPU-to-PL buffer and last read a PL-to-CPU one.
pub fn inferred_pre_state(profile: &WorkloadProfile) -> Option<PreState> {
    match profile.direction {
        Direction::CpuToPl => Some(PreState::Written),
        Direction::PlToCpu => Some(PreState::Read),
        Direction::PlToPl => None,
    }
}

/// Unrelated traffic between the CPU's last touch and the transfer:
/// the profile's intervening traffic, plus one L2 worth when
/// memory-intensive tasks run in the background.
pub fn unrelated_traffic_bytes(profile: &WorkloadProfile, config: &PlatformConfig) -> u64 {
    if profile.direction == Direction::PlToPl {
        return 0;
    }
    let background = if profile.background_memory_intensive {
        config.l2_size_bytes
    } else {
        0
    };
    profile.intervening_traffic_bytes + background
}

/// Models one path for a profile.
pub fn path_cost(
    profile: &WorkloadProfile,
    path: InterfacePath,
    config: &PlatformConfig,
    params: &CalibrationParams,
    sw: &SwCostParams,
) -> Result<CostBreakdown> {
    let timing = transfer_timing(profile, path, prepared_cache(profile, config), config, params)?;
    assemble_cost(profile, path, &timing, config, sw)
}

/// The cache just before the transfer: the inferred pre-state applied to
/// the buffer at address 0, then the unrelated traffic.
fn prepared_cache(profile: &WorkloadProfile, config: &PlatformConfig) -> CacheState {
    let mut cache = CacheState::fresh(config);
    if let Some(pre) = inferred_pre_state(profile) {
        crate::cache::prepare_pre_state(&mut cache, 0, profile.buffer_bytes, pre);
    }
    let unrelated = unrelated_traffic_bytes(profile, config);
    if unrelated > 0 {
        cache.touch_range(UNRELATED_BASE, unrelated, AccessKind::Read);
    }
    cache
}

fn transfer_timing(
    profile: &WorkloadProfile,
    path: InterfacePath,
    mut cache: CacheState,
    config: &PlatformConfig,
    params: &CalibrationParams,
) -> Result<TransferTiming> {
    let spec = TransferSpec::new(profile.buffer_bytes, profile.direction, path);
    simulate_transfer_in_place(&spec, &mut cache, config, params)
}

/// Hardware timing of every legal path, sharing one prepared cache.
fn legal_timings(
    profile: &WorkloadProfile,
    config: &PlatformConfig,
    params: &CalibrationParams,
) -> Result<Vec<(InterfacePath, TransferTiming)>> {
    if profile.buffer_bytes == 0 {
        return Err(Error::Spec("profile buffer must be at least one byte".into()));
    }
    let cache = prepared_cache(profile, config);
    InterfacePath::ALL
        .into_iter()
        .filter(|p| p.is_legal_for(profile.direction))
        .map(|p| Ok((p, transfer_timing(profile, p, cache.clone(), config, params)?)))
        .collect()
}

/// Adds the software side of a path to its hardware timing.
fn assemble_cost(
    profile: &WorkloadProfile,
    path: InterfacePath,
    timing: &TransferTiming,
    config: &PlatformConfig,
    sw: &SwCostParams,
) -> Result<CostBreakdown> {
    let s = profile.buffer_bytes;
    let (maintenance_s, barrier_s) = if path == InterfacePath::HpC {
        let m = swcost::maintenance_cost(&[s], profile.background_memory_intensive, sw);
        (m.flush_s, m.barrier_s)
    } else {
        (0.0, 0.0)
    };
    let penalty_s = if path.region_kind() == RegionKind::NonCacheable {
        let (bytes_read, bytes_written) = cpu_accesses(profile);
        let stage = CpuStage {
            bytes_read,
            bytes_written,
            pattern: profile.write_pattern,
            src_kind: RegionKind::NonCacheable,
            dst_kind: RegionKind::NonCacheable,
        };
        swcost::cpu_stage_breakdown(&stage, config.l2_size_bytes, sw).penalty_s
    } else {
        0.0
    };
    let mut cost = CostBreakdown::new(timing.elapsed_s, maintenance_s, barrier_s, penalty_s);
    cost.total_s = total_cost(s as f64, timing.effective_bandwidth, maintenance_s + barrier_s + penalty_s)?;
    Ok(cost)
}

fn rank(
    profile: &WorkloadProfile,
    timings: &[(InterfacePath, TransferTiming)],
    config: &PlatformConfig,
    sw: &SwCostParams,
) -> Result<Vec<(InterfacePath, CostBreakdown)>> {
    let mut out = timings
        .iter()
        .map(|(p, t)| Ok((*p, assemble_cost(profile, *p, t, config, sw)?)))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.1.total_s.total_cmp(&b.1.total_s).then(a.0.tie_rank().cmp(&b.0.tie_rank())));
    Ok(out)
}

/// Every legal path with its modeled cost, cheapest first. Ties keep the
/// order HP (NC), HPC, ACP, HP (C).
pub fn rank_all(
    profile: &WorkloadProfile,
    config: &PlatformConfig,
    params: &CalibrationParams,
    sw: &SwCostParams,
) -> Result<Vec<(InterfacePath, CostBreakdown)>> {
    rank(profile, &legal_timings(profile, config, params)?, config, sw)
}

/// [`rank_all`] for many profiles. Profiles that differ only in fields
/// the hardware never sees (CPU role, write pattern, consume latency)
/// share one transfer simulation. Output is in input order.
pub fn rank_many(
    profiles: &[WorkloadProfile],
    config: &PlatformConfig,
    params: &CalibrationParams,
    sw: &SwCostParams,
) -> Result<Vec<Vec<(InterfacePath, CostBreakdown)>>> {
    let key = |p: &WorkloadProfile| (p.buffer_bytes, p.direction, unrelated_traffic_bytes(p, config));
    let mut unique: Vec<&WorkloadProfile> = Vec::new();
    let mut index = HashMap::new();
    for p in profiles {
        index.entry(key(p)).or_insert_with(|| {
            unique.push(p);
            unique.len() - 1
        });
    }
    let timings: Vec<Vec<(InterfacePath, TransferTiming)>> = unique
        .par_iter()
        .map(|p| legal_timings(p, config, params))
        .collect::<Result<_>>()?;
    profiles
        .iter()
        .map(|p| rank(p, &timings[index[&key(p)]], config, sw))
        .collect()
}

/// Aligned text table of a ranking.
pub fn format_ranking(profile: &WorkloadProfile, ranking: &[(InterfacePath, CostBreakdown)]) -> String {
    let us = |s: f64| format!("{:.3}", s * 1e6);
    let mut rows = vec![vec![
        "path".to_string(),
        "transfer_us".into(),
        "maintenance_us".into(),
        "barrier_us".into(),
        "cpu_penalty_us".into(),
        "total_us".into(),
    ]];
    for (path, c) in ranking {
        rows.push(vec![
            path.to_string(),
            us(c.hw_transfer_s),
            us(c.maintenance_s),
            us(c.barrier_s),
            us(c.cpu_access_penalty_s),
            us(c.total_s),
        ]);
    }
    format!(
        "ranking for a {} {} buffer\n{}",
        format_size(profile.buffer_bytes),
        profile.direction,
        crate::table::render(&rows)
    )
}

pub const RANKING_CSV_HEADER: [&str; 7] = [
    "rank",
    "path",
    "hw_transfer_s",
    "maintenance_s",
    "barrier_s",
    "cpu_access_penalty_s",
    "total_s",
];

pub fn write_ranking_csv(ranking: &[(InterfacePath, CostBreakdown)], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RANKING_CSV_HEADER)?;
    for (i, (path, c)) in ranking.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            path.id().to_string(),
            format!("{:e}", c.hw_transfer_s),
            format!("{:e}", c.maintenance_s),
            format!("{:e}", c.barrier_s),
            format!("{:e}", c.cpu_access_penalty_s),
            format!("{:e}", c.total_s),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<output>".into(),
        source: e,
    })?;
    Ok(())
}
