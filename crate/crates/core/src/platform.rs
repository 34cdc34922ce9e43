//! Domain types shared by every model: interface paths, platform
//! constants, transfer and workload descriptions, and cost breakdowns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{self, KvDocument};

/// The four ways a PL accelerator can share a buffer with the CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InterfacePath {
    /// HP port, buffer mapped non-cacheable. No maintenance needed.
    #[serde(rename = "HP_NC")]
    HpNc,
    /// HP port, cacheable buffer kept coherent with flush/invalidate + barriers.
    #[serde(rename = "HP_C")]
    HpC,
    /// Coherent port that snoops the CPU cache (one-directional, ACE-Lite).
    #[serde(rename = "HPC")]
    Hpc,
    /// Accelerator coherency port, allocating directly in the shared L2.
    #[serde(rename = "ACP")]
    Acp,
}

impl InterfacePath {
    pub const ALL: [InterfacePath; 4] = [Self::HpNc, Self::HpC, Self::Hpc, Self::Acp];

    /// Fixed tie-break order used when ranking equal costs.
    pub(crate) fn tie_rank(self) -> u8 {
        match self {
            Self::HpNc => 0,
            Self::Hpc => 1,
            Self::Acp => 2,
            Self::HpC => 3,
        }
    }

    /// Identifier used in CSV files.
    pub fn id(self) -> &'static str {
        match self {
            Self::HpNc => "HP_NC",
            Self::HpC => "HP_C",
            Self::Hpc => "HPC",
            Self::Acp => "ACP",
        }
    }

    /// True when the data channel goes straight to DRAM (HP port).
    pub fn is_hp(self) -> bool {
        matches!(self, Self::HpNc | Self::HpC)
    }

    /// How the CPU maps buffers carried on this path.
    pub fn region_kind(self) -> RegionKind {
        match self {
            Self::HpNc => RegionKind::NonCacheable,
            _ => RegionKind::Cacheable,
        }
    }

    pub fn is_legal_for(self, direction: Direction) -> bool {
        direction != Direction::PlToPl || self.is_hp()
    }
}

impl fmt::Display for InterfacePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::HpNc => "HP (NC)",
            Self::HpC => "HP (C)",
            Self::Hpc => "HPC",
            Self::Acp => "ACP",
        })
    }
}

impl FromStr for InterfacePath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_uppercase();
        match norm.as_str() {
            "HP_NC" | "HP(NC)" | "HP-NC" | "HP" => Ok(Self::HpNc),
            "HP_C" | "HP(C)" | "HP-C" => Ok(Self::HpC),
            "HPC" => Ok(Self::Hpc),
            "ACP" => Ok(Self::Acp),
            _ => Err(format!("unknown interface path {s:?} (expected HP_NC, HP_C, HPC or ACP)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// TX: the CPU produced the data, the accelerator consumes it.
    CpuToPl,
    /// RX: the accelerator produced the data, the CPU consumes it.
    PlToCpu,
    PlToPl,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Self::CpuToPl, Self::PlToCpu, Self::PlToPl];

    pub fn id(self) -> &'static str {
        match self {
            Self::CpuToPl => "tx",
            Self::PlToCpu => "rx",
            Self::PlToPl => "pl2pl",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "tx" | "cpu_to_pl" | "cpu2pl" => Ok(Self::CpuToPl),
            "rx" | "pl_to_cpu" | "pl2cpu" => Ok(Self::PlToCpu),
            "pl2pl" | "pl_to_pl" => Ok(Self::PlToPl),
            _ => Err(format!("unknown direction {s:?} (expected tx, rx or pl2pl)")),
        }
    }
}

/// How the buffer was prepared before a raw-bandwidth transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PreState {
    /// Every line written by the CPU: resident and dirty.
    Written,
    /// Every line read by the CPU: resident and clean.
    Read,
    /// Flushed out of the cache: nothing resident.
    Flushed,
}

impl PreState {
    pub fn id(self) -> &'static str {
        match self {
            Self::Written => "written",
            Self::Read => "read",
            Self::Flushed => "flushed",
        }
    }
}

impl fmt::Display for PreState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for PreState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "written" | "write" => Ok(Self::Written),
            "read" => Ok(Self::Read),
            "flushed" | "flush" => Ok(Self::Flushed),
            _ => Err(format!("unknown pre-state {s:?} (expected written, read or flushed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionKind {
    Cacheable,
    NonCacheable,
}

/// Platform constants. Everything the models need that is not a fitted
/// timing coefficient lives here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformConfig {
    pub bus_width_bits: u32,
    pub bus_freq_hz: u64,
    pub l2_size_bytes: u64,
    pub l2_ways: u32,
    pub l2_line_bytes: u32,
    /// Prior for the HP startup latency before calibration.
    pub dram_latency_cycles: u32,
    /// Prior for the per-line snoop cost on the coherent port.
    pub snoop_penalty_cycles: u32,
    /// Prior for the per-line ACP miss cost.
    pub cache_miss_penalty_cycles: u32,
    pub wc_chunk_bits: u32,
    /// Seed of the L2 random-replacement generator.
    pub seed: u64,
    /// Sequential write-only run length that puts the L2 into read allocate mode.
    pub bypass_threshold_bytes: u64,
    /// Start every fresh cache full of unrelated clean lines.
    pub warm_start: bool,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            bus_width_bits: 128,
            bus_freq_hz: 300_000_000,
            l2_size_bytes: 1 << 20,
            l2_ways: 16,
            l2_line_bytes: 64,
            dram_latency_cycles: 12,
            snoop_penalty_cycles: 1,
            cache_miss_penalty_cycles: 12,
            wc_chunk_bits: 128,
            seed: 0,
            bypass_threshold_bytes: 4 * 64,
            warm_start: true,
        }
    }
}

/// One failed [`PlatformConfig`] invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

impl PlatformConfig {
    /// Returns every violated invariant; empty means the config is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |field, rule: &str| {
            out.push(Violation {
                field,
                rule: rule.to_string(),
            })
        };
        if self.bus_width_bits == 0 || self.bus_width_bits % 8 != 0 {
            bad("bus_width_bits", "must be a positive multiple of 8");
        }
        if self.bus_freq_hz == 0 {
            bad("bus_freq_hz", "must be positive");
        }
        if self.l2_ways == 0 {
            bad("l2_ways", "must be positive");
        }
        if self.l2_line_bytes == 0 || !self.l2_line_bytes.is_power_of_two() {
            bad("l2_line_bytes", "must be a positive power of two");
        }
        if self.l2_size_bytes == 0 {
            bad("l2_size_bytes", "must be positive");
        } else if self.l2_ways > 0 && self.l2_line_bytes > 0 {
            let set_bytes = u64::from(self.l2_ways) * u64::from(self.l2_line_bytes);
            if self.l2_size_bytes % set_bytes != 0 {
                bad(
                    "l2_size_bytes",
                    &format!("must be a multiple of l2_ways x l2_line_bytes ({set_bytes})"),
                );
            }
        }
        if self.wc_chunk_bits == 0 || self.wc_chunk_bits % 8 != 0 || self.wc_chunk_bits > 1024 {
            bad("wc_chunk_bits", "must be a positive multiple of 8, at most 1024");
        } else if !(self.wc_chunk_bits / 8).is_power_of_two() {
            bad("wc_chunk_bits", "chunk size in bytes must be a power of two");
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = v.iter().map(|v| v.to_string()).collect();
            Err(Error::Config(msgs.join("; ")))
        }
    }

    pub fn bus_bytes(&self) -> u64 {
        u64::from(self.bus_width_bits / 8)
    }

    pub fn line_bytes(&self) -> u64 {
        u64::from(self.l2_line_bytes)
    }

    pub fn wc_chunk_bytes(&self) -> u64 {
        u64::from(self.wc_chunk_bits / 8)
    }

    pub fn num_sets(&self) -> u64 {
        self.l2_size_bytes / (u64::from(self.l2_ways) * self.line_bytes())
    }

    pub fn cycle_s(&self) -> f64 {
        1.0 / self.bus_freq_hz as f64
    }

    /// Applies the keys of `section` in `doc`; absent keys keep their value.
    pub fn apply_kv(&mut self, doc: &KvDocument, section: &str) -> Result<()> {
        for e in doc.section(section) {
            let size = |s: &str| units::parse_size(s);
            let small = |s: &str| -> Result<u32, String> {
                let v = units::parse_size(s)?;
                u32::try_from(v).map_err(|_| format!("{s:?} is too large"))
            };
            match e.key.as_str() {
                "bus_width_bits" => self.bus_width_bits = doc.convert(e, small)?,
                "bus_freq_hz" | "bus_freq" => self.bus_freq_hz = doc.convert(e, units::parse_freq)?,
                "l2_size_bytes" | "l2_size" => self.l2_size_bytes = doc.convert(e, size)?,
                "l2_ways" => self.l2_ways = doc.convert(e, small)?,
                "l2_line_bytes" | "l2_line" => self.l2_line_bytes = doc.convert(e, small)?,
                "dram_latency_cycles" => self.dram_latency_cycles = doc.convert(e, small)?,
                "snoop_penalty_cycles" => self.snoop_penalty_cycles = doc.convert(e, small)?,
                "cache_miss_penalty_cycles" => self.cache_miss_penalty_cycles = doc.convert(e, small)?,
                "wc_chunk_bits" => self.wc_chunk_bits = doc.convert(e, small)?,
                "seed" => self.seed = doc.convert(e, |s| s.trim().parse::<u64>().map_err(|e| e.to_string()))?,
                "bypass_threshold_bytes" | "bypass_threshold" => {
                    self.bypass_threshold_bytes = doc.convert(e, size)?
                }
                "warm_start" => self.warm_start = doc.convert(e, units::parse_bool)?,
                _ => return Err(doc.unknown_key(e)),
            }
        }
        Ok(())
    }
}

/// Theoretical interface bandwidth in bytes per second.
pub fn peak_bandwidth(config: &PlatformConfig) -> Result<f64> {
    if config.bus_width_bits == 0 || config.bus_freq_hz == 0 {
        return Err(Error::Config("bus width and frequency must be positive".into()));
    }
    Ok(f64::from(config.bus_width_bits) / 8.0 * config.bus_freq_hz as f64)
}

/// One data movement between the CPU side and the PL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub size_bytes: u64,
    pub direction: Direction,
    pub path: InterfacePath,
    /// Buffer preparation applied before the transfer; `None` uses the
    /// cache exactly as handed in.
    pub pre_state: Option<PreState>,
    pub base_addr: u64,
}

impl TransferSpec {
    pub fn new(size_bytes: u64, direction: Direction, path: InterfacePath) -> Self {
        Self {
            size_bytes,
            direction,
            path,
            pre_state: None,
            base_addr: 0,
        }
    }

    pub fn with_pre_state(mut self, pre: PreState) -> Self {
        self.pre_state = Some(pre);
        self
    }

    pub fn at(mut self, base_addr: u64) -> Self {
        self.base_addr = base_addr;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CpuRole {
    MostlyWrite,
    MixedReadWrite,
    MostlyRead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WritePattern {
    Sequential,
    /// Not sequential today, but the code can be changed to write sequentially.
    MakeableSequential,
    Irregular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConsumeLatency {
    Immediate,
    Delayed,
}

impl CpuRole {
    pub const ALL: [CpuRole; 3] = [Self::MostlyWrite, Self::MixedReadWrite, Self::MostlyRead];
}

impl WritePattern {
    pub const ALL: [WritePattern; 3] = [Self::Sequential, Self::MakeableSequential, Self::Irregular];
}

impl ConsumeLatency {
    pub const ALL: [ConsumeLatency; 2] = [Self::Immediate, Self::Delayed];
}

impl fmt::Display for CpuRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MostlyWrite => "mostly_write",
            Self::MixedReadWrite => "mixed",
            Self::MostlyRead => "mostly_read",
        })
    }
}

impl FromStr for CpuRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mostly_write" | "write" => Ok(Self::MostlyWrite),
            "mixed" | "mixed_read_write" | "read_write" => Ok(Self::MixedReadWrite),
            "mostly_read" | "read" => Ok(Self::MostlyRead),
            _ => Err(format!("unknown cpu role {s:?} (expected mostly_write, mixed or mostly_read)")),
        }
    }
}

impl fmt::Display for WritePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sequential => "sequential",
            Self::MakeableSequential => "makeable_sequential",
            Self::Irregular => "irregular",
        })
    }
}

impl FromStr for WritePattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sequential" | "seq" => Ok(Self::Sequential),
            "makeable_sequential" | "makeable" => Ok(Self::MakeableSequential),
            "irregular" | "random" => Ok(Self::Irregular),
            _ => Err(format!(
                "unknown write pattern {s:?} (expected sequential, makeable_sequential or irregular)"
            )),
        }
    }
}

impl fmt::Display for ConsumeLatency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Immediate => "immediate",
            Self::Delayed => "delayed",
        })
    }
}

impl FromStr for ConsumeLatency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "immediate" => Ok(Self::Immediate),
            "delayed" => Ok(Self::Delayed),
            _ => Err(format!("unknown consume latency {s:?} (expected immediate or delayed)")),
        }
    }
}

/// One application-level data flow, as seen by the advisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub buffer_bytes: u64,
    pub direction: Direction,
    pub cpu_role: CpuRole,
    pub write_pattern: WritePattern,
    pub consume_latency: ConsumeLatency,
    /// Memory touched by other work between produce and consume.
    pub intervening_traffic_bytes: u64,
    pub background_memory_intensive: bool,
}

impl WorkloadProfile {
    /// Parses a profile file. Every field is required.
    pub fn from_kv(doc: &KvDocument) -> Result<Self> {
        let mut buffer = None;
        let mut direction = None;
        let mut role = None;
        let mut pattern = None;
        let mut consume = None;
        let mut intervening = None;
        let mut background = None;
        for e in doc.section("") {
            match e.key.as_str() {
                "buffer_bytes" | "buffer" => buffer = Some(doc.convert(e, units::parse_size)?),
                "direction" => direction = Some(doc.convert(e, str::parse)?),
                "cpu_role" => role = Some(doc.convert(e, str::parse)?),
                "write_pattern" => pattern = Some(doc.convert(e, str::parse)?),
                "consume_latency" | "consume" => consume = Some(doc.convert(e, str::parse)?),
                "intervening_traffic_bytes" | "intervening_traffic" => {
                    intervening = Some(doc.convert(e, units::parse_size)?)
                }
                "background_memory_intensive" => background = Some(doc.convert(e, units::parse_bool)?),
                _ => return Err(doc.unknown_key(e)),
            }
        }
        if let Some(e) = doc.entries.iter().find(|e| !e.section.is_empty()) {
            return Err(Error::parse(&doc.path, e.line, "profile files have no sections"));
        }
        let last_line = doc.entries.last().map_or(1, |e| e.line);
        let missing = |name: &str| Error::parse(&doc.path, last_line, format!("missing required key {name:?}"));
        let buffer_bytes = buffer.ok_or_else(|| missing("buffer_bytes"))?;
        if buffer_bytes == 0 {
            let line = doc.entries.iter().find(|e| e.key.starts_with("buffer")).map_or(1, |e| e.line);
            return Err(Error::parse(&doc.path, line, "buffer_bytes must be positive"));
        }
        Ok(Self {
            buffer_bytes,
            direction: direction.ok_or_else(|| missing("direction"))?,
            cpu_role: role.ok_or_else(|| missing("cpu_role"))?,
            write_pattern: pattern.ok_or_else(|| missing("write_pattern"))?,
            consume_latency: consume.ok_or_else(|| missing("consume_latency"))?,
            intervening_traffic_bytes: intervening.ok_or_else(|| missing("intervening_traffic_bytes"))?,
            background_memory_intensive: background.ok_or_else(|| missing("background_memory_intensive"))?,
        })
    }

    /// Every combination of the enumerated fields at `size`, with no
    /// intervening traffic.
    pub fn grid(size: u64) -> Vec<WorkloadProfile> {
        let mut out = Vec::with_capacity(108);
        for direction in Direction::ALL {
            for cpu_role in CpuRole::ALL {
                for write_pattern in WritePattern::ALL {
                    for consume_latency in ConsumeLatency::ALL {
                        for background_memory_intensive in [false, true] {
                            out.push(WorkloadProfile {
                                buffer_bytes: size,
                                direction,
                                cpu_role,
                                write_pattern,
                                consume_latency,
                                intervening_traffic_bytes: 0,
                                background_memory_intensive,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Time spent moving one buffer, split by cause. All values in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub hw_transfer_s: f64,
    /// Cache flush/invalidate loops.
    pub maintenance_s: f64,
    pub barrier_s: f64,
    /// Extra CPU time from non-cacheable or irregular accesses.
    pub cpu_access_penalty_s: f64,
    pub total_s: f64,
}

impl CostBreakdown {
    pub fn new(hw_transfer_s: f64, maintenance_s: f64, barrier_s: f64, cpu_access_penalty_s: f64) -> Self {
        debug_assert!(hw_transfer_s >= 0.0 && maintenance_s >= 0.0);
        debug_assert!(barrier_s >= 0.0 && cpu_access_penalty_s >= 0.0);
        Self {
            hw_transfer_s,
            maintenance_s,
            barrier_s,
            cpu_access_penalty_s,
            total_s: hw_transfer_s + maintenance_s + barrier_s + cpu_access_penalty_s,
        }
    }

    /// Component-wise sum; the total is recomputed from the components.
    pub fn plus(&self, other: &CostBreakdown) -> CostBreakdown {
        CostBreakdown::new(
            self.hw_transfer_s + other.hw_transfer_s,
            self.maintenance_s + other.maintenance_s,
            self.barrier_s + other.barrier_s,
            self.cpu_access_penalty_s + other.cpu_access_penalty_s,
        )
    }
}
