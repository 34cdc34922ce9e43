//! Bandwidth and elapsed time of one PL transfer, per interface path.
//!
//! Timing is analytical cycle accounting over bus beats. A transfer is
//! first reduced to [`TransferFeatures`] by walking the cache (which
//! lines are resident, dirty, hit or missed), then priced with
//! [`CalibrationParams`]. Elapsed time is linear in the coefficients for
//! fixed features, which is what [`calibrate`] relies on.
//!
//! Per path:
//!
//! * HP goes straight to DRAM: `startup + beats` cycles, cache untouched.
//! * HPC TX snoops every line: `startup + beats * (1 + snoop)` cycles plus
//!   a per-byte penalty for each byte found dirty in the L2. Snooped dirty
//!   lines are dropped.
//! * HPC RX streams at the HP rate divided by `rx_derate` and invalidates
//!   stale lines.
//! * ACP performs one allocating L2 access per line; each beat of a line
//!   costs `hit_per_beat` or `miss_per_beat` cycles. Large transfers evict
//!   their own earlier lines.
//!
//! No path may beat the bus: elapsed time is never below `beats` cycles.

mod calibrate;

pub use calibrate::{
    calibrate, format_residuals, load_anchors, parse_anchors, shipped_anchors, write_residuals_csv, Anchor, AnchorResidual,
    Calibration, RESIDUAL_CSV_HEADER,
};

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{prepare_pre_state, AccessKind, CacheState};
use crate::error::{Error, Result};
use crate::platform::{peak_bandwidth, Direction, InterfacePath, PlatformConfig, PreState, TransferSpec};
use crate::units::{self, KvDocument};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpParams {
    pub startup_cycles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpcParams {
    pub startup_cycles: f64,
    pub snoop_per_beat_cycles: f64,
    /// Seconds per byte served out of the CPU cache instead of DRAM on TX.
    pub cached_tx_per_byte_penalty_s: f64,
    /// RX bandwidth relative to HP, in (0, 1].
    pub rx_derate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcpParams {
    pub hit_per_beat_cycles: f64,
    pub miss_per_beat_cycles: f64,
}

/// Fitted timing coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub hp: HpParams,
    pub hpc: HpcParams,
    pub acp: AcpParams,
    /// Which anchor set produced these values.
    pub provenance: String,
}

impl Default for CalibrationParams {
    /// The result of [`calibrate`] over [`shipped_anchors`] with the
    /// default platform; `shipped_defaults_match_anchor_fit` keeps the two
    /// in sync.
    fn default() -> Self {
        Self {
            hp: HpParams { startup_cycles: 11.1525 },
            hpc: HpcParams {
                startup_cycles: 30.774,
                snoop_per_beat_cycles: 0.0508973,
                cached_tx_per_byte_penalty_s: 8.06000e-10,
                rx_derate: 0.950601,
            },
            acp: AcpParams {
                hit_per_beat_cycles: 1.02167,
                miss_per_beat_cycles: 4.00332,
            },
            provenance: "shipped anchors (data/anchors.csv)".into(),
        }
    }
}

impl CalibrationParams {
    /// Uncalibrated starting point derived from the platform cycle counts.
    pub fn prior(config: &PlatformConfig) -> Self {
        let beats_per_line = (config.line_bytes() / config.bus_bytes().max(1)).max(1) as f64;
        Self {
            hp: HpParams {
                startup_cycles: f64::from(config.dram_latency_cycles),
            },
            hpc: HpcParams {
                startup_cycles: f64::from(config.dram_latency_cycles),
                snoop_per_beat_cycles: f64::from(config.snoop_penalty_cycles) / beats_per_line,
                cached_tx_per_byte_penalty_s: 0.0,
                rx_derate: 1.0,
            },
            acp: AcpParams {
                hit_per_beat_cycles: 1.0,
                miss_per_beat_cycles: 1.0 + f64::from(config.cache_miss_penalty_cycles) / beats_per_line,
            },
            provenance: "platform prior".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("hp.startup_cycles", self.hp.startup_cycles),
            ("hpc.startup_cycles", self.hpc.startup_cycles),
            ("hpc.snoop_per_beat_cycles", self.hpc.snoop_per_beat_cycles),
            ("hpc.cached_tx_per_byte_penalty_s", self.hpc.cached_tx_per_byte_penalty_s),
            ("acp.hit_per_beat_cycles", self.acp.hit_per_beat_cycles),
            ("acp.miss_per_beat_cycles", self.acp.miss_per_beat_cycles),
        ];
        for (name, v) in coeffs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        let d = self.hpc.rx_derate;
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::Config(format!("hpc.rx_derate must be in (0, 1], got {d}")));
        }
        Ok(())
    }

    /// Applies keys from a `[calibration]`-style section.
    pub fn apply_kv(&mut self, doc: &KvDocument, section: &str) -> Result<()> {
        for e in doc.section(section) {
            let slot = match e.key.as_str() {
                "hp.startup_cycles" => &mut self.hp.startup_cycles,
                "hpc.startup_cycles" => &mut self.hpc.startup_cycles,
                "hpc.snoop_per_beat_cycles" => &mut self.hpc.snoop_per_beat_cycles,
                "hpc.cached_tx_per_byte_penalty_s" => &mut self.hpc.cached_tx_per_byte_penalty_s,
                "hpc.rx_derate" => &mut self.hpc.rx_derate,
                "acp.hit_per_beat_cycles" => &mut self.acp.hit_per_beat_cycles,
                "acp.miss_per_beat_cycles" => &mut self.acp.miss_per_beat_cycles,
                "provenance" => {
                    self.provenance = e.value.clone();
                    continue;
                }
                _ => return Err(doc.unknown_key(e)),
            };
            *slot = doc.convert(e, units::parse_real)?;
        }
        self.validate()
    }

    /// Renders the parameters as a `[calibration]` section.
    pub fn to_kv(&self) -> String {
        let mut s = String::from("[calibration]\n");
        let _ = writeln!(s, "provenance = {}", self.provenance.replace('#', ""));
        let _ = writeln!(s, "hp.startup_cycles = {}", self.hp.startup_cycles);
        let _ = writeln!(s, "hpc.startup_cycles = {}", self.hpc.startup_cycles);
        let _ = writeln!(s, "hpc.snoop_per_beat_cycles = {}", self.hpc.snoop_per_beat_cycles);
        let _ = writeln!(
            s,
            "hpc.cached_tx_per_byte_penalty_s = {:e}",
            self.hpc.cached_tx_per_byte_penalty_s
        );
        let _ = writeln!(s, "hpc.rx_derate = {}", self.hpc.rx_derate);
        let _ = writeln!(s, "acp.hit_per_beat_cycles = {}", self.acp.hit_per_beat_cycles);
        let _ = writeln!(s, "acp.miss_per_beat_cycles = {}", self.acp.miss_per_beat_cycles);
        s
    }
}

/// What a transfer did to and found in the cache, independent of timing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransferFeatures {
    pub beats: u64,
    /// ACP beats whose line hit.
    pub hit_beats: u64,
    /// ACP beats whose line missed.
    pub miss_beats: u64,
    /// Bytes of the buffer found dirty in the L2 by HPC TX snoops.
    pub dirty_resident_bytes: u64,
    pub resident_fraction: f64,
    pub events: CacheEvents,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEvents {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub snoops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferTiming {
    pub elapsed_s: f64,
    pub effective_bandwidth: f64,
    pub beats: u64,
    pub cache_events: CacheEvents,
    /// Resident share of the buffer when the transfer started.
    pub resident_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub elapsed_s: f64,
    pub effective_bandwidth: f64,
    pub beats: u64,
    pub cache_events: CacheEvents,
    pub resident_fraction: f64,
    pub post_state: CacheState,
}

fn check_spec(spec: &TransferSpec) -> Result<()> {
    if spec.size_bytes == 0 {
        return Err(Error::Spec("transfer size must be at least one byte".into()));
    }
    if !spec.path.is_legal_for(spec.direction) {
        return Err(Error::Spec(format!(
            "{} cannot carry {} traffic (PL to PL goes over HP only)",
            spec.path, spec.direction
        )));
    }
    Ok(())
}

/// Applies the transfer's pre-state, then walks the cache the way the
/// transfer would. Leaves the cache in its post-transfer state.
pub fn transfer_features(spec: &TransferSpec, cache: &mut CacheState, config: &PlatformConfig) -> Result<TransferFeatures> {
    check_spec(spec)?;
    let (base, len) = (spec.base_addr, spec.size_bytes);
    if let Some(pre) = spec.pre_state {
        prepare_pre_state(cache, base, len, pre);
    }
    let bus = config.bus_bytes();
    let lb = cache.line_bytes();
    let end = base + len;
    let mut f = TransferFeatures {
        beats: len.div_ceil(bus),
        resident_fraction: cache.resident_fraction(base, len)?,
        ..Default::default()
    };
    let overlap = |line: u64| end.min(line + lb) - base.max(line);
    match (spec.path, spec.direction) {
        (InterfacePath::HpNc | InterfacePath::HpC, _) => {}
        (InterfacePath::Hpc, Direction::CpuToPl) => {
            let lines: Vec<u64> = cache.lines_spanned(base, len).collect();
            for line in lines {
                f.events.snoops += 1;
                if cache.probe(line) == Some(true) {
                    f.events.hits += 1;
                    f.dirty_resident_bytes += overlap(line);
                    cache.drop_line(line);
                } else {
                    f.events.misses += 1;
                }
            }
        }
        (InterfacePath::Hpc, _) => {
            f.events.snoops = cache.lines_spanned(base, len).count() as u64;
            f.events.hits = cache.invalidate_range(base, len);
            f.events.misses = f.events.snoops - f.events.hits;
        }
        (InterfacePath::Acp, dir) => {
            let kind = if dir == Direction::CpuToPl {
                AccessKind::Read
            } else {
                AccessKind::Write
            };
            let evictions_before = cache.stats.evictions;
            let lines: Vec<u64> = cache.lines_spanned(base, len).collect();
            let mut beats = 0;
            for line in lines {
                let line_beats = overlap(line).div_ceil(bus);
                beats += line_beats;
                if cache.access(line, kind, true).is_hit() {
                    f.events.hits += 1;
                    f.hit_beats += line_beats;
                } else {
                    f.events.misses += 1;
                    f.miss_beats += line_beats;
                }
            }
            f.beats = beats;
            f.events.evictions = cache.stats.evictions - evictions_before;
        }
    }
    Ok(f)
}

/// Prices a feature set. Linear in every coefficient except for the
/// bus-rate floor.
pub fn elapsed_from_features(
    path: InterfacePath,
    direction: Direction,
    f: &TransferFeatures,
    config: &PlatformConfig,
    params: &CalibrationParams,
) -> f64 {
    let beats = f.beats as f64;
    let cycle = config.cycle_s();
    let hp_cycles = params.hp.startup_cycles + beats;
    let t = match (path, direction) {
        (InterfacePath::HpNc | InterfacePath::HpC, _) => hp_cycles * cycle,
        (InterfacePath::Hpc, Direction::CpuToPl) => {
            (params.hpc.startup_cycles + beats * (1.0 + params.hpc.snoop_per_beat_cycles)) * cycle
                + f.dirty_resident_bytes as f64 * params.hpc.cached_tx_per_byte_penalty_s
        }
        (InterfacePath::Hpc, _) => hp_cycles * cycle / params.hpc.rx_derate,
        (InterfacePath::Acp, _) => {
            (f.hit_beats as f64 * params.acp.hit_per_beat_cycles + f.miss_beats as f64 * params.acp.miss_per_beat_cycles)
                * cycle
        }
    };
    t.max(beats * cycle)
}

/// Simulates one transfer against `cache`, updating it in place.
pub fn simulate_transfer_in_place(
    spec: &TransferSpec,
    cache: &mut CacheState,
    config: &PlatformConfig,
    params: &CalibrationParams,
) -> Result<TransferTiming> {
    let f = transfer_features(spec, cache, config)?;
    let elapsed_s = elapsed_from_features(spec.path, spec.direction, &f, config, params);
    Ok(TransferTiming {
        elapsed_s,
        effective_bandwidth: spec.size_bytes as f64 / elapsed_s,
        beats: f.beats,
        cache_events: f.events,
        resident_fraction: f.resident_fraction,
    })
}

pub fn simulate_transfer(
    spec: &TransferSpec,
    cache: CacheState,
    config: &PlatformConfig,
    params: &CalibrationParams,
) -> Result<TransferResult> {
    let mut post_state = cache;
    let t = simulate_transfer_in_place(spec, &mut post_state, config, params)?;
    Ok(TransferResult {
        elapsed_s: t.elapsed_s,
        effective_bandwidth: t.effective_bandwidth,
        beats: t.beats,
        cache_events: t.cache_events,
        resident_fraction: t.resident_fraction,
        post_state,
    })
}

/// One curve of a raw-bandwidth sweep: a path plus buffer preparation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepRow {
    pub path: InterfacePath,
    pub pre_state: Option<PreState>,
}

impl SweepRow {
    pub fn label(&self) -> String {
        match (self.path, self.pre_state) {
            (p, None) if p.is_hp() => "HP".to_string(),
            (p, None) => p.to_string(),
            (p, Some(pre)) => {
                let how = match pre {
                    PreState::Written => "Write",
                    PreState::Read => "Read",
                    PreState::Flushed => "Flush",
                };
                format!("{} (w/ {how})", if p.is_hp() { "HP".to_string() } else { p.to_string() })
            }
        }
    }
}

/// The five setups of the raw-bandwidth test for one direction. PL to PL
/// traffic can only use HP, so that direction has a single row.
pub fn raw_bandwidth_rows(direction: Direction) -> Vec<SweepRow> {
    if direction == Direction::PlToPl {
        return vec![SweepRow {
            path: InterfacePath::HpNc,
            pre_state: None,
        }];
    }
    let cached = if direction == Direction::CpuToPl {
        PreState::Written
    } else {
        PreState::Read
    };
    let row = |path, pre_state| SweepRow { path, pre_state };
    vec![
        row(InterfacePath::HpNc, None),
        row(InterfacePath::Hpc, Some(cached)),
        row(InterfacePath::Hpc, Some(PreState::Flushed)),
        row(InterfacePath::Acp, Some(cached)),
        row(InterfacePath::Acp, Some(PreState::Flushed)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub path: InterfacePath,
    pub direction: Direction,
    pub pre_state: Option<PreState>,
    pub size_bytes: u64,
    pub bandwidth_bps: f64,
    pub elapsed_s: f64,
}

/// One transfer per (row, size), each on a fresh cache. Output is
/// grouped by row in input order, sizes ascending within a row.
pub fn sweep(
    sizes: &[u64],
    direction: Direction,
    rows: &[SweepRow],
    config: &PlatformConfig,
    params: &CalibrationParams,
) -> Result<Vec<SweepRecord>> {
    if sizes.is_empty() {
        return Err(Error::Spec("sweep needs at least one size".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Spec("sweep sizes must be strictly ascending".into()));
    }
    let jobs: Vec<(SweepRow, u64)> = rows
        .iter()
        .flat_map(|r| sizes.iter().map(move |&s| (*r, s)))
        .collect();
    jobs.par_iter()
        .map(|&(row, size)| {
            let spec = TransferSpec {
                size_bytes: size,
                direction,
                path: row.path,
                pre_state: row.pre_state,
                base_addr: 0,
            };
            let mut cache = CacheState::fresh(config);
            let t = simulate_transfer_in_place(&spec, &mut cache, config, params)?;
            Ok(SweepRecord {
                path: row.path,
                direction,
                pre_state: row.pre_state,
                size_bytes: size,
                bandwidth_bps: t.effective_bandwidth,
                elapsed_s: t.elapsed_s,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: [&str; 6] = ["path", "direction", "pre_state", "size_bytes", "bandwidth_Bps", "elapsed_s"];

pub fn write_sweep_csv(records: &[SweepRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.path.id().to_string(),
            r.direction.id().to_string(),
            r.pre_state.map_or("none".to_string(), |p| p.id().to_string()),
            r.size_bytes.to_string(),
            r.bandwidth_bps.to_string(),
            r.elapsed_s.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(SWEEP_CSV_HEADER) {
        return Err(Error::parse("<sweep csv>", 1, "unexpected header"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::parse("<sweep csv>", line, msg);
        let pre_state = match &rec[2] {
            "none" => None,
            s => Some(s.parse().map_err(bad)?),
        };
        out.push(SweepRecord {
            path: rec[0].parse().map_err(bad)?,
            direction: rec[1].parse().map_err(bad)?,
            pre_state,
            size_bytes: rec[3].parse().map_err(|e| bad(format!("{e}")))?,
            bandwidth_bps: rec[4].parse().map_err(|e| bad(format!("{e}")))?,
            elapsed_s: rec[5].parse().map_err(|e| bad(format!("{e}")))?,
        });
    }
    Ok(out)
}

/// Aligned text table of a sweep: one row per size, one column per curve.
pub fn format_sweep_table(records: &[SweepRecord], config: &PlatformConfig) -> String {
    let mut curves: Vec<SweepRow> = Vec::new();
    let mut sizes: Vec<u64> = Vec::new();
    for r in records {
        let row = SweepRow {
            path: r.path,
            pre_state: r.pre_state,
        };
        if !curves.contains(&row) {
            curves.push(row);
        }
        if !sizes.contains(&r.size_bytes) {
            sizes.push(r.size_bytes);
        }
    }
    sizes.sort_unstable();
    let mut header = vec!["size".to_string()];
    header.extend(curves.iter().map(|c| c.label()));
    let mut rows = vec![header];
    for &size in &sizes {
        let mut row = vec![units::format_size(size)];
        for c in &curves {
            let cell = records
                .iter()
                .find(|r| r.size_bytes == size && r.path == c.path && r.pre_state == c.pre_state)
                .map_or("-".to_string(), |r| format!("{:.3}", r.bandwidth_bps / 1e9));
            row.push(cell);
        }
        rows.push(row);
    }
    let peak = peak_bandwidth(config).map_or(String::new(), |p| format!("{:.2}", p / 1e9));
    let mut s = crate::table::render(&rows);
    let _ = writeln!(s, "bandwidth in GB/s; peak {peak} GB/s");
    s
}
