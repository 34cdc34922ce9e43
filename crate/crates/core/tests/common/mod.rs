//! Reference models and checkers shared by the property and acceptance
//! suites. The oracles are deliberately naive: a list of lines per set, a
//! byte set per write-combine chunk.

#![allow(dead_code)]

use std::collections::HashSet;

use iocc::cache::{wc_write_stream, AccessKind, AccessOutcome, CacheState, FOREIGN_BASE};
use iocc::interconnect::{calibrate, simulate_transfer, shipped_anchors, Anchor, CalibrationParams};
use iocc::platform::{peak_bandwidth, Direction, InterfacePath, PlatformConfig, PreState, TransferSpec};
use rand::Rng;
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * KIB;

// ---------------------------------------------------------------- cache

/// A tiny cache so random sequences hit every corner: 16 sets of 4 ways.
pub fn small_cache_config(seed: u64) -> PlatformConfig {
    PlatformConfig {
        l2_size_bytes: 4 * KIB,
        l2_ways: 4,
        l2_line_bytes: 64,
        seed,
        ..PlatformConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOp {
    Access { addr: u64, write: bool, allocate: bool },
    Flush { base: u64, len: u64 },
    Invalidate { base: u64, len: u64 },
}

pub fn random_cache_ops(rng: &mut ChaCha8Rng, n: usize) -> Vec<CacheOp> {
    (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0 => CacheOp::Flush {
                base: rng.gen_range(0..32 * KIB),
                len: rng.gen_range(0..2 * KIB),
            },
            1 => CacheOp::Invalidate {
                base: rng.gen_range(0..32 * KIB),
                len: rng.gen_range(0..2 * KIB),
            },
            _ => CacheOp::Access {
                addr: rng.gen_range(0..32 * KIB),
                write: rng.gen_bool(0.5),
                allocate: rng.gen_bool(0.8),
            },
        })
        .collect()
}

/// Each set is a plain list of `(line address, dirty)`.
struct OracleCache {
    line: u64,
    sets: u64,
    ways: usize,
    lists: Vec<Vec<(u64, bool)>>,
    hits: u64,
    misses: u64,
    evictions: u64,
    writebacks: u64,
}

impl OracleCache {
    fn new(config: &PlatformConfig) -> Self {
        let line = u64::from(config.l2_line_bytes);
        let ways = config.l2_ways as usize;
        let sets = config.l2_size_bytes / (line * ways as u64);
        Self {
            line,
            sets,
            ways,
            lists: vec![Vec::new(); sets as usize],
            hits: 0,
            misses: 0,
            evictions: 0,
            writebacks: 0,
        }
    }

    fn set_of(&self, addr: u64) -> usize {
        ((addr / self.line) % self.sets) as usize
    }

    fn line_of(&self, addr: u64) -> u64 {
        addr / self.line * self.line
    }

    fn lines_in(&self, base: u64, len: u64) -> Vec<u64> {
        if len == 0 {
            return Vec::new();
        }
        let first = base / self.line;
        let last = (base + len - 1) / self.line;
        (first..=last).map(|l| l * self.line).collect()
    }

    fn drop_line(&mut self, line: u64) -> Option<bool> {
        let set = self.set_of(line);
        let pos = self.lists[set].iter().position(|&(a, _)| a == line)?;
        Some(self.lists[set].remove(pos).1)
    }

    fn sorted(&self, set: usize) -> Vec<(u64, bool)> {
        let mut v = self.lists[set].clone();
        v.sort_unstable();
        v
    }

    fn total(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

fn model_set(cache: &CacheState, set: usize) -> Vec<(u64, bool)> {
    let mut v = cache.set_contents(set);
    v.sort_unstable();
    v
}

/// Replays `ops` on the model and the list oracle, comparing every
/// outcome. Random victims are taken from the model and checked to be
/// legal (a resident line of the same set, with the oracle's dirty bit).
pub fn check_cache_ops(config: &PlatformConfig, ops: &[CacheOp]) -> Result<(), String> {
    let mut model = CacheState::new(config);
    let mut oracle = OracleCache::new(config);
    let capacity = (config.l2_size_bytes / u64::from(config.l2_line_bytes)) as usize;
    for (step, op) in ops.iter().enumerate() {
        let before = model.stats;
        let fail = |what: String| Err(format!("step {step} {op:?}: {what}"));
        match *op {
            CacheOp::Access { addr, write, allocate } => {
                let kind = if write { AccessKind::Write } else { AccessKind::Read };
                let line = oracle.line_of(addr);
                let set = oracle.set_of(addr);
                let pos = oracle.lists[set].iter().position(|&(a, _)| a == line);
                let outcome = model.access(addr, kind, allocate);
                match (pos, outcome) {
                    (Some(p), AccessOutcome::Hit) => {
                        oracle.hits += 1;
                        if write {
                            oracle.lists[set][p].1 = true;
                        }
                    }
                    (None, AccessOutcome::Miss { evicted }) => {
                        oracle.misses += 1;
                        if allocate {
                            let full = oracle.lists[set].len() == oracle.ways;
                            match (full, evicted) {
                                (false, None) => {}
                                (true, Some(v)) => {
                                    let Some(p) = oracle.lists[set].iter().position(|&(a, _)| a == v.addr) else {
                                        return fail(format!("victim {:#x} was not resident in set {set}", v.addr));
                                    };
                                    if oracle.lists[set][p].1 != v.dirty {
                                        return fail("victim dirty bit disagrees".into());
                                    }
                                    oracle.lists[set].remove(p);
                                    oracle.evictions += 1;
                                    oracle.writebacks += u64::from(v.dirty);
                                }
                                (full, ev) => return fail(format!("set full={full} but evicted={ev:?}")),
                            }
                            oracle.lists[set].push((line, write));
                        } else if evicted.is_some() {
                            return fail("non-allocating miss evicted a line".into());
                        }
                    }
                    (p, o) => return fail(format!("oracle resident={} model {o:?}", p.is_some())),
                }
                if model_set(&model, set) != oracle.sorted(set) {
                    return fail(format!("set {set} contents differ"));
                }
            }
            CacheOp::Flush { base, len } => {
                let mut cleaned = 0;
                let mut invalidated = 0;
                for line in oracle.lines_in(base, len) {
                    if let Some(dirty) = oracle.drop_line(line) {
                        invalidated += 1;
                        cleaned += u64::from(dirty);
                    }
                }
                oracle.writebacks += cleaned;
                let out = model.flush_range(base, len);
                if (out.lines_cleaned, out.lines_invalidated) != (cleaned, invalidated) {
                    return fail(format!("flush counted {out:?}, oracle ({cleaned}, {invalidated})"));
                }
                if len > 0 && model.resident_fraction(base, len).map_err(|e| e.to_string())? != 0.0 {
                    return fail("range still resident after flush".into());
                }
                let once = model.clone();
                let again = model.flush_range(base, len);
                if again.lines_invalidated != 0 || again.lines_cleaned != 0 || model != once {
                    return fail("second flush changed the cache".into());
                }
            }
            CacheOp::Invalidate { base, len } => {
                let dropped = oracle
                    .lines_in(base, len)
                    .into_iter()
                    .filter(|&l| oracle.drop_line(l).is_some())
                    .count() as u64;
                let wb = model.stats.writebacks;
                let got = model.invalidate_range(base, len);
                if got != dropped {
                    return fail(format!("invalidate dropped {got}, oracle {dropped}"));
                }
                if model.stats.writebacks != wb {
                    return fail("invalidate wrote data back".into());
                }
            }
        }
        let after = model.stats;
        if after.hits < before.hits
            || after.misses < before.misses
            || after.evictions < before.evictions
            || after.writebacks < before.writebacks
        {
            return fail("a counter decreased".into());
        }
        if model.valid_lines() > capacity || model.valid_lines() != oracle.total() {
            return fail(format!("valid lines {} vs oracle {}", model.valid_lines(), oracle.total()));
        }
    }
    for set in 0..oracle.sets as usize {
        let contents = model.set_contents(set);
        if contents.len() > oracle.ways {
            return Err(format!("set {set} holds {} lines", contents.len()));
        }
        let unique: HashSet<u64> = contents.iter().map(|&(a, _)| a).collect();
        if unique.len() != contents.len() {
            return Err(format!("set {set} holds a line twice"));
        }
        if model_set(&model, set) != oracle.sorted(set) {
            return Err(format!("final contents of set {set} differ"));
        }
    }
    let s = model.stats;
    if (s.hits, s.misses, s.evictions, s.writebacks) != (oracle.hits, oracle.misses, oracle.evictions, oracle.writebacks)
    {
        return Err(format!(
            "counters {s:?} vs oracle ({}, {}, {}, {})",
            oracle.hits, oracle.misses, oracle.evictions, oracle.writebacks
        ));
    }
    // Determinism: the same seed and sequence give a bit-identical cache.
    let replay = |ops: &[CacheOp]| {
        let mut c = CacheState::new(config);
        for op in ops {
            match *op {
                CacheOp::Access { addr, write, allocate } => {
                    let kind = if write { AccessKind::Write } else { AccessKind::Read };
                    c.access(addr, kind, allocate);
                }
                CacheOp::Flush { base, len } => {
                    c.flush_range(base, len);
                    c.flush_range(base, len);
                }
                CacheOp::Invalidate { base, len } => {
                    c.invalidate_range(base, len);
                }
            }
        }
        c
    };
    if replay(ops) != model {
        return Err("replay with the same seed gave a different cache".into());
    }
    Ok(())
}

// -------------------------------------------------------- write combine

/// Stores that each stay inside one chunk, over a small window so chunk
/// runs and overlaps both occur.
pub fn random_wc_stream(rng: &mut ChaCha8Rng, chunk: u64, n: usize) -> Vec<(u64, u64)> {
    (0..n)
        .map(|_| {
            let addr = rng.gen_range(0..16 * chunk);
            let room = chunk - addr % chunk;
            (addr, rng.gen_range(1..=room.min(chunk)))
        })
        .collect()
}

/// Run-length oracle: a request ends when the stream leaves its chunk,
/// rewrites a byte already in the run, or completes the chunk.
pub fn run_length_oracle(writes: &[(u64, u64)], chunk: u64) -> (u64, u64) {
    let mut requests = 0;
    let mut bytes = 0;
    let mut run_chunk: Option<u64> = None;
    let mut run_bytes: HashSet<u64> = HashSet::new();
    let close = |run: &mut HashSet<u64>, requests: &mut u64, bytes: &mut u64| {
        if !run.is_empty() {
            *requests += 1;
            *bytes += run.len() as u64;
            run.clear();
        }
    };
    for &(addr, size) in writes {
        let c = addr / chunk;
        let span: Vec<u64> = (addr..addr + size).collect();
        if run_chunk != Some(c) || span.iter().any(|b| run_bytes.contains(b)) {
            close(&mut run_bytes, &mut requests, &mut bytes);
        }
        run_chunk = Some(c);
        run_bytes.extend(span);
        if run_bytes.len() as u64 == chunk {
            close(&mut run_bytes, &mut requests, &mut bytes);
            run_chunk = None;
        }
    }
    close(&mut run_bytes, &mut requests, &mut bytes);
    (requests, bytes)
}

pub fn check_wc_stream(writes: &[(u64, u64)], chunk: u64) -> Result<(), String> {
    let got = wc_write_stream(writes.iter().copied(), chunk);
    let total: u64 = writes.iter().map(|w| w.1).sum();
    if got.emitted_bytes != total {
        return Err(format!("emitted {} bytes of {total}", got.emitted_bytes));
    }
    let lower = total.div_ceil(chunk);
    if got.emitted_requests < lower {
        return Err(format!("{} requests is below the bound {lower}", got.emitted_requests));
    }
    let oracle = run_length_oracle(writes, chunk);
    if (got.emitted_requests, got.emitted_bytes) != oracle {
        return Err(format!("model {got:?} vs run-length oracle {oracle:?}"));
    }
    Ok(())
}

/// A stream that fills chunks front to back with no gaps, starting on a
/// chunk boundary and ending on one.
pub fn contiguous_stream(rng: &mut ChaCha8Rng, chunk: u64, chunks: u64) -> Vec<(u64, u64)> {
    let start = rng.gen_range(0..1024) * chunk;
    let end = start + chunks * chunk;
    let mut out = Vec::new();
    let mut addr = start;
    while addr < end {
        let room = chunk - addr % chunk;
        let size = rng.gen_range(1..=room);
        out.push((addr, size));
        addr += size;
    }
    out
}

// ------------------------------------------------------------ bandwidth

pub fn random_transfer_spec(rng: &mut ChaCha8Rng) -> TransferSpec {
    let direction = Direction::ALL[rng.gen_range(0..3)];
    let legal: Vec<InterfacePath> = InterfacePath::ALL
        .into_iter()
        .filter(|p| p.is_legal_for(direction))
        .collect();
    let path = legal[rng.gen_range(0..legal.len())];
    // log-uniform from 1 byte to 8 MiB
    let size = (2f64.powf(rng.gen_range(0.0..23.0)) as u64).max(1);
    let pre_state = match rng.gen_range(0..4) {
        0 => None,
        1 => Some(PreState::Written),
        2 => Some(PreState::Read),
        _ => Some(PreState::Flushed),
    };
    TransferSpec {
        size_bytes: size,
        direction,
        path,
        pre_state,
        base_addr: rng.gen_range(0..FOREIGN_BASE / 2),
    }
}

pub fn check_bandwidth_bound(spec: &TransferSpec, config: &PlatformConfig, params: &CalibrationParams) -> Result<(), String> {
    let peak = peak_bandwidth(config).map_err(|e| e.to_string())?;
    let r = simulate_transfer(spec, CacheState::fresh(config), config, params).map_err(|e| e.to_string())?;
    if !(r.effective_bandwidth.is_finite() && r.effective_bandwidth > 0.0) {
        return Err(format!("{spec:?}: bandwidth {}", r.effective_bandwidth));
    }
    if r.effective_bandwidth > peak * (1.0 + 1e-12) {
        return Err(format!("{spec:?}: {} B/s above peak {peak}", r.effective_bandwidth));
    }
    Ok(())
}

// ---------------------------------------------------------- calibration

/// Coefficients drawn inside the region where every anchor stays above
/// the bus-rate floor, so the fit problem is exactly linear.
pub fn random_params(rng: &mut ChaCha8Rng) -> CalibrationParams {
    let mut p = CalibrationParams::default();
    p.hp.startup_cycles = rng.gen_range(5.0..60.0);
    p.hpc.startup_cycles = rng.gen_range(5.0..120.0);
    p.hpc.snoop_per_beat_cycles = rng.gen_range(0.02..0.5);
    p.hpc.cached_tx_per_byte_penalty_s = rng.gen_range(2e-10..2e-9);
    p.hpc.rx_derate = rng.gen_range(0.8..0.999);
    p.acp.hit_per_beat_cycles = rng.gen_range(1.05..2.0);
    p.acp.miss_per_beat_cycles = rng.gen_range(2.5..8.0);
    p
}

/// Synthetic anchors: the shipped anchor specs, measured with `truth`.
pub fn synthetic_anchors(truth: &CalibrationParams, config: &PlatformConfig) -> Vec<Anchor> {
    shipped_anchors()
        .into_par_iter()
        .map(|a| {
            let r = simulate_transfer(&a.spec(), CacheState::fresh(config), config, truth).expect("anchor spec is legal");
            Anchor {
                bandwidth_bps: r.effective_bandwidth,
                source: "synthetic".into(),
                ..a
            }
        })
        .collect()
}

pub fn param_vector(p: &CalibrationParams) -> [(&'static str, f64); 7] {
    [
        ("hp.startup_cycles", p.hp.startup_cycles),
        ("hpc.startup_cycles", p.hpc.startup_cycles),
        ("hpc.snoop_per_beat_cycles", p.hpc.snoop_per_beat_cycles),
        ("hpc.cached_tx_per_byte_penalty_s", p.hpc.cached_tx_per_byte_penalty_s),
        ("hpc.rx_derate", p.hpc.rx_derate),
        ("acp.hit_per_beat_cycles", p.acp.hit_per_beat_cycles),
        ("acp.miss_per_beat_cycles", p.acp.miss_per_beat_cycles),
    ]
}

/// Fits anchors generated from `truth` and checks both the recovered
/// coefficients and the re-simulated bandwidths within 1%.
pub fn check_calibration_round_trip(truth: &CalibrationParams, config: &PlatformConfig) -> Result<(), String> {
    let anchors = synthetic_anchors(truth, config);
    let fit = calibrate(&anchors, config).map_err(|e| e.to_string())?;
    for ((name, want), (_, got)) in param_vector(truth).into_iter().zip(param_vector(&fit.params)) {
        if ((got - want) / want).abs() > 0.01 {
            return Err(format!("{name}: fitted {got}, true {want}"));
        }
    }
    anchors.par_iter().try_for_each(|a| {
        let r = simulate_transfer(&a.spec(), CacheState::fresh(config), config, &fit.params).map_err(|e| e.to_string())?;
        let rel = (r.effective_bandwidth - a.bandwidth_bps) / a.bandwidth_bps;
        if rel.abs() > 0.01 {
            return Err(format!("{} {} {:?} {}: off by {:.3}%", a.path, a.direction, a.pre_state, a.size_bytes, rel * 100.0));
        }
        Ok(())
    })
}
