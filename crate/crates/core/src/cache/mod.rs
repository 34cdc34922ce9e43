//! Model of the shared L2: set-associative lookup with seeded random
//! replacement, range maintenance, and residency queries.
//!
//! Set index is `(addr / line) % num_sets` over a flat physical address
//! space. There is no L1. Victims are drawn from a ChaCha8 stream seeded
//! with [`PlatformConfig::seed`], so a given seed and operation sequence
//! always produce the same state.

mod write_combine;

pub use write_combine::{
    classify_write_stream, summarize_stream, wc_write_stream, AllocationDecision, StreamSummary, WcBuffer,
    WcSummary,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::platform::{PlatformConfig, PreState};

/// Base address of the unrelated data a warm cache starts with. Far
/// above anything a transfer or scenario allocates.
pub const FOREIGN_BASE: u64 = 1 << 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvictedLine {
    /// Line-aligned address of the victim.
    pub addr: u64,
    pub dirty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOutcome {
    Hit,
    Miss { evicted: Option<EvictedLine> },
}

impl AccessOutcome {
    pub fn is_hit(&self) -> bool {
        matches!(self, AccessOutcome::Hit)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub writebacks: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlushOutcome {
    /// Dirty lines written back.
    pub lines_cleaned: u64,
    /// Lines dropped from the cache, dirty or not.
    pub lines_invalidated: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Slot {
    tag: u64,
    valid: bool,
    dirty: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheState {
    line_bytes: u64,
    num_sets: u64,
    ways: usize,
    slots: Vec<Slot>,
    rng: ChaCha8Rng,
    pub stats: CacheStats,
}

impl CacheState {
    /// An empty cache.
    pub fn new(config: &PlatformConfig) -> Self {
        let num_sets = config.num_sets().max(1);
        let ways = config.l2_ways.max(1) as usize;
        Self {
            line_bytes: config.line_bytes().max(1),
            num_sets,
            ways,
            slots: vec![Slot::default(); num_sets as usize * ways],
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            stats: CacheStats::default(),
        }
    }

    /// A cache whose every way holds a clean line of unrelated data, as
    /// after the OS and other tasks have run for a while.
    pub fn warm(config: &PlatformConfig) -> Self {
        let mut c = Self::new(config);
        for set in 0..c.num_sets {
            for way in 0..c.ways {
                let addr = FOREIGN_BASE + (way as u64 * c.num_sets + set) * c.line_bytes;
                let (s, tag) = c.locate(addr);
                debug_assert_eq!(s, set as usize);
                c.slots[s * c.ways + way] = Slot {
                    tag,
                    valid: true,
                    dirty: false,
                };
            }
        }
        c
    }

    /// The starting cache for an independent run: warm or empty per
    /// [`PlatformConfig::warm_start`].
    pub fn fresh(config: &PlatformConfig) -> Self {
        if config.warm_start {
            Self::warm(config)
        } else {
            Self::new(config)
        }
    }

    pub fn line_bytes(&self) -> u64 {
        self.line_bytes
    }

    pub fn num_sets(&self) -> u64 {
        self.num_sets
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn capacity_lines(&self) -> usize {
        self.slots.len()
    }

    fn locate(&self, addr: u64) -> (usize, u64) {
        let line = addr / self.line_bytes;
        ((line % self.num_sets) as usize, line / self.num_sets)
    }

    fn addr_of(&self, set: usize, tag: u64) -> u64 {
        (tag * self.num_sets + set as u64) * self.line_bytes
    }

    fn find(&self, set: usize, tag: u64) -> Option<usize> {
        let base = set * self.ways;
        (base..base + self.ways).find(|&i| self.slots[i].valid && self.slots[i].tag == tag)
    }

    /// Looks up `addr` without touching state or counters. Returns the
    /// dirty bit when the line is resident.
    pub fn probe(&self, addr: u64) -> Option<bool> {
        let (set, tag) = self.locate(addr);
        self.find(set, tag).map(|i| self.slots[i].dirty)
    }

    pub fn access(&mut self, addr: u64, kind: AccessKind, allocate: bool) -> AccessOutcome {
        let (set, tag) = self.locate(addr);
        if let Some(i) = self.find(set, tag) {
            self.stats.hits += 1;
            if kind == AccessKind::Write {
                self.slots[i].dirty = true;
            }
            return AccessOutcome::Hit;
        }
        self.stats.misses += 1;
        if !allocate {
            return AccessOutcome::Miss { evicted: None };
        }
        let base = set * self.ways;
        let empty = (base..base + self.ways).find(|&i| !self.slots[i].valid);
        let (slot, evicted) = match empty {
            Some(i) => (i, None),
            None => {
                let i = base + self.rng.gen_range(0..self.ways);
                let victim = self.slots[i];
                self.stats.evictions += 1;
                if victim.dirty {
                    self.stats.writebacks += 1;
                }
                let evicted = EvictedLine {
                    addr: self.addr_of(set, victim.tag),
                    dirty: victim.dirty,
                };
                (i, Some(evicted))
            }
        };
        self.slots[slot] = Slot {
            tag,
            valid: true,
            dirty: kind == AccessKind::Write,
        };
        AccessOutcome::Miss { evicted }
    }

    /// Line-aligned addresses of every line overlapping `[base, base + len)`.
    pub fn lines_spanned(&self, base: u64, len: u64) -> impl Iterator<Item = u64> {
        let lb = self.line_bytes;
        let range = if len == 0 {
            1..1
        } else {
            base / lb..(base + len - 1) / lb + 1
        };
        range.map(move |l| l * lb)
    }

    /// Drops one line; returns its dirty bit if it was resident.
    pub(crate) fn drop_line(&mut self, addr: u64) -> Option<bool> {
        let (set, tag) = self.locate(addr);
        let i = self.find(set, tag)?;
        let dirty = self.slots[i].dirty;
        self.slots[i] = Slot::default();
        Some(dirty)
    }

    /// Clean + invalidate every line overlapping the range.
    pub fn flush_range(&mut self, base: u64, len: u64) -> FlushOutcome {
        let mut out = FlushOutcome::default();
        let lines: Vec<u64> = self.lines_spanned(base, len).collect();
        for addr in lines {
            if let Some(dirty) = self.drop_line(addr) {
                out.lines_invalidated += 1;
                if dirty {
                    out.lines_cleaned += 1;
                    self.stats.writebacks += 1;
                }
            }
        }
        out
    }

    /// Invalidate without writeback: dirty data in the range is discarded.
    pub fn invalidate_range(&mut self, base: u64, len: u64) -> u64 {
        let lines: Vec<u64> = self.lines_spanned(base, len).collect();
        lines.into_iter().filter(|&a| self.drop_line(a).is_some()).count() as u64
    }

    /// Number of resident lines overlapping the range, and how many of those are dirty.
    pub fn resident_lines(&self, base: u64, len: u64) -> (u64, u64) {
        let mut valid = 0;
        let mut dirty = 0;
        for addr in self.lines_spanned(base, len) {
            if let Some(d) = self.probe(addr) {
                valid += 1;
                dirty += u64::from(d);
            }
        }
        (valid, dirty)
    }

    /// Share of the lines spanned by the range that are resident.
    pub fn resident_fraction(&self, base: u64, len: u64) -> Result<f64> {
        if len == 0 {
            return Err(Error::Domain("resident_fraction of an empty range".into()));
        }
        let total = self.lines_spanned(base, len).count() as f64;
        let (valid, _) = self.resident_lines(base, len);
        Ok(valid as f64 / total)
    }

    /// Total valid lines in the cache.
    pub fn valid_lines(&self) -> usize {
        self.slots.iter().filter(|s| s.valid).count()
    }

    /// Line addresses and dirty bits resident in `set`, in way order.
    pub fn set_contents(&self, set: usize) -> Vec<(u64, bool)> {
        self.slots[set * self.ways..(set + 1) * self.ways]
            .iter()
            .filter(|s| s.valid)
            .map(|s| (self.addr_of(set, s.tag), s.dirty))
            .collect()
    }

    /// Touches every line of the range with allocating accesses.
    pub fn touch_range(&mut self, base: u64, len: u64, kind: AccessKind) {
        let lines: Vec<u64> = self.lines_spanned(base, len).collect();
        for addr in lines {
            self.access(addr, kind, true);
        }
    }
}

/// Brings the buffer into the state a raw-bandwidth test starts from.
pub fn prepare_pre_state(cache: &mut CacheState, base: u64, len: u64, pre: PreState) {
    match pre {
        PreState::Written => cache.touch_range(base, len, AccessKind::Write),
        PreState::Read => cache.touch_range(base, len, AccessKind::Read),
        PreState::Flushed => {
            cache.flush_range(base, len);
        }
    }
}
