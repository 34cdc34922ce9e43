//! CPU-side costs of each coherence method: slow loads from
//! non-cacheable memory, irregular non-cacheable stores that the
//! write-combine buffer cannot merge, and cache maintenance plus the
//! memory barrier that follows each maintained buffer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::platform::{RegionKind, WritePattern};
use crate::units::{self, KvDocument};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwCostParams {
    pub cacheable_read_bps: f64,
    pub cacheable_write_bps: f64,
    /// Slowdown of loads from non-cacheable memory.
    pub nc_read_penalty: f64,
    /// Slowdown of irregular non-cacheable stores while the working set fits in L2.
    pub nc_irregular_write_penalty_small: f64,
    /// Same, once the working set is larger than L2.
    pub nc_irregular_write_penalty_large: f64,
    pub maintenance_per_byte_s: f64,
    /// Cost of one global memory barrier on an idle system.
    pub barrier_s: f64,
    /// Barrier slowdown when memory-intensive work runs alongside.
    pub barrier_contended_multiplier: f64,
}

impl Default for SwCostParams {
    fn default() -> Self {
        Self {
            cacheable_read_bps: 3.0e9,
            cacheable_write_bps: 2.0e9,
            nc_read_penalty: 30.0,
            nc_irregular_write_penalty_small: 4.0,
            nc_irregular_write_penalty_large: 1.33,
            maintenance_per_byte_s: 0.01e-9,
            barrier_s: 40e-6,
            barrier_contended_multiplier: 2.0,
        }
    }
}

impl SwCostParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cacheable_read_bps", self.cacheable_read_bps),
            ("cacheable_write_bps", self.cacheable_write_bps),
            ("maintenance_per_byte_s", self.maintenance_per_byte_s),
            ("barrier_s", self.barrier_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("sw_cost.{name} must be positive, got {v}")));
            }
        }
        let penalties = [
            ("nc_read_penalty", self.nc_read_penalty),
            ("nc_irregular_write_penalty_small", self.nc_irregular_write_penalty_small),
            ("nc_irregular_write_penalty_large", self.nc_irregular_write_penalty_large),
            ("barrier_contended_multiplier", self.barrier_contended_multiplier),
        ];
        for (name, v) in penalties {
            if !(v.is_finite() && v >= 1.0) {
                return Err(Error::Config(format!("sw_cost.{name} must be >= 1, got {v}")));
            }
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, doc: &KvDocument, section: &str) -> Result<()> {
        for e in doc.section(section) {
            match e.key.as_str() {
                "cacheable_read_bps" | "cacheable_read" => self.cacheable_read_bps = doc.convert(e, units::parse_rate)?,
                "cacheable_write_bps" | "cacheable_write" => {
                    self.cacheable_write_bps = doc.convert(e, units::parse_rate)?
                }
                "nc_read_penalty" => self.nc_read_penalty = doc.convert(e, units::parse_real)?,
                "nc_irregular_write_penalty_small" => {
                    self.nc_irregular_write_penalty_small = doc.convert(e, units::parse_real)?
                }
                "nc_irregular_write_penalty_large" => {
                    self.nc_irregular_write_penalty_large = doc.convert(e, units::parse_real)?
                }
                "maintenance_per_byte_s" | "maintenance_per_byte" => {
                    self.maintenance_per_byte_s = doc.convert(e, units::parse_duration)?
                }
                "barrier_s" | "barrier" => self.barrier_s = doc.convert(e, units::parse_duration)?,
                "barrier_contended_multiplier" => {
                    self.barrier_contended_multiplier = doc.convert(e, units::parse_real)?
                }
                _ => return Err(doc.unknown_key(e)),
            }
        }
        self.validate()
    }

    /// Every time-valued parameter divided by `factor` (rates multiplied).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            cacheable_read_bps: self.cacheable_read_bps * factor,
            cacheable_write_bps: self.cacheable_write_bps * factor,
            maintenance_per_byte_s: self.maintenance_per_byte_s / factor,
            barrier_s: self.barrier_s / factor,
            ..self.clone()
        }
    }
}

/// Time for the CPU to load `bytes` from a region.
pub fn read_cost(kind: RegionKind, bytes: u64, params: &SwCostParams) -> f64 {
    let base = bytes as f64 / params.cacheable_read_bps;
    match kind {
        RegionKind::Cacheable => base,
        RegionKind::NonCacheable => base * params.nc_read_penalty,
    }
}

/// Time for sequential stores. Write-combining makes non-cacheable
/// sequential stores as fast as cacheable ones.
pub fn sequential_write_cost(_kind: RegionKind, bytes: u64, params: &SwCostParams) -> f64 {
    bytes as f64 / params.cacheable_write_bps
}

/// `size / read_rate + size / write_rate` for a `memcpy` between regions.
pub fn memcpy_cost(src: RegionKind, dst: RegionKind, size: u64, params: &SwCostParams) -> f64 {
    read_cost(src, size, params) + sequential_write_cost(dst, size, params)
}

/// Irregular (transpose-like) stores over a working set. Non-cacheable
/// destinations lose write-combining; the slowdown depends on whether the
/// working set would have fit in L2.
pub fn irregular_write_cost(dst: RegionKind, working_set_bytes: u64, l2_size: u64, params: &SwCostParams) -> f64 {
    let base = working_set_bytes as f64 / params.cacheable_write_bps;
    let factor = match dst {
        RegionKind::Cacheable => 1.0,
        RegionKind::NonCacheable if working_set_bytes <= l2_size => params.nc_irregular_write_penalty_small,
        RegionKind::NonCacheable => params.nc_irregular_write_penalty_large,
    };
    base * factor
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MaintenanceCost {
    pub flush_s: f64,
    pub barrier_s: f64,
    pub total_s: f64,
}

/// Flush or invalidate each buffer, then one barrier per buffer. The cost
/// is the same for either transfer direction.
pub fn maintenance_cost(buffers: &[u64], contended: bool, params: &SwCostParams) -> MaintenanceCost {
    let bytes: u64 = buffers.iter().sum();
    let flush_s = bytes as f64 * params.maintenance_per_byte_s;
    let per_barrier = if contended {
        params.barrier_s * params.barrier_contended_multiplier
    } else {
        params.barrier_s
    };
    let barrier_s = buffers.len() as f64 * per_barrier;
    MaintenanceCost {
        flush_s,
        barrier_s,
        total_s: flush_s + barrier_s,
    }
}

/// The memory side of one CPU pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpuStage {
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub pattern: WritePattern,
    pub src_kind: RegionKind,
    pub dst_kind: RegionKind,
}

/// Baseline (all-cacheable) time and the extra time caused by the
/// stage's region kinds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageCost {
    pub baseline_s: f64,
    pub penalty_s: f64,
}

impl StageCost {
    pub fn total_s(&self) -> f64 {
        self.baseline_s + self.penalty_s
    }
}

fn stage_time(stage: &CpuStage, l2_size: u64, params: &SwCostParams) -> f64 {
    let read = read_cost(stage.src_kind, stage.bytes_read, params);
    // Makeable-sequential stores are priced as already rewritten.
    let write = match stage.pattern {
        WritePattern::Sequential | WritePattern::MakeableSequential => {
            sequential_write_cost(stage.dst_kind, stage.bytes_written, params)
        }
        WritePattern::Irregular => irregular_write_cost(stage.dst_kind, stage.bytes_written, l2_size, params),
    };
    read + write
}

pub fn cpu_stage_breakdown(stage: &CpuStage, l2_size: u64, params: &SwCostParams) -> StageCost {
    let cacheable = CpuStage {
        src_kind: RegionKind::Cacheable,
        dst_kind: RegionKind::Cacheable,
        ..*stage
    };
    let baseline_s = stage_time(&cacheable, l2_size, params);
    let actual = stage_time(stage, l2_size, params);
    StageCost {
        baseline_s,
        penalty_s: (actual - baseline_s).max(0.0),
    }
}

pub fn cpu_stage_cost(stage: &CpuStage, l2_size: u64, params: &SwCostParams) -> f64 {
    cpu_stage_breakdown(stage, l2_size, params).total_s()
}

#[cfg(test)]
mod tests {
    use super::*;
    use RegionKind::*;

    const MIB: u64 = 1 << 20;

    #[test]
    fn nc_reads_pay_thirty_times() {
        let p = SwCostParams::default();
        let ratio = read_cost(NonCacheable, MIB, &p) / read_cost(Cacheable, MIB, &p);
        assert!((ratio - 30.0).abs() < 1e-9);
        let nc_to_c = memcpy_cost(NonCacheable, Cacheable, MIB, &p);
        let c_to_c = memcpy_cost(Cacheable, Cacheable, MIB, &p);
        assert!(nc_to_c > 10.0 * c_to_c);
    }

    #[test]
    fn nc_sequential_writes_are_free() {
        let p = SwCostParams::default();
        let a = memcpy_cost(Cacheable, NonCacheable, MIB, &p);
        let b = memcpy_cost(Cacheable, Cacheable, MIB, &p);
        assert!((a / b - 1.0).abs() < 0.10);
    }

    #[test]
    fn memcpy_is_linear() {
        let p = SwCostParams::default();
        let one = memcpy_cost(NonCacheable, NonCacheable, MIB, &p);
        let two = memcpy_cost(NonCacheable, NonCacheable, 2 * MIB, &p);
        assert!((two / one - 2.0).abs() < 1e-12);
    }

    #[test]
    fn transpose_regimes() {
        let p = SwCostParams::default();
        let l2 = MIB;
        let small = irregular_write_cost(NonCacheable, 256 << 10, l2, &p) / irregular_write_cost(Cacheable, 256 << 10, l2, &p);
        let large = irregular_write_cost(NonCacheable, 16 * MIB, l2, &p) / irregular_write_cost(Cacheable, 16 * MIB, l2, &p);
        assert!((small - 4.0).abs() < 1e-9);
        assert!((large - 1.33).abs() < 1e-9);
        assert_eq!(
            irregular_write_cost(Cacheable, 4096, l2, &p),
            sequential_write_cost(Cacheable, 4096, &p)
        );
    }

    #[test]
    fn maintenance() {
        let p = SwCostParams::default();
        assert_eq!(maintenance_cost(&[], true, &p), MaintenanceCost::default());
        let idle = maintenance_cost(&[4096, 4096], false, &p);
        let busy = maintenance_cost(&[4096, 4096], true, &p);
        assert_eq!(idle.barrier_s, 2.0 * p.barrier_s);
        assert_eq!(busy.barrier_s, idle.barrier_s * p.barrier_contended_multiplier);
        assert_eq!(idle.flush_s, busy.flush_s);
        assert_eq!(idle.total_s, idle.flush_s + idle.barrier_s);
    }

    #[test]
    fn stage_costs() {
        let p = SwCostParams::default();
        let empty = CpuStage {
            bytes_read: 0,
            bytes_written: 0,
            pattern: WritePattern::Irregular,
            src_kind: NonCacheable,
            dst_kind: NonCacheable,
        };
        assert_eq!(cpu_stage_cost(&empty, MIB, &p), 0.0);

        let gray = |src| CpuStage {
            bytes_read: 3 * MIB,
            bytes_written: 0,
            pattern: WritePattern::Sequential,
            src_kind: src,
            dst_kind: Cacheable,
        };
        let ratio = cpu_stage_cost(&gray(NonCacheable), MIB, &p) / cpu_stage_cost(&gray(Cacheable), MIB, &p);
        assert!((ratio - 30.0).abs() < 1e-9);

        let quant = |dst| CpuStage {
            bytes_read: 0,
            bytes_written: MIB,
            pattern: WritePattern::Sequential,
            src_kind: Cacheable,
            dst_kind: dst,
        };
        let b = cpu_stage_breakdown(&quant(NonCacheable), MIB, &p);
        assert_eq!(b.penalty_s, 0.0);
        assert_eq!(b.total_s(), cpu_stage_cost(&quant(Cacheable), MIB, &p));
    }

    #[test]
    fn scaling_divides_every_time() {
        let p = SwCostParams::default();
        let q = p.scaled(2.0);
        let m = maintenance_cost(&[MIB], true, &p);
        let n = maintenance_cost(&[MIB], true, &q);
        assert_eq!(n.total_s * 2.0, m.total_s);
        assert_eq!(read_cost(NonCacheable, MIB, &q) * 2.0, read_cost(NonCacheable, MIB, &p));
    }
}
