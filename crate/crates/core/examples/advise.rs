//! Tree recommendation with its rationale, then the simulated cost
//! ranking, for a few workload profiles.

use iocc::advisor::{format_ranking, rank_all, recommend};
use iocc::interconnect::CalibrationParams;
use iocc::platform::{ConsumeLatency, CpuRole, Direction, PlatformConfig, WorkloadProfile, WritePattern};
use iocc::swcost::SwCostParams;

fn main() -> iocc::Result<()> {
    let cfg = PlatformConfig::default();
    let params = CalibrationParams::default();
    let sw = SwCostParams::default();
    let base = WorkloadProfile {
        buffer_bytes: 32 << 10,
        direction: Direction::CpuToPl,
        cpu_role: CpuRole::MixedReadWrite,
        write_pattern: WritePattern::Irregular,
        consume_latency: ConsumeLatency::Immediate,
        intervening_traffic_bytes: 0,
        background_memory_intensive: false,
    };
    let profiles = [
        base,
        WorkloadProfile { buffer_bytes: 1 << 20, consume_latency: ConsumeLatency::Delayed, ..base },
        WorkloadProfile { buffer_bytes: 32 << 20, direction: Direction::PlToCpu, ..base },
    ];
    for p in &profiles {
        print!("{}", recommend(p));
        print!("{}", format_ranking(p, &rank_all(p, &cfg, &params, &sw)?));
        println!();
    }
    Ok(())
}
