//! Bandwidth of every path and pre-state across buffer sizes, both
//! directions, as tables.

use iocc::interconnect::{format_sweep_table, raw_bandwidth_rows, sweep, CalibrationParams};
use iocc::platform::{Direction, PlatformConfig};

fn main() -> iocc::Result<()> {
    let cfg = PlatformConfig::default();
    let params = CalibrationParams::default();
    let sizes: Vec<u64> = (0..14).map(|i| 4096 << i).collect();
    for direction in [Direction::CpuToPl, Direction::PlToCpu] {
        let records = sweep(&sizes, direction, &raw_bandwidth_rows(direction), &cfg, &params)?;
        println!("{direction}\n{}", format_sweep_table(&records, &cfg));
    }
    Ok(())
}
