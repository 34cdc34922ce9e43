//! Replays CPU writes into the L2 model and shows how much of a buffer
//! stays resident, before and after a flush.

use iocc::cache::{AccessKind, CacheState};
use iocc::platform::PlatformConfig;
use iocc::units::format_size;

fn main() -> iocc::Result<()> {
    let cfg = PlatformConfig::default();
    let base = 0x1000_0000;
    for size in [64 << 10, 512 << 10, 1 << 20, 4 << 20] {
        let mut cache = CacheState::fresh(&cfg);
        cache.touch_range(base, size, AccessKind::Write);
        let resident = cache.resident_fraction(base, size)?;
        let flush = cache.flush_range(base, size);
        println!(
            "{:>6}: {:5.1}% resident after writing, {} lines cleaned, {:.1}% after flush",
            format_size(size),
            resident * 100.0,
            flush.lines_cleaned,
            cache.resident_fraction(base, size)? * 100.0
        );
    }
    Ok(())
}
