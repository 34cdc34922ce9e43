//! CPU-side costs: reading and irregular writing in each memory region,
//! and cache maintenance against transfer time.

use iocc::platform::{PlatformConfig, RegionKind};
use iocc::swcost::{irregular_write_cost, maintenance_cost, read_cost, SwCostParams};
use iocc::units::format_size;

fn main() {
    let sw = SwCostParams::default();
    let l2 = PlatformConfig::default().l2_size_bytes;
    for size in [4 << 10, 64 << 10, 1 << 20, 16 << 20, 64 << 20] {
        let nc_read = read_cost(RegionKind::NonCacheable, size, &sw);
        let c_read = read_cost(RegionKind::Cacheable, size, &sw);
        let nc_irr = irregular_write_cost(RegionKind::NonCacheable, size, l2, &sw);
        let c_irr = irregular_write_cost(RegionKind::Cacheable, size, l2, &sw);
        let m = maintenance_cost(&[size], false, &sw);
        println!(
            "{:>6}: read NC/C {:5.1}x, irregular write NC/C {:4.2}x, maintenance {:.1} us",
            format_size(size),
            nc_read / c_read,
            nc_irr / c_irr,
            m.total_s * 1e6
        );
    }
}
