//! Peak interconnect bandwidth of the default platform, and of one loaded
//! from a settings file with a faster bus.

use iocc::config::Settings;
use iocc::platform::{peak_bandwidth, PlatformConfig};

fn main() -> iocc::Result<()> {
    let cfg = PlatformConfig::default();
    println!("default: {}-bit bus at {} Hz = {:e} B/s", cfg.bus_width_bits, cfg.bus_freq_hz, peak_bandwidth(&cfg)?);

    let text = "[platform]\nbus_freq_hz = 400MHz\n\n[sw_cost]\nbarrier_s = 20us\n";
    let settings = Settings::parse(text, "inline.conf")?;
    println!(
        "overclocked: {:e} B/s, barrier {:.0} us",
        peak_bandwidth(&settings.platform)?,
        settings.sw_cost.barrier_s * 1e6
    );
    Ok(())
}
