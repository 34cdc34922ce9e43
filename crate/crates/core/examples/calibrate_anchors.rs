//! Fits the transfer model to the shipped anchor points and prints the
//! per-anchor residuals.

use iocc::interconnect::{calibrate, format_residuals, shipped_anchors};
use iocc::platform::PlatformConfig;

fn main() -> iocc::Result<()> {
    let cfg = PlatformConfig::default();
    let fit = calibrate(&shipped_anchors(), &cfg)?;
    print!("{}", format_residuals(&fit));
    println!("fitted: {:#?}", fit.params);
    Ok(())
}
