//! Runs the shipped DoG, SGEMM and DNN pipelines with the advised
//! assignment and every single-path baseline.

use iocc::interconnect::CalibrationParams;
use iocc::pipeline::{compare_file, format_comparison_table, shipped_scenarios};
use iocc::platform::PlatformConfig;
use iocc::swcost::SwCostParams;

fn main() -> iocc::Result<()> {
    let cfg = PlatformConfig::default();
    let params = CalibrationParams::default();
    let sw = SwCostParams::default();
    for file in shipped_scenarios() {
        println!("{}", file.path.display());
        print!("{}", format_comparison_table(&compare_file(&file, &cfg, &params, &sw)?));
        println!();
    }
    Ok(())
}
