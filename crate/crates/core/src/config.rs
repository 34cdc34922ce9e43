//! Settings file: platform constants, software cost parameters and
//! calibrated timing coefficients in one `key = value` document.
//!
//! ```text
//! # platform keys may sit at the top or under [platform]
//! bus_width_bits = 128
//! bus_freq = 300MHz
//! l2_size = 1MiB
//!
//! [sw_cost]
//! barrier = 40us
//!
//! [calibration]
//! hp.startup_cycles = 11.2
//! ```
//!
//! Absent keys keep their defaults. Unknown keys and sections are errors
//! reported with file and line.

use std::path::Path;

use crate::error::{Error, Result};
use crate::interconnect::CalibrationParams;
use crate::platform::PlatformConfig;
use crate::swcost::SwCostParams;
use crate::units::KvDocument;

const SECTIONS: [&str; 4] = ["", "platform", "sw_cost", "calibration"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub platform: PlatformConfig,
    pub calibration: CalibrationParams,
    pub sw_cost: SwCostParams,
}

impl Settings {
    pub fn from_kv(doc: &KvDocument) -> Result<Self> {
        if let Some(e) = doc.entries.iter().find(|e| !SECTIONS.contains(&e.section.as_str())) {
            return Err(Error::parse(
                &doc.path,
                e.line,
                format!("unknown section [{}] (expected platform, sw_cost or calibration)", e.section),
            ));
        }
        let mut s = Settings::default();
        s.platform.apply_kv(doc, "")?;
        s.platform.apply_kv(doc, "platform")?;
        s.platform.check()?;
        s.sw_cost.apply_kv(doc, "sw_cost")?;
        s.calibration.apply_kv(doc, "calibration")?;
        Ok(s)
    }

    pub fn parse(text: &str, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvDocument::parse(text, path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvDocument::load(path)?)
    }
}
