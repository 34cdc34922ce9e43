pub mod advisor;
pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod interconnect;
pub mod pipeline;
pub mod platform;
pub mod swcost;
mod table;
pub mod units;

pub use error::{Error, Result};
