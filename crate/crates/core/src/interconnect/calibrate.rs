//! Least-squares fit of [`CalibrationParams`] to measured bandwidth anchors.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{elapsed_from_features, transfer_features, CalibrationParams, TransferFeatures};
use crate::cache::CacheState;
use crate::error::{Error, Result};
use crate::platform::{Direction, InterfacePath, PlatformConfig, PreState, TransferSpec};
use crate::units;

const SHIPPED_ANCHORS: &str = include_str!("../../data/anchors.csv");

/// One measured (or figure-read) bandwidth point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub path: InterfacePath,
    pub direction: Direction,
    pub pre_state: Option<PreState>,
    pub size_bytes: u64,
    pub bandwidth_bps: f64,
    pub source: String,
}

impl Anchor {
    pub fn spec(&self) -> TransferSpec {
        TransferSpec {
            size_bytes: self.size_bytes,
            direction: self.direction,
            path: self.path,
            pre_state: self.pre_state,
            base_addr: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorResidual {
    pub anchor: Anchor,
    pub model_bandwidth: f64,
    /// `(model - anchor) / anchor`.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub params: CalibrationParams,
    pub residuals: Vec<AnchorResidual>,
}

impl Calibration {
    pub fn max_abs_rel_error(&self) -> f64 {
        self.residuals.iter().map(|r| r.rel_error.abs()).fold(0.0, f64::max)
    }
}

/// Parses an anchor CSV (`#` comments allowed). Sizes may carry suffixes
/// and bandwidths units (`4K`, `4.6GB/s`).
pub fn parse_anchors(text: &str, path: impl AsRef<Path>) -> Result<Vec<Anchor>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let expected = ["path", "direction", "pre_state", "size_bytes", "bandwidth_Bps", "source"];
    let headers = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    if headers.iter().ne(expected) {
        let line = headers.position().map_or(1, |p| p.line() as usize);
        return Err(Error::parse(path, line, format!("expected header {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::parse(path, line, msg);
        if rec.len() != expected.len() {
            return Err(bad(format!("expected {} fields, found {}", expected.len(), rec.len())));
        }
        let pre_state = match &rec[2] {
            "" | "none" | "-" => None,
            s => Some(s.parse().map_err(bad)?),
        };
        let anchor = Anchor {
            path: rec[0].parse().map_err(bad)?,
            direction: rec[1].parse().map_err(bad)?,
            pre_state,
            size_bytes: units::parse_size(&rec[3]).map_err(bad)?,
            bandwidth_bps: units::parse_rate(&rec[4]).map_err(bad)?,
            source: rec[5].to_string(),
        };
        if anchor.size_bytes == 0 {
            return Err(bad("size_bytes must be positive".into()));
        }
        if !(anchor.bandwidth_bps > 0.0) {
            return Err(bad("bandwidth must be positive".into()));
        }
        if !anchor.path.is_legal_for(anchor.direction) {
            return Err(bad(format!("{} cannot carry {} traffic", anchor.path, anchor.direction)));
        }
        out.push(anchor);
    }
    Ok(out)
}

pub fn load_anchors(path: impl AsRef<Path>) -> Result<Vec<Anchor>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_anchors(&text, path)
}

/// The checked-in anchor set the default parameters were fitted to.
pub fn shipped_anchors() -> Vec<Anchor> {
    parse_anchors(SHIPPED_ANCHORS, "data/anchors.csv").expect("shipped anchor file parses")
}

/// One weighted observation row: minimize `(w * (x . beta - y))^2`.
struct Obs {
    x: Vec<f64>,
    y: f64,
    w: f64,
}

/// Non-negative weighted least squares by enumerating active sets.
/// Returns `None` when the design matrix is rank deficient.
fn fit_nonneg(obs: &[Obs], k: usize) -> Option<Vec<f64>> {
    let n = obs.len();
    if n < k {
        return None;
    }
    let a = DMatrix::from_fn(n, k, |i, j| obs[i].x[j] * obs[i].w);
    let b = DVector::from_fn(n, |i, _| obs[i].y * obs[i].w);
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            let norm = a.column(j).norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, k, |i, j| a[(i, j)] / scale[j]);
    let sv = scaled.clone().svd(false, false).singular_values;
    let max_sv = sv.max();
    if max_sv <= 0.0 || sv.iter().filter(|&&s| s > max_sv * 1e-9).count() < k {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let cols: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
        let mut beta = vec![0.0; k];
        if !cols.is_empty() {
            let sub = DMatrix::from_fn(n, cols.len(), |i, c| scaled[(i, cols[c])]);
            let sol = sub.svd(true, true).solve(&b, 1e-12).ok()?;
            if sol.iter().any(|&v| v < 0.0) {
                continue;
            }
            for (c, &j) in cols.iter().enumerate() {
                beta[j] = sol[c] / scale[j];
            }
        }
        let resid = (0..n)
            .map(|i| {
                let fit: f64 = (0..k).map(|j| a[(i, j)] * beta[j]).sum();
                (fit - b[i]).powi(2)
            })
            .sum::<f64>();
        if best.as_ref().is_none_or(|(r, _)| resid < *r) {
            best = Some((resid, beta));
        }
    }
    best.map(|(_, beta)| beta)
}

/// Fits every coefficient to `anchors` by minimizing squared relative
/// time error (first-order equal to relative bandwidth error).
///
/// Each anchor is replayed on a fresh cache to recover its
/// [`TransferFeatures`]; those fix the linear model the fit solves.
pub fn calibrate(anchors: &[Anchor], config: &PlatformConfig) -> Result<Calibration> {
    config.check()?;
    let f_hz = config.bus_freq_hz as f64;
    let mut missing = Vec::new();
    if anchors.is_empty() {
        return Err(Error::Calibration {
            missing: vec!["any anchors (HP, HPC tx, HPC rx and ACP classes are all required)".into()],
        });
    }
    let features: Vec<TransferFeatures> = anchors
        .par_iter()
        .map(|a| {
            let mut cache = CacheState::fresh(config);
            transfer_features(&a.spec(), &mut cache, config)
        })
        .collect::<Result<_>>()?;
    let measured_cycles = |a: &Anchor| a.size_bytes as f64 / a.bandwidth_bps * f_hz;
    let class = |pred: &dyn Fn(&Anchor) -> bool| -> Vec<usize> { (0..anchors.len()).filter(|&i| pred(&anchors[i])).collect() };

    let hp_idx = class(&|a| a.path.is_hp());
    let hpc_tx_idx = class(&|a| a.path == InterfacePath::Hpc && a.direction == Direction::CpuToPl);
    let hpc_rx_idx = class(&|a| a.path == InterfacePath::Hpc && a.direction == Direction::PlToCpu);
    let acp_idx = class(&|a| a.path == InterfacePath::Acp);

    let mut params = CalibrationParams::prior(config);
    params.provenance = format!("least-squares fit to {} anchors", anchors.len());

    // HP: t*f = startup + beats
    let hp_obs: Vec<Obs> = hp_idx
        .iter()
        .map(|&i| {
            let t = measured_cycles(&anchors[i]);
            Obs {
                x: vec![1.0],
                y: t - features[i].beats as f64,
                w: 1.0 / t,
            }
        })
        .collect();
    match fit_nonneg(&hp_obs, 1) {
        Some(b) => params.hp.startup_cycles = b[0],
        None => missing.push("HP anchors (hp.startup_cycles)".to_string()),
    }

    // HPC TX: t*f - beats = startup + snoop * beats + penalty * dirty * f
    let hpc_obs: Vec<Obs> = hpc_tx_idx
        .iter()
        .map(|&i| {
            let t = measured_cycles(&anchors[i]);
            let ft = &features[i];
            Obs {
                x: vec![1.0, ft.beats as f64, ft.dirty_resident_bytes as f64 * f_hz],
                y: t - ft.beats as f64,
                w: 1.0 / t,
            }
        })
        .collect();
    match fit_nonneg(&hpc_obs, 3) {
        Some(b) => {
            params.hpc.startup_cycles = b[0];
            params.hpc.snoop_per_beat_cycles = b[1];
            params.hpc.cached_tx_per_byte_penalty_s = b[2];
        }
        None if hpc_tx_idx.is_empty() => missing.push(
            "HPC tx anchors (hpc.startup_cycles, hpc.snoop_per_beat_cycles, hpc.cached_tx_per_byte_penalty_s)".into(),
        ),
        None => {
            if hpc_tx_idx.iter().all(|&i| features[i].dirty_resident_bytes == 0) {
                missing.push("HPC tx anchors with written pre-state (hpc.cached_tx_per_byte_penalty_s)".into());
            }
            let clean_sizes: std::collections::BTreeSet<u64> = hpc_tx_idx
                .iter()
                .filter(|&&i| features[i].dirty_resident_bytes == 0)
                .map(|&i| anchors[i].size_bytes)
                .collect();
            if clean_sizes.len() < 2 {
                missing.push(
                    "HPC tx anchors with flushed pre-state at two or more sizes (hpc.startup_cycles, hpc.snoop_per_beat_cycles)"
                        .into(),
                );
            }
        }
    }

    // ACP: t*f = hit * hit_beats + miss * miss_beats
    let acp_obs: Vec<Obs> = acp_idx
        .iter()
        .map(|&i| {
            let t = measured_cycles(&anchors[i]);
            Obs {
                x: vec![features[i].hit_beats as f64, features[i].miss_beats as f64],
                y: t,
                w: 1.0 / t,
            }
        })
        .collect();
    match fit_nonneg(&acp_obs, 2) {
        Some(b) => {
            params.acp.hit_per_beat_cycles = b[0];
            params.acp.miss_per_beat_cycles = b[1];
        }
        None => {
            if acp_idx.iter().all(|&i| features[i].hit_beats == 0) {
                missing.push("ACP anchors with cached pre-state (acp.hit_per_beat_cycles)".into());
            }
            if acp_idx.iter().all(|&i| features[i].miss_beats == 0) {
                missing.push("ACP anchors with flushed pre-state (acp.miss_per_beat_cycles)".into());
            }
        }
    }

    // HPC RX: t*f = (hp.startup + beats) / rx_derate
    if !missing.iter().any(|m| m.starts_with("HP anchors")) {
        let rx_obs: Vec<Obs> = hpc_rx_idx
            .iter()
            .map(|&i| {
                let t = measured_cycles(&anchors[i]);
                Obs {
                    x: vec![params.hp.startup_cycles + features[i].beats as f64],
                    y: t,
                    w: 1.0 / t,
                }
            })
            .collect();
        match fit_nonneg(&rx_obs, 1) {
            Some(b) if b[0] > 0.0 => params.hpc.rx_derate = (1.0 / b[0]).min(1.0),
            _ => missing.push("HPC rx anchors (hpc.rx_derate)".into()),
        }
    } else if hpc_rx_idx.is_empty() {
        missing.push("HPC rx anchors (hpc.rx_derate)".into());
    }

    if !missing.is_empty() {
        return Err(Error::Calibration { missing });
    }
    params.validate()?;

    let residuals = anchors
        .iter()
        .zip(&features)
        .map(|(a, ft)| {
            let t = elapsed_from_features(a.path, a.direction, ft, config, &params);
            let model_bandwidth = a.size_bytes as f64 / t;
            AnchorResidual {
                anchor: a.clone(),
                model_bandwidth,
                rel_error: (model_bandwidth - a.bandwidth_bps) / a.bandwidth_bps,
            }
        })
        .collect();
    Ok(Calibration { params, residuals })
}

/// Aligned text table of per-anchor fit residuals.
pub fn format_residuals(cal: &Calibration) -> String {
    let mut rows = vec![vec![
        "path".to_string(),
        "direction".into(),
        "pre_state".into(),
        "size".into(),
        "anchor_GBps".into(),
        "model_GBps".into(),
        "rel_error_%".into(),
    ]];
    for r in &cal.residuals {
        let a = &r.anchor;
        rows.push(vec![
            a.path.id().to_string(),
            a.direction.id().to_string(),
            a.pre_state.map_or("none".to_string(), |p| p.id().to_string()),
            units::format_size(a.size_bytes),
            format!("{:.3}", a.bandwidth_bps / 1e9),
            format!("{:.3}", r.model_bandwidth / 1e9),
            format!("{:+.2}", r.rel_error * 100.0),
        ]);
    }
    let mut s = crate::table::render(&rows);
    s.push_str(&format!("max |rel_error| {:.2}%\n", cal.max_abs_rel_error() * 100.0));
    s
}

pub const RESIDUAL_CSV_HEADER: [&str; 7] = [
    "path",
    "direction",
    "pre_state",
    "size_bytes",
    "anchor_Bps",
    "model_Bps",
    "rel_error",
];

pub fn write_residuals_csv(cal: &Calibration, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESIDUAL_CSV_HEADER)?;
    for r in &cal.residuals {
        let a = &r.anchor;
        w.write_record([
            a.path.id().to_string(),
            a.direction.id().to_string(),
            a.pre_state.map_or("none".to_string(), |p| p.id().to_string()),
            a.size_bytes.to_string(),
            a.bandwidth_bps.to_string(),
            r.model_bandwidth.to_string(),
            r.rel_error.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
