use iocc::interconnect::{calibrate, parse_anchors, shipped_anchors, CalibrationParams};
use iocc::platform::{InterfacePath, PlatformConfig};
use iocc::Error;

#[test]
fn shipped_defaults_match_anchor_fit() {
    let fit = calibrate(&shipped_anchors(), &PlatformConfig::default()).unwrap();
    let shipped = CalibrationParams::default();
    let pairs = [
        (fit.params.hp.startup_cycles, shipped.hp.startup_cycles),
        (fit.params.hpc.startup_cycles, shipped.hpc.startup_cycles),
        (fit.params.hpc.snoop_per_beat_cycles, shipped.hpc.snoop_per_beat_cycles),
        (fit.params.hpc.cached_tx_per_byte_penalty_s, shipped.hpc.cached_tx_per_byte_penalty_s),
        (fit.params.hpc.rx_derate, shipped.hpc.rx_derate),
        (fit.params.acp.hit_per_beat_cycles, shipped.acp.hit_per_beat_cycles),
        (fit.params.acp.miss_per_beat_cycles, shipped.acp.miss_per_beat_cycles),
    ];
    for (got, want) in pairs {
        assert!(((got - want) / want).abs() < 1e-4, "fit {got} vs shipped {want}");
    }
}

#[test]
fn shipped_fit_residuals_are_small() {
    let fit = calibrate(&shipped_anchors(), &PlatformConfig::default()).unwrap();
    for r in &fit.residuals {
        let limit = if r.anchor.path.is_hp() { 0.05 } else { 0.10 };
        assert!(
            r.rel_error.abs() < limit,
            "{} {} {:?} {}: {:+.2}%",
            r.anchor.path,
            r.anchor.direction,
            r.anchor.pre_state,
            r.anchor.size_bytes,
            r.rel_error * 100.0
        );
    }
    assert!(fit.params.hp.startup_cycles < 64.0);
}

#[test]
fn empty_and_partial_anchor_sets_name_what_is_missing() {
    let cfg = PlatformConfig::default();
    assert!(matches!(calibrate(&[], &cfg), Err(Error::Calibration { .. })));
    let hp_only: Vec<_> = shipped_anchors()
        .into_iter()
        .filter(|a| a.path == InterfacePath::HpNc)
        .collect();
    let e = calibrate(&hp_only, &cfg).unwrap_err().to_string();
    assert!(e.contains("HPC tx") && e.contains("HPC rx") && e.contains("ACP"), "{e}");
}

#[test]
fn anchor_file_errors_carry_line_numbers() {
    let header = "path,direction,pre_state,size_bytes,bandwidth_Bps,source\n";
    let e = parse_anchors(&format!("{header}HP_NC,tx,none,4K,4.6GB/s,a\nHPC,pl2pl,none,4K,4GB/s,b\n"), "a.csv")
        .unwrap_err()
        .to_string();
    assert!(e.starts_with("a.csv:3:"), "{e}");
    let e = parse_anchors(&format!("# comment\n{header}ACP,tx,written,lots,1GB/s,c\n"), "a.csv")
        .unwrap_err()
        .to_string();
    assert!(e.starts_with("a.csv:3:"), "{e}");
}
