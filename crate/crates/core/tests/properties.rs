mod common;

use common::*;
use iocc::interconnect::CalibrationParams;
use iocc::platform::{Direction, InterfacePath, PlatformConfig, PreState, TransferSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cache_op() -> impl Strategy<Value = CacheOp> {
    prop_oneof![
        8 => (0..32 * KIB, any::<bool>(), prop::bool::weighted(0.8))
            .prop_map(|(addr, write, allocate)| CacheOp::Access { addr, write, allocate }),
        1 => (0..32 * KIB, 0..2 * KIB).prop_map(|(base, len)| CacheOp::Flush { base, len }),
        1 => (0..32 * KIB, 0..2 * KIB).prop_map(|(base, len)| CacheOp::Invalidate { base, len }),
    ]
}

fn wc_write(chunk: u64) -> impl Strategy<Value = (u64, u64)> {
    (0..16 * chunk).prop_flat_map(move |addr| {
        let room = chunk - addr % chunk;
        (Just(addr), 1..=room)
    })
}

fn transfer_spec() -> impl Strategy<Value = TransferSpec> {
    let pre = prop_oneof![
        Just(None),
        Just(Some(PreState::Written)),
        Just(Some(PreState::Read)),
        Just(Some(PreState::Flushed)),
    ];
    (0usize..3, 0usize..4, 0.0f64..23.0, pre, 0u64..1 << 40).prop_map(|(d, p, log_size, pre_state, base_addr)| {
        let direction = Direction::ALL[d];
        let legal: Vec<InterfacePath> = InterfacePath::ALL
            .into_iter()
            .filter(|p| p.is_legal_for(direction))
            .collect();
        TransferSpec {
            size_bytes: (2f64.powf(log_size) as u64).max(1),
            direction,
            path: legal[p % legal.len()],
            pre_state,
            base_addr,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cache_matches_list_oracle(seed in any::<u64>(), ops in prop::collection::vec(cache_op(), 1..300)) {
        let cfg = small_cache_config(seed);
        prop_assert_eq!(check_cache_ops(&cfg, &ops), Ok(()));
    }

    #[test]
    fn write_combine_matches_run_length_oracle(
        (chunk, writes) in (2u32..8).prop_flat_map(|p| (Just(1u64 << p), prop::collection::vec(wc_write(1 << p), 0..200))),
    ) {
        prop_assert_eq!(check_wc_stream(&writes, chunk), Ok(()));
    }

    #[test]
    fn contiguous_streams_meet_the_request_bound(seed in any::<u64>(), chunks in 1u64..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chunk = 16;
        let stream = contiguous_stream(&mut rng, chunk, chunks);
        let got = iocc::cache::wc_write_stream(stream.iter().copied(), chunk);
        prop_assert_eq!(got.emitted_requests, chunks);
        prop_assert_eq!(got.emitted_bytes, chunks * chunk);
    }

    #[test]
    fn bandwidth_never_exceeds_peak(spec in transfer_spec()) {
        let cfg = PlatformConfig::default();
        prop_assert_eq!(check_bandwidth_bound(&spec, &cfg, &CalibrationParams::default()), Ok(()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn calibration_recovers_synthetic_params(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_params(&mut rng);
        prop_assert_eq!(check_calibration_round_trip(&truth, &PlatformConfig::default()), Ok(()));
    }
}

#[test]
fn gapped_streams_exceed_the_request_bound() {
    // every other 4-byte slot: each chunk needs two visits
    let writes: Vec<(u64, u64)> = (0..64).map(|i| ((i % 2) * 64 + (i / 2) * 4, 4)).collect();
    let got = iocc::cache::wc_write_stream(writes.iter().copied(), 16);
    assert_eq!(got.emitted_bytes, 256);
    assert!(got.emitted_requests > 256 / 16);
}
