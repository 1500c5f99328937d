mod common;

use idd_core::pipeline::{run_packet, run_sequential};
use idd_core::{ChannelEstimator, EstimatorKind, GainForm, Real};
use proptest::prelude::*;

fn receive<T: Real>(s: &common::Setup<T>, d: &common::Draw<T>, kind: EstimatorKind) -> idd_core::PacketOutcome {
    let mut est = ChannelEstimator::new(kind, 2.5, GainForm::Information, &d.channel, &d.preamble_rx, &s.preamble, T::one()).unwrap();
    run_packet(&s.rx, &mut est, &d.received, &d.packet, &d.channel, &mut |_, _| {}).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn clean_channel_decodes_without_errors(seed in any::<u64>(), n_tx in 1usize..3, bytes in 20usize..120) {
        let s = common::setup::<f64>(n_tx, 2, bytes, 3, seed);
        let mut rng = common::rng(seed);
        let d = s.draw(45.0, &mut rng);
        for kind in EstimatorKind::ALL {
            let out = receive(&s, &d, kind);
            prop_assert_eq!(out.bit_errors, 0, "{:?}", kind);
            prop_assert_eq!(&out.info_bits, &d.packet.info_bits);
            prop_assert_eq!(out.mse_trace.len(), s.rx.layout().n_sym + 2 * 3);
        }
    }
}

#[test]
fn single_precision_pipeline_runs() {
    let s = common::setup::<f32>(2, 2, 100, 4, 3);
    let mut rng = common::rng(3);
    let d = s.draw(30.0, &mut rng);
    for kind in [EstimatorKind::Proposed, EstimatorKind::EmDd] {
        let out = receive(&s, &d, kind);
        assert_eq!(out.bit_errors, 0);
        assert!(out.mse_trace.iter().all(|m| m.is_finite()));
    }
}

#[test]
fn pipelined_matches_sequential_with_fixed_estimates() {
    let s = common::setup::<f64>(2, 2, 200, 4, 8);
    let mut rng = common::rng(8);
    for _ in 0..6 {
        let d = s.draw(11.0, &mut rng);
        for kind in [EstimatorKind::Perfect, EstimatorKind::InitialOnly] {
            let est = ChannelEstimator::new(kind, 2.5, GainForm::Information, &d.channel, &d.preamble_rx, &s.preamble, 1.0).unwrap();
            let seq = run_sequential(&s.rx, &est, &d.received).unwrap();
            let out = receive(&s, &d, kind);
            assert_eq!(out.info_bits, seq, "{kind:?}");
        }
    }
}

#[test]
fn four_streams_use_the_mmse_demapper() {
    let s = common::setup::<f64>(4, 4, 60, 3, 4);
    let mut rng = common::rng(4);
    let d = s.draw(40.0, &mut rng);
    let out = receive(&s, &d, EstimatorKind::Proposed);
    assert_eq!(out.bit_errors, 0);
}
