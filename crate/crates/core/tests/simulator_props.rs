use proptest::prelude::*;
use rcm_track::evaluation::Hand;
use rcm_track::simulator::*;

fn hand() -> impl Strategy<Value = Hand> {
    prop_oneof![Just(Hand::Left), Just(Hand::Right)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn peg_transfer_respects_cone_and_depth(
        duration in 30.0..240.0f64,
        rate in 20.0..200.0f64,
        hand in hand(),
        seed in any::<u64>(),
    ) {
        let joints = generate_peg_transfer_profile(duration, rate, hand, seed).unwrap();
        prop_assert_eq!(joints.len(), (duration * rate * (1.0 + 1e-12)).floor() as usize + 1);
        prop_assert!(joints.last().unwrap().t <= duration);
        for q in &joints {
            prop_assert!(q.is_finite());
            prop_assert!(q.cone_angle().to_degrees() <= 13.0);
            prop_assert!((40.0..=100.0).contains(&q.d), "d = {}", q.d);
        }
        prop_assert_eq!(joints, generate_peg_transfer_profile(duration, rate, hand, seed).unwrap());
    }

    #[test]
    fn cone_scan_respects_params(
        half in 2.0..13.0f64,
        d_lo in 10.0..60.0f64,
        span in 1.0..60.0f64,
        duration in 1.0..30.0f64,
        aspect in 0.2..=1.0f64,
    ) {
        let params = ScanParams {
            cone_half_angle: half,
            d_range: [d_lo, d_lo + span],
            duration,
            aspect,
            ..ScanParams::default()
        };
        let joints = generate_cone_scan(&params).unwrap();
        for q in &joints {
            prop_assert!(q.cone_angle().to_degrees() <= half);
            prop_assert!(q.d >= d_lo && q.d <= d_lo + span);
        }
        prop_assert_eq!(joints, generate_cone_scan(&params).unwrap());
    }

    #[test]
    fn noisy_encoding_is_seeded(seed in any::<u64>(), hand in hand()) {
        let joints = generate_peg_transfer_profile(30.0, 50.0, hand, 1).unwrap();
        let cal = calibration_for(&joints, &rcm_track::acquisition::Calibration::default());
        let noise = NoiseParams { angle_noise_sd: 0.5, translation_noise_sd: 0.1, seed };
        let a = corrupt_and_encode(&joints, &cal, &noise).unwrap();
        let b = corrupt_and_encode(&joints, &cal, &noise).unwrap();
        prop_assert_eq!(a.frames, b.frames);
    }
}
