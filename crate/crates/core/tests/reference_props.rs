use proptest::prelude::*;
use rcm_track::kinematics::*;
use rcm_track::nalgebra::{Matrix3, Rotation3, Vector3};
use rcm_track::reference::*;

fn triad() -> impl Strategy<Value = FrameTriad> {
    (
        -3.2..3.2f64,
        -1.5..1.5f64,
        -3.2..3.2f64,
        prop::array::uniform3(-500.0..500.0f64),
    )
        .prop_map(|(r, p, y, o)| {
            let m: Matrix3<f64> = *Rotation3::from_euler_angles(r, p, y).matrix();
            FrameTriad::new(m, Vector3::from(o))
        })
}

fn pair(device: Vec<f64>, reference: Vec<f64>) -> AlignedPair {
    AlignedPair {
        channel: Channel::Phi1,
        times: (0..device.len()).map(|i| i as f64 * 0.01).collect(),
        device,
        reference,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn frame_transform_is_rigid(a in triad(), b in triad()) {
        let t = estimate_frame_transform(&a, &b).unwrap();
        prop_assert!(t.is_rigid(1e-9));
        prop_assert!((t.rotation.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mse_is_shift_invariant(
        values in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..200),
        shift in -1e3..1e3f64,
    ) {
        let (d, r): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
        let base = channel_mse(&pair(d.clone(), r.clone())).unwrap();
        let moved = channel_mse(&pair(
            d.iter().map(|v| v + shift).collect(),
            r.iter().map(|v| v + shift).collect(),
        ))
        .unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!((base - moved).abs() <= 1e-9 * (1.0 + base) + 1e-12 * shift.abs().powi(2));
        prop_assert_eq!(channel_mse(&pair(d.clone(), d)).unwrap(), 0.0);
    }

    #[test]
    fn mse_zero_only_for_identical(values in prop::collection::vec(-50.0..50.0f64, 2..100), k in 0usize..100, bump in 1e-6..1.0f64) {
        let k = k % values.len();
        let mut other = values.clone();
        other[k] += bump;
        prop_assert!(channel_mse(&pair(values, other)).unwrap() > 0.0);
    }

    #[test]
    fn marker_joints_invert_fk(
        r in 0.0..12.999f64,
        theta in -180.0..180.0f64,
        d in 5.0..150.0f64,
        frame in triad(),
    ) {
        let (s, c) = theta.to_radians().sin_cos();
        let q = JointState::from_degrees(r * c, r * s, 0.0, d, 0.0);
        let to_device = frame.pose();
        let to_reference = to_device.inverse();
        let centre = Vector3::new(3.0, -2.0, 1.0);
        let tip = centre + forward_kinematics(&q).vector();
        let (c_ref, p_ref) = (to_reference.apply_point(&centre), to_reference.apply_point(&tip));
        let stream = MarkerStream::new(
            vec![MarkerSample::new(0.0, c_ref.into(), p_ref.into())],
            120.0,
        )
        .unwrap();
        let out = derive_reference_joints(&stream, &to_device, AngleConvention::Reconciled).unwrap();
        let j = out.joints[0];
        prop_assert!((j.phi1 - q.phi1).abs() < 1e-6);
        prop_assert!((j.phi2 - q.phi2).abs() < 1e-6);
        prop_assert!((j.d - q.d).abs() < 1e-6);
    }

    #[test]
    fn resampling_is_exact_on_affine_signals(
        a in -10.0..10.0f64,
        b in -5.0..5.0f64,
        gaps in prop::collection::vec(0.02..0.05f64, 60..150),
        rate in 20.0..400.0f64,
    ) {
        let mut t = 0.0;
        let mut device = Vec::new();
        for g in &gaps {
            device.push(JointState::new(a + b * t, 0.25, 0.0, 60.0, t));
            t += g;
        }
        let reference: Vec<JointState> = (0..600)
            .map(|k| {
                let t = k as f64 / 120.0;
                JointState::new(a + b * t, 0.25, 0.0, 60.0, t)
            })
            .collect();
        for p in resample_align(&device, &reference, rate).unwrap() {
            for ((t, dv), rv) in p.times.iter().zip(&p.device).zip(&p.reference) {
                match p.channel {
                    Channel::Phi1 => {
                        let exact = (a + b * t).to_degrees();
                        prop_assert!((dv - exact).abs() < 1e-9 && (rv - exact).abs() < 1e-9);
                    }
                    Channel::Phi2 => {
                        prop_assert_eq!(*dv, 0.25f64.to_degrees());
                        prop_assert_eq!(*rv, 0.25f64.to_degrees());
                    }
                    Channel::Translation => {
                        prop_assert_eq!(*dv, 60.0);
                        prop_assert_eq!(*rv, 60.0);
                    }
                }
            }
        }
    }
}
