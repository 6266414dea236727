use proptest::prelude::*;
use rcm_track::evaluation::*;
use rcm_track::kinematics::JointState;
use rcm_track::metrics::{Metric, MetricConfig, MetricSet};
use rcm_track::acquisition::Calibration;

fn metric_set() -> impl Strategy<Value = MetricSet> {
    (
        prop::array::uniform8(0.0..1e4f64),
        prop::option::of(0.0..1.0f64),
    )
        .prop_map(|(v, fluidity)| MetricSet {
            time_total: v[0],
            idle_pct: v[1] / 100.0,
            path_length: v[2],
            depth_workspace: v[3],
            avg_speed: v[4],
            avg_accel: v[5],
            jerk: v[6],
            fluidity,
            volume: v[7],
        })
}

fn cloud() -> impl Strategy<Value = Vec<JointState>> {
    prop::collection::vec((0.0..13.0f64, -180.0..180.0f64), 100..400).prop_map(|pts| {
        pts.into_iter()
            .enumerate()
            .map(|(i, (r, th))| {
                let (s, c) = th.to_radians().sin_cos();
                JointState::from_degrees(r * c, r * s, 0.0, 60.0, i as f64 * 0.01)
            })
            .collect()
    })
}

/// Points spread over a random triangle, often thin or obtuse.
fn triangle_cloud() -> impl Strategy<Value = Vec<JointState>> {
    (
        prop::array::uniform3(prop::array::uniform2(-9.0..9.0f64)),
        prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 100..300),
    )
        .prop_map(|(v, weights)| {
            weights
                .into_iter()
                .enumerate()
                .map(|(i, (mut u, mut w))| {
                    if u + w > 1.0 {
                        (u, w) = (1.0 - u, 1.0 - w);
                    }
                    let p = |k: usize| v[0][k] + u * (v[1][k] - v[0][k]) + w * (v[2][k] - v[0][k]);
                    JointState::from_degrees(p(0), p(1), 0.0, 60.0, i as f64 * 0.01)
                })
                .collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn subcategory_view_round_trips(m in metric_set()) {
        let back = group_by_subcategory(&m).metric_set();
        prop_assert_eq!(back, m);
        for metric in Metric::ALL {
            let owners = Subcategory::ALL.iter().filter(|s| s.members().contains(&metric)).count();
            prop_assert_eq!(owners, 1);
            prop_assert!(Subcategory::of(metric).members().contains(&metric));
        }
        let total: usize = Subcategory::ALL.iter().map(|s| s.members().len()).sum();
        prop_assert_eq!(total, Metric::ALL.len());
    }

    #[test]
    fn reports_serialize_identically(left in metric_set(), right in metric_set()) {
        let config = || ConfigEcho::new(MetricConfig::default(), Calibration::default());
        let a = bimanual_report(&left, &right, None, config()).to_json();
        let b = bimanual_report(&left, &right, None, config()).to_json();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn boundary_fit_stays_near_hull(joints in prop_oneof![cloud(), triangle_cloud()]) {
        let summary = workspace_boundary(&joints, 13.0).unwrap();
        let extent = summary.hull_half_extent();
        if let Some(e) = summary.ellipse {
            prop_assert!(e.semi_major <= 1.05 * extent, "{} vs {}", e.semi_major, extent);
            prop_assert!(e.semi_minor <= e.semi_major);
        }
    }
}
