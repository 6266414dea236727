use proptest::prelude::*;
use rcm_track::kinematics::{TipPosition, TipTrajectory};
use rcm_track::metrics::*;

type Wave = [(f64, f64, f64); 3];

fn waves() -> impl Strategy<Value = (Wave, usize)> {
    (
        prop::array::uniform3((0.0..30.0f64, 0.05..1.5f64, -3.2..3.2f64)),
        200usize..800,
    )
}

fn trajectory(w: &Wave, n: usize, t0: f64) -> TipTrajectory {
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / 100.0;
            let axis = |k: usize| {
                let (a, f, p) = w[k];
                a * (std::f64::consts::TAU * f * t + p).sin()
            };
            TipPosition::new(axis(0), axis(1), 60.0 + axis(2), t0 + t)
        })
        .collect();
    TipTrajectory::new(samples).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_scale_with_positions((w, n) in waves(), k in 0.1..10.0f64) {
        let cfg = MetricConfig::default();
        let scaled_cfg = MetricConfig {
            idle_speed_threshold: cfg.idle_speed_threshold * k,
            jerk_epsilon: cfg.jerk_epsilon * k,
            ..cfg
        };
        let traj = trajectory(&w, n, 0.0);
        let scaled = TipTrajectory::new(
            traj.samples()
                .iter()
                .map(|s| TipPosition::from_vector(&(s.vector() * k), s.t))
                .collect(),
        )
        .unwrap();
        let a = compute_metric_set(&traj, &cfg).unwrap();
        let b = compute_metric_set(&scaled, &scaled_cfg).unwrap();
        prop_assert_eq!(a.time_total, b.time_total);
        prop_assert!(close(a.path_length * k, b.path_length, 1e-9));
        prop_assert!(close(a.depth_workspace * k, b.depth_workspace, 1e-9));
        prop_assert!(close(a.avg_speed * k, b.avg_speed, 1e-9));
        prop_assert!(close(a.avg_accel * k, b.avg_accel, 1e-9));
        prop_assert!(close(a.jerk * k, b.jerk, 1e-9));
        prop_assert!(close(a.volume * k.powi(3), b.volume, 1e-9));
        prop_assert!(close(a.idle_pct, b.idle_pct, 1e-9));
    }

    #[test]
    fn time_shift_changes_nothing((w, n) in waves(), shift in -50.0..500.0f64) {
        let cfg = MetricConfig::default();
        let a = compute_metric_set(&trajectory(&w, n, 0.0), &cfg).unwrap();
        let b = compute_metric_set(&trajectory(&w, n, shift), &cfg).unwrap();
        // shifted timestamps carry their own rounding
        let rel = 1e-6;
        prop_assert!(close(a.time_total, b.time_total, 1e-9));
        prop_assert!(close(a.path_length, b.path_length, 1e-12));
        prop_assert!(close(a.depth_workspace, b.depth_workspace, 1e-12));
        prop_assert!(close(a.volume, b.volume, 1e-12));
        prop_assert!(close(a.avg_speed, b.avg_speed, rel));
        prop_assert!(close(a.avg_accel, b.avg_accel, rel));
        prop_assert!(close(a.jerk, b.jerk, rel));
        prop_assert!((a.idle_pct - b.idle_pct).abs() < 0.05);
    }

    #[test]
    fn reversal_keeps_path_depth_volume_time((w, n) in waves()) {
        let cfg = MetricConfig::default();
        let traj = trajectory(&w, n, 0.0);
        let end = traj.samples().last().unwrap().t;
        let reversed = TipTrajectory::new(
            traj.samples()
                .iter()
                .rev()
                .map(|s| TipPosition::new(s.x, s.y, s.z, end - s.t))
                .collect(),
        )
        .unwrap();
        let a = compute_metric_set(&traj, &cfg).unwrap();
        let b = compute_metric_set(&reversed, &cfg).unwrap();
        prop_assert!(close(a.time_total, b.time_total, 1e-12));
        prop_assert!(close(a.path_length, b.path_length, 1e-9));
        prop_assert!(close(a.depth_workspace, b.depth_workspace, 1e-12));
        prop_assert!(close(a.volume, b.volume, 1e-9));
    }

    #[test]
    fn idle_grows_with_threshold((w, n) in waves(), lo in 0.0..20.0f64, extra in 0.0..20.0f64) {
        let traj = trajectory(&w, n, 0.0);
        let idle = |threshold: f64| {
            let cfg = MetricConfig { idle_speed_threshold: threshold, ..MetricConfig::default() };
            idle_time_pct(&traj, &cfg).unwrap()
        };
        prop_assert!(idle(lo) <= idle(lo + extra));
    }

    #[test]
    fn cubic_jerk_is_analytic(
        c in prop::array::uniform3(prop::array::uniform4(-5.0..5.0f64)),
        n in 200usize..600,
    ) {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / 100.0;
                let p = |k: usize| c[k][0] + c[k][1] * t + c[k][2] * t * t + c[k][3] * t * t * t;
                TipPosition::new(p(0), p(1), p(2), t)
            })
            .collect();
        let traj = TipTrajectory::new(samples).unwrap();
        let analytic = 6.0 * (c[0][3].powi(2) + c[1][3].powi(2) + c[2][3].powi(2)).sqrt();
        prop_assume!(analytic > 0.5);
        let (jerk, _) = jerk_and_fluidity(&traj, &MetricConfig::default()).unwrap();
        prop_assert!((jerk - analytic).abs() <= 0.02 * analytic, "{jerk} vs {analytic}");
    }
}
