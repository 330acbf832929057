use std::f64::consts::PI;

use proptest::prelude::*;
use pwavg::flow::{integrate, EventKind, IntegratorConfig};
use pwavg::model::{builtin_proposition1, builtin_proposition1_polar, PiecewiseModel, Prop1Coeffs};

fn polar() -> PiecewiseModel {
    builtin_proposition1_polar(&Prop1Coeffs::pinned(), (0.05, 1.0))
}

/// State-dependent switching where the first-order response is tangent to
/// the surface; the crossing time moves only at second order.
fn slow_drift() -> PiecewiseModel {
    PiecewiseModel::from_json(
        r#"{"dimension": 1, "period": 2.0, "surfaces": ["x1"], "zones": [
            {"signature": [1], "F0": ["2"]},
            {"signature": [-1], "F0": ["1"], "R": ["1"]}]}"#,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn integration_is_deterministic(u in -1.0f64..1.0, v in -1.0f64..1.0, w in -0.5f64..0.5, eps in 0.0f64..0.2) {
        prop_assume!(v.abs() > 1e-3);
        let m = builtin_proposition1(&Prop1Coeffs::pinned());
        let cfg = IntegratorConfig::default();
        let a = integrate(&m, &[u, v, w], eps, (0.0, 2.0 * PI), &cfg);
        let b = integrate(&m, &[u, v, w], eps, (0.0, 2.0 * PI), &cfg);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn segments_share_event_states(alpha in 0.1f64..1.0, z in -0.2f64..0.2, eps in 0.0f64..0.05) {
        let cfg = IntegratorConfig::default();
        let traj = integrate(&polar(), &[alpha, z], eps, (0.0, 2.0 * PI), &cfg).unwrap();
        for pair in traj.segments.windows(2) {
            prop_assert_eq!(&pair[0].end_state, &pair[1].start_state);
            prop_assert_eq!(pair[0].t_end, pair[1].t_start);
        }
        for (seg, ev) in traj.segments.iter().skip(1).zip(&traj.events) {
            prop_assert_eq!(&seg.start_state, &ev.state);
        }
    }

    #[test]
    fn polar_event_times_ignore_eps(alpha in 0.1f64..1.0, z in -0.2f64..0.2, eps in 1e-4f64..0.05) {
        let cfg = IntegratorConfig::default();
        let base = integrate(&polar(), &[alpha, z], 0.0, (0.0, 2.0 * PI), &cfg).unwrap();
        let pert = integrate(&polar(), &[alpha, z], eps, (0.0, 2.0 * PI), &cfg).unwrap();
        prop_assert_eq!(base.crossing_times(), pert.crossing_times());
    }
}

#[test]
fn event_count_is_stable_on_the_manifold_grid() {
    let m = polar();
    let cfg = IntegratorConfig::default();
    let man = m.manifold.as_ref().unwrap();
    for alpha in man.grid(12) {
        let z = man.point(&alpha).unwrap();
        let kappa0 = integrate(&m, &z, 0.0, (0.0, 2.0 * PI), &cfg).unwrap().events.len();
        assert!(kappa0 > 0);
        // The angle chart needs r + eps*H > 0, which fails for eps near alpha.
        for eps in [1e-1, 1e-2, 1e-3, 1e-4].into_iter().filter(|e| 2.0 * e < alpha[0]) {
            let traj = integrate(&m, &z, eps, (0.0, 2.0 * PI), &cfg).unwrap();
            assert_eq!(traj.events.len(), kappa0, "alpha = {alpha:?}, eps = {eps}");
            assert!(traj.events.iter().all(|e| e.kind == EventKind::Crossing));
        }
    }
}

#[test]
fn tangent_response_gives_second_order_time_shift() {
    let m = slow_drift();
    let cfg = IntegratorConfig::default();
    let time = |eps: f64| integrate(&m, &[-1.0], eps, (0.0, 2.0), &cfg).unwrap().crossing_times()[0];
    let t0 = time(0.0);
    assert!((t0 - 1.0).abs() < 1e-12);
    let ratios: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&e| (time(e) - t0).abs() / e).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    for (&e, r) in [0.1f64, 0.05, 0.025].iter().zip(&ratios) {
        let exact = (1.0 - 1.0 / (1.0 + e * e)) / e;
        assert!((r - exact).abs() < 1e-9);
    }
}
