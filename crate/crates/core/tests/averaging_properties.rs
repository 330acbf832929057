mod common;

use proptest::prelude::*;
use pwavg::averaging::{
    analyze, averaged_f1, degree_interval_sign, degree_regular_values, evaluate_point, find_zeros, sample_f1,
    AveragingConfig, DegreeDomain,
};
use pwavg::model::{builtin_proposition1_polar, Prop1Coeffs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scaled(c: &Prop1Coeffs, s: f64) -> Prop1Coeffs {
    Prop1Coeffs::from_slice(&c.to_vec().iter().map(|v| v * s).collect::<Vec<_>>()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn scaling_the_perturbation_scales_f1(s in 0.2f64..5.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = common::random_coefficients(&mut rng);
        let cfg = AveragingConfig::default();
        let base = analyze(&builtin_proposition1_polar(&coeffs, (0.05, 1.0)), 12, &cfg).unwrap();
        let sc = analyze(&builtin_proposition1_polar(&scaled(&coeffs, s), (0.05, 1.0)), 12, &cfg).unwrap();
        for i in 0..base.samples.alphas.len() {
            let (a, b) = (base.samples.f1(i).unwrap()[0], sc.samples.f1(i).unwrap()[0]);
            prop_assert!((b - s * a).abs() <= 1e-8 * (1.0 + (s * a).abs()), "{} vs {}", b, s * a);
        }
        prop_assert_eq!(base.zeros.candidates.len(), sc.zeros.candidates.len());
        for (x, y) in base.zeros.candidates.iter().zip(&sc.zeros.candidates) {
            prop_assert!((x.a[0] - y.a[0]).abs() <= 1e-9);
        }
        prop_assert_eq!(
            base.degree.as_ref().map(|d| d.degree),
            sc.degree.as_ref().map(|d| d.degree)
        );
    }
}

#[test]
fn zeros_are_stable_under_grid_refinement() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = AveragingConfig::default();
    for coeffs in [Prop1Coeffs::pinned(), common::random_coefficients(&mut rng)] {
        let m = builtin_proposition1_polar(&coeffs, (0.05, 1.0));
        let coarse = find_zeros(&sample_f1(&m, 10, &cfg).unwrap(), &m, &cfg).unwrap();
        let fine = find_zeros(&sample_f1(&m, 37, &cfg).unwrap(), &m, &cfg).unwrap();
        assert_eq!(coarse.candidates.len(), fine.candidates.len());
        for (x, y) in coarse.candidates.iter().zip(&fine.candidates) {
            assert!((x.a[0] - y.a[0]).abs() <= cfg.zero_tol);
        }
    }
}

#[test]
fn interval_sign_and_regular_value_degrees_agree() {
    let m = builtin_proposition1_polar(&Prop1Coeffs::pinned(), (0.05, 1.0));
    let cfg = AveragingConfig::default();
    let domain = DegreeDomain::Box(vec![(0.1, 0.6)]);
    let f = |a: &[f64]| averaged_f1(&m, a, &cfg);
    let by_sign = degree_interval_sign(f, &domain, cfg.margin_tol).unwrap();
    let zeros = find_zeros(&sample_f1(&m, 20, &cfg).unwrap(), &m, &cfg).unwrap();
    let by_sum = degree_regular_values(f, &domain, &zeros.candidates, cfg.margin_tol).unwrap();
    assert_eq!(by_sign.degree, 1);
    assert_eq!(by_sum.degree, 1);
}

#[test]
fn hypotheses_hold_on_the_polar_builtin() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = AveragingConfig::default();
    for coeffs in [Prop1Coeffs::pinned(), common::random_coefficients(&mut rng)] {
        let m = builtin_proposition1_polar(&coeffs, (0.05, 1.0));
        for alpha in m.manifold.as_ref().unwrap().grid(5) {
            let r = evaluate_point(&m, &alpha, &cfg).unwrap();
            assert!(r.pass, "{r:?}");
            let h2 = r.h2.unwrap();
            assert!(h2.upper_right_norm <= 1e-8 && h2.tangent_residual <= 1e-8);
            assert!(r.h3.unwrap().max_residual <= 1e-8);
        }
    }
}
