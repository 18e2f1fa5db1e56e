use lifelog_core::manifold::{deviation, manifold_deviation, membership, project, sample_prior, signature_inner, CcmSpec};
use proptest::prelude::*;

fn self_inner(z: &[f64], kappa: f64) -> f64 {
    // Written out by hand, separately from the library's bilinear form.
    let last = z.len() - 1;
    let head: f64 = z[..last].iter().map(|v| v * v).sum();
    if kappa > 0.0 {
        head + z[last] * z[last]
    } else {
        head - z[last] * z[last]
    }
}

#[test]
fn ten_thousand_prior_samples_per_sign_lie_on_the_manifold() {
    for kappa in [1.0, -1.0] {
        let spec = CcmSpec::new(kappa, 5, 1.0).unwrap();
        let samples = sample_prior(&spec, 10_000, 11);
        assert_eq!(samples.len(), 10_000);
        let worst = samples
            .iter()
            .map(|z| (self_inner(z, kappa) - 1.0 / kappa).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "kappa {kappa}: worst deviation {worst:e}");
        if kappa < 0.0 {
            assert!(samples.iter().all(|z| z[5] > 0.0), "upper sheet only");
        }
    }
}

#[test]
fn membership_is_one_on_the_manifold_and_monotone_off_it() {
    for kappa in [1.0, -1.0, 0.25, -4.0] {
        let spec = CcmSpec::new(kappa, 3, 0.7).unwrap();
        for z in sample_prior(&spec, 200, 5) {
            assert!((membership(&z, &spec) - 1.0).abs() < 1e-12);
        }
        // 100 points pushed radially outward by growing factors.
        let base = &sample_prior(&spec, 1, 9)[0];
        let sweep: Vec<(f64, f64)> = (0..100)
            .map(|i| {
                let z: Vec<f64> = base.iter().map(|v| v * (1.0 + 0.01 * i as f64)).collect();
                (deviation(&z, &spec), membership(&z, &spec))
            })
            .collect();
        for w in sweep.windows(2) {
            assert!(w[1].0 > w[0].0, "deviation must grow along the sweep");
            assert!(w[1].1 < w[0].1, "kappa {kappa}: membership {} !< {}", w[1].1, w[0].1);
        }
    }
}

#[test]
fn deviation_summary_matches_hand_mean() {
    let spec = CcmSpec::new(1.0, 2, 1.0).unwrap();
    let pts = [vec![2.0, 0.0, 0.0], vec![0.0, 0.5, 0.0], vec![0.0, 0.0, 1.0]];
    let s = manifold_deviation(&pts, &spec).unwrap();
    assert!((s.mean - (3.0 + 0.75 + 0.0) / 3.0).abs() < 1e-15);
    assert_eq!(s.max, 3.0);
    assert!(manifold_deviation::<Vec<f64>>(&[], &spec).is_err());
}

proptest! {
    #[test]
    fn inner_product_is_symmetric_and_bilinear(
        x in prop::collection::vec(-10.0f64..10.0, 4),
        y in prop::collection::vec(-10.0f64..10.0, 4),
        a in -3.0f64..3.0,
        kappa in prop_oneof![Just(1.0), Just(-1.0)],
    ) {
        let xy = signature_inner(&x, &y, kappa).unwrap();
        prop_assert_eq!(xy, signature_inner(&y, &x, kappa).unwrap());
        let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
        let lhs = signature_inner(&ax, &y, kappa).unwrap();
        prop_assert!((lhs - a * xy).abs() <= 1e-9 * (1.0 + xy.abs() * a.abs()));
    }

    #[test]
    fn membership_in_unit_interval(
        z in prop::collection::vec(-5.0f64..5.0, 3),
        kappa in prop_oneof![Just(1.0), Just(-1.0), Just(2.0)],
        zeta in 0.1f64..5.0,
    ) {
        let spec = CcmSpec::new(kappa, 2, zeta).unwrap();
        let m = membership(&z, &spec);
        prop_assert!(m >= 0.0 && m <= 1.0);
        if deviation(&z, &spec) == 0.0 {
            prop_assert_eq!(m, 1.0);
        }
    }

    #[test]
    fn membership_orders_like_deviation(
        z1 in prop::collection::vec(-3.0f64..3.0, 3),
        z2 in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let spec = CcmSpec::new(1.0, 2, 1.5).unwrap();
        let (d1, d2) = (deviation(&z1, &spec), deviation(&z2, &spec));
        let (m1, m2) = (membership(&z1, &spec), membership(&z2, &spec));
        if d1 < d2 {
            prop_assert!(m1 >= m2);
        }
    }

    #[test]
    fn projection_lands_on_the_manifold(
        z in prop::collection::vec(-4.0f64..4.0, 4),
        kappa in prop_oneof![Just(1.0), Just(-1.0), Just(0.5)],
    ) {
        let spec = CcmSpec::new(kappa, 3, 1.0).unwrap();
        if let Some(p) = project(&z, &spec) {
            prop_assert!(deviation(&p, &spec) < 1e-9 * (1.0 + 1.0 / kappa.abs()));
        } else {
            let q = self_inner(&z, kappa);
            prop_assert!(q == 0.0 || q.signum() != kappa.signum());
        }
    }
}
