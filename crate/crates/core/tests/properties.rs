use gwb_core::constants::sigma_inverse_iteration;
use gwb_core::exec::replica_rng;
use gwb_core::gauge::{classify_metadata, GForm, GFunction, GaugeFunction};
use gwb_core::gwtree::{cutset_conservation_check, random_cutset, simulate_tree, NodeAddress};
use gwb_core::pgf::{geometric_shifted_iterate, OffspringLaw};
use gwb_core::tails::k_eval;
use proptest::prelude::*;

fn explicit_law() -> impl Strategy<Value = OffspringLaw> {
    // supercritical laws on {0, .., 4} with p(0) + p(1) < 1
    prop::collection::vec(0.0f64..1.0, 5).prop_filter_map("subcritical or degenerate", |w| {
        let s: f64 = w.iter().sum();
        let pmf: Vec<f64> = w.iter().map(|x| x / s).collect();
        let mean: f64 = pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        (mean > 1.05).then(|| OffspringLaw::explicit(pmf).ok()).flatten()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iterates_compose(law in explicit_law(), s in 0.0f64..1.0, m in 0usize..5, n in 0usize..5) {
        let lhs = law.iterate(m + n, s).unwrap();
        let rhs = law.iterate(m, law.iterate(n, s).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn inverse_iterate_round_trips(law in explicit_law(), u in 0.01f64..0.99, n in 1usize..6) {
        let q = law.extinction(1e-14).unwrap();
        let t = q + u * (1.0 - q);
        let x = law.inverse_iterate(n, t, 1e-13).unwrap();
        prop_assert!((law.iterate(n, x).unwrap() - t).abs() <= 1e-10);
    }

    #[test]
    fn geometric_closed_form(a in 1.2f64..10.0, k in 1u32..4, n in 0usize..8, s in 0.0f64..1.0) {
        let law = OffspringLaw::geometric_shifted(a, k).unwrap();
        let direct = law.iterate(n, s).unwrap();
        prop_assert!((direct - geometric_shifted_iterate(a, k, n as i32, s)).abs() <= 1e-12);
    }

    #[test]
    fn k_is_convex_and_nonincreasing(law in explicit_law(), x in 0.0f64..5.0, h in 0.01f64..1.0) {
        let (l, m, r) = (k_eval(&law, x), k_eval(&law, x + h), k_eval(&law, x + 2.0 * h));
        prop_assert!(m <= l + 1e-12 && r <= m + 1e-12);
        prop_assert!(l + r - 2.0 * m >= -1e-12);
    }

    #[test]
    fn sigma_is_one_over_k(a in 1.5f64..10.0, k in 1u32..5) {
        let law = OffspringLaw::geometric_shifted(a, k).unwrap();
        let s = sigma_inverse_iteration(&law, 40).unwrap().value.value();
        prop_assert!((s - 1.0 / k as f64).abs() <= 1e-6);
    }

    #[test]
    fn power_dichotomy_is_monotone_in_b(b in 0.01f64..2.0, theta in 1.5f64..4.0) {
        let law = OffspringLaw::power_tail(theta, vec![]).unwrap();
        let meta = law.metadata();
        let phi = |b: f64| GaugeFunction::new(meta.mean.ln(), GFunction::new(GForm::PowerB { b }).unwrap());
        let b0 = 1.0 / (theta - 1.0);
        let v = classify_metadata(meta, &phi(b));
        let expected = if (b - b0).abs() < 1e-12 {
            "zero_off_exceptional"
        } else if b < b0 {
            "zero"
        } else {
            "infinite"
        };
        prop_assert_eq!(v.outcome.label(), expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cutsets_conserve_mass(law in explicit_law(), seed in any::<u64>(), stop in 0.1f64..0.9) {
        let tree = simulate_tree(&law, 5, seed).unwrap();
        prop_assume!(!tree.is_extinct());
        let mut rng = replica_rng(seed, 1);
        let cut = random_cutset(&tree, &NodeAddress::root(), &mut rng, stop);
        let c = cutset_conservation_check(&tree, &NodeAddress::root(), &cut).unwrap();
        prop_assert!(c.abs_err <= 1e-12, "{c:?}");
    }
}
