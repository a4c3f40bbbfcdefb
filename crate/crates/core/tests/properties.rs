use proptest::prelude::*;

use quack_core::engine::{run_rounds, DensityTable};
use quack_core::ext_variants::{
    identity_boundary, identity_equilibrium, one_speaker_equilibrium, IdentityRegime,
    OneSpeakerRegime,
};
use quack_core::metrics::{learn_probability, posterior, variance_reduction};
use quack_core::model::is_consistent;
use quack_core::rules::{build_max_rule, eps1_rule, uniform_rule, PiecewiseRule};

fn cheap() -> ProptestConfig {
    ProptestConfig { cases: 16, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn max_rule_maps_onto_its_range(eps in 0.05f64..0.95) {
        let r = build_max_rule(eps, 512).unwrap();
        for (_, p) in r.grid() {
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(p >= 0.5 - 1e-4 && p <= 1.0 - eps / 3.0 + 1e-9);
        }
    }

    #[test]
    fn rule_json_roundtrip_is_exact(eps in 0.05f64..1.0, ms in prop::collection::vec(-1.0f64..1.0, 20)) {
        let r = build_max_rule(eps, 512).unwrap();
        let back = PiecewiseRule::from_json(&r.to_json().to_string()).unwrap();
        prop_assert_eq!(r.nodes(), back.nodes());
        prop_assert_eq!(r.values(), back.values());
        for w in ms.windows(2) {
            prop_assert_eq!(r.pick(w[0], w[1]).to_bits(), back.pick(w[0], w[1]).to_bits());
        }
    }
}

proptest! {
    #[test]
    fn pick_is_complementary(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        prop_assume!(a.abs() != b.abs());
        let rules = [
            build_max_rule(0.3, 256).unwrap(),
            eps1_rule(256).unwrap(),
            uniform_rule(0.3).unwrap(),
        ];
        for r in &rules {
            prop_assert!((r.pick(a, b) + r.pick(b, a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_contains_the_truth(omega in -1.0f64..1.0, e in -1.0f64..1.0, m in -1.0f64..1.0, eps in 0.01f64..1.0) {
        let s = omega + eps * e;
        let p = posterior(s, omega, m, eps).unwrap();
        prop_assert!(p.support.contains(&omega));
        prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        prop_assert_eq!(p.learned, !is_consistent(m, s, eps) || m == omega);
    }

    #[test]
    fn learning_falls_and_variance_gain_rises(a in 0.0001f64..1.0, b in 0.0001f64..1.0) {
        prop_assume!(a < b);
        prop_assert!(learn_probability(b).unwrap() < learn_probability(a).unwrap());
        prop_assert!(variance_reduction(b).unwrap() > variance_reduction(a).unwrap());
    }

    #[test]
    fn one_speaker_invariants(q in 0.05f64..0.95, u in 0.05f64..0.95, eps in 0.02f64..0.48) {
        let e = one_speaker_equilibrium(q, u, eps).unwrap();
        prop_assert!((e.mass() - 1.0).abs() < 1e-8);
        prop_assert_eq!(e.regime == OneSpeakerRegime::CherryPicking, e.v < eps);
        if let Some(z) = e.z {
            // z may round to 1; its complement stays positive
            let zc = e.z_complement.unwrap();
            prop_assert!(z > 0.0 && z <= 1.0);
            prop_assert!(zc > 0.0 && zc < 1.0);
            prop_assert!((zc - (1.0 - z * z)).abs() < 1e-12);
            prop_assert!((e.pi - zc * eps / 2.0).abs() < 1e-15);
            prop_assert!((e.omega1.unwrap() - (1.0 - 2.0 * eps * z)).abs() < 1e-14);
            prop_assert!((e.flat_density - e.v / (2.0 * eps)).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_invariants(p1 in 0.501f64..0.999, eps in 0.01f64..0.5) {
        let e = identity_equilibrium(p1, eps).unwrap();
        prop_assert!(e.m_bar >= 1.0 - 2.0 * eps - 1e-15 && e.m_bar <= 1.0);
        let moderate = p1 <= identity_boundary(eps);
        prop_assert_eq!(e.regime == IdentityRegime::Moderate, moderate);
        if moderate {
            prop_assert!((e.pi2 - e.m_bar * e.pi1).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_loss_decreasing(a in 0.501f64..0.999, b in 0.501f64..0.999, eps in 0.01f64..0.5) {
        prop_assume!(b - a > 1e-6);
        let la = identity_equilibrium(a, eps).unwrap().judge_loss;
        let lb = identity_equilibrium(b, eps).unwrap().judge_loss;
        prop_assert!(lb < la);
    }

    #[test]
    fn identity_continuous_at_boundary(eps in 0.01f64..0.5) {
        let b = identity_boundary(eps);
        prop_assume!(b < 0.999);
        let lo = identity_equilibrium(b - 1e-10, eps).unwrap();
        let hi = identity_equilibrium(b + 1e-10, eps).unwrap();
        prop_assert!((lo.m_bar - hi.m_bar).abs() < 1e-6);
        prop_assert!((lo.pi1 - hi.pi1).abs() < 1e-6);
        prop_assert!((lo.pi2 - hi.pi2).abs() < 1e-6);
    }

    #[test]
    fn density_quantile_is_monotone(ws in prop::collection::vec(0.01f64..5.0, 3..30), us in prop::collection::vec(0.0f64..1.0, 2)) {
        let n = ws.len();
        let xs: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let area: f64 = ws.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() / (n - 1) as f64;
        let d: Vec<f64> = ws.iter().map(|w| w / area).collect();
        let t = DensityTable::new(xs, d).unwrap();
        let (a, b) = if us[0] <= us[1] { (us[0], us[1]) } else { (us[1], us[0]) };
        let (qa, qb) = (t.quantile(a), t.quantile(b));
        prop_assert!((0.0..=1.0).contains(&qa) && (0.0..=1.0).contains(&qb));
        prop_assert!(qa <= qb + 1e-12);
    }
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn monte_carlo_is_deterministic(seed in any::<u64>(), rounds in 1u64..200_000) {
        let run = || run_rounds(rounds, seed, 2, |st, row| {
            use rand::RngExt;
            row[0] += st.state.random::<f64>();
            row[1] += st.tie.random::<f64>();
        });
        prop_assert_eq!(run(), run());
    }
}
