use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::Rng;

use wiener_transport::harness::ExperimentConfig;
use wiener_transport::inequalities::{InequalityReport, Verdict};
use wiener_transport::monge_ampere::det2;
use wiener_transport::rng;
use wiener_transport::stats::Estimate;

proptest! {
    #[test]
    fn det2_lies_in_unit_interval(eig in prop::collection::vec(-1.0f64..50.0, 0..16)) {
        let v = det2(&eig);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&v), "det2 = {v}");
    }

    #[test]
    fn det2_is_multiplicative(a in prop::collection::vec(-1.0f64..5.0, 0..6), b in prop::collection::vec(-1.0f64..5.0, 0..6)) {
        let joined: Vec<f64> = a.iter().chain(&b).copied().collect();
        assert_relative_eq!(det2(&joined), det2(&a) * det2(&b), max_relative = 1e-12, epsilon = 1e-300);
    }

    #[test]
    fn verdict_is_antisymmetric(l in -10.0f64..10.0, r in -10.0f64..10.0, sl in 0.0f64..1.0, sr in 0.0f64..1.0) {
        let fwd = InequalityReport::new(Estimate::new(l, sl), Estimate::new(r, sr), serde_json::Value::Null);
        let back = fwd.swapped();
        prop_assert_eq!(fwd.slack, -back.slack);
        prop_assert_eq!(fwd.pooled_stderr, back.pooled_stderr);
        match fwd.verdict {
            Verdict::HoldsWithEquality => prop_assert_eq!(back.verdict, Verdict::HoldsWithEquality),
            Verdict::Holds => prop_assert_eq!(back.verdict, Verdict::Violated),
            Verdict::Violated => prop_assert_eq!(back.verdict, Verdict::Holds),
        }
    }

    #[test]
    fn config_hash_ignores_output_dir_and_tracks_seed(seed in any::<u64>(), n in 1usize..100_000) {
        let text = format!(r#"{{"kind": "talagrand", "preset": "scale:2", "dim": 1, "n": {n}, "seed": {seed}}}"#);
        let a = ExperimentConfig::from_json(&text).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        prop_assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        let c = a.with_overrides(&[format!("seed={}", seed.wrapping_add(1))]).unwrap();
        prop_assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn seed_streams_are_reproducible(seed in any::<u64>(), k in 0u64..64) {
        let draw = |s: u64| -> Vec<f64> { let mut r = rng::stream(s, k); (0..8).map(|_| r.gen()).collect() };
        let s = rng::derive_seed(seed, "property");
        prop_assert_eq!(draw(s), draw(s));
        prop_assert_ne!(s, rng::derive_seed(seed, "other"));
    }
}

#[test]
fn defaults_are_part_of_the_hash() {
    let implicit = ExperimentConfig::from_json(r#"{"kind": "gauge"}"#).unwrap();
    let explicit =
        ExperimentConfig::from_json(r#"{"kind": "gauge", "preset": "unit", "dim": 8, "params": {"eps": 2.0}}"#).unwrap();
    assert_eq!(implicit.hash().unwrap(), explicit.hash().unwrap());
}
