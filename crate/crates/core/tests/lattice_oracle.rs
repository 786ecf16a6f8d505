use resdiff_core::lattice_oracle::*;

fn fixture(name: &str) -> PeriodicChainSpec {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/data/fixtures/").to_string() + name;
    PeriodicChainSpec::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bundled_fixtures_match_generator() {
    for seed in 1..=5 {
        let spec = fixture(&format!("random_{seed}.toml"));
        assert_eq!(spec, random_spec(seed, 5));
    }
}

#[test]
fn bundled_fixtures_are_exact() {
    for seed in 1..=5 {
        let spec = fixture(&format!("random_{seed}.toml"));
        let r = exact_variance_rate_dual(&spec, &[1.0]).unwrap();
        assert!(r.agrees(), "{r:?}");
        assert!(kv_identity_defect(&spec, &[1.0], 100).unwrap() <= 1e-10);
    }
}

#[test]
fn coin_fixture_is_the_equality_case() {
    let spec = fixture("coin.toml");
    let c = minorization_bound_check(&spec, &[1.0], &Stopping::None).unwrap();
    assert_eq!(c.rate, 1.0);
    assert_eq!(c.bound, 1.0);
    let s = minorization_bound_check(&spec, &[1.0], &Stopping::Every(2)).unwrap();
    assert!((s.rate - 2.0).abs() < 1e-12 && s.pass);
}
