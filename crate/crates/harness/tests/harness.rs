use std::path::PathBuf;

use whitney_core::seminorm::{gagliardo, EstimatorConfig, Method, Region};
use whitney_core::{AxisBox, SpaceParams, TestFunction};
use whitney_harness::experiments::{run_bound_experiment, run_term_split};
use whitney_harness::formats::CubesFile;
use whitney_harness::scenario::SCHEMA;
use whitney_harness::suite::report_json;
use whitney_harness::{verify_all, Budgets, Scenario, SiteSpec};

fn scenario(n: usize, sites: SiteSpec, function: TestFunction, domain_exp: i32, max_level: i32) -> Scenario {
    let budgets = Budgets { seminorm: 20_000, ..Budgets::default() };
    Scenario {
        schema: SCHEMA,
        name: format!("test-{n}d"),
        params: SpaceParams::new(n, 1.5, if n == 1 { 4.0 } else { 6.0 }).unwrap(),
        sites,
        function,
        domain_exp,
        max_level,
        seed: 5,
        budgets,
        output_dir: None,
    }
}

fn single_site_1d() -> Scenario {
    scenario(
        1,
        SiteSpec::Explicit { points: vec![vec![0.0]] },
        TestFunction::gaussian(vec![0.1], 0.7),
        3,
        10,
    )
}

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn shipped_scenarios_load_and_round_trip() {
    for name in ["gaussian-1d.json", "gaussian-2d.json"] {
        let sc = Scenario::load(&shipped(name)).unwrap();
        let again = Scenario::from_json(&sc.to_json().unwrap()).unwrap();
        assert_eq!(sc, again);
        assert_eq!(sc.site_points().unwrap(), again.site_points().unwrap());
    }
}

#[test]
fn invalid_scenarios_are_rejected() {
    let mut sc = single_site_1d();
    sc.schema = 99;
    assert!(Scenario::from_json(&sc.to_json().unwrap()).is_err());
    let mut cantor = single_site_1d();
    cantor.params = SpaceParams::new(2, 1.5, 6.0).unwrap();
    cantor.sites = SiteSpec::Cantor { stage: 2, lo: 0.0, hi: 1.0 };
    assert!(cantor.site_points().is_err());
}

#[test]
fn cubes_file_round_trips_random_sites() {
    let sc = scenario(
        2,
        SiteSpec::Random { count: 7, seed: 3, radius: 0.5 },
        TestFunction::gaussian(vec![0.1, -0.2], 0.8),
        1,
        8,
    );
    let w = sc.decompose().unwrap();
    let text = serde_json::to_string(&CubesFile::from_decomposition(&w)).unwrap();
    let back: CubesFile = serde_json::from_str(&text).unwrap();
    let w2 = back.to_decomposition().unwrap();
    assert_eq!(w.sites().points(), w2.sites().points());
    let a: Vec<_> = w.cubes().collect();
    let b: Vec<_> = w2.cubes().collect();
    assert_eq!(a, b);
}

#[test]
fn canonical_single_site_suite_passes_and_is_reproducible() {
    let sc = single_site_1d();
    let report = verify_all(&sc).unwrap();
    assert!(report.all_pass, "{}", report.summary());
    let again = verify_all(&sc).unwrap();
    assert_eq!(report_json(&report).unwrap(), report_json(&again).unwrap());
}

#[test]
fn random_2d_suite_passes() {
    let mut sc = scenario(
        2,
        SiteSpec::Random { count: 20, seed: 7, radius: 0.5 },
        TestFunction::gaussian(vec![0.1, -0.2], 0.8),
        1,
        11,
    );
    sc.seed = 7;
    let report = verify_all(&sc).unwrap();
    assert!(report.all_pass, "{}", report.summary());
}

#[test]
fn polynomial_input_is_degenerate() {
    let sc = scenario(
        1,
        SiteSpec::Random { count: 5, seed: 1, radius: 1.0 },
        TestFunction::polynomial(1, &[(1.5, &[1]), (-0.25, &[0])]),
        3,
        10,
    );
    let r = run_bound_experiment(&sc).unwrap();
    assert!(r.degenerate);
    assert_eq!(r.rho, None);
    assert!(r.extension.value < 1e-9, "{}", r.extension.value);
}

#[test]
fn single_site_extension_is_the_jet_polynomial() {
    // every cube is anchored at the one site, so Tf is a polynomial of degree ⌊s⌋
    let r = run_bound_experiment(&single_site_1d()).unwrap();
    assert_eq!(r.extension.value, 0.0);
    assert!(r.reference.value > 0.0);
    assert_eq!(r.rho, Some(0.0));
}

#[test]
fn constant_input_splits_into_zeros() {
    let sc = scenario(
        1,
        SiteSpec::Random { count: 5, seed: 1, radius: 1.0 },
        TestFunction::polynomial(1, &[(3.0, &[0])]),
        3,
        10,
    );
    let r = run_term_split(&sc).unwrap();
    for part in [&r.i, &r.ii, &r.iii, &r.iv, &r.whole] {
        assert_eq!(part.value, 0.0);
    }
    assert!(r.checks.all_pass());
}

#[test]
fn term_split_sums_to_the_whole() {
    for seed in 1..=5 {
        let sc = scenario(
            1,
            SiteSpec::Random { count: 6, seed, radius: 1.0 },
            TestFunction::gaussian(vec![0.1], 0.7),
            3,
            10,
        );
        let r = run_term_split(&sc).unwrap();
        assert!(r.checks.sum_matches_whole && r.checks.i_two_ways_agree, "seed {seed}: {:?}", r.checks);
    }
}

#[test]
fn doubling_the_budget_shrinks_the_error() {
    let f = TestFunction::gaussian(vec![0.1, -0.2], 0.8);
    let params = SpaceParams::new(2, 1.5, 6.0).unwrap();
    let region = Region::single(AxisBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap());
    for method in [Method::PlainMc, Method::ImportanceMc] {
        let a = gagliardo(&f, &region, &params, &EstimatorConfig::new(method, 100_000, 2)).unwrap();
        let b = gagliardo(&f, &region, &params, &EstimatorConfig::new(method, 200_000, 2)).unwrap();
        let ratio = b.error_bound_p / a.error_bound_p;
        // 1/√2 expected; ±50% for noise in the variance estimate
        assert!((0.5 / 2f64.sqrt()..=1.5 / 2f64.sqrt()).contains(&ratio), "{method}: {ratio}");
    }
}
