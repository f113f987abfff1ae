use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;
use whitney_core::decomposition::{VerifyOptions, CHECK_BOUNDS, CHECK_DISJOINT};
use whitney_core::dyadic::exp2i;
use whitney_core::rng::stream;
use whitney_core::{DyadicCube, SpaceParams, Whitney};

fn params(n: usize) -> SpaceParams {
    SpaceParams::new(n, 1.5, 4.0).unwrap()
}

fn random_sites(n: usize, count: usize, seed: u64, radius: f64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, 0);
    (0..count)
        .map(|_| (0..n).map(|_| ((2.0 * rng.gen::<f64>() - 1.0) * radius * 1024.0).round() / 1024.0).collect())
        .collect()
}

#[test]
fn parents_of_accepted_cubes_fail_the_distance_test() {
    for (n, count, seed) in [(1, 12, 1), (2, 6, 2)] {
        let w = Whitney::build(params(n), &random_sites(n, count, seed, 0.5), 1, 8).unwrap();
        for (q, _) in w.cubes() {
            let parent = q.parent();
            if parent.level < -w.domain_exp() {
                continue;
            }
            let (d2, _) = w.sites().nearest(&parent, None);
            assert!(d2 < 100 * parent.n_side2(), "parent of {q} passes the distance test");
        }
    }
}

#[test]
fn locate_matches_enumeration() {
    let w = Whitney::build(params(2), &random_sites(2, 5, 9, 0.5), 1, 9).unwrap();
    let cubes: Vec<DyadicCube> = w.cubes().map(|c| c.0).collect();
    let r = w.domain_radius();
    let mut rng = stream(77, 0);
    let mut compared = 0;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..2).map(|_| (2.0 * rng.gen::<f64>() - 1.0) * r).collect();
        let found = w.locate(&x).unwrap();
        if found.iter().any(|q| q.level > w.max_level()) {
            continue;
        }
        let mut expected: Vec<DyadicCube> = cubes.iter().filter(|q| q.contains_point(&x)).cloned().collect();
        expected.sort();
        assert_eq!(found, expected, "at {x:?}");
        compared += 1;
    }
    assert!(compared > 9000, "only {compared} points in the guaranteed region");
}

#[test]
fn touching_cubes_differ_by_at_most_one_level() {
    let w = Whitney::build(params(2), &random_sites(2, 4, 5, 0.5), 1, 7).unwrap();
    for (q, _) in w.cubes() {
        for nb in w.neighbors(&q) {
            assert!(q.touches(&nb));
            assert!((q.level - nb.level).abs() <= 1, "{q} touches {nb}");
        }
    }
}

fn cube_set(w: &Whitney) -> BTreeSet<(i32, Vec<i64>)> {
    w.cubes().map(|(q, _)| (q.level, q.coords.to_vec())).collect()
}

#[test]
fn translation_by_dyadic_vector_translates_cubes() {
    // shift by a multiple of the coarsest side keeps the root grid aligned
    let sites = random_sites(1, 8, 3, 0.5);
    let w = Whitney::build(params(1), &sites, 0, 8).unwrap();
    let shift = 2.0;
    let moved: Vec<Vec<f64>> = sites.iter().map(|p| vec![p[0] + shift]).collect();
    let w2 = Whitney::build(params(1), &moved, 2, 8).unwrap();
    let inner = w.domain_box();
    for (q, _) in w.cubes() {
        let k = (shift / q.side()) as i64;
        assert!(w2.is_accepted(&DyadicCube::new(q.level, &[q.coords[0] + k])), "{q} not translated");
    }
    // and nothing extra appears inside the shifted original domain
    let shifted = cube_set(&w);
    for (q, _) in w2.cubes() {
        let b = q.to_box();
        if b.lo[0] >= inner.lo[0] + shift && b.hi[0] <= inner.hi[0] + shift {
            let k = (shift / q.side()) as i64;
            assert!(shifted.contains(&(q.level, vec![q.coords[0] - k])), "{q} has no preimage");
        }
    }
}

#[test]
fn scaling_by_power_of_two_shifts_levels() {
    let sites = random_sites(2, 5, 4, 0.5);
    let w = Whitney::build(params(2), &sites, 1, 7).unwrap();
    for j in [1, 3] {
        let f = exp2i(j);
        let scaled: Vec<Vec<f64>> = sites.iter().map(|p| p.iter().map(|v| v * f).collect()).collect();
        let w2 = Whitney::build(params(2), &scaled, 1 + j, 7 - j).unwrap();
        let expected: BTreeSet<(i32, Vec<i64>)> = cube_set(&w).into_iter().map(|(l, c)| (l - j, c)).collect();
        assert_eq!(cube_set(&w2), expected, "scale 2^{j}");
    }
}

#[test]
fn corrupted_level_fails_exactly_bounds_and_disjointness() {
    let w = Whitney::build(params(1), &[vec![0.0]], 10, 6).unwrap();
    let victim = DyadicCube::new(0, &[12]);
    assert!(w.is_enumerated(&victim));
    let cubes: Vec<(DyadicCube, Vec<f64>)> = w
        .cubes()
        .map(|(q, a)| {
            let q = if q == victim { q.parent() } else { q };
            (q, w.sites().point(a as usize).to_vec())
        })
        .collect();
    let fringe: Vec<DyadicCube> = (0..w.fringe().len()).map(|i| w.fringe().cube(i)).collect();
    let bad = Whitney::from_parts(*w.params(), &[vec![0.0]], 10, 6, &cubes, &fringe).unwrap();
    let report = bad.verify_structure(&VerifyOptions::default());
    let mut failed = report.failed();
    failed.sort();
    let mut expected = vec![CHECK_BOUNDS, CHECK_DISJOINT];
    expected.sort();
    assert_eq!(failed, expected, "{:?}", report.checks);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_decompositions_verify(seed in 0u64..1000, count in 1usize..6) {
        let w = Whitney::build(params(2), &random_sites(2, count, seed, 0.5), 1, 6).unwrap();
        let report = w.verify_structure(&VerifyOptions::default());
        prop_assert!(report.all_pass(), "{:?}", report.failed());
    }

    #[test]
    fn located_cubes_contain_the_point(seed in 0u64..1000, x in -1.9f64..1.9) {
        let w = Whitney::build(params(1), &random_sites(1, 4, seed, 0.5), 1, 8).unwrap();
        if let Ok(found) = w.locate(&[x]) {
            prop_assert!(!found.is_empty() && found.len() <= 2);
            for q in found {
                prop_assert!(q.contains_point(&[x]));
                prop_assert!(w.is_accepted(&q));
            }
        }
    }
}
