//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p whitney-harness --test acceptance`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use whitney_core::decomposition::{VerifyOptions, CHECK_BOUNDS, CHECK_DISJOINT, CHECK_RATIO};
use whitney_core::extension::jet_agreement_check;
use whitney_core::partition::{derivative_bounds, finite_difference_check};
use whitney_core::paths::{
    build_corpus, check_path, fit_decay, chain_inequality_check, sample_a_p, ChainOptions, PathOptions,
};
use whitney_core::rng::derive_seed;
use whitney_core::seminorm::{gagliardo, far_field_sum, touching_pair_integral, EstimatorConfig, Method, Region};
use whitney_core::{AxisBox, Field, MultiIndex, SpaceParams, TestFunction, Whitney};
use whitney_harness::experiments::run_envelope;
use whitney_harness::scenario::{Budgets, Scenario, SiteSpec, SCHEMA};
use whitney_harness::suite::{
    agreement_radii, partition_sum_error, random_polynomial, report_json, reproduction_error,
    strided_cubes_upto, verify_all, CHAIN_MARGIN, CHAIN_REFINEMENT,
};

type Outcome = Result<(bool, String), String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("decomposition exactness", c1_decomposition),
        ("1-D oracle equivalence", c2_oracle),
        ("partition of unity", c3_partition),
        ("polynomial reproduction", c4_reproduction),
        ("jet agreement", c5_jet_agreement),
        ("path properties", c6_paths),
        ("path cube entry distance", c7_entry_distance),
        ("seminorm calibration", c8_calibration),
        ("singular integral scale stability", c9_singular_integrals),
        ("chain inequality along paths", c10_chain_inequality),
        ("boundedness envelope", c11_envelope),
        ("reproducibility", c12_reproducibility),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += !pass as usize;
        println!(
            "{} {:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!("{} criteria, {failed} failed, {:.1}s total", criteria.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gaussian_scenario(n: usize, s: f64, p: f64, sites: SiteSpec, domain_exp: i32, max_level: i32, seed: u64) -> Scenario {
    let center: Vec<f64> = [0.1, -0.2, 0.15][..n].to_vec();
    Scenario {
        schema: SCHEMA,
        name: format!("gaussian-{n}d"),
        params: SpaceParams::new(n, s, p).unwrap(),
        sites,
        function: TestFunction::Gaussian { center, width: 0.8, amplitude: 1.0 },
        domain_exp,
        max_level,
        seed,
        budgets: Budgets::default(),
        output_dir: None,
    }
}

fn c1_decomposition() -> Outcome {
    let t = Instant::now();
    let mut cubes = 0usize;
    let mut failures = Vec::new();
    // (n, sites, domain exponent, site radius)
    for (n, count, domain_exp, radius) in [(1usize, 50usize, 1, 1.0), (2, 20, 0, 0.5), (3, 1, 0, 0.5)] {
        let params = SpaceParams::new(n, 1.5, 2.0 * n as f64 + 2.0).unwrap();
        for k in 0..10u64 {
            let sites = SiteSpec::Random { count, seed: derive_seed(100 + n as u64, k), radius }.generate(n).map_err(err)?;
            let w = Whitney::build(params, &sites, domain_exp, 12).map_err(err)?;
            cubes += w.len();
            let rep = w.verify_structure(&VerifyOptions { neighbor_sample: 1, overlap_samples: 1, seed: k });
            for name in [CHECK_BOUNDS, CHECK_DISJOINT, CHECK_RATIO] {
                match rep.check(name) {
                    Some(c) if c.pass => {}
                    Some(c) => failures.push(format!("n={n} #{k} {name}: {}", c.detail)),
                    None => failures.push(format!("n={n} #{k} {name}: missing")),
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs <= 60.0;
    Ok((
        pass,
        match failures.first() {
            Some(f) => format!("{} failures, first: {f}", failures.len()),
            None => format!("30 scenarios, {cubes} cubes all exact, {secs:.1}s (limit 60s)"),
        },
    ))
}

/// Exhaustive scan of every dyadic interval in `[-2^L, 2^L]` at every level,
/// accepting those at distance >= 10 side from 0 whose parent is closer.
fn brute_force_1d(domain_exp: i32, max_level: i32) -> BTreeSet<(i32, i64)> {
    // distance of [a, a+1]·2^-m from 0 in units of 2^-m
    let dist = |a: i64| if a >= 0 { a } else { -a - 1 };
    let mut out = BTreeSet::new();
    for m in -domain_exp..=max_level {
        let half = 1i64 << (domain_exp + m);
        for a in -half..half {
            let ok = dist(a) >= 10;
            let parent_fails = m == -domain_exp || dist(a.div_euclid(2)) < 10;
            if ok && parent_fails {
                out.insert((m, a));
            }
        }
    }
    out
}

fn c2_oracle() -> Outcome {
    let (domain_exp, max_level) = (6, 12);
    let w = Whitney::build(SpaceParams::new(1, 1.5, 4.0).unwrap(), &[vec![0.0]], domain_exp, max_level).map_err(err)?;
    let got: BTreeSet<(i32, i64)> = w.cubes().map(|(q, _)| (q.level, q.coords[0])).collect();
    let oracle = brute_force_1d(domain_exp, max_level);
    // Where a whole block of ten fits in the domain the scan is {±10..19}.
    let mut pattern_ok = true;
    for m in -1..=max_level {
        let at: BTreeSet<i64> = got.iter().filter(|(l, _)| *l == m).map(|(_, a)| *a).collect();
        let want: BTreeSet<i64> = (10..20).chain(-20..-10).collect();
        pattern_ok &= at == want;
    }
    let pass = got == oracle && pattern_ok;
    Ok((
        pass,
        format!(
            "{} cubes, brute force {} ({} differ), {{±10..19}} at levels -1..{max_level}: {pattern_ok}",
            got.len(),
            oracle.len(),
            got.symmetric_difference(&oracle).count()
        ),
    ))
}

fn c3_partition() -> Outcome {
    let sc = gaussian_scenario(2, 1.5, 6.0, SiteSpec::Random { count: 10, seed: 3, radius: 1.0 }, 2, 10, 7);
    let w = sc.decompose().map_err(err)?;
    let sum_err = partition_sum_error(&w, 10_000, 31).map_err(err)?;
    let fd = finite_difference_check(&w, 100, 32, 1e-5).map_err(err)?;
    let order = sc.params.floor_s() + 1;
    let db = derivative_bounds(&w, order, &[6, 7, 8, 9], 9, 400).map_err(err)?;
    let spread = db.spread.iter().copied().fold(1.0, f64::max);
    let pass = sum_err <= 1e-12 && fd.max_rel_error <= 1e-5 && spread < 1.25;
    Ok((
        pass,
        format!(
            "max |Σθ−1| {sum_err:.1e} over 10^4 points, FD rel error {:.1e} over 100, scale spread {spread:.4} over levels 6..9 for |k| <= {order}",
            fd.max_rel_error
        ),
    ))
}

fn c4_reproduction() -> Outcome {
    let configs: [(usize, f64, f64); 4] = [(1, 1.5, 4.0), (1, 2.5, 4.0), (2, 1.5, 6.0), (2, 2.5, 4.0)];
    let mut worst = 0.0f64;
    for (k, &(n, s, p)) in configs.iter().enumerate() {
        let sc = gaussian_scenario(n, s, p, SiteSpec::Random { count: 8, seed: 40 + k as u64, radius: 1.0 }, 2, 10, 0);
        let w = Arc::new(sc.decompose().map_err(err)?);
        for j in 0..5u64 {
            let poly_seed = derive_seed(400 + k as u64, j);
            // degrees 0..=⌊s⌋ cycled through the corpus
            let degree = j as usize % (sc.params.floor_s() + 1);
            let poly = random_polynomial(n, degree, poly_seed);
            worst = worst.max(reproduction_error(&w, sc.params, &poly, 1000, poly_seed).map_err(err)?);
        }
    }
    Ok((worst <= 1e-10, format!("20 polynomials, max |Tf−P|/(1+max|P|) = {worst:.2e} (limit 1e-10)")))
}

fn c5_jet_agreement() -> Outcome {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (n, s, p, count) in [(1usize, 1.5, 4.0, 6usize), (1, 2.5, 4.0, 6), (2, 1.5, 6.0, 6)] {
        let sc = gaussian_scenario(n, s, p, SiteSpec::Random { count, seed: 50, radius: 1.0 }, 2, 12, 0);
        let inst = sc.instance().map_err(err)?;
        let m = sc.params.floor_s();
        let reference: &dyn Field = &sc.function;
        for site in 0..count {
            let radii = agreement_radii(&inst.decomposition, site);
            for i in MultiIndex::all_upto(n, m) {
                let need = m as f64 - i.order() as f64 + 0.5;
                let r = jet_agreement_check(&inst.extension, site, &i, &radii, Some(reference), need).map_err(err)?;
                rows.push(r.fitted_order - need);
                if !r.pass {
                    failures.push(format!("n={n} s={s} site {site} ∂^{i}: {:.2} < {need}", r.fitted_order));
                }
            }
        }
    }
    let margin = rows.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        failures.is_empty(),
        match failures.first() {
            Some(f) => format!("{} failures, first: {f}", failures.len()),
            None => format!("{} (site, i) profiles, smallest margin over ⌊s⌋−|i|+1/2: {margin:.2}", rows.len()),
        },
    ))
}

/// Scenarios whose corpora feed criteria 6 and 7.
fn corpus_scenarios() -> Vec<Scenario> {
    vec![
        gaussian_scenario(1, 1.5, 4.0, SiteSpec::Random { count: 6, seed: 7, radius: 1.0 }, 3, 12, 42),
        gaussian_scenario(2, 1.5, 6.0, SiteSpec::Random { count: 10, seed: 3, radius: 1.0 }, 2, 10, 7),
    ]
}

fn c6_paths() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for sc in corpus_scenarios() {
        let w = sc.decompose().map_err(err)?;
        let opts = PathOptions::for_decomposition(&w);
        let corpus = build_corpus(&w, &strided_cubes_upto(&w, 20, w.max_level() - 2), 10, derive_seed(sc.seed, 6), &opts).map_err(err)?;
        let mut bad = 0;
        for (i, path) in corpus.iter().enumerate() {
            let c = check_path(path, 1000, derive_seed(sc.seed, 600 + i as u64)).map_err(err)?;
            let ok = c.origin_in_first
                && c.adjacency
                && c.entries_increasing
                && c.coverage_exact
                && c.coverage_failures == 0
                && c.monotone_approach;
            bad += !ok as usize;
        }
        let d = fit_decay(&corpus).map_err(err)?;
        pass &= corpus.len() == 200 && bad == 0 && d.a < 1.0;
        details.push(format!("n={} {} paths {bad} failing a={:.4}", sc.params.n(), corpus.len(), d.a));
    }

    let w = Whitney::build(SpaceParams::new(1, 1.5, 4.0).unwrap(), &[vec![0.0]], 7, 12).map_err(err)?;
    let opts = PathOptions::for_decomposition(&w);
    let cubes = strided_cubes_upto(&w, 20, 0);
    let corpus = build_corpus(&w, &cubes, 10, 66, &opts).map_err(err)?;
    let d = fit_decay(&corpus).map_err(err)?;
    let exact = d.c_n == 10 && d.a == 2f64.powf(-0.1);
    pass &= exact;
    details.push(format!("1-D single site: C_n={} a={} (2^-1/10 exact: {exact})", d.c_n, d.a));
    Ok((pass, details.join("; ")))
}

fn c7_entry_distance() -> Outcome {
    let mut checked = 0;
    let mut failures = 0;
    for sc in corpus_scenarios() {
        let w = sc.decompose().map_err(err)?;
        let opts = PathOptions::for_decomposition(&w);
        let corpus = build_corpus(&w, &strided_cubes_upto(&w, 20, w.max_level() - 2), 10, derive_seed(sc.seed, 7), &opts).map_err(err)?;
        for (i, path) in corpus.iter().enumerate() {
            let c = check_path(path, 0, i as u64).map_err(err)?;
            checked += c.entry_distance_checked;
            failures += c.entry_distance_failures;
        }
    }
    Ok((
        checked >= 10_000 && failures == 0,
        format!("{checked} path cubes (need 10^4), {failures} outside 10δ <= |x′−x_P| <= 131δ"),
    ))
}

fn c8_calibration() -> Outcome {
    let params = SpaceParams::new(1, 0.5, 2.0).unwrap();
    let f = TestFunction::polynomial(1, &[(1.0, &[1])]);
    let unit = Region::single(AxisBox::new(vec![0.0], vec![1.0]).map_err(err)?);
    let mut cal = Vec::new();
    let mut pass = true;
    for m in Method::ALL {
        let e = gagliardo(&f, &unit, &params, &EstimatorConfig::new(m, 1_000_000, 8)).map_err(err)?;
        pass &= (e.value - 1.0).abs() <= 0.01;
        cal.push(format!("{}={:.5}", m.name(), e.value));
    }

    let g = |c: &[f64], w: f64| TestFunction::Gaussian { center: c.to_vec(), width: w, amplitude: 1.0 };
    let bx = |lo: &[f64], hi: &[f64]| Region::single(AxisBox::new(lo.to_vec(), hi.to_vec()).unwrap());
    let configs: Vec<(SpaceParams, TestFunction, Region)> = vec![
        (SpaceParams::new(1, 0.5, 2.0).unwrap(), g(&[0.3], 0.5), bx(&[0.0], &[1.0])),
        (SpaceParams::new(1, 1.5, 4.0).unwrap(), g(&[0.1], 0.7), bx(&[-1.0], &[1.0])),
        (
            SpaceParams::new(1, 0.75, 4.0).unwrap(),
            TestFunction::BumpProduct { center: vec![0.0], radius: 1.2, amplitude: 1.0 },
            bx(&[-1.0], &[1.0]),
        ),
        (
            SpaceParams::new(1, 2.25, 4.0).unwrap(),
            TestFunction::polynomial(1, &[(1.0, &[3]), (-0.5, &[2]), (0.25, &[0])]),
            bx(&[0.0], &[2.0]),
        ),
        (SpaceParams::new(1, 1.5, 2.0).unwrap(), g(&[-0.2], 0.4), bx(&[-1.0], &[1.0])),
        (SpaceParams::new(2, 1.5, 6.0).unwrap(), g(&[0.1, -0.2], 0.8), bx(&[-1.0, -1.0], &[1.0, 1.0])),
        (SpaceParams::new(2, 0.5, 4.0).unwrap(), g(&[0.5, 0.5], 0.6), bx(&[0.0, 0.0], &[1.0, 1.0])),
        (
            SpaceParams::new(2, 1.25, 4.0).unwrap(),
            TestFunction::BumpProduct { center: vec![0.0, 0.5], radius: 1.5, amplitude: 1.0 },
            bx(&[-1.0, 0.0], &[1.0, 1.0]),
        ),
        (
            SpaceParams::new(2, 2.5, 4.0).unwrap(),
            TestFunction::polynomial(2, &[(1.0, &[3, 0]), (-1.0, &[1, 2]), (0.5, &[0, 1])]),
            bx(&[0.0, 0.0], &[1.0, 1.0]),
        ),
        (SpaceParams::new(3, 1.5, 6.0).unwrap(), g(&[0.5, 0.4, 0.6], 0.9), bx(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0])),
    ];
    let mut agree = 0;
    let mut worst = 0.0f64;
    let mut disagree = Vec::new();
    for (k, (params, f, region)) in configs.iter().enumerate() {
        let seed = 800 + k as u64;
        let mc = gagliardo(f, region, params, &EstimatorConfig::new(Method::PlainMc, 1_000_000, seed)).map_err(err)?;
        let tq = gagliardo(f, region, params, &EstimatorConfig::new(Method::TensorQuad, 1_000_000, seed)).map_err(err)?;
        let gap = (mc.value_p - tq.value_p).abs();
        let allowed = mc.error_bound_p + tq.error_bound_p;
        worst = worst.max(gap / allowed);
        if gap <= allowed {
            agree += 1;
        } else {
            disagree.push(format!("#{} {:.5e} vs {:.5e}", k + 1, mc.value_p, tq.value_p));
        }
    }
    pass &= agree == configs.len();
    Ok((
        pass,
        format!(
            "calibration {} (target 1 ± 1%); plain-mc vs tensor-quad agree on {agree}/{}, max gap/bound {worst:.2}{}",
            cal.join(" "),
            configs.len(),
            if disagree.is_empty() { String::new() } else { format!(", outside: {}", disagree.join(", ")) }
        ),
    ))
}

fn c9_singular_integrals() -> Outcome {
    let mut worst_touch = 0.0f64;
    let mut worst_far = 0.0f64;
    let mut far_bounded = true;
    for (n, x0) in [(1usize, vec![12.3]), (2, vec![12.3, 3.7]), (2, vec![-7.1, 9.2])] {
        let params = SpaceParams::new(n, 1.5, if n == 1 { 4.0 } else { 6.0 }).unwrap();
        let w = Whitney::build(params, &[vec![0.0; n]], 8, 12).map_err(err)?;
        let mut touch = Vec::new();
        let mut far = Vec::new();
        for m in 0..3 {
            let x: Vec<f64> = x0.iter().map(|v| v * 0.5f64.powi(m)).collect();
            let q = w.locate(&x).map_err(err)?[0].clone();
            let q2 = w.neighbors(&q)[0].clone();
            touch.push(touching_pair_integral(&q, &q2, &params, 20_000).map_err(err)?.ratio);
            let f = far_field_sum(&w, &q, 20_000).map_err(err)?;
            far_bounded &= f.ratio <= f.comparator && f.summable;
            far.push(f.ratio);
        }
        let spread = |v: &[f64]| v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
        worst_touch = worst_touch.max(spread(&touch));
        worst_far = worst_far.max(spread(&far));
    }
    Ok((
        worst_touch < 0.1 && worst_far < 0.1 && far_bounded,
        format!(
            "max variation across 3 scales: touching {:.2e}, far {:.2e} (limit 10%); far ratios below comparator: {far_bounded}",
            worst_touch, worst_far
        ),
    ))
}

fn c10_chain_inequality() -> Outcome {
    let params = SpaceParams::new(1, 1.5, 4.0).unwrap();
    let sites = SiteSpec::Random { count: 6, seed: 7, radius: 1.0 }.generate(1).map_err(err)?;
    let w = Whitney::build(params, &sites, 3, 12).map_err(err)?;
    let fine = PathOptions::for_decomposition(&w);
    let coarse = PathOptions { level_cap: Some(w.max_level() - CHAIN_REFINEMENT), ..fine };
    let est = EstimatorConfig::new(Method::TensorQuad, 2000, 10);
    let cubes = strided_cubes_upto(&w, 5, w.max_level() - CHAIN_REFINEMENT - CHAIN_MARGIN);
    let fields = [(0.1, 0.7), (-0.4, 0.5), (0.6, 1.2), (0.0, 0.3)];
    let (mut max_fine, mut max_coarse) = (0.0f64, 0.0f64);
    let mut configs = 0;
    for (k, p) in cubes.iter().enumerate() {
        for (j, &(c, width)) in fields.iter().enumerate() {
            let f = TestFunction::Gaussian { center: vec![c], width, amplitude: 1.0 };
            let x = sample_a_p(&w, p, derive_seed(10, (k * fields.len() + j) as u64));
            let a = chain_inequality_check(&w, p, &x, &f, &ChainOptions { path: fine, estimator: est }).map_err(err)?;
            let b = chain_inequality_check(&w, p, &x, &f, &ChainOptions { path: coarse, estimator: est }).map_err(err)?;
            max_fine = max_fine.max(a.ratio);
            max_coarse = max_coarse.max(b.ratio);
            configs += 1;
        }
    }
    let change = (max_fine - max_coarse).abs() / max_fine;

    let mut zero = true;
    let polys = [
        TestFunction::polynomial(1, &[(2.0, &[1]), (1.0, &[0])]),
        TestFunction::polynomial(1, &[(0.5, &[1]), (-1.25, &[0])]),
        TestFunction::polynomial(1, &[(-4.0, &[1])]),
        TestFunction::polynomial(1, &[(3.0, &[0])]),
    ];
    for (k, p) in cubes.iter().enumerate() {
        for f in &polys {
            let x = sample_a_p(&w, p, derive_seed(11, k as u64));
            zero &= chain_inequality_check(&w, p, &x, f, &ChainOptions { path: fine, estimator: est }).map_err(err)?.lhs == 0.0;
        }
    }
    Ok((
        configs == 20 && max_fine.is_finite() && change <= 0.2 && zero,
        format!(
            "{configs} configs, max LHS/RHS {max_fine:.4e} (cap L_max−{CHAIN_REFINEMENT}: {max_coarse:.4e}, change {:.3}%), polynomial LHS = 0: {zero}",
            100.0 * change
        ),
    ))
}

fn c11_envelope() -> Outcome {
    let mut base = gaussian_scenario(2, 1.5, 6.0, SiteSpec::Random { count: 10, seed: 0, radius: 1.0 }, 1, 12, 11);
    base.name = "envelope".into();
    base.budgets.method = Method::ImportanceMc;
    base.budgets.seminorm = 400_000;
    let seeds: Vec<u64> = (1..=10).collect();
    let r = run_envelope(&base, &[10, 25, 50, 100], &seeds, 1.0).map_err(err)?;
    let maxes: Vec<String> = r.stages.iter().map(|s| format!("{}:{:.1}", s.sites, s.max_rho)).collect();
    let growth: Vec<String> = r.growth.iter().map(|g| format!("{g:.2}")).collect();
    Ok((r.pass, format!("max ρ per size {}; growth {} (limit 2×); all finite: {}", maxes.join(" "), growth.join(" "), r.all_finite)))
}

fn c12_reproducibility() -> Outcome {
    let mut sc = gaussian_scenario(1, 1.5, 4.0, SiteSpec::Random { count: 6, seed: 7, radius: 1.0 }, 3, 10, 42);
    sc.budgets.seminorm = 20_000;
    let a = report_json(&verify_all(&sc).map_err(err)?).map_err(err)?;
    let b = report_json(&verify_all(&sc).map_err(err)?).map_err(err)?;
    let bound_a = report_json(&whitney_harness::experiments::run_bound_experiment(&sc).map_err(err)?).map_err(err)?;
    let bound_b = report_json(&whitney_harness::experiments::run_bound_experiment(&sc).map_err(err)?).map_err(err)?;
    let mut other = sc.clone();
    other.seed += 1;
    let c = report_json(&whitney_harness::experiments::run_bound_experiment(&other).map_err(err)?).map_err(err)?;
    Ok((
        a == b && bound_a == bound_b && bound_a != c,
        format!(
            "suite report {} bytes identical: {}; bound report identical: {}; new seed changes it: {}",
            a.len(),
            a == b,
            bound_a == bound_b,
            bound_a != c
        ),
    ))
}

