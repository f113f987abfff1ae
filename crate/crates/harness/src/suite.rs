//! `verify_all`: every module's checks on one scenario, as pass/fail entries.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use whitney_core::decomposition::VerifyOptions;
use whitney_core::extension::jet_agreement_check;
use whitney_core::functions::Monomial;
use whitney_core::partition::{derivative_bounds, finite_difference_check, partition_at};
use whitney_core::paths::{build_corpus, check_path, fit_decay, chain_inequality_check, sample_a_p, ChainOptions, PathOptions};
use whitney_core::rng::{derive_seed, stream};
use whitney_core::seminorm::{far_field_sum, touching_pair_integral, EstimatorConfig, Method};
use whitney_core::{
    DyadicCube, Error, ExtensionField, JetField, MultiIndex, Result, SpaceParams, TestFunction, Whitney,
};

use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub module: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub scenario: String,
    pub checks: Vec<SuiteCheck>,
    pub all_pass: bool,
    /// Per-module measurements backing the checks.
    pub data: Value,
}

impl SuiteReport {
    pub fn check(&self, module: &str, name: &str) -> Option<&SuiteCheck> {
        self.checks.iter().find(|c| c.module == module && c.name == name)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {:<14} {:<34} {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.module,
                c.name,
                c.detail
            ));
        }
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        s.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        s
    }
}

struct Builder {
    checks: Vec<SuiteCheck>,
    data: serde_json::Map<String, Value>,
}

impl Builder {
    fn add(&mut self, module: &str, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(SuiteCheck { module: module.into(), name: name.into(), pass, detail: detail.into() });
    }

    fn error(&mut self, module: &str, name: &str, e: Error) {
        self.add(module, name, false, format!("error: {e}"));
    }
}

/// Check groups of the suite, in run order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Decomposition,
    Partition,
    Extension,
    Paths,
    Seminorm,
}

impl Module {
    pub const ALL: [Module; 5] = [Module::Decomposition, Module::Partition, Module::Extension, Module::Paths, Module::Seminorm];
}

/// Run the full verification suite.
pub fn verify_all(sc: &Scenario) -> Result<SuiteReport> {
    verify_modules(sc, &Module::ALL)
}

/// Run the checks of the selected modules only.
pub fn verify_modules(sc: &Scenario, modules: &[Module]) -> Result<SuiteReport> {
    let inst = sc.instance()?;
    let w = &inst.decomposition;
    let mut b = Builder { checks: Vec::new(), data: serde_json::Map::new() };

    for m in Module::ALL.iter().filter(|m| modules.contains(m)) {
        match m {
            Module::Decomposition => decomposition_checks(&mut b, w, sc),
            Module::Partition => partition_checks(&mut b, w, sc),
            Module::Extension => extension_checks(&mut b, w, &inst.extension, sc),
            Module::Paths => path_checks(&mut b, w, sc),
            Module::Seminorm => singular_integral_checks(&mut b, w, sc),
        }
    }

    let all_pass = b.checks.iter().all(|c| c.pass);
    Ok(SuiteReport { scenario: sc.name.clone(), checks: b.checks, all_pass, data: Value::Object(b.data) })
}

fn decomposition_checks(b: &mut Builder, w: &Whitney, sc: &Scenario) {
    let opts = VerifyOptions {
        neighbor_sample: sc.budgets.neighbor_sample,
        overlap_samples: sc.budgets.overlap_samples,
        seed: derive_seed(sc.seed, 11),
    };
    let rep = w.verify_structure(&opts);
    for c in &rep.checks {
        b.add("decomposition", &c.name, c.pass, c.detail.clone());
    }
    b.data.insert("decomposition".into(), serde_json::to_value(&rep).unwrap_or(Value::Null));
}

/// Random points of `Ω` off the sites.
fn domain_points(w: &Whitney, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let dom = w.domain_box();
    (0..count as u64)
        .map(|i| {
            let mut rng = stream(seed, i);
            loop {
                let u: Vec<f64> = (0..w.dim()).map(|_| rng.gen()).collect();
                let x = dom.affine(&u);
                if w.sites().index_of(&x).is_none() {
                    return x;
                }
            }
        })
        .collect()
}

/// Largest `|Σθ − 1|` over `count` random points.
pub fn partition_sum_error(w: &Whitney, count: usize, seed: u64) -> Result<f64> {
    let errs: Vec<Result<f64>> = domain_points(w, count, seed)
        .par_iter()
        .map(|x| Ok((partition_at(w, x, 0)?.sum().value() - 1.0).abs()))
        .collect();
    errs.into_iter().try_fold(0.0f64, |m, e| Ok(m.max(e?)))
}

fn partition_checks(b: &mut Builder, w: &Whitney, sc: &Scenario) {
    let m = "partition";
    match partition_sum_error(w, sc.budgets.pou_points, derive_seed(sc.seed, 21)) {
        Ok(e) => b.add(m, "sum_to_one", e <= 1e-12, format!("max |Σθ−1| = {e:.2e} over {} points", sc.budgets.pou_points)),
        Err(e) => b.error(m, "sum_to_one", e),
    }
    match finite_difference_check(w, sc.budgets.fd_samples, derive_seed(sc.seed, 22), 1e-5) {
        Ok(r) => {
            b.add(m, "derivatives_vs_finite_differences", r.pass, format!("max rel error {:.2e}", r.max_rel_error));
            b.data.insert("finite_differences".into(), serde_json::to_value(&r).unwrap_or(Value::Null));
        }
        Err(e) => b.error(m, "derivatives_vs_finite_differences", e),
    }
    let top = w.levels().iter().filter(|l| !l.is_empty()).map(|l| l.level).max().unwrap_or(w.max_level());
    let levels: Vec<i32> = (top - 4..top).collect();
    let order = sc.params.floor_s() + 1;
    match derivative_bounds(w, order, &levels, 9, sc.budgets.derivative_cubes) {
        Ok(r) => {
            b.add(
                m,
                "scale_normalized_derivatives",
                r.stable,
                format!("levels {levels:?}, spread per order {:?}", r.spread.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>()),
            );
            b.data.insert("derivative_bounds".into(), serde_json::to_value(&r).unwrap_or(Value::Null));
        }
        Err(e) => b.error(m, "scale_normalized_derivatives", e),
    }
}

/// Random polynomial of degree `<= degree` with coefficients in `[-1, 1]`.
pub fn random_polynomial(n: usize, degree: usize, seed: u64) -> TestFunction {
    let mut rng = stream(seed, 0);
    let terms = MultiIndex::all_upto(n, degree)
        .into_iter()
        .map(|k| Monomial { coeff: 2.0 * rng.gen::<f64>() - 1.0, powers: k })
        .collect();
    TestFunction::Polynomial { n, terms }
}

/// Max of `|Tf − P| / (1 + max|P|)` at `count` random points for the
/// extension of the jets of `poly`.
pub fn reproduction_error(w: &std::sync::Arc<Whitney>, params: SpaceParams, poly: &TestFunction, count: usize, seed: u64) -> Result<f64> {
    use whitney_core::Field;
    let jets = JetField::sample(params, w.sites(), poly)?;
    let tf = ExtensionField::new(w.clone(), jets)?;
    let pts = domain_points(w, count, seed);
    let rows: Vec<Result<(f64, f64)>> = pts
        .par_iter()
        .map(|x| {
            let exact = poly.value(x)?;
            Ok(((tf.value(x)? - exact).abs(), exact.abs()))
        })
        .collect();
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for r in rows {
        let (e, s) = r?;
        err = err.max(e);
        scale = scale.max(s);
    }
    Ok(err / (1.0 + scale))
}

/// Radii for the jet-agreement profile at `site`, well inside the region
/// where every covering cube is anchored at the site.
pub fn agreement_radii(w: &Whitney, site: usize) -> Vec<f64> {
    let x0 = w.sites().point(site);
    let sep = w
        .sites()
        .points()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != site)
        .map(|(_, p)| p.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(w.domain_radius(), f64::min);
    let r0 = 0.05 * sep;
    (0..8).map(|k| r0 * 0.5f64.powi(k)).collect()
}

fn extension_checks(b: &mut Builder, w: &std::sync::Arc<Whitney>, tf: &ExtensionField, sc: &Scenario) {
    let m = "extension";
    let deg = sc.params.floor_s();
    let poly = random_polynomial(sc.params.n(), deg, derive_seed(sc.seed, 31));
    match reproduction_error(w, sc.params, &poly, sc.budgets.reproduction_points, derive_seed(sc.seed, 32)) {
        Ok(e) => b.add(m, "polynomial_reproduction", e <= 1e-10, format!("max |Tf−P|/(1+max|P|) = {e:.2e}")),
        Err(e) => b.error(m, "polynomial_reproduction", e),
    }
    let mut worst: Option<(f64, f64)> = None;
    let mut failures = Vec::new();
    let sites = w.sites().len().min(5);
    for site in 0..sites {
        let radii = agreement_radii(w, site);
        for i in MultiIndex::all_upto(sc.params.n(), deg) {
            let need = deg as f64 - i.order() as f64 + 0.5;
            match jet_agreement_check(tf, site, &i, &radii, Some(&sc.function as &dyn whitney_core::Field), need) {
                Ok(r) => {
                    if worst.is_none_or(|(g, n)| r.fitted_order - r.required_order < g - n) {
                        worst = Some((r.fitted_order, r.required_order));
                    }
                    if !r.pass {
                        failures.push(format!("site {site} ∂^{i}: order {:.2} < {:.2}", r.fitted_order, r.required_order));
                    }
                }
                Err(e) => failures.push(format!("site {site} ∂^{i}: {e}")),
            }
        }
    }
    let detail = match (&worst, failures.first()) {
        (_, Some(f)) => f.clone(),
        (Some((g, n)), None) => format!("tightest fitted order {g:.2} vs required {n:.2} over {sites} sites"),
        _ => "no profile".into(),
    };
    b.add(m, "jet_agreement", failures.is_empty(), detail);
}

/// Evenly strided enumerated cubes.
pub fn strided_cubes(w: &Whitney, count: usize) -> Vec<DyadicCube> {
    strided_cubes_upto(w, count, w.max_level())
}

/// Evenly strided enumerated cubes of level at most `max_level`.
pub fn strided_cubes_upto(w: &Whitney, count: usize, max_level: i32) -> Vec<DyadicCube> {
    let pool: Vec<DyadicCube> = w.cubes().map(|(q, _)| q).filter(|q| q.level <= max_level).collect();
    if pool.is_empty() || count == 0 {
        return Vec::new();
    }
    let stride = (pool.len() / count).max(1);
    pool.into_iter().step_by(stride).take(count).collect()
}

/// Levels kept between a chain-inequality cube and the coarser truncation.
pub const CHAIN_MARGIN: i32 = 4;
/// The coarser truncation sits this many levels above `L_max`.
pub const CHAIN_REFINEMENT: i32 = 2;

fn path_checks(b: &mut Builder, w: &Whitney, sc: &Scenario) {
    let m = "paths";
    // A_P reaches two levels below P; deeper P would start under the level cap
    let cubes = strided_cubes_upto(w, sc.budgets.path_cubes, w.max_level() - 2);
    let opts = PathOptions::for_decomposition(w);
    let corpus = match build_corpus(w, &cubes, sc.budgets.paths_per_cube, derive_seed(sc.seed, 41), &opts) {
        Ok(c) => c,
        Err(e) => return b.error(m, "corpus", e),
    };
    let results: Vec<Result<whitney_core::paths::PathChecks>> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, p)| check_path(p, sc.budgets.path_coverage_samples, derive_seed(sc.seed, 1000 + i as u64)))
        .collect();
    let mut bad = 0;
    let mut entry = (0usize, 0usize);
    for r in &results {
        match r {
            Ok(c) => {
                if !(c.origin_in_first && c.adjacency && c.entries_increasing && c.coverage_exact && c.coverage_failures == 0 && c.monotone_approach) {
                    bad += 1;
                }
                entry.0 += c.entry_distance_checked;
                entry.1 += c.entry_distance_failures;
            }
            Err(_) => bad += 1,
        }
    }
    b.add(m, "coverage_adjacency_monotone", bad == 0, format!("{} paths, {bad} failing", corpus.len()));
    b.add(m, "entry_distance", entry.1 == 0, format!("{} cubes, {} outside [10δ, 131δ]", entry.0, entry.1));
    match fit_decay(&corpus) {
        Ok(d) => {
            b.add(m, "decay_fit", d.a < 1.0 && d.big_a.is_finite(), format!("C_n = {}, a = {:.4}, A = {}", d.c_n, d.a, d.big_a));
            b.data.insert("decay".into(), serde_json::to_value(d).unwrap_or(Value::Null));
        }
        Err(e) => b.error(m, "decay_fit", e),
    }

    if !sc.params.embedding_holds() {
        b.add(m, "chain_inequality", true, "skipped: n/p >= {s}");
        return;
    }
    let est = EstimatorConfig::new(Method::TensorQuad, sc.budgets.chain_budget, sc.seed);
    let coarse_cap = Some(w.max_level() - CHAIN_REFINEMENT);
    let mut rows = Vec::new();
    let mut worst_change = 0.0f64;
    let mut flagged = 0;
    for (k, p) in strided_cubes_upto(w, sc.budgets.chain_configs, w.max_level() - CHAIN_REFINEMENT - CHAIN_MARGIN).iter().enumerate() {
        let x = sample_a_p(w, p, derive_seed(sc.seed, 500 + k as u64));
        let fine = ChainOptions { path: opts, estimator: est };
        let coarse = ChainOptions { path: PathOptions { level_cap: coarse_cap, ..opts }, estimator: est };
        match (chain_inequality_check(w, p, &x, &sc.function, &fine), chain_inequality_check(w, p, &x, &sc.function, &coarse)) {
            (Ok(f), Ok(c)) => {
                if f.ratio > 0.0 {
                    worst_change = worst_change.max((f.ratio - c.ratio).abs() / f.ratio);
                }
                flagged += f.tail_flagged as usize;
                rows.push(json!({"cube": f.cube, "ratio": f.ratio, "ratio_coarse": c.ratio, "tail": f.tail_bound}));
            }
            (Err(e), _) | (_, Err(e)) => return b.error(m, "chain_inequality", e),
        }
    }
    if rows.is_empty() {
        let top = w.max_level() - CHAIN_REFINEMENT - CHAIN_MARGIN;
        b.add(m, "chain_inequality", false, format!("no enumerated cube at level <= {top}; raise max_level"));
        return;
    }
    let max_ratio = rows.iter().filter_map(|r| r["ratio"].as_f64()).fold(0.0, f64::max);
    b.add(
        m,
        "chain_inequality",
        max_ratio.is_finite() && worst_change <= 0.2,
        format!("max LHS/RHS {max_ratio:.3e}, truncation change {:.2}%, {flagged} tails flagged", 100.0 * worst_change),
    );
    b.data.insert("chain_inequality".into(), Value::Array(rows));
}

fn singular_integral_checks(b: &mut Builder, w: &Whitney, sc: &Scenario) {
    let m = "seminorm";
    if sc.params.n() > 3 {
        b.add(m, "singular_integrals", true, "skipped: n > 3");
        return;
    }
    let mut touching = Vec::new();
    let mut far = Vec::new();
    for q in strided_cubes(w, sc.budgets.singular_integral_cubes) {
        if let Some(q2) = w.neighbors(&q).into_iter().next() {
            match touching_pair_integral(&q, &q2, &sc.params, sc.budgets.singular_integrals) {
                Ok(r) => touching.push(r),
                Err(e) => return b.error(m, "touching_pairs", e),
            }
        }
        match far_field_sum(w, &q, sc.budgets.singular_integrals) {
            Ok(r) => far.push(r),
            Err(e) => return b.error(m, "far_field", e),
        }
    }
    let t_ok = touching.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0);
    let t_max = touching.iter().map(|r| r.ratio).fold(0.0, f64::max);
    b.add(m, "touching_pairs", t_ok, format!("{} pairs, max ratio {t_max:.4}", touching.len()));
    let f_ok = far.iter().all(|r| r.ratio.is_finite() && r.ratio <= r.comparator * (1.0 + 1e-6) && r.summable);
    let f_max = far.iter().map(|r| r.ratio / r.comparator).fold(0.0, f64::max);
    b.add(m, "far_field", f_ok, format!("{} cubes, max ratio/comparator {f_max:.4}", far.len()));
    b.data.insert("touching_pairs".into(), serde_json::to_value(&touching).unwrap_or(Value::Null));
    b.data.insert("far_field".into(), serde_json::to_value(&far).unwrap_or(Value::Null));
}

/// Canonical `report.json` text: pretty JSON with a trailing newline.
pub fn report_json<T: Serialize>(report: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}
