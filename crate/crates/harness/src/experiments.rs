//! End-to-end experiments: the operator-norm proxy `ρ = ‖Tf‖/‖F‖`, the
//! split of the double integral of `Tf` by cube adjacency, and the
//! envelope of `ρ` over growing random site sets.

use serde::{Deserialize, Serialize};
use whitney_core::rng::derive_seed;
use whitney_core::seminorm::{
    gagliardo, gagliardo_extension, integrate, integrate_split, EstimatorConfig, GagliardoIntegrand, Integral, Region,
    SeminormEstimate,
};
use whitney_core::{DyadicCube, Error, Result, Whitney};

use crate::scenario::{Instance, Scenario, SiteSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionStats {
    pub sites: usize,
    pub cubes: usize,
    pub fringe: usize,
    pub min_level: i32,
    pub max_level: i32,
}

impl DecompositionStats {
    pub fn of(w: &Whitney) -> Self {
        let levels: Vec<i32> = w.levels().iter().filter(|l| !l.is_empty()).map(|l| l.level).collect();
        DecompositionStats {
            sites: w.sites().len(),
            cubes: w.len(),
            fringe: w.fringe().len(),
            min_level: levels.first().copied().unwrap_or(w.max_level()),
            max_level: levels.last().copied().unwrap_or(w.max_level()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub scenario: String,
    pub decomposition: DecompositionStats,
    pub extension: SeminormEstimate,
    pub reference: SeminormEstimate,
    /// `‖Tf‖_Ω / ‖F‖_Ω`; `None` when both vanish.
    pub rho: Option<f64>,
    /// First-order propagation of the two error bounds.
    pub rho_error: Option<f64>,
    pub degenerate: bool,
    pub note: Option<String>,
}

/// Estimate `‖Tf‖` and `‖F‖` over `Ω` with the same method, budget and seed.
pub fn run_bound_experiment(sc: &Scenario) -> Result<BoundednessReport> {
    let inst = sc.instance().map_err(|e| context(sc, e))?;
    let w = &inst.decomposition;
    let region = Region::single(w.domain_box());
    let cfg = sc.estimator();
    let tf = gagliardo_extension(&inst.extension, &region, &cfg).map_err(|e| context(sc, e))?;
    let f = gagliardo(&sc.function, &region, &sc.params, &cfg).map_err(|e| context(sc, e))?;
    let (rho, rho_error, degenerate, note) = ratio(&tf, &f, roundoff_floor(sc, &inst));
    Ok(BoundednessReport {
        scenario: sc.name.clone(),
        decomposition: DecompositionStats::of(w),
        extension: tf,
        reference: f,
        rho,
        rho_error,
        degenerate,
        note,
    })
}

/// Size of `‖Tf‖` that floating-point cancellation alone can produce:
/// `1e-9 · max|jet coefficient| · diam(Ω)^{n/p − {s}}`.
fn roundoff_floor(sc: &Scenario, inst: &Instance) -> f64 {
    let p = &sc.params;
    let scale = inst.jets.jets().iter().flat_map(|j| j.coeffs()).fold(0.0f64, |a, c| a.max(c.abs()));
    let diam = inst.decomposition.domain_box().diameter();
    1e-9 * scale * diam.powf(p.n() as f64 / p.p() - p.frac_s())
}

fn ratio(tf: &SeminormEstimate, f: &SeminormEstimate, floor: f64) -> (Option<f64>, Option<f64>, bool, Option<String>) {
    if f.value == 0.0 && tf.value <= floor {
        let note = if tf.value == 0.0 {
            "degenerate: both vanish".to_string()
        } else {
            format!("degenerate: both vanish (extension {:.1e} is roundoff)", tf.value)
        };
        return (None, None, true, Some(note));
    }
    if f.value == 0.0 {
        return (Some(f64::INFINITY), None, false, Some("reference seminorm vanishes".into()));
    }
    let rho = tf.value / f.value;
    let rel = tf.error_bound / tf.value.max(f64::MIN_POSITIVE) + f.error_bound / f.value;
    (Some(rho), Some(rho * rel), false, None)
}

fn context(sc: &Scenario, e: Error) -> Error {
    Error::Invalid(format!("scenario {:?}: {e}", sc.name))
}

/// Buckets of the split estimator.
const NON_TOUCHING: usize = 0;
const TOUCHING: usize = 1;
const BOTH_ON_E: usize = 2;
const ONE_ON_E: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSplitReport {
    pub scenario: String,
    /// Pairs in `E × E`.
    pub i: Integral,
    /// Pairs in non-touching cubes.
    pub ii: Integral,
    /// Pairs in the same or touching cubes.
    pub iii: Integral,
    /// Pairs with exactly one point in `E`.
    pub iv: Integral,
    /// Pairs whose cubes could not be resolved.
    pub unresolved: Integral,
    /// Whole-region estimate from the same samples.
    pub whole: Integral,
    /// Whole-region estimate from an independent stream.
    pub whole_independent: Integral,
    /// `I` evaluated directly from `F` on `E × E` (a null set).
    pub i_direct: f64,
    pub reference_norm_p: f64,
    pub checks: SplitChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitChecks {
    pub i_bounded_by_reference: bool,
    pub i_two_ways_agree: bool,
    pub sum_matches_whole: bool,
    pub sum_matches_independent: bool,
}

impl SplitChecks {
    pub fn all_pass(&self) -> bool {
        self.i_bounded_by_reference && self.i_two_ways_agree && self.sum_matches_whole && self.sum_matches_independent
    }
}

fn touching(a: &[DyadicCube], b: &[DyadicCube]) -> bool {
    a.iter().any(|p| b.iter().any(|q| p == q || p.touches(q)))
}

/// Split `∫∫_{Ω×Ω}` of the `Tf` integrand into the four regions.
pub fn run_term_split(sc: &Scenario) -> Result<TermSplitReport> {
    let inst = sc.instance().map_err(|e| context(sc, e))?;
    let w = &inst.decomposition;
    let region = Region::single(w.domain_box());
    let mut cfg = sc.estimator();
    if cfg.method == whitney_core::seminorm::Method::TensorQuad {
        cfg.method = whitney_core::seminorm::Method::ImportanceMc;
    }
    let ig = GagliardoIntegrand::extension(&inst.extension)?;
    let classify = |x: &[f64], y: &[f64]| -> Option<usize> {
        let ex = w.sites().index_of(x).is_some();
        let ey = w.sites().index_of(y).is_some();
        match (ex, ey) {
            (true, true) => return Some(BOTH_ON_E),
            (true, false) | (false, true) => return Some(ONE_ON_E),
            _ => {}
        }
        let lx = w.locate(x).ok()?;
        let ly = w.locate(y).ok()?;
        Some(if touching(&lx, &ly) { TOUCHING } else { NON_TOUCHING })
    };
    let (whole, parts) = integrate_split(&ig, &region, &cfg, &classify, 4).map_err(|e| context(sc, e))?;
    let indep_cfg = EstimatorConfig { seed: derive_seed(cfg.seed, 1), ..cfg };
    let whole_independent = integrate(&ig, &region, &indep_cfg).map_err(|e| context(sc, e))?;
    let reference = gagliardo(&sc.function, &region, &sc.params, &cfg).map_err(|e| context(sc, e))?;

    let sum = parts.iter().map(|p| p.value).sum::<f64>();
    let sum_err = parts.iter().map(|p| p.error_bound).sum::<f64>();
    let i = parts[BOTH_ON_E];
    let i_direct = 0.0;
    let slack = 1e-12 * whole.value.abs().max(1.0);
    let checks = SplitChecks {
        i_bounded_by_reference: i.value <= reference.value_p + reference.error_bound_p + i.error_bound,
        i_two_ways_agree: (i.value - i_direct).abs() <= i.error_bound + slack,
        sum_matches_whole: (sum - whole.value).abs() <= sum_err + whole.error_bound + slack,
        sum_matches_independent: (sum - whole_independent.value).abs()
            <= sum_err.max(whole.error_bound) + whole_independent.error_bound + slack,
    };
    Ok(TermSplitReport {
        scenario: sc.name.clone(),
        i,
        ii: parts[NON_TOUCHING],
        iii: parts[TOUCHING],
        iv: parts[ONE_ON_E],
        unresolved: parts[4],
        whole,
        whole_independent,
        i_direct,
        reference_norm_p: reference.value_p,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeStage {
    pub sites: usize,
    pub rhos: Vec<f64>,
    pub max_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub stages: Vec<EnvelopeStage>,
    /// `max ρ` of each stage over the previous one.
    pub growth: Vec<f64>,
    pub all_finite: bool,
    pub pass: bool,
}

/// `ρ` over random site sets of increasing size, one run per seed.
pub fn run_envelope(base: &Scenario, sizes: &[usize], seeds: &[u64], radius: f64) -> Result<EnvelopeReport> {
    let mut stages = Vec::new();
    for &size in sizes {
        let mut rhos = Vec::new();
        for &seed in seeds {
            let mut sc = base.clone();
            sc.sites = SiteSpec::Random { count: size, seed, radius };
            sc.name = format!("{}-{size}-{seed}", base.name);
            let r = run_bound_experiment(&sc)?;
            rhos.push(r.rho.unwrap_or(0.0));
        }
        let max_rho = rhos.iter().copied().fold(0.0, f64::max);
        stages.push(EnvelopeStage { sites: size, rhos, max_rho });
    }
    let growth: Vec<f64> = stages.windows(2).map(|w| w[1].max_rho / w[0].max_rho).collect();
    let all_finite = stages.iter().all(|s| s.rhos.iter().all(|r| r.is_finite()));
    let pass = all_finite && growth.iter().all(|g| *g < 2.0);
    Ok(EnvelopeReport { stages, growth, all_finite, pass })
}
