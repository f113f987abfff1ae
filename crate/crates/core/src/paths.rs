//! Chains of touching Whitney cubes covering the segment from a point to
//! the anchor of its cube, built greedily with exact rational arithmetic.
//!
//! The segment is `s(t) = x + t (x_P − x)`, `t ∈ [0, 1]`. Each chosen cube
//! `Q` carries its entry parameter `a_Q` and exit parameter `b_Q`; the next
//! cube is the one containing `s(b_Q)` that reaches farthest.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::Whitney;
use crate::dyadic::DyadicCube;
use crate::error::{Error, Result};
use crate::functions::Field;
use crate::jet::Jet;
use crate::multi_index::MultiIndex;
use crate::rng::{derive_seed, stream};
use crate::seminorm::{gagliardo, EstimatorConfig, Region};

/// Why a path stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    DiameterFloor,
    MaxLength,
    DepthCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathOptions {
    pub max_len: usize,
    /// Finest admissible level; defaults to the decomposition's `L_max`.
    pub level_cap: Option<i32>,
}

impl PathOptions {
    pub fn for_decomposition(w: &Whitney) -> Self {
        let levels = (w.max_level() + w.domain_exp() + 1).max(1) as usize;
        PathOptions { max_len: 100 * w.dim() * levels, level_cap: None }
    }
}

/// Greedy chain from `origin` towards `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubePath {
    pub origin: Vec<f64>,
    pub target: Vec<f64>,
    pub target_index: u32,
    /// Id of the cube whose anchor is `target`.
    pub start_cube: String,
    pub cubes: Vec<DyadicCube>,
    pub entries: Vec<f64>,
    pub exits: Vec<f64>,
    pub truncation: Truncation,
    #[serde(skip)]
    exact: Vec<(BigRational, BigRational)>,
}

impl CubePath {
    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn levels(&self) -> Vec<i32> {
        self.cubes.iter().map(|c| c.level).collect()
    }

    /// Exact `(a_Q, b_Q)` pairs; empty for deserialized paths.
    pub fn exact_parameters(&self) -> &[(BigRational, BigRational)] {
        &self.exact
    }

    /// Point `s(t)`.
    pub fn point_at(&self, t: f64) -> Vec<f64> {
        self.origin.iter().zip(&self.target).map(|(x, y)| x + t * (y - x)).collect()
    }
}

pub(crate) fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite coordinate")
}

fn dyadic(a: i64, level: i32) -> BigRational {
    let a = BigInt::from(a);
    if level >= 0 {
        BigRational::new(a, BigInt::one() << level as usize)
    } else {
        BigRational::from_integer(a << (-level) as usize)
    }
}

/// Segment `x + t d` with exact coordinates.
struct Segment {
    x: Vec<BigRational>,
    d: Vec<BigRational>,
}

impl Segment {
    fn new(x: &[f64], y: &[f64]) -> Self {
        let x: Vec<BigRational> = x.iter().map(|v| rational(*v)).collect();
        let d = y.iter().zip(&x).map(|(b, a)| rational(*b) - a).collect();
        Segment { x, d }
    }

    /// Closed parameter interval of the line inside `q`.
    fn interval(&self, q: &DyadicCube) -> Option<(BigRational, BigRational)> {
        let mut enter: Option<BigRational> = None;
        let mut exit: Option<BigRational> = None;
        for i in 0..self.x.len() {
            let lo = dyadic(q.coords[i], q.level);
            let hi = dyadic(q.coords[i] + 1, q.level);
            if self.d[i].is_zero() {
                if self.x[i] < lo || self.x[i] > hi {
                    return None;
                }
                continue;
            }
            let t1 = (&lo - &self.x[i]) / &self.d[i];
            let t2 = (&hi - &self.x[i]) / &self.d[i];
            let (a, b) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if enter.as_ref().is_none_or(|e| a > *e) {
                enter = Some(a);
            }
            if exit.as_ref().is_none_or(|e| b < *e) {
                exit = Some(b);
            }
        }
        match (enter, exit) {
            (Some(a), Some(b)) if a <= b => Some((a, b)),
            (Some(_), Some(_)) => None,
            // degenerate segment: every parameter is inside
            _ => Some((BigRational::from_integer((-1).into()), BigRational::from_integer(2.into()))),
        }
    }

    fn squared_length(&self) -> BigRational {
        self.d.iter().map(|v| v * v).fold(BigRational::zero(), |a, b| a + b)
    }
}

/// Greedy choice among `cands` at parameter `t`: largest exit, then coarser
/// level, then lexicographic coordinates.
fn choose(seg: &Segment, cands: &[DyadicCube], t: &BigRational) -> Option<(DyadicCube, BigRational)> {
    let mut best: Option<(DyadicCube, BigRational)> = None;
    for c in cands {
        let Some((a, b)) = seg.interval(c) else { continue };
        if a > *t || b <= *t {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bc, bb)) => b > *bb || (b == *bb && c < bc),
        };
        if better {
            best = Some((c.clone(), b));
        }
    }
    best
}

/// Build the chain from `x` towards the anchor of `p`.
pub fn build_path(w: &Whitney, p: &DyadicCube, x: &[f64], opts: &PathOptions) -> Result<CubePath> {
    let n = w.dim();
    if x.len() != n || p.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if w.sites().index_of(x).is_some() {
        return Err(Error::OnClosedSet);
    }
    let target_index = w.anchor_index(p);
    let target = w.sites().point(target_index as usize).to_vec();
    let cap = opts.level_cap.unwrap_or(w.max_level()).min(w.max_level());
    let seg = Segment::new(x, &target);
    let mut path = CubePath {
        origin: x.to_vec(),
        target,
        target_index,
        start_cube: p.id(),
        cubes: Vec::new(),
        entries: Vec::new(),
        exits: Vec::new(),
        truncation: Truncation::DiameterFloor,
        exact: Vec::new(),
    };
    let first = match w.locate(x) {
        Ok(c) => c,
        Err(Error::DepthCap { .. }) => {
            path.truncation = Truncation::DepthCap;
            return Ok(path);
        }
        Err(e) => return Err(e),
    };
    let mut t = BigRational::zero();
    let mut next = choose(&seg, &first, &t);
    loop {
        let Some((q, b)) = next else {
            return Err(Error::NumericalInconsistency(format!(
                "no cube continues the segment from {x:?} at t = {}",
                t.to_f64().unwrap_or(f64::NAN)
            )));
        };
        if q.level > cap {
            path.truncation = Truncation::DiameterFloor;
            break;
        }
        if path.cubes.len() >= opts.max_len {
            path.truncation = Truncation::MaxLength;
            break;
        }
        path.entries.push(t.to_f64().unwrap_or(f64::NAN));
        path.exits.push(b.to_f64().unwrap_or(f64::NAN));
        path.exact.push((t.clone(), b.clone()));
        path.cubes.push(q.clone());
        t = b;
        next = choose(&seg, &w.neighbors(&q), &t);
    }
    Ok(path)
}

/// Result of the structural path checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathChecks {
    pub origin_in_first: bool,
    pub adjacency: bool,
    pub entries_increasing: bool,
    /// Consecutive parameter intervals chain and each lies in its cube.
    pub coverage_exact: bool,
    pub coverage_samples: usize,
    pub coverage_failures: usize,
    pub monotone_approach: bool,
    pub entry_distance_checked: usize,
    pub entry_distance_failures: usize,
}

impl PathChecks {
    pub fn all_pass(&self) -> bool {
        self.origin_in_first
            && self.adjacency
            && self.entries_increasing
            && self.coverage_exact
            && self.coverage_failures == 0
            && self.monotone_approach
            && self.entry_distance_failures == 0
    }
}

/// `10 δ_Q <= |s(a_Q) − x_P| <= 131 δ_Q` for every cube, exactly.
pub fn entry_distance_failures(path: &CubePath) -> Result<Vec<usize>> {
    let exact = exact_or_rebuild(path)?;
    let seg = Segment::new(&path.origin, &path.target);
    let len2 = seg.squared_length();
    let n = path.origin.len() as i64;
    let mut bad = Vec::new();
    for (j, (q, (a, _))) in path.cubes.iter().zip(&exact).enumerate() {
        let one_minus = BigRational::one() - a;
        let dist2 = &one_minus * &one_minus * &len2;
        let side = dyadic(1, q.level);
        let diam2 = &side * &side * BigRational::from_integer(n.into());
        let lo = &diam2 * BigRational::from_integer(100.into());
        let hi = &diam2 * BigRational::from_integer((131 * 131).into());
        if dist2 < lo || dist2 > hi {
            bad.push(j);
        }
    }
    Ok(bad)
}

fn exact_or_rebuild(path: &CubePath) -> Result<Vec<(BigRational, BigRational)>> {
    if path.exact.len() == path.cubes.len() {
        return Ok(path.exact.clone());
    }
    let seg = Segment::new(&path.origin, &path.target);
    let mut t = BigRational::zero();
    let mut out = Vec::with_capacity(path.cubes.len());
    for q in &path.cubes {
        let (_, b) = seg
            .interval(q)
            .ok_or_else(|| Error::Invalid(format!("path cube {q:?} misses the segment")))?;
        out.push((t.clone(), b.clone()));
        t = b;
    }
    Ok(out)
}

/// Exact adjacency, ordering and coverage checks plus `samples` random
/// points on the covered prefix.
pub fn check_path(path: &CubePath, samples: usize, seed: u64) -> Result<PathChecks> {
    let exact = exact_or_rebuild(path)?;
    let seg = Segment::new(&path.origin, &path.target);
    let origin_in_first = path.cubes.first().is_some_and(|q| q.contains_point(&path.origin));
    let adjacency = path.cubes.windows(2).all(|w| w[0].touches(&w[1]));
    let entries_increasing = exact.windows(2).all(|w| w[0].0 < w[1].0);
    let mut coverage_exact = true;
    for (j, (q, (a, b))) in path.cubes.iter().zip(&exact).enumerate() {
        let inside = seg.interval(q).is_some_and(|(lo, hi)| lo <= *a && *b <= hi);
        let chained = j == 0 || exact[j - 1].1 == *a;
        coverage_exact &= inside && chained && a < b;
    }
    // |s(a) − x_P| = (1 − a)|x − x_P| decreases iff the entries increase
    let monotone_approach = entries_increasing && exact.iter().all(|(a, _)| *a < BigRational::one());

    let mut failures = 0;
    if let Some((_, end)) = exact.last() {
        let end = end.to_f64().unwrap_or(0.0);
        let mut rng = stream(seed, 0);
        for _ in 0..samples {
            let t = rational(rng.gen::<f64>() * end);
            let j = exact.partition_point(|(_, b)| *b < t).min(exact.len() - 1);
            let (lo, hi) = seg.interval(&path.cubes[j]).unwrap_or((BigRational::one(), BigRational::zero()));
            if !(lo <= t && t <= hi) {
                failures += 1;
            }
        }
    }
    Ok(PathChecks {
        origin_in_first,
        adjacency,
        entries_increasing,
        coverage_exact,
        coverage_samples: if exact.is_empty() { 0 } else { samples },
        coverage_failures: failures,
        monotone_approach,
        entry_distance_checked: path.cubes.len(),
        entry_distance_failures: entry_distance_failures(path)?.len(),
    })
}

/// Cubes within neighbor-graph distance 2 of `p`, sorted.
pub fn two_ring(w: &Whitney, p: &DyadicCube) -> Vec<DyadicCube> {
    let mut set = vec![p.clone()];
    let ring1 = w.neighbors(p);
    set.extend(ring1.iter().cloned());
    for q in &ring1 {
        set.extend(w.neighbors(q));
    }
    set.sort();
    set.dedup();
    set
}

/// Random point of the region `A_P`: a convex combination of uniform
/// points in two cubes of the two-ring of `p`.
pub fn sample_a_p(w: &Whitney, p: &DyadicCube, seed: u64) -> Vec<f64> {
    sample_a_p_from(w, &two_ring(w, p), seed)
}

/// As [`sample_a_p`] with a precomputed two-ring.
pub fn sample_a_p_from(w: &Whitney, ring: &[DyadicCube], seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 0);
    loop {
        let q1 = &ring[rng.gen_range(0..ring.len())];
        let q2 = &ring[rng.gen_range(0..ring.len())];
        let u1: Vec<f64> = (0..q1.dim()).map(|_| rng.gen()).collect();
        let u2: Vec<f64> = (0..q2.dim()).map(|_| rng.gen()).collect();
        let x1 = q1.to_box().affine(&u1);
        let x2 = q2.to_box().affine(&u2);
        let t: f64 = rng.gen();
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        if w.sites().index_of(&y).is_none() {
            return y;
        }
    }
}

/// Paths from `per_cube` points of `A_P` for each `P` in `cubes`.
pub fn build_corpus(
    w: &Whitney,
    cubes: &[DyadicCube],
    per_cube: usize,
    seed: u64,
    opts: &PathOptions,
) -> Result<Vec<CubePath>> {
    let jobs: Vec<(usize, usize)> = (0..cubes.len()).flat_map(|i| (0..per_cube).map(move |j| (i, j))).collect();
    let rings: Vec<Vec<DyadicCube>> = cubes.par_iter().map(|p| two_ring(w, p)).collect();
    jobs.par_iter()
        .map(|&(i, j)| {
            let x = sample_a_p_from(w, &rings[i], derive_seed(seed, (i * per_cube + j) as u64));
            build_path(w, &cubes[i], &x, opts)
        })
        .collect()
}

/// Fitted decay constants `δ_{P_j} <= A a^{j−i} δ_{P_i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathDecayConstants {
    pub a: f64,
    pub big_a: f64,
    pub log2_big_a: u32,
    /// Longest run of equal-diameter cubes.
    pub c_n: u32,
}

/// Fit `C_n`, `a = 2^{-1/C_n}` and the smallest power of two `A`.
pub fn fit_decay(corpus: &[CubePath]) -> Result<PathDecayConstants> {
    if corpus.iter().all(|p| p.is_empty()) {
        return Err(Error::Invalid("empty path corpus".into()));
    }
    for p in corpus {
        let lv = p.levels();
        if lv.len() >= 2 && lv.windows(2).all(|w| w[1] <= w[0]) && lv.last() < lv.first() {
            return Err(Error::DecayViolated(format!("diameters grow along the path from {:?}", p.origin)));
        }
    }
    let mut c = 1i64;
    for p in corpus {
        let mut run = 0i64;
        let mut prev = None;
        for l in p.levels() {
            run = if prev == Some(l) { run + 1 } else { 1 };
            prev = Some(l);
            c = c.max(run);
        }
    }
    // δ_j / δ_i = 2^{l_i − l_j} <= 2^{k − (j−i)/C}  ⟺  k >= (w_j − w_i)/C, w_j = j − C l_j
    let mut k = 0i64;
    for p in corpus {
        let mut min_w = i64::MAX;
        for (j, l) in p.levels().into_iter().enumerate() {
            let wj = j as i64 - c * l as i64;
            min_w = min_w.min(wj);
            k = k.max((wj - min_w + c - 1).div_euclid(c));
        }
    }
    Ok(PathDecayConstants {
        a: (-1.0 / c as f64).exp2(),
        big_a: (k as f64).exp2(),
        log2_big_a: k as u32,
        c_n: c as u32,
    })
}

/// Left and right sides of the chain inequality for one `(P, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub cube: String,
    pub x: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub path_len: usize,
    pub truncation: Truncation,
    /// Bound on the omitted part of the right-hand sum.
    pub tail_bound: f64,
    /// Tail exceeds `1e-6` of the computed sum.
    pub tail_flagged: bool,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub path: PathOptions,
    pub estimator: EstimatorConfig,
}

/// Compare the weighted Taylor remainder of `f` at `x` around `x_P` with the
/// decay-weighted seminorms over the chain from `x` to `x_P`.
pub fn chain_inequality_check(w: &Whitney, p: &DyadicCube, x: &[f64], f: &dyn Field, opts: &ChainOptions) -> Result<ChainReport> {
    let params = *w.params();
    params.require_embedding()?;
    let n = params.n() as f64;
    let (s, sp, pp) = (params.s(), params.frac_s() * params.p(), params.p());
    let m = params.floor_s();
    let eps = params.chain_epsilon();
    let path = build_path(w, p, x, &opts.path)?;
    let delta_p = p.diameter();

    let jet = Jet::of_field(f, &path.target, m)?;
    let jx = jet.taylor_at(x, m);
    let fx = f.taylor(x, m)?;
    let mut lhs = 0.0;
    for i in MultiIndex::all_upto(params.n(), m) {
        let diff = (jx.partial(&i)? - fx.partial(&i)?).abs();
        lhs += delta_p.powf(n - s * pp + i.order() as f64 * pp) * diff.powf(pp);
    }

    let norms: Vec<f64> = path
        .cubes
        .iter()
        .map(|q| Ok(gagliardo(f, &Region::single(q.to_box()), &params, &opts.estimator)?.value_p.max(0.0)))
        .collect::<Result<_>>()?;
    let sum: f64 = path.cubes.iter().zip(&norms).map(|(q, v)| v * q.diameter().powf(eps)).sum();
    let pre = delta_p.powf(n - sp + eps);
    let rhs = pre * sum;

    // ‖F‖^p(Q) <= K δ_Q^{n+p−{s}p} for smooth F; the omitted cubes decay
    // geometrically from the last one.
    let gamma = n + pp - sp + eps;
    let tail_bound = match path.cubes.last() {
        Some(last) => {
            let k = path
                .cubes
                .iter()
                .zip(&norms)
                .map(|(q, v)| v / q.diameter().powf(n + pp - sp))
                .fold(0.0, f64::max);
            let dc = fit_decay(std::slice::from_ref(&path))?;
            let ag = dc.a.powf(gamma);
            pre * k * (dc.big_a * last.diameter()).powf(gamma) * ag / (1.0 - ag)
        }
        None => f64::INFINITY,
    };
    let ratio = if lhs == 0.0 {
        0.0
    } else if rhs > 0.0 {
        lhs / rhs
    } else {
        f64::INFINITY
    };
    Ok(ChainReport {
        cube: p.id(),
        x: x.to_vec(),
        lhs,
        rhs,
        ratio,
        path_len: path.len(),
        truncation: path.truncation,
        tail_bound,
        tail_flagged: !(tail_bound <= 1e-6 * rhs.max(f64::MIN_POSITIVE)) && lhs != 0.0,
        epsilon: eps,
    })
}

/// `|x − x_P|² <= (c δ_P)²` in floating point, for reporting.
pub fn distance_ratio(w: &Whitney, p: &DyadicCube, y: &[f64]) -> f64 {
    let t = w.anchor(p);
    let d = y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    d / p.diameter()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SpaceParams;

    fn one_d() -> Whitney {
        Whitney::build(SpaceParams::new(1, 1.5, 4.0).unwrap(), &[vec![0.0]], 7, 12).unwrap()
    }

    #[test]
    fn one_d_path_has_ten_cubes_per_level() {
        let w = one_d();
        let p = DyadicCube::new(0, &[10]);
        let path = build_path(&w, &p, &[10.5], &PathOptions::for_decomposition(&w)).unwrap();
        assert_eq!(path.cubes[0], p);
        assert_eq!(path.cubes[1], DyadicCube::new(1, &[19]));
        assert_eq!(path.cubes[2], DyadicCube::new(1, &[18]));
        let levels = path.levels();
        for l in 1..=12 {
            assert_eq!(levels.iter().filter(|&&v| v == l).count(), 10, "level {l}");
        }
        assert_eq!(path.truncation, Truncation::DiameterFloor);
        let dc = fit_decay(&[path]).unwrap();
        assert_eq!(dc.c_n, 10);
        assert_eq!(dc.a, 2f64.powf(-0.1));
        assert_eq!(dc.big_a, 2.0);
    }

    #[test]
    fn checks_pass_on_one_d_path() {
        let w = one_d();
        let p = DyadicCube::new(0, &[10]);
        let path = build_path(&w, &p, &[10.5], &PathOptions::for_decomposition(&w)).unwrap();
        let c = check_path(&path, 1000, 3).unwrap();
        assert!(c.all_pass(), "{c:?}");
    }

    #[test]
    fn increasing_diameters_violate_decay() {
        let mut path = build_path(&one_d(), &DyadicCube::new(0, &[10]), &[10.5], &PathOptions {
            max_len: 3,
            level_cap: None,
        })
        .unwrap();
        path.cubes.reverse();
        assert!(matches!(fit_decay(&[path]), Err(Error::DecayViolated(_))));
    }

    #[test]
    fn polynomial_has_zero_lhs() {
        let w = one_d();
        let f = crate::functions::TestFunction::polynomial(1, &[(2.0, &[1]), (1.0, &[0])]);
        let opts = ChainOptions {
            path: PathOptions::for_decomposition(&w),
            estimator: EstimatorConfig::new(crate::seminorm::Method::TensorQuad, 2000, 0),
        };
        let r = chain_inequality_check(&w, &DyadicCube::new(0, &[10]), &[10.5], &f, &opts).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.ratio, 0.0);
    }
}
