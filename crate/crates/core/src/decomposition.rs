//! Whitney decomposition of the complement of a finite site set.
//!
//! Cubes are generated from the `2^n` orthant roots of level `-L` by
//! recursive subdivision: a cube is accepted as soon as
//! `100·n·side² <= dist²(Q, D)`, otherwise split. Acceptance is a pure
//! predicate (the cube passes and its parent fails), so queries never need
//! the enumerated set and work below the enumeration depth.

use std::collections::HashSet;

use num_bigint::BigUint;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use smallvec::SmallVec;

use crate::dyadic::{
    cells_containing, exp2i, fixed_side, Coords, DyadicCube, SiteSet, DEPTH_CAP, MAX_DIM, MAX_DOMAIN_EXP,
};
use crate::error::{Error, Result};
use crate::params::SpaceParams;

type Cands = SmallVec<[u32; 8]>;

/// Lower Whitney constant: `10 δ_Q <= dist(Q, D)`.
pub const LOWER: i128 = 100;
/// Upper Whitney constant: `dist(Q, D) <= 22 δ_Q`.
pub const UPPER: i128 = 484;

/// Cubes of one level, sorted by coordinates.
#[derive(Debug, Clone, Default)]
pub struct LevelCubes {
    pub level: i32,
    pub coords: Vec<Coords>,
    pub anchors: Vec<u32>,
}

impl LevelCubes {
    fn new(level: i32) -> Self {
        LevelCubes { level, coords: Vec::new(), anchors: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn find(&self, coords: &[i64]) -> Option<usize> {
        self.coords.binary_search_by(|c| c.as_slice().cmp(coords)).ok()
    }

    pub fn cube(&self, i: usize) -> DyadicCube {
        DyadicCube { level: self.level, coords: self.coords[i].clone() }
    }

    fn sort(&mut self) {
        let mut pairs: Vec<(Coords, u32)> =
            std::mem::take(&mut self.coords).into_iter().zip(std::mem::take(&mut self.anchors)).collect();
        pairs.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        (self.coords, self.anchors) = pairs.into_iter().unzip();
    }
}

/// The enumerated decomposition together with its exact query predicates.
#[derive(Debug, Clone)]
pub struct Whitney {
    params: SpaceParams,
    sites: SiteSet,
    domain_exp: i32,
    max_level: i32,
    levels: Vec<LevelCubes>,
    fringe: LevelCubes,
}

struct Collected {
    levels: Vec<LevelCubes>,
    fringe: LevelCubes,
}

impl Whitney {
    /// Enumerate all accepted cubes of level `<= max_level` inside
    /// `Ω = [-2^L, 2^L]^n`.
    pub fn build(params: SpaceParams, sites: &[Vec<f64>], domain_exp: i32, max_level: i32) -> Result<Self> {
        let n = params.n();
        if n > MAX_DIM {
            return Err(Error::InvalidParams(format!("dimension {n} exceeds the supported maximum {MAX_DIM}")));
        }
        let sites = SiteSet::new(n, sites)?;
        Self::validate(&sites, domain_exp, max_level)?;
        let roots = root_cubes(n, domain_exp);
        let per_root: Vec<Collected> = roots
            .par_iter()
            .map(|root| {
                let mut c = Collected {
                    levels: (-domain_exp..=max_level).map(LevelCubes::new).collect(),
                    fringe: LevelCubes::new(max_level),
                };
                let all: Cands = (0..sites.len() as u32).collect();
                enumerate(&sites, root, &all, domain_exp, max_level, &mut c);
                c
            })
            .collect();
        let mut levels: Vec<LevelCubes> = (-domain_exp..=max_level).map(LevelCubes::new).collect();
        let mut fringe = LevelCubes::new(max_level);
        for c in per_root {
            for (dst, src) in levels.iter_mut().zip(c.levels) {
                dst.coords.extend(src.coords);
                dst.anchors.extend(src.anchors);
            }
            fringe.coords.extend(c.fringe.coords);
            fringe.anchors.extend(c.fringe.anchors);
        }
        levels.par_iter_mut().for_each(LevelCubes::sort);
        fringe.sort();
        Ok(Whitney { params, sites, domain_exp, max_level, levels, fringe })
    }

    /// Reassemble a decomposition from stored cubes (e.g. a cubes.json file).
    /// No structural check is made here; see [`Whitney::verify_structure`].
    pub fn from_parts(
        params: SpaceParams,
        sites: &[Vec<f64>],
        domain_exp: i32,
        max_level: i32,
        cubes: &[(DyadicCube, Vec<f64>)],
        fringe: &[DyadicCube],
    ) -> Result<Self> {
        let n = params.n();
        let sites = SiteSet::new(n, sites)?;
        Self::validate(&sites, domain_exp, max_level)?;
        let min_level = cubes.iter().map(|c| c.0.level).chain([-domain_exp]).min().unwrap();
        let max_seen = cubes.iter().map(|c| c.0.level).chain([max_level]).max().unwrap();
        let mut levels: Vec<LevelCubes> = (min_level..=max_seen).map(LevelCubes::new).collect();
        for (q, anchor) in cubes {
            if q.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: q.dim() });
            }
            let a = sites.index_of(anchor).ok_or_else(|| Error::MissingJet(anchor.clone()))?;
            let l = &mut levels[(q.level - min_level) as usize];
            l.coords.push(q.coords.clone());
            l.anchors.push(a as u32);
        }
        levels.iter_mut().for_each(LevelCubes::sort);
        let mut fr = LevelCubes::new(max_level);
        for q in fringe {
            if q.level != max_level {
                return Err(Error::Invalid(format!("fringe cube {q:?} is not at the enumeration depth")));
            }
            fr.coords.push(q.coords.clone());
            fr.anchors.push(sites.nearest(q, None).1);
        }
        fr.sort();
        Ok(Whitney { params, sites, domain_exp, max_level, levels, fringe: fr })
    }

    fn validate(sites: &SiteSet, domain_exp: i32, max_level: i32) -> Result<()> {
        if !(-20..=MAX_DOMAIN_EXP).contains(&domain_exp) {
            return Err(Error::InvalidParams(format!(
                "domain exponent {domain_exp} outside [-20, {MAX_DOMAIN_EXP}]"
            )));
        }
        if max_level <= -domain_exp || max_level > DEPTH_CAP {
            return Err(Error::InvalidParams(format!(
                "max level {max_level} must lie in ({}, {DEPTH_CAP}]",
                -domain_exp
            )));
        }
        let limit = 0.75 * exp2i(domain_exp);
        for p in sites.points() {
            if p.iter().any(|x| x.abs() > limit) {
                return Err(Error::DomainTooSmall(format!(
                    "site {p:?} is closer than 2^{domain_exp}/4 to the boundary of [-2^{domain_exp}, 2^{domain_exp}]^n"
                )));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &SpaceParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.n()
    }

    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    pub fn domain_exp(&self) -> i32 {
        self.domain_exp
    }

    pub fn max_level(&self) -> i32 {
        self.max_level
    }

    /// Half-width of the domain, `2^L`.
    pub fn domain_radius(&self) -> f64 {
        exp2i(self.domain_exp)
    }

    pub fn domain_box(&self) -> crate::dyadic::AxisBox {
        let r = self.domain_radius();
        crate::dyadic::AxisBox { lo: vec![-r; self.dim()], hi: vec![r; self.dim()] }
    }

    pub fn levels(&self) -> &[LevelCubes] {
        &self.levels
    }

    pub fn fringe(&self) -> &LevelCubes {
        &self.fringe
    }

    /// Number of enumerated (accepted) cubes.
    pub fn len(&self) -> usize {
        self.levels.iter().map(LevelCubes::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All enumerated cubes with their anchor index, coarse to fine.
    pub fn cubes(&self) -> impl Iterator<Item = (DyadicCube, u32)> + '_ {
        self.levels
            .iter()
            .flat_map(|l| (0..l.len()).map(move |i| (l.cube(i), l.anchors[i])))
    }

    fn level_slot(&self, level: i32) -> Option<&LevelCubes> {
        let first = self.levels.first()?.level;
        self.levels.get(usize::try_from(level - first).ok()?)
    }

    /// Whether `q` is in the enumerated list.
    pub fn is_enumerated(&self, q: &DyadicCube) -> bool {
        self.level_slot(q.level).is_some_and(|l| l.find(&q.coords).is_some())
    }

    /// The cube lies inside `Ω` and is not coarser than the roots.
    pub fn in_domain(&self, q: &DyadicCube) -> bool {
        let rel = q.level + self.domain_exp;
        if rel < 0 || q.level > DEPTH_CAP {
            return false;
        }
        let bound = 1i64 << rel;
        q.coords.iter().all(|&a| -bound <= a && a < bound)
    }

    fn passes(&self, q: &DyadicCube, cands: Option<&[u32]>) -> bool {
        !self.sites.any_closer(q, LOWER * q.n_side2(), cands)
    }

    /// Exact acceptance predicate, valid at every level up to the depth cap.
    pub fn is_accepted(&self, q: &DyadicCube) -> bool {
        self.is_accepted_with(q, None)
    }

    fn is_accepted_with(&self, q: &DyadicCube, cands: Option<&[u32]>) -> bool {
        if !self.in_domain(q) || !self.passes(q, cands) {
            return false;
        }
        q.level == -self.domain_exp || !self.passes(&q.parent(), cands)
    }

    /// Nearest site to `q`, ties broken towards the lexicographically smaller site.
    pub fn anchor(&self, q: &DyadicCube) -> &[f64] {
        self.sites.point(self.anchor_index(q) as usize)
    }

    pub fn anchor_index(&self, q: &DyadicCube) -> u32 {
        if let Some(l) = self.level_slot(q.level) {
            if let Some(i) = l.find(&q.coords) {
                return l.anchors[i];
            }
        }
        self.sites.nearest(q, None).1
    }

    /// All accepted cubes whose closed box contains `x`.
    pub fn locate(&self, x: &[f64]) -> Result<Vec<DyadicCube>> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        let r = self.domain_radius();
        if x.iter().any(|v| !(v.abs() <= r)) {
            return Err(Error::OutsideDomain);
        }
        if self.sites.index_of(x).is_some() {
            return Err(Error::OnClosedSet);
        }
        let all: Cands = (0..self.sites.len() as u32).collect();
        let mut frontier: Vec<(DyadicCube, Cands)> = cells_containing(x, -self.domain_exp)
            .into_iter()
            .filter(|c| self.in_domain(c))
            .map(|c| (c, all.clone()))
            .collect();
        let mut found = Vec::new();
        let mut scratch = Vec::new();
        while !frontier.is_empty() {
            let level = frontier[0].0.level;
            let mut failing: Vec<(DyadicCube, Cands)> = Vec::new();
            for (cell, cands) in frontier {
                let (d2, _) = self.sites.nearest(&cell, Some(&cands));
                if d2 >= LOWER * cell.n_side2() {
                    found.push(cell);
                } else {
                    self.sites.prune(&cell, Some(&cands), &mut scratch);
                    failing.push((cell, scratch.iter().copied().collect()));
                }
            }
            if failing.is_empty() {
                break;
            }
            if level >= DEPTH_CAP {
                let d = crate::dyadic::dist_box_to_points(&failing[0].0.to_box(), self.sites.points())?;
                return Err(Error::DepthCap {
                    cap: DEPTH_CAP,
                    diagnostics: format!("point {x:?} at distance {d:.3e} from the sites"),
                });
            }
            frontier = cells_containing(x, level + 1)
                .into_iter()
                .filter_map(|c| {
                    let p = c.parent();
                    failing.iter().find(|f| f.0 == p).map(|f| (c, f.1.clone()))
                })
                .collect();
        }
        found.sort();
        Ok(found)
    }

    /// All accepted cubes touching the accepted cube `q`.
    pub fn neighbors(&self, q: &DyadicCube) -> Vec<DyadicCube> {
        let n = q.dim();
        let m = q.level;
        // every candidate and its parent lie in q expanded by 4 sides
        let s = fixed_side(m);
        let mut lo: SmallVec<[i128; 4]> = SmallVec::new();
        let mut hi: SmallVec<[i128; 4]> = SmallVec::new();
        for i in 0..n {
            let (l, h) = q.fixed_bounds(i);
            lo.push(l - 4 * s);
            hi.push(h + 4 * s);
        }
        let mut cands = Vec::new();
        self.sites.prune_region(&lo, &hi, None, &mut cands);

        let mut out = Vec::new();
        let consider = |c: DyadicCube, out: &mut Vec<DyadicCube>| {
            if c != *q && q.touches(&c) && self.is_accepted_with(&c, Some(&cands)) {
                out.push(c);
            }
        };
        // same level: 3^n block
        for c in block(&q.coords, -1, 1) {
            consider(DyadicCube { level: m, coords: c }, &mut out);
        }
        // finer level: the 4^n ring
        let fine: Coords = q.coords.iter().map(|a| 2 * a).collect();
        for c in block(&fine, -1, 2) {
            consider(DyadicCube { level: m + 1, coords: c }, &mut out);
        }
        // coarser level: parents of the 3^n block
        let mut parents: Vec<Coords> = block(&q.coords, -1, 1)
            .into_iter()
            .map(|c| c.iter().map(|a| a.div_euclid(2)).collect())
            .collect();
        parents.sort();
        parents.dedup();
        for c in parents {
            consider(DyadicCube { level: m - 1, coords: c }, &mut out);
        }
        out.sort();
        out.dedup();
        out
    }

    /// Exact structural checks plus observed constants.
    pub fn verify_structure(&self, opts: &VerifyOptions) -> StructureReport {
        verify(self, opts)
    }
}

/// `{-1, 0}^n` roots at level `-L`.
pub fn root_cubes(n: usize, domain_exp: i32) -> Vec<DyadicCube> {
    (0..1usize << n)
        .map(|mask| DyadicCube {
            level: -domain_exp,
            coords: (0..n).map(|i| if (mask >> i) & 1 == 1 { 0 } else { -1 }).collect(),
        })
        .collect::<Vec<_>>()
}

/// All coordinate vectors `base + o` with `o ∈ [lo, hi]^n`.
fn block(base: &[i64], lo: i64, hi: i64) -> Vec<Coords> {
    let mut out: Vec<Coords> = vec![SmallVec::new()];
    for &b in base {
        out = out
            .into_iter()
            .flat_map(|c| {
                (lo..=hi).map(move |o| {
                    let mut c = c.clone();
                    c.push(b + o);
                    c
                })
            })
            .collect();
    }
    out
}

fn enumerate(sites: &SiteSet, q: &DyadicCube, cands: &[u32], domain_exp: i32, max_level: i32, out: &mut Collected) {
    let (d2, nearest) = sites.nearest(q, Some(cands));
    let slot = (q.level + domain_exp) as usize;
    if d2 >= LOWER * q.n_side2() {
        out.levels[slot].coords.push(q.coords.clone());
        out.levels[slot].anchors.push(nearest);
        return;
    }
    if q.level == max_level {
        out.fringe.coords.push(q.coords.clone());
        out.fringe.anchors.push(nearest);
        return;
    }
    let mut scratch = Vec::new();
    sites.prune(q, Some(cands), &mut scratch);
    let kept: Cands = scratch.into_iter().collect();
    let n = q.dim();
    let mut child = DyadicCube { level: q.level + 1, coords: q.coords.clone() };
    for mask in 0..1usize << n {
        for i in 0..n {
            child.coords[i] = 2 * q.coords[i] + ((mask >> i) & 1) as i64;
        }
        enumerate(sites, &child, &kept, domain_exp, max_level, out);
    }
}

/// Tuning of [`Whitney::verify_structure`].
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Cubes inspected for the observed neighbor count (0 = all).
    pub neighbor_sample: usize,
    /// Random points for the observed `1.1Q` overlap multiplicity.
    pub overlap_samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { neighbor_sample: 20_000, overlap_samples: 2_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub checks: Vec<CheckResult>,
    pub cube_count: usize,
    pub fringe_count: usize,
    pub min_level: i32,
    pub max_level: i32,
    pub max_neighbor_count: usize,
    pub neighbor_cubes_inspected: usize,
    pub max_overlap: usize,
    pub overlap_points: usize,
    pub overlap_points_unresolved: usize,
}

impl StructureReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }
}

pub const CHECK_DISJOINT: &str = "interior_disjointness";
pub const CHECK_COVERAGE: &str = "coverage";
pub const CHECK_BOUNDS: &str = "whitney_bounds_10_22";
pub const CHECK_ANCHORS: &str = "anchors";
pub const CHECK_RATIO: &str = "neighbor_ratio";
pub const CHECK_DILATION: &str = "non_neighbors_avoid_2q";

struct Failures {
    count: usize,
    examples: Vec<String>,
}

impl Failures {
    fn new() -> Self {
        Failures { count: 0, examples: Vec::new() }
    }

    fn push(&mut self, msg: impl FnOnce() -> String) {
        self.count += 1;
        if self.examples.len() < 3 {
            self.examples.push(msg());
        }
    }

    fn into_check(self, name: &str, ok_detail: String) -> CheckResult {
        let pass = self.count == 0;
        let detail = if pass {
            ok_detail
        } else {
            format!("{} violations, e.g. {}", self.count, self.examples.join("; "))
        };
        CheckResult { name: name.to_string(), pass, detail }
    }
}

/// Sorted-set membership at one level.
fn contains(set: &[Coords], c: &[i64]) -> bool {
    set.binary_search_by(|x| x.as_slice().cmp(c)).is_ok()
}

fn verify(w: &Whitney, opts: &VerifyOptions) -> StructureReport {
    let n = w.dim();
    let min_level = w.levels.first().map_or(-w.domain_exp, |l| l.level);
    let top = w.levels.last().map_or(w.max_level, |l| l.level).max(w.max_level);
    let idx = |m: i32| (m - min_level) as usize;
    let nl = (top - min_level + 1) as usize;
    let listed = |m: i32| -> &[Coords] {
        w.level_slot(m).map_or(&[][..], |l| l.coords.as_slice())
    };
    let fringe_at = |m: i32| -> &[Coords] {
        if m == w.fringe.level {
            &w.fringe.coords
        } else {
            &[]
        }
    };

    // proper ancestors of listed and fringe cubes, per level
    let mut internal: Vec<Vec<Coords>> = vec![Vec::new(); nl];
    for m in ((min_level + 1)..=top).rev() {
        let mut parents: Vec<Coords> = listed(m)
            .iter()
            .chain(fringe_at(m))
            .chain(internal[idx(m)].iter())
            .map(|c| c.iter().map(|a| a.div_euclid(2)).collect())
            .collect();
        parents.par_sort_unstable();
        parents.dedup();
        internal[idx(m - 1)] = parents;
    }
    let is_internal = |m: i32, c: &[i64]| -> bool {
        m >= min_level && m <= top && contains(&internal[idx(m)], c)
    };

    let mut checks = Vec::new();

    // interior disjointness: no duplicates, everything in Ω, no listed cube
    // contains another
    let mut dis = Failures::new();
    let mut containers: HashSet<DyadicCube> = HashSet::new();
    for m in min_level..=top {
        let cells: Vec<&Coords> = {
            let mut v: Vec<&Coords> = listed(m).iter().chain(fringe_at(m)).collect();
            v.sort_unstable();
            v
        };
        for pair in cells.windows(2) {
            if pair[0] == pair[1] {
                dis.push(|| format!("duplicate cube {:?}", DyadicCube { level: m, coords: pair[0].clone() }));
            }
        }
        for c in &cells {
            let q = DyadicCube { level: m, coords: (*c).clone() };
            if !w.in_domain(&q) {
                dis.push(|| format!("{q:?} leaves the domain"));
            }
            if is_internal(m, c) {
                dis.push(|| format!("{q:?} contains another listed cube"));
                containers.insert(q);
            }
        }
    }
    checks.push(dis.into_check(CHECK_DISJOINT, "no listed cube contains or repeats another".into()));

    // coverage: exact union measure in level-top units equals |Ω|
    let mut cov = Failures::new();
    let mut measure = BigUint::default();
    for m in min_level..=top {
        let cells: Vec<&Coords> = listed(m).iter().chain(fringe_at(m)).collect();
        let maximal = if containers.is_empty() {
            cells.len()
        } else {
            cells
                .iter()
                .filter(|c| {
                    let q = DyadicCube { level: m, coords: (**c).clone() };
                    !((min_level..m).any(|l| containers.contains(&q.ancestor(l))))
                })
                .count()
        };
        measure += BigUint::from(maximal) << (n * (top - m) as usize);
    }
    let full = BigUint::from(1u8) << (n * (top + w.domain_exp + 1) as usize);
    if measure != full {
        cov.push(|| format!("union measure {measure} != domain measure {full} (units of level {top})"));
    }
    for (i, c) in w.fringe.coords.iter().enumerate() {
        let q = DyadicCube { level: w.fringe.level, coords: c.clone() };
        let (d2, _) = w.sites.nearest(&q, None);
        if d2 >= LOWER * q.n_side2() {
            cov.push(|| format!("fringe cube {q:?} (#{i}) is resolvable"));
        }
    }
    checks.push(cov.into_check(
        CHECK_COVERAGE,
        format!("union measure equals the domain; {} fringe cubes all near the sites", w.fringe.len()),
    ));

    // Whitney bounds and anchors
    let results: Vec<(usize, usize, Vec<String>, Vec<String>)> = w
        .levels
        .par_iter()
        .map(|l| {
            let mut bad = 0;
            let mut bad_anchor = 0;
            let mut ex = Vec::new();
            let mut ex_a = Vec::new();
            for (i, c) in l.coords.iter().enumerate() {
                let q = DyadicCube { level: l.level, coords: c.clone() };
                let (d2, nearest) = w.sites.nearest(&q, None);
                let ns2 = q.n_side2();
                if d2 < LOWER * ns2 || d2 > UPPER * ns2 {
                    bad += 1;
                    if ex.len() < 3 {
                        ex.push(format!("{q:?} dist²/(n side²) = {:.3}", d2 as f64 / ns2 as f64));
                    }
                }
                if nearest != l.anchors[i] {
                    bad_anchor += 1;
                    if ex_a.len() < 3 {
                        ex_a.push(format!("{q:?} anchored to site {} instead of {nearest}", l.anchors[i]));
                    }
                }
            }
            (bad, bad_anchor, ex, ex_a)
        })
        .collect();
    let mut bounds = Failures::new();
    let mut anchors = Failures::new();
    for (b, a, ex, ex_a) in results {
        bounds.count += b;
        anchors.count += a;
        for e in ex {
            if bounds.examples.len() < 3 {
                bounds.examples.push(e);
            }
        }
        for e in ex_a {
            if anchors.examples.len() < 3 {
                anchors.examples.push(e);
            }
        }
    }
    checks.push(bounds.into_check(CHECK_BOUNDS, "100·n·side² <= dist² <= 484·n·side² for every cube".into()));
    checks.push(anchors.into_check(CHECK_ANCHORS, "every anchor is the tie-broken nearest site".into()));

    // neighbor ratio: level m-2 cells touching Q must be subdivided
    let per_level: Vec<(usize, Vec<String>)> = w
        .levels
        .par_iter()
        .map(|l| {
            let m = l.level;
            let mut bad = 0;
            let mut ex = Vec::new();
            if m - 2 < -w.domain_exp {
                return (bad, ex);
            }
            for c in &l.coords {
                for cell in coarse_touching(c) {
                    let cq = DyadicCube { level: m - 2, coords: cell };
                    if w.in_domain(&cq) && !is_internal(m - 2, &cq.coords) {
                        bad += 1;
                        if ex.len() < 3 {
                            ex.push(format!("{:?} touches unsplit {cq:?}", DyadicCube { level: m, coords: c.clone() }));
                        }
                    }
                }
            }
            (bad, ex)
        })
        .collect();
    let mut ratio = Failures::new();
    for (r, ex) in per_level {
        ratio.count += r;
        ratio.examples.extend(ex.into_iter().take(3usize.saturating_sub(ratio.examples.len())));
    }
    checks.push(ratio.into_check(CHECK_RATIO, "touching cubes differ by at most one level".into()));

    // the level m+1 ring of Q tiles 2Q \ Q; no ring cell may be split.
    // Scanned from the split side: a split cell C of level k must not touch
    // a listed level k-1 cube other than its parent.
    let split_levels: Vec<(i32, &[Coords])> = ((-w.domain_exp + 1)..=w.max_level)
        .map(|k| {
            let cells: &[Coords] = if k == w.fringe.level {
                &w.fringe.coords
            } else {
                &[]
            };
            (k, cells)
        })
        .collect();
    let per_level: Vec<(usize, Vec<String>)> = split_levels
        .par_iter()
        .map(|&(k, fringe_cells)| {
            let mut bad = 0;
            let mut ex = Vec::new();
            let coarse = listed(k - 1);
            let internal_cells: &[Coords] =
                if k >= min_level && k <= top { &internal[idx(k)] } else { &[] };
            for c in internal_cells.iter().chain(fringe_cells) {
                let parent: Coords = c.iter().map(|a| a.div_euclid(2)).collect();
                for cell in parent_level_touching(c) {
                    if cell == parent {
                        continue;
                    }
                    if contains(coarse, &cell) {
                        bad += 1;
                        if ex.len() < 3 {
                            ex.push(format!(
                                "{:?} inside 2Q of {:?} is split",
                                DyadicCube { level: k, coords: c.clone() },
                                DyadicCube { level: k - 1, coords: cell }
                            ));
                        }
                    }
                }
            }
            (bad, ex)
        })
        .collect();
    let mut dil = Failures::new();
    for (d, ex) in per_level {
        dil.count += d;
        dil.examples.extend(ex.into_iter().take(3usize.saturating_sub(dil.examples.len())));
    }
    checks.push(dil.into_check(CHECK_DILATION, "non-touching cubes avoid the interior of 2Q".into()));

    // observed constants
    let total = w.len();
    let stride = if opts.neighbor_sample == 0 || total <= opts.neighbor_sample {
        1
    } else {
        total.div_ceil(opts.neighbor_sample)
    };
    let sampled: Vec<DyadicCube> = w.cubes().step_by(stride).map(|c| c.0).collect();
    let max_neighbor_count = sampled
        .par_iter()
        .map(|q| enumerated_neighbor_count(w, q))
        .max()
        .unwrap_or(0);

    let (max_overlap, unresolved) = overlap_scan(w, opts.overlap_samples, opts.seed);

    StructureReport {
        checks,
        cube_count: total,
        fringe_count: w.fringe.len(),
        min_level,
        max_level: w.max_level,
        max_neighbor_count,
        neighbor_cubes_inspected: sampled.len(),
        max_overlap,
        overlap_points: opts.overlap_samples,
        overlap_points_unresolved: unresolved,
    }
}

/// Level `m-2` cells touching the level-`m` cube with coordinates `c`.
fn coarse_touching(c: &[i64]) -> Vec<Coords> {
    let mut out: Vec<Coords> = vec![SmallVec::new()];
    for &a in c {
        let b = a.div_euclid(4);
        let mut opts: SmallVec<[i64; 3]> = SmallVec::new();
        opts.push(b);
        match a.rem_euclid(4) {
            0 => opts.push(b - 1),
            3 => opts.push(b + 1),
            _ => {}
        }
        out = out
            .into_iter()
            .flat_map(|v| {
                opts.iter().map(move |&o| {
                    let mut v = v.clone();
                    v.push(o);
                    v
                })
            })
            .collect();
    }
    out
}

/// Level `k-1` cells touching the level-`k` cell with coordinates `c`.
fn parent_level_touching(c: &[i64]) -> Vec<Coords> {
    let mut out: Vec<Coords> = vec![SmallVec::new()];
    for &a in c {
        let b = a.div_euclid(2);
        let o = if a.rem_euclid(2) == 0 { b - 1 } else { b + 1 };
        out = out
            .into_iter()
            .flat_map(|v| {
                [b, o].into_iter().map(move |x| {
                    let mut v = v.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

/// Touching cubes of `q` at levels `m-1..=m+1` found in the enumerated list.
fn enumerated_neighbor_count(w: &Whitney, q: &DyadicCube) -> usize {
    let m = q.level;
    let mut count = 0;
    let mut seen = |level: i32, cands: Vec<Coords>| {
        let mut cands = cands;
        cands.sort();
        cands.dedup();
        for c in cands {
            let cq = DyadicCube { level, coords: c };
            if cq != *q && q.touches(&cq) && w.is_enumerated(&cq) {
                count += 1;
            }
        }
    };
    seen(m, block(&q.coords, -1, 1));
    let fine: Coords = q.coords.iter().map(|a| 2 * a).collect();
    seen(m + 1, block(&fine, -1, 2));
    seen(
        m - 1,
        block(&q.coords, -1, 1)
            .into_iter()
            .map(|c| c.iter().map(|a| a.div_euclid(2)).collect())
            .collect(),
    );
    count
}

/// Max number of open dilations `(1.1R)°` containing a random point.
fn overlap_scan(w: &Whitney, samples: usize, seed: u64) -> (usize, usize) {
    let r = w.domain_radius();
    let n = w.dim();
    let results: Vec<Option<usize>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream(seed, i);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-r..r)).collect();
            let located = w.locate(&x).ok()?;
            let mut cands: Vec<DyadicCube> = located.clone();
            for q in &located {
                cands.extend(w.neighbors(q));
            }
            cands.sort();
            cands.dedup();
            Some(cands.iter().filter(|q| q.in_open_dilation(&x, 1.1)).count())
        })
        .collect();
    let unresolved = results.iter().filter(|r| r.is_none()).count();
    (results.into_iter().flatten().max().unwrap_or(0), unresolved)
}
