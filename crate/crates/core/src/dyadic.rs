//! Dyadic cubes, axis-aligned boxes and exact distance predicates.
//!
//! Sites live on a fixed-point grid with `FRAC_BITS` fractional bits, so
//! every cube endpoint and site coordinate is an exact `i128`. Squared
//! distances are compared in that representation; no square root is taken
//! in any predicate.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Fractional bits of the fixed-point grid.
pub const FRAC_BITS: i32 = 44;
/// Largest supported domain exponent `L` (domain `[-2^L, 2^L]^n`).
pub const MAX_DOMAIN_EXP: i32 = 12;
/// Finest level a cube may have; side `2^-DEPTH_CAP` is one grid unit.
pub const DEPTH_CAP: i32 = FRAC_BITS;
/// Largest dimension for which the `i128` predicates cannot overflow.
pub const MAX_DIM: usize = 6;

pub type Coords = SmallVec<[i64; 4]>;

/// `2^e` as an exact `f64`.
pub fn exp2i(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// Exact conversion onto the fixed-point grid.
pub fn to_fixed(x: f64) -> Option<i128> {
    if !x.is_finite() || x.abs() >= exp2i(MAX_DOMAIN_EXP + 1) {
        return None;
    }
    let t = x * exp2i(FRAC_BITS);
    if t.fract() != 0.0 {
        return None;
    }
    Some(t as i128)
}

pub fn from_fixed(v: i128) -> f64 {
    v as f64 * exp2i(-FRAC_BITS)
}

/// Side of a level-`m` cube in grid units.
#[inline]
pub fn fixed_side(level: i32) -> i128 {
    debug_assert!(level <= FRAC_BITS && FRAC_BITS - level < 120);
    1i128 << (FRAC_BITS - level)
}

/// Closed dyadic cube `Π [a_i 2^-m, (a_i + 1) 2^-m]`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: i32,
    pub coords: Coords,
}

impl DyadicCube {
    pub fn new(level: i32, coords: &[i64]) -> Self {
        DyadicCube { level, coords: SmallVec::from_slice(coords) }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn side(&self) -> f64 {
        exp2i(-self.level)
    }

    /// `δ_Q = √n · 2^-m`
    pub fn diameter(&self) -> f64 {
        (self.dim() as f64).sqrt() * self.side()
    }

    pub fn lower(&self) -> Vec<f64> {
        let s = self.side();
        self.coords.iter().map(|&a| a as f64 * s).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let s = self.side();
        self.coords.iter().map(|&a| (a as f64 + 0.5) * s).collect()
    }

    pub fn to_box(&self) -> AxisBox {
        self.dilate(1.0)
    }

    /// The concentric box `cQ` with side `c · 2^-m`.
    pub fn dilate(&self, c: f64) -> AxisBox {
        let s = self.side();
        let r = 0.5 * c * s;
        let (lo, hi) = self
            .coords
            .iter()
            .map(|&a| {
                let mid = (a as f64 + 0.5) * s;
                (mid - r, mid + r)
            })
            .unzip();
        AxisBox { lo, hi }
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube { level: self.level - 1, coords: self.coords.iter().map(|a| a.div_euclid(2)).collect() }
    }

    /// Ancestor at a coarser `level`.
    pub fn ancestor(&self, level: i32) -> DyadicCube {
        debug_assert!(level <= self.level);
        let shift = (self.level - level) as u32;
        DyadicCube { level, coords: self.coords.iter().map(|a| a >> shift).collect() }
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| DyadicCube {
                level: self.level + 1,
                coords: self
                    .coords
                    .iter()
                    .enumerate()
                    .map(|(i, a)| 2 * a + ((mask >> i) & 1) as i64)
                    .collect(),
            })
            .collect()
    }

    /// Whether `self` contains `other` (or equals it).
    pub fn contains_cube(&self, other: &DyadicCube) -> bool {
        other.level >= self.level && other.ancestor(self.level) == *self
    }

    /// Closed cubes intersect. Decided on integer ranges at the finer level.
    pub fn touches(&self, other: &DyadicCube) -> bool {
        let level = self.level.max(other.level);
        self.coords.iter().zip(&other.coords).all(|(&a, &b)| {
            let (alo, ahi) = scaled_range(a, self.level, level);
            let (blo, bhi) = scaled_range(b, other.level, level);
            alo <= bhi && blo <= ahi
        })
    }

    /// Whether `x` lies in the open box `(cQ)°`, tested as `|x_i - c_i| < c·r`
    /// in the same arithmetic the cutoff functions use.
    pub fn in_open_dilation(&self, x: &[f64], c: f64) -> bool {
        let s = self.side();
        let r = 0.5 * s;
        self.coords.iter().zip(x).all(|(&a, &xi)| ((xi - (a as f64 + 0.5) * s) / r).abs() < c)
    }

    /// Exact test of `x ∈ Q` for an `f64` point.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        let scale = exp2i(self.level);
        self.coords.iter().zip(x).all(|(&a, &xi)| {
            let t = xi * scale;
            t >= a as f64 && t <= (a + 1) as f64
        })
    }

    /// Endpoints of axis `i` on the fixed-point grid.
    #[inline]
    pub fn fixed_bounds(&self, i: usize) -> (i128, i128) {
        let s = fixed_side(self.level);
        let lo = self.coords[i] as i128 * s;
        (lo, lo + s)
    }

    /// Exact squared distance to a fixed-point site, in squared grid units.
    #[inline]
    pub fn dist2_fixed(&self, site: &[i128]) -> i128 {
        let s = fixed_side(self.level);
        let mut acc = 0i128;
        for (&a, &x) in self.coords.iter().zip(site) {
            let lo = a as i128 * s;
            let d = if x < lo {
                lo - x
            } else if x > lo + s {
                x - lo - s
            } else {
                0
            };
            acc += d * d;
        }
        acc
    }

    /// `n · side²` in squared grid units; multiply by 100 or 484 for the
    /// Whitney bounds.
    #[inline]
    pub fn n_side2(&self) -> i128 {
        let s = fixed_side(self.level);
        self.dim() as i128 * s * s
    }

    /// Compact identifier `"m:a1,a2,..."`.
    pub fn id(&self) -> String {
        let coords: Vec<String> = self.coords.iter().map(|a| a.to_string()).collect();
        format!("{}:{}", self.level, coords.join(","))
    }
}

/// Range of integer coordinates at `fine` covered by coordinate `a` at `level`,
/// as closed endpoints in level-`fine` units.
#[inline]
fn scaled_range(a: i64, level: i32, fine: i32) -> (i128, i128) {
    let k = 1i128 << (fine - level);
    (a as i128 * k, (a as i128 + 1) * k)
}

impl Ord for DyadicCube {
    fn cmp(&self, other: &Self) -> Ordering {
        self.level.cmp(&other.level).then_with(|| self.coords.cmp(&other.coords))
    }
}

impl PartialOrd for DyadicCube {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q[{}]", self.id())
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lo = self.lower();
        let s = self.side();
        let parts: Vec<String> = lo.iter().map(|l| format!("[{}, {}]", l, l + s)).collect();
        write!(f, "{}", parts.join("x"))
    }
}

impl FromStr for DyadicCube {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("malformed cube id {s:?}, expected \"level:a1,a2,...\""));
        let (level, rest) = s.split_once(':').ok_or_else(bad)?;
        let level = level.trim().parse().map_err(|_| bad())?;
        let coords = rest
            .split(',')
            .map(|c| c.trim().parse::<i64>().map_err(|_| bad()))
            .collect::<Result<Coords>>()?;
        Ok(DyadicCube { level, coords })
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Invalid("box corners must have equal, nonzero dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::Invalid(format!("empty box {lo:?} .. {hi:?}")));
        }
        Ok(AxisBox { lo, hi })
    }

    pub fn cube(lo: &[f64], side: f64) -> Self {
        AxisBox { lo: lo.to_vec(), hi: lo.iter().map(|l| l + side).collect() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn intersects(&self, o: &AxisBox) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= o.hi[i] && o.lo[i] <= self.hi[i])
    }

    pub fn intersection(&self, o: &AxisBox) -> Option<AxisBox> {
        let lo: Vec<f64> = self.lo.iter().zip(&o.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&o.hi).map(|(a, b)| a.min(*b)).collect();
        lo.iter().zip(&hi).all(|(l, h)| l <= h).then_some(AxisBox { lo, hi })
    }

    /// Euclidean distance from `x` to the box (per-axis clamp).
    pub fn dist2_to_point(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| {
                let d = if v < l { l - v } else if v > h { v - h } else { 0.0 };
                d * d
            })
            .sum()
    }

    /// Map `u ∈ [0,1]^n` to the box.
    pub fn affine(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (l, h))| l + t * (h - l))
            .collect()
    }
}

/// Distance from a box to the nearest point of a finite set.
pub fn dist_box_to_points(b: &AxisBox, points: &[Vec<f64>]) -> Result<f64> {
    let mut best: Option<f64> = None;
    for p in points {
        if p.len() != b.dim() {
            return Err(Error::DimensionMismatch { expected: b.dim(), got: p.len() });
        }
        let d = b.dist2_to_point(p);
        best = Some(best.map_or(d, |a| a.min(d)));
    }
    best.map(f64::sqrt).ok_or(Error::EmptyReferenceSet)
}

/// Finite site set on the fixed-point grid, sorted lexicographically and
/// deduplicated so that index order realizes the anchor tie-break.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSet {
    n: usize,
    points: Vec<Vec<f64>>,
    fixed: Vec<i128>,
}

impl SiteSet {
    pub fn new(n: usize, points: &[Vec<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyReferenceSet);
        }
        let mut pts = Vec::with_capacity(points.len());
        for p in points {
            if p.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: p.len() });
            }
            if p.iter().any(|&x| to_fixed(x).is_none()) {
                return Err(Error::NonDyadicSite(p.clone()));
            }
            pts.push(p.clone());
        }
        pts.sort_by(|a, b| lex_cmp(a, b));
        pts.dedup();
        let fixed = pts.iter().flatten().map(|&x| to_fixed(x).unwrap()).collect();
        Ok(SiteSet { n, points: pts, fixed })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    #[inline]
    pub fn fixed(&self, i: usize) -> &[i128] {
        &self.fixed[i * self.n..(i + 1) * self.n]
    }

    /// Index of `x` if it is a site.
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        self.points.binary_search_by(|p| lex_cmp(p, x)).ok()
    }

    /// Nearest site to `cube` among `candidates` (all sites if `None`), as
    /// `(squared distance, index)`; ties go to the smaller index.
    pub fn nearest(&self, cube: &DyadicCube, candidates: Option<&[u32]>) -> (i128, u32) {
        let mut best = (i128::MAX, u32::MAX);
        let mut visit = |i: u32| {
            let d = cube.dist2_fixed(self.fixed(i as usize));
            if d < best.0 || (d == best.0 && i < best.1) {
                best = (d, i);
            }
        };
        match candidates {
            Some(c) => c.iter().for_each(|&i| visit(i)),
            None => (0..self.len() as u32).for_each(&mut visit),
        }
        best
    }

    /// Whether some candidate lies strictly closer than `sqrt(bound2)` to `cube`.
    pub fn any_closer(&self, cube: &DyadicCube, bound2: i128, candidates: Option<&[u32]>) -> bool {
        match candidates {
            Some(c) => c.iter().any(|&i| cube.dist2_fixed(self.fixed(i as usize)) < bound2),
            None => (0..self.len()).any(|i| cube.dist2_fixed(self.fixed(i)) < bound2),
        }
    }

    /// Sites that can be nearest to some subset of `region`: those within
    /// `dmin + diam(region)` of it. Float slack only enlarges the set.
    pub fn prune(&self, region: &DyadicCube, candidates: Option<&[u32]>, out: &mut Vec<u32>) {
        let n = region.dim();
        let mut lo: SmallVec<[i128; 4]> = SmallVec::with_capacity(n);
        let mut hi: SmallVec<[i128; 4]> = SmallVec::with_capacity(n);
        for i in 0..n {
            let (l, h) = region.fixed_bounds(i);
            lo.push(l);
            hi.push(h);
        }
        self.prune_region(&lo, &hi, candidates, out)
    }

    /// [`SiteSet::prune`] for an arbitrary box given in grid units.
    pub fn prune_region(&self, lo: &[i128], hi: &[i128], candidates: Option<&[u32]>, out: &mut Vec<u32>) {
        out.clear();
        let dist2 = |i: u32| -> i128 {
            let x = self.fixed(i as usize);
            let mut acc = 0i128;
            for k in 0..x.len() {
                let d = if x[k] < lo[k] {
                    lo[k] - x[k]
                } else if x[k] > hi[k] {
                    x[k] - hi[k]
                } else {
                    0
                };
                acc += d * d;
            }
            acc
        };
        let mut ds: SmallVec<[(i128, u32); 16]> = SmallVec::new();
        match candidates {
            Some(c) => ds.extend(c.iter().map(|&i| (dist2(i), i))),
            None => ds.extend((0..self.len() as u32).map(|i| (dist2(i), i))),
        }
        let dmin = ds.iter().map(|d| d.0).min().unwrap_or(0);
        let diam2: f64 = lo.iter().zip(hi).map(|(l, h)| ((h - l) as f64).powi(2)).sum();
        let reach = (dmin as f64).sqrt() + diam2.sqrt();
        let limit = reach * (1.0 + 1e-9) + 1.0;
        let limit2 = limit * limit;
        out.extend(ds.iter().filter(|(d, _)| (*d as f64) <= limit2).map(|(_, i)| *i));
    }
}

/// Lexicographic order on points by `total_cmp`.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Cells of level `level` whose closed box contains `x`, one or two per axis.
pub fn cells_containing(x: &[f64], level: i32) -> Vec<DyadicCube> {
    let scale = exp2i(level);
    let mut axes: SmallVec<[(i64, bool); 4]> = SmallVec::new();
    for &xi in x {
        let t = xi * scale;
        let f = t.floor();
        axes.push((f as i64, t == f));
    }
    let mut out = vec![DyadicCube { level, coords: axes.iter().map(|a| a.0).collect() }];
    for (i, &(a, on_face)) in axes.iter().enumerate() {
        if on_face {
            let extra: Vec<_> = out
                .iter()
                .map(|c| {
                    let mut c = c.clone();
                    c.coords[i] = a - 1;
                    c
                })
                .collect();
            out.extend(extra);
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_examples() {
        let q = DyadicCube::new(0, &[0]);
        assert_eq!(q.to_box(), AxisBox { lo: vec![0.0], hi: vec![1.0] });
        assert_eq!(q.diameter(), 1.0);
        assert_eq!(DyadicCube::new(2, &[0, 0, 0, 0]).diameter(), 0.5);
        let q = DyadicCube::new(-1, &[3, -1]);
        assert_eq!(q.to_box(), AxisBox { lo: vec![6.0, -2.0], hi: vec![8.0, 0.0] });
        assert!((q.diameter() - 2.0 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let b = AxisBox::cube(&[0.0], 1.0);
        assert_eq!(dist_box_to_points(&b, &[vec![3.0]]).unwrap(), 2.0);
        assert_eq!(dist_box_to_points(&b, &[vec![0.5]]).unwrap(), 0.0);
        let b2 = AxisBox::cube(&[0.0, 0.0], 1.0);
        assert_eq!(dist_box_to_points(&b2, &[vec![2.0, 2.0]]).unwrap(), 2f64.sqrt());
        assert!(matches!(dist_box_to_points(&b, &[]), Err(Error::EmptyReferenceSet)));
    }

    #[test]
    fn touch_examples() {
        let a = DyadicCube::new(0, &[0]);
        assert!(a.touches(&DyadicCube::new(0, &[1])));
        assert!(!a.touches(&DyadicCube::new(0, &[2])));
        let sq = DyadicCube::new(0, &[0, 0]);
        assert!(sq.touches(&DyadicCube::new(1, &[2, 0])));
        assert!(!sq.touches(&DyadicCube::new(1, &[3, 0])));
    }

    #[test]
    fn fixed_roundtrip_rejects_off_grid() {
        assert_eq!(to_fixed(0.75), Some(3i128 << (FRAC_BITS - 2)));
        assert_eq!(to_fixed(0.1), None);
        assert_eq!(from_fixed(to_fixed(-3.5).unwrap()), -3.5);
    }

    #[test]
    fn cells_on_face() {
        let cells = cells_containing(&[10.0], 0);
        assert_eq!(cells, vec![DyadicCube::new(0, &[9]), DyadicCube::new(0, &[10])]);
        assert_eq!(cells_containing(&[10.5, 1.25], 0).len(), 1);
        assert_eq!(cells_containing(&[0.0, 0.0], 3).len(), 4);
    }

    #[test]
    fn id_roundtrip() {
        let q = DyadicCube::new(-3, &[5, -7]);
        assert_eq!(q.id(), "-3:5,-7");
        assert_eq!(q.id().parse::<DyadicCube>().unwrap(), q);
    }

    #[test]
    fn site_set_sorted_and_nearest() {
        let s = SiteSet::new(2, &[vec![4.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(s.point(0), &[0.0, 0.0]);
        // [0,4]^2 contains both sites: the smaller index wins the tie
        assert_eq!(s.nearest(&DyadicCube::new(-2, &[0, 0]), None), (0, 0));
        assert_eq!(s.nearest(&DyadicCube::new(0, &[3, 0]), None).1, 1);
    }
}
