//! Estimators for the fractional Gagliardo seminorm
//!
//! ```text
//! ‖f‖^p = ∫∫ (Σ_{|k|=⌊s⌋} |∂^k f(x) − ∂^k f(y)|)^p / |x−y|^{n+{s}p} dx dy
//! ```
//!
//! over a union of boxes, plus the singular integrals over cube pairs and
//! the embedding-constant estimator. Note the inner sum is an ℓ¹ sum over
//! the top multi-indices raised to the `p`-th power; the common variant
//! with an inner ℓ^p sum differs by a dimensional constant.
//!
//! Every integrand is written as `smooth(x, y, r) · r^{-β}` so the
//! estimators can treat the diagonal singularity uniformly.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::Whitney;
use crate::dyadic::{AxisBox, DyadicCube};
use crate::error::{Error, Result};
use crate::extension::ExtensionField;
use crate::functions::Field;
use crate::params::SpaceParams;
use crate::quad;
use crate::rng::{derive_seed, stream};

const CHUNK: u64 = 4096;
/// Radial cutoff of importance sampling, relative to the region diameter.
pub const R_MIN_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PlainMc,
    ImportanceMc,
    TensorQuad,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::PlainMc, Method::ImportanceMc, Method::TensorQuad];

    pub fn name(&self) -> &'static str {
        match self {
            Method::PlainMc => "plain-mc",
            Method::ImportanceMc => "importance-mc",
            Method::TensorQuad => "tensor-quad",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method {s:?}")))
    }
}

/// Union of boxes with disjoint interiors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub boxes: Vec<AxisBox>,
}

impl Region {
    pub fn new(boxes: Vec<AxisBox>) -> Result<Self> {
        let n = boxes.first().ok_or_else(|| Error::Invalid("empty region".into()))?.dim();
        if boxes.iter().any(|b| b.dim() != n) {
            return Err(Error::Invalid("region boxes differ in dimension".into()));
        }
        Ok(Region { boxes })
    }

    pub fn single(b: AxisBox) -> Self {
        Region { boxes: vec![b] }
    }

    pub fn from_cubes(cubes: &[DyadicCube]) -> Result<Self> {
        Self::new(cubes.iter().map(DyadicCube::to_box).collect())
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }

    pub fn volume(&self) -> f64 {
        self.boxes.iter().map(AxisBox::volume).sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains(x))
    }

    pub fn bounding_box(&self) -> AxisBox {
        let n = self.dim();
        let lo = (0..n).map(|i| self.boxes.iter().map(|b| b.lo[i]).fold(f64::INFINITY, f64::min)).collect();
        let hi = (0..n).map(|i| self.boxes.iter().map(|b| b.hi[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
        AxisBox { lo, hi }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let b = if self.boxes.len() == 1 {
            &self.boxes[0]
        } else {
            let mut t = rng.gen::<f64>() * self.volume();
            let mut pick = self.boxes.last().unwrap();
            for b in &self.boxes {
                let v = b.volume();
                if t < v {
                    pick = b;
                    break;
                }
                t -= v;
            }
            pick
        };
        let u: Vec<f64> = (0..b.dim()).map(|_| rng.gen::<f64>()).collect();
        b.affine(&u)
    }
}

/// Integrand `smooth(f(x), f(y), r) · r^{-β}` over pairs.
pub trait PairIntegrand: Sync {
    fn dim(&self) -> usize;
    fn beta(&self) -> f64;
    /// Per-point data fed to [`PairIntegrand::smooth`].
    fn features(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn smooth(&self, fx: &[f64], fy: &[f64], r: f64) -> f64;
}

/// `|x−y|^{-β}` alone.
#[derive(Debug, Clone, Copy)]
pub struct Kernel {
    pub n: usize,
    pub beta: f64,
}

impl PairIntegrand for Kernel {
    fn dim(&self) -> usize {
        self.n
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn features(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
    fn smooth(&self, _fx: &[f64], _fy: &[f64], _r: f64) -> f64 {
        1.0
    }
}

/// The seminorm integrand of a field, with `β = n + {s}p − p` so that
/// `smooth = (Σ|Δ∂^k f| / r)^p` stays bounded for smooth fields.
pub struct GagliardoIntegrand<'a> {
    field: &'a dyn Field,
    guard: Option<(&'a ExtensionField, f64)>,
    m: usize,
    p: f64,
    beta: f64,
    evaluations: AtomicU64,
    fallbacks: AtomicU64,
}

impl<'a> GagliardoIntegrand<'a> {
    pub fn new(field: &'a dyn Field, params: &SpaceParams) -> Result<Self> {
        if field.dim() != params.n() {
            return Err(Error::DimensionMismatch { expected: params.n(), got: field.dim() });
        }
        Ok(GagliardoIntegrand {
            field,
            guard: None,
            m: params.floor_s(),
            p: params.p(),
            beta: params.n() as f64 + params.frac_s() * params.p() - params.p(),
            evaluations: AtomicU64::new(0),
            fallbacks: AtomicU64::new(0),
        })
    }

    /// `Tf` with jet fallback inside the guard radius `2^{-L_max}` of a site.
    pub fn extension(tf: &'a ExtensionField) -> Result<Self> {
        let params = *tf.jets().params();
        let mut g = Self::new(tf, &params)?;
        g.guard = Some((tf, (-tf.decomposition().max_level() as f64).exp2()));
        Ok(g)
    }

    /// Fraction of feature evaluations answered by a site jet.
    pub fn guard_fraction(&self) -> f64 {
        let e = self.evaluations.load(Ordering::Relaxed);
        if e == 0 {
            0.0
        } else {
            self.fallbacks.load(Ordering::Relaxed) as f64 / e as f64
        }
    }

    fn jet_fallback(&self, tf: &ExtensionField, x: &[f64]) -> Vec<f64> {
        let sites = tf.decomposition().sites();
        let mut best = (f64::INFINITY, 0);
        for (i, s) in sites.points().iter().enumerate() {
            let d: f64 = s.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        self.fallbacks.fetch_add(1, Ordering::Relaxed);
        tf.jets().jet(best.1).taylor_at(x, self.m).partials_of_order(self.m)
    }
}

impl PairIntegrand for GagliardoIntegrand<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let Some((tf, radius)) = self.guard else {
            return self.field.top_partials(x, self.m);
        };
        let r2 = radius * radius;
        let near = tf
            .decomposition()
            .sites()
            .points()
            .iter()
            .any(|s| s.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < r2);
        if near {
            return Ok(self.jet_fallback(tf, x));
        }
        match tf.top_partials(x, self.m) {
            Err(Error::DepthCap { .. }) | Err(Error::OnClosedSet) => Ok(self.jet_fallback(tf, x)),
            other => other,
        }
    }

    fn smooth(&self, fx: &[f64], fy: &[f64], r: f64) -> f64 {
        let d: f64 = fx.iter().zip(fy).map(|(a, b)| (a - b).abs()).sum();
        if d == 0.0 {
            0.0
        } else {
            (d / r).powf(self.p)
        }
    }
}

/// Estimate of `∫∫ smooth · r^{-β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    /// 2σ for Monte Carlo, refinement delta for quadrature, plus the
    /// cutoff tail.
    pub error_bound: f64,
    /// Analytic bound on the neglected `r < r_min` contribution.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    pub budget: u64,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn new(method: Method, budget: u64, seed: u64) -> Self {
        EstimatorConfig { method, budget, seed }
    }
}

/// Seminorm estimate; `value = value_p^{1/p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormEstimate {
    pub value: f64,
    pub error_bound: f64,
    pub value_p: f64,
    pub error_bound_p: f64,
    pub tail_bound: f64,
    pub method: Method,
    pub budget: u64,
    pub seed: u64,
    pub region: Region,
    pub params: SpaceParams,
    /// Fraction of evaluations that fell back to a site jet.
    pub guard_fraction: f64,
    pub warnings: Vec<String>,
}

impl SeminormEstimate {
    fn from_integral(i: Integral, p: f64, cfg: &EstimatorConfig, region: &Region, params: &SpaceParams) -> Self {
        let vp = i.value.max(0.0);
        let value = vp.powf(1.0 / p);
        SeminormEstimate {
            value,
            error_bound: (vp + i.error_bound).powf(1.0 / p) - value,
            value_p: i.value,
            error_bound_p: i.error_bound,
            tail_bound: i.tail_bound,
            method: cfg.method,
            budget: cfg.budget,
            seed: cfg.seed,
            region: region.clone(),
            params: *params,
            guard_fraction: 0.0,
            warnings: Vec::new(),
        }
    }
}

/// Measure of the unit sphere `S^{n-1}`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI / (n as f64 - 2.0) * sphere_area(n - 2),
    }
}

/// Estimate the seminorm of an analytic field over `region`.
pub fn gagliardo(field: &dyn Field, region: &Region, params: &SpaceParams, cfg: &EstimatorConfig) -> Result<SeminormEstimate> {
    let ig = GagliardoIntegrand::new(field, params)?;
    let i = integrate(&ig, region, cfg)?;
    Ok(SeminormEstimate::from_integral(i, params.p(), cfg, region, params))
}

/// Estimate the seminorm of `Tf` over `region`.
pub fn gagliardo_extension(tf: &ExtensionField, region: &Region, cfg: &EstimatorConfig) -> Result<SeminormEstimate> {
    let params = *tf.jets().params();
    let ig = GagliardoIntegrand::extension(tf)?;
    let i = integrate(&ig, region, cfg)?;
    let mut est = SeminormEstimate::from_integral(i, params.p(), cfg, region, &params);
    est.guard_fraction = ig.guard_fraction();
    if !params.embedding_holds() {
        est.warnings.push("possibly divergent: {s}p <= n".into());
    }
    Ok(est)
}

/// Estimate `∫_region ∫_region smooth · r^{-β}` with the configured method.
pub fn integrate(ig: &dyn PairIntegrand, region: &Region, cfg: &EstimatorConfig) -> Result<Integral> {
    if region.dim() != ig.dim() {
        return Err(Error::DimensionMismatch { expected: ig.dim(), got: region.dim() });
    }
    match cfg.method {
        Method::PlainMc | Method::ImportanceMc => Ok(monte_carlo(ig, region, cfg, None, 0)?.0),
        Method::TensorQuad => tensor_quad(ig, region, cfg.budget),
    }
}

/// Monte Carlo estimate split by a sample classifier.
///
/// `classify(x, y)` returns a bucket in `0..buckets`; `None` lands in the
/// extra trailing bucket. Bucket estimates share samples with the total.
pub fn integrate_split(
    ig: &dyn PairIntegrand,
    region: &Region,
    cfg: &EstimatorConfig,
    classify: &(dyn Fn(&[f64], &[f64]) -> Option<usize> + Sync),
    buckets: usize,
) -> Result<(Integral, Vec<Integral>)> {
    if cfg.method == Method::TensorQuad {
        return Err(Error::Invalid("split estimates need a Monte Carlo method".into()));
    }
    monte_carlo(ig, region, cfg, Some(classify), buckets)
}

#[derive(Clone)]
struct Acc {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    max_smooth: f64,
}

fn unit_direction<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    if n == 1 {
        return vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

fn monte_carlo(
    ig: &dyn PairIntegrand,
    region: &Region,
    cfg: &EstimatorConfig,
    classify: Option<&(dyn Fn(&[f64], &[f64]) -> Option<usize> + Sync)>,
    buckets: usize,
) -> Result<(Integral, Vec<Integral>)> {
    let n = ig.dim();
    let nb = buckets + 1;
    let samples = cfg.budget.max(2);
    let beta = ig.beta();
    let lambda = n as f64 - beta;
    let vol = region.volume();
    let importance = cfg.method == Method::ImportanceMc;
    let big_r = region.bounding_box().diameter();
    let r_min = R_MIN_REL * big_r;
    if importance && !(lambda > 0.0) {
        return Err(Error::DiagonalNotIntegrable(format!("radial exponent n − β = {lambda} is not positive")));
    }
    let (rl_min, rl_max) = (r_min.powf(lambda), big_r.powf(lambda));
    let z = (rl_max - rl_min) / lambda;
    let dir_weight = vol * sphere_area(n) * z;

    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Result<Acc>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Acc { sum: vec![0.0; nb], sumsq: vec![0.0; nb], max_smooth: 0.0 };
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let mut rng = stream(cfg.seed, i);
                let x = region.sample(&mut rng);
                let (y, r, weight) = if importance {
                    let u = unit_direction(n, &mut rng);
                    let t: f64 = rng.gen();
                    let r = (rl_min + t * (rl_max - rl_min)).powf(1.0 / lambda);
                    let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + r * b).collect();
                    if !region.contains(&y) {
                        continue;
                    }
                    (y, r, dir_weight)
                } else {
                    let y = region.sample(&mut rng);
                    let r = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    if r == 0.0 {
                        continue;
                    }
                    (y, r, vol * vol * r.powf(-beta))
                };
                let sm = ig.smooth(&ig.features(&x)?, &ig.features(&y)?, r);
                acc.max_smooth = acc.max_smooth.max(sm);
                let w = weight * sm;
                if w == 0.0 {
                    continue;
                }
                let b = classify.and_then(|f| f(&x, &y)).map_or(buckets, |b| b.min(buckets));
                acc.sum[b] += w;
                acc.sumsq[b] += w * w;
            }
            Ok(acc)
        })
        .collect();

    let mut total = Acc { sum: vec![0.0; nb], sumsq: vec![0.0; nb], max_smooth: 0.0 };
    for a in partial {
        let a = a?;
        for b in 0..nb {
            total.sum[b] += a.sum[b];
            total.sumsq[b] += a.sumsq[b];
        }
        total.max_smooth = total.max_smooth.max(a.max_smooth);
    }
    let nf = samples as f64;
    let tail = if importance { vol * sphere_area(n) * total.max_smooth * rl_min / lambda } else { 0.0 };
    let summarize = |s: f64, sq: f64, tail: f64| {
        let mean = s / nf;
        let var = ((sq / nf - mean * mean).max(0.0)) / (nf - 1.0);
        Integral { value: mean, error_bound: 2.0 * var.sqrt() + tail, tail_bound: tail }
    };
    let per: Vec<Integral> = (0..nb).map(|b| summarize(total.sum[b], total.sumsq[b], 0.0)).collect();
    let all = summarize(total.sum.iter().sum(), total.sumsq.iter().sum(), tail);
    Ok((all, per))
}

/// Node counts of one tensor-quadrature level.
#[derive(Debug, Clone, Copy)]
struct QuadLevel {
    x: usize,
    ang: usize,
    r: usize,
}

impl QuadLevel {
    fn for_budget(n: usize, budget: u64) -> Self {
        let b = budget.max(16) as f64;
        let k = match n {
            1 => (b / 2.0).sqrt(),
            2 => (b / 4.0).powf(0.25),
            _ => (b / 2.0).powf(1.0 / 6.0),
        };
        let k = (k.round() as usize).max(4);
        QuadLevel { x: k, ang: if n == 2 { (k / 2).max(2) } else { k }, r: k }
    }

    fn halved(&self) -> Self {
        QuadLevel { x: (self.x / 2).max(2), ang: (self.ang / 2).max(2), r: (self.r / 2).max(2) }
    }
}

fn axis_nodes(lo: f64, hi: f64, k: usize) -> Vec<(f64, f64)> {
    let cells = k.div_ceil(6);
    quad::composite(lo, hi, cells, k.div_ceil(cells))
}

/// Tensor nodes over a box.
fn box_nodes(b: &AxisBox, k: usize) -> Vec<(Vec<f64>, f64)> {
    let axes: Vec<Vec<(f64, f64)>> = (0..b.dim()).map(|i| axis_nodes(b.lo[i], b.hi[i], k)).collect();
    let mut out = vec![(Vec::new(), 1.0)];
    for ax in &axes {
        let mut next = Vec::with_capacity(out.len() * ax.len());
        for (p, w) in &out {
            for &(t, wt) in ax {
                let mut q = p.clone();
                q.push(t);
                next.push((q, w * wt));
            }
        }
        out = next;
    }
    out
}

/// Parameter interval `[enter, exit]` of the line `x + r u` inside `b`.
pub(crate) fn slab(x: &[f64], u: &[f64], b: &AxisBox) -> Option<(f64, f64)> {
    let mut enter = f64::NEG_INFINITY;
    let mut exit = f64::INFINITY;
    for i in 0..x.len() {
        if u[i].abs() < 1e-300 {
            if x[i] < b.lo[i] || x[i] > b.hi[i] {
                return None;
            }
            continue;
        }
        let t1 = (b.lo[i] - x[i]) / u[i];
        let t2 = (b.hi[i] - x[i]) / u[i];
        enter = enter.max(t1.min(t2));
        exit = exit.min(t1.max(t2));
    }
    (enter <= exit).then_some((enter, exit))
}

/// Direction rule on `S^{n-1}` adapted to the corners of `boxes` seen from `x`.
fn directions(n: usize, x: &[f64], boxes: &[&AxisBox], k: usize) -> Vec<(Vec<f64>, f64)> {
    use std::f64::consts::PI;
    match n {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => {
            let mut cuts = Vec::new();
            for b in boxes {
                for cx in [b.lo[0], b.hi[0]] {
                    for cy in [b.lo[1], b.hi[1]] {
                        let (dx, dy) = (cx - x[0], cy - x[1]);
                        if dx != 0.0 || dy != 0.0 {
                            cuts.push(dy.atan2(dx).rem_euclid(2.0 * PI));
                        }
                    }
                }
            }
            cuts.push(0.0);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
            let rule = quad::legendre(k);
            let mut out = Vec::with_capacity(cuts.len() * k);
            for (j, &a) in cuts.iter().enumerate() {
                let b = cuts.get(j + 1).copied().unwrap_or(2.0 * PI);
                let h = b - a;
                if h <= 0.0 {
                    continue;
                }
                for &(t, w) in rule.iter() {
                    let th = a + t * h;
                    out.push((vec![th.cos(), th.sin()], w * h));
                }
            }
            out
        }
        _ => {
            // Gauss in cos(polar) times a periodic trapezoid in azimuth;
            // only the first three coordinates are supported.
            let zr = quad::legendre(k);
            let nt = 2 * k;
            let mut out = Vec::with_capacity(k * nt);
            for &(t, w) in zr.iter() {
                let z = 2.0 * t - 1.0;
                let rho = (1.0 - z * z).max(0.0).sqrt();
                for j in 0..nt {
                    let th = 2.0 * PI * (j as f64 + 0.5) / nt as f64;
                    out.push((vec![rho * th.cos(), rho * th.sin(), z], 2.0 * w * 2.0 * PI / nt as f64));
                }
            }
            out
        }
    }
}

/// `∫_{r0}^{r1} smooth(r) r^{λ-1} dr` along one ray.
#[allow(clippy::too_many_arguments)]
fn radial(
    ig: &dyn PairIntegrand,
    fx: &[f64],
    x: &[f64],
    u: &[f64],
    r0: f64,
    r1: f64,
    lambda: f64,
    k: usize,
) -> Result<f64> {
    let point = |r: f64| -> Vec<f64> { x.iter().zip(u).map(|(a, b)| a + r * b).collect() };
    if r0 <= 0.0 {
        if !(lambda > 0.0) {
            return Err(Error::DiagonalNotIntegrable(format!("radial exponent n − β = {lambda} is not positive")));
        }
        let rule = quad::jacobi(k, lambda - 1.0);
        let mut acc = 0.0;
        for &(t, w) in rule.iter() {
            let r = r1 * t;
            acc += w * ig.smooth(fx, &ig.features(&point(r))?, r);
        }
        return Ok(acc * r1.powf(lambda));
    }
    // Geometric panels resolve r^{λ-1} near a touching face.
    let rule = quad::legendre(k);
    let mut acc = 0.0;
    let mut a = r0;
    while a < r1 {
        let b = if r1 > 4.0 * a { 4.0 * a } else { r1 };
        let h = b - a;
        for &(t, w) in rule.iter() {
            let r = a + t * h;
            acc += w * h * ig.smooth(fx, &ig.features(&point(r))?, r) * r.powf(lambda - 1.0);
        }
        a = b;
    }
    Ok(acc)
}

fn quad_pair(ig: &dyn PairIntegrand, a: &AxisBox, b: &AxisBox, lvl: QuadLevel) -> Result<f64> {
    let n = ig.dim();
    if n > 3 {
        return Err(Error::Invalid("tensor quadrature supports n <= 3".into()));
    }
    let lambda = n as f64 - ig.beta();
    let nodes = box_nodes(a, lvl.x);
    let vals: Vec<Result<f64>> = nodes
        .par_iter()
        .map(|(x, wx)| {
            let fx = ig.features(x)?;
            let mut acc = 0.0;
            for (u, wu) in directions(n, x, &[b], lvl.ang) {
                let Some((enter, exit)) = slab(x, &u, b) else { continue };
                let r0 = enter.max(0.0);
                if exit <= r0 {
                    continue;
                }
                acc += wu * radial(ig, &fx, x, &u, r0, exit, lambda, lvl.r)?;
            }
            Ok(wx * acc)
        })
        .collect();
    let mut total = 0.0;
    for v in vals {
        total += v?;
    }
    Ok(total)
}

fn tensor_quad(ig: &dyn PairIntegrand, region: &Region, budget: u64) -> Result<Integral> {
    let pairs = (region.boxes.len() * region.boxes.len()) as u64;
    let fine = QuadLevel::for_budget(ig.dim(), budget / pairs.max(1));
    let coarse = fine.halved();
    let (mut vf, mut vc) = (0.0, 0.0);
    for a in &region.boxes {
        for b in &region.boxes {
            vf += quad_pair(ig, a, b, fine)?;
            vc += quad_pair(ig, a, b, coarse)?;
        }
    }
    Ok(Integral { value: vf, error_bound: (vf - vc).abs(), tail_bound: 0.0 })
}

/// Singular integral over a touching pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchingReport {
    pub q: String,
    pub q2: String,
    pub integral: f64,
    pub error_bound: f64,
    /// `integral / δ_Q^{n+p−{s}p}`.
    pub ratio: f64,
}

/// `∫_{Q'}∫_Q |x−y|^{-(n+{s}p−p)}` relative to `δ_Q^{n+p−{s}p}`.
pub fn touching_pair_integral(q: &DyadicCube, q2: &DyadicCube, params: &SpaceParams, budget: u64) -> Result<TouchingReport> {
    if q.dim() != params.n() || q2.dim() != params.n() {
        return Err(Error::DimensionMismatch { expected: params.n(), got: q.dim() });
    }
    if !q.touches(q2) {
        return Err(Error::Invalid(format!("{q:?} and {q2:?} do not touch")));
    }
    let n = params.n() as f64;
    let sp = params.frac_s() * params.p();
    let k = Kernel { n: params.n(), beta: n + sp - params.p() };
    let fine = QuadLevel::for_budget(params.n(), budget);
    let (a, b) = (q.to_box(), q2.to_box());
    let vf = quad_pair(&k, &a, &b, fine)?;
    let vc = quad_pair(&k, &a, &b, fine.halved())?;
    Ok(TouchingReport {
        q: q.id(),
        q2: q2.id(),
        integral: vf,
        error_bound: (vf - vc).abs(),
        ratio: vf / q.diameter().powf(n + params.p() - sp),
    })
}

/// Far-field singular integral of one cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarReport {
    pub q: String,
    /// `∫_Q ∫_{Ω \ (Q ∪ neighbors)} |x−y|^{-(n+{s}p)}`.
    pub integral: f64,
    pub error_bound: f64,
    /// `integral / δ_Q^{n−{s}p}`.
    pub ratio: f64,
    /// Closed-form bound of the ratio from the excluded ball of radius `δ_Q/(2√n)`.
    pub comparator: f64,
    /// Per-cube terms for non-touching cubes near `Q`, sorted decreasing.
    pub near_terms: Vec<f64>,
    pub near_sum: f64,
    /// Partial sums of the near terms stay below the full integral.
    pub summable: bool,
}

/// Far-field bound: integrate over `Ω` minus `Q` and its neighbors.
pub fn far_field_sum(w: &Whitney, q: &DyadicCube, budget: u64) -> Result<FarReport> {
    let params = w.params();
    let n = params.n();
    if n > 3 {
        return Err(Error::Invalid("far-field quadrature supports n <= 3".into()));
    }
    let sigma = params.frac_s() * params.p();
    let omega = w.domain_box();
    let nbrs = w.neighbors(q);
    let mut excluded: Vec<AxisBox> = vec![q.to_box()];
    excluded.extend(nbrs.iter().map(DyadicCube::to_box));

    let run = |k: usize| -> f64 {
        let qb = q.to_box();
        let nodes = box_nodes(&qb, k);
        let mut cut_boxes: Vec<&AxisBox> = excluded.iter().collect();
        cut_boxes.push(&omega);
        let vals: Vec<f64> = nodes
            .par_iter()
            .map(|(x, wx)| {
                let mut acc = 0.0;
                for (u, wu) in directions(n, x, &cut_boxes, k) {
                    let Some((_, r_end)) = slab(x, &u, &omega) else { continue };
                    let mut holes: Vec<(f64, f64)> = excluded
                        .iter()
                        .filter_map(|b| slab(x, &u, b))
                        .map(|(a, b)| (a.max(0.0), b.min(r_end)))
                        .filter(|(a, b)| a < b)
                        .collect();
                    holes.sort_by(|a, b| a.0.total_cmp(&b.0));
                    // ∫ r^{-1-σ} over [0, r_end] minus the holes; x lies in
                    // the first hole so the origin is never reached.
                    let antider = |r: f64| -r.powf(-sigma) / sigma;
                    let mut covered = 0.0f64;
                    let mut s = 0.0;
                    for (a, b) in holes {
                        if a > covered && covered > 0.0 {
                            s += antider(a) - antider(covered);
                        }
                        covered = covered.max(b);
                    }
                    if r_end > covered && covered > 0.0 {
                        s += antider(r_end) - antider(covered);
                    }
                    acc += wu * s;
                }
                wx * acc
            })
            .collect();
        vals.iter().sum()
    };

    let k = match n {
        1 => ((budget / 2) as f64).sqrt().max(8.0) as usize,
        2 => ((budget as f64) / (4.0 * excluded.len() as f64 + 4.0)).powf(1.0 / 3.0).max(6.0) as usize,
        _ => ((budget as f64) / 2.0).powf(0.2).max(4.0) as usize,
    };
    let vf = run(k);
    let vc = run((k / 2).max(2));
    let delta = q.diameter();
    let nn = n as f64;
    let comparator = (1.0 / nn.sqrt()).powi(n as i32) * sphere_area(n) * (2.0 * nn.sqrt()).powf(sigma) / sigma;

    let kernel = Kernel { n, beta: nn + sigma };
    let qb = q.to_box();
    let reach = 4.0 * delta;
    let mut near_terms = Vec::new();
    for (c, _) in w.cubes() {
        if c == *q || c.touches(q) {
            continue;
        }
        let cb = c.to_box();
        let d2: f64 = (0..n)
            .map(|i| {
                let g = (cb.lo[i] - qb.hi[i]).max(qb.lo[i] - cb.hi[i]).max(0.0);
                g * g
            })
            .sum();
        if d2 > reach * reach {
            continue;
        }
        near_terms.push(product_gauss(&kernel, &qb, &cb, 4));
    }
    near_terms.sort_by(|a, b| b.total_cmp(a));
    let near_sum: f64 = near_terms.iter().sum();
    let err = (vf - vc).abs();
    Ok(FarReport {
        q: q.id(),
        integral: vf,
        error_bound: err,
        ratio: vf / delta.powf(nn - sigma),
        comparator,
        near_sum,
        summable: near_sum.is_finite() && near_sum <= vf + err + 1e-3 * vf,
        near_terms,
    })
}

/// Plain product Gauss over a separated pair.
fn product_gauss(k: &Kernel, a: &AxisBox, b: &AxisBox, order: usize) -> f64 {
    let na = box_nodes(a, order);
    let nb = box_nodes(b, order);
    let mut acc = 0.0;
    for (x, wx) in &na {
        for (y, wy) in &nb {
            let r = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            acc += wx * wy * r.powf(-k.beta);
        }
    }
    acc
}

/// Observed embedding constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub constant: f64,
    /// Same statistic over the first half of the samples.
    pub constant_half: f64,
    pub seminorm: f64,
    pub samples: u64,
    pub stable: bool,
    pub zero_seminorm: bool,
}

/// `max |∂^kF(x) − ∂^kF(y)| / (‖F‖_{Q} |x−y|^{{s}−n/p})` over sampled pairs.
pub fn holder_constant(
    field: &dyn Field,
    q: &AxisBox,
    params: &SpaceParams,
    samples: u64,
    seed: u64,
    norm_budget: u64,
) -> Result<HolderReport> {
    let region = Region::single(q.clone());
    let method = if params.n() <= 3 { Method::TensorQuad } else { Method::ImportanceMc };
    let norm = gagliardo(field, &region, params, &EstimatorConfig::new(method, norm_budget, seed))?;
    let m = params.floor_s();
    let alpha = params.holder_exponent();
    let s2 = derive_seed(seed, 0x401d);
    let ratios: Vec<Result<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(s2, i);
            let x = region.sample(&mut rng);
            let y = region.sample(&mut rng);
            let r = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if r == 0.0 {
                return Ok(0.0);
            }
            let fx = field.top_partials(&x, m)?;
            let fy = field.top_partials(&y, m)?;
            let num = fx.iter().zip(&fy).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok(num / r.powf(alpha))
        })
        .collect();
    let ratios: Vec<f64> = ratios.into_iter().collect::<Result<_>>()?;
    let max_of = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let raw = max_of(&ratios);
    let raw_half = max_of(&ratios[..ratios.len() / 2]);
    if norm.value == 0.0 {
        if raw != 0.0 {
            return Err(Error::NumericalInconsistency("zero seminorm with nonconstant top derivatives".into()));
        }
        return Ok(HolderReport {
            constant: 0.0,
            constant_half: 0.0,
            seminorm: 0.0,
            samples,
            stable: true,
            zero_seminorm: true,
        });
    }
    let c = raw / norm.value;
    let c_half = raw_half / norm.value;
    Ok(HolderReport {
        constant: c,
        constant_half: c_half,
        seminorm: norm.value,
        samples,
        stable: c.is_finite() && (c - c_half).abs() <= 0.15 * c,
        zero_seminorm: false,
    })
}
