//! Smooth partition of unity subordinate to the dilated cubes `1.1Q`.
//!
//! `φ_Q(x) = Π_i ψ((x_i - c_i)/r)` with `ψ(t) = h((1.1 - |t|)/0.1)` and
//! `h(u) = g(u)/(g(u) + g(1-u))`, `g(u) = exp(-1/u)`. Then
//! `θ_Q = φ_Q / Σ_R φ_R`, the sum running over the cubes whose open
//! dilation contains `x`.

use serde::Serialize;

use crate::decomposition::Whitney;
use crate::dyadic::DyadicCube;
use crate::error::{Error, Result};
use crate::multi_index::MultiIndex;
use crate::taylor::{Series, TaylorValue};

pub const INNER: f64 = 1.0;
pub const OUTER: f64 = 1.1;

/// Beyond this `1/u` the series of `exp(-1/u)` is flushed to zero; its
/// magnitude is below `1e-260` there.
const FLUSH: f64 = 600.0;

/// `g(u) = exp(-1/u)` expanded at `u0`.
fn g_series(u0: f64, order: usize) -> Series {
    if u0 <= 0.0 || 1.0 / u0 > FLUSH {
        return Series::zero(order);
    }
    let u = Series::linear(u0, 1.0, order);
    Series::constant(-1.0, order).div(&u).exp()
}

/// Transition `h(u)`, 0 for `u <= 0` and 1 for `u >= 1`.
pub fn h_series(u0: f64, order: usize) -> Series {
    if u0 <= 0.0 {
        return Series::zero(order);
    }
    if u0 >= 1.0 {
        return Series::constant(1.0, order);
    }
    let a = g_series(u0, order);
    let b = g_series(1.0 - u0, order).chain_linear(-1.0);
    a.div(&a.add(&b))
}

/// One-dimensional cutoff `ψ` expanded at `t0`.
pub fn psi_series(t0: f64, order: usize) -> Series {
    let u0 = (OUTER - t0.abs()) / (OUTER - INNER);
    let slope = if t0 < 0.0 { 1.0 } else { -1.0 } / (OUTER - INNER);
    h_series(u0, order).chain_linear(slope)
}

/// Unnormalized bump `φ_Q` with all partials up to `order` at `x`.
pub fn phi(q: &DyadicCube, x: &[f64], order: usize) -> TaylorValue {
    let s = q.side();
    let r = 0.5 * s;
    let factors: Vec<Series> = q
        .coords
        .iter()
        .zip(x)
        .map(|(&a, &xi)| {
            let t = (xi - (a as f64 + 0.5) * s) / r;
            psi_series(t, order).chain_linear(1.0 / r)
        })
        .collect();
    TaylorValue::separable(&factors, order)
}

/// The partition evaluated at one point: every cube whose open dilation
/// contains `x`, with its `θ_Q` expansion.
#[derive(Debug, Clone)]
pub struct PartitionAt {
    pub x: Vec<f64>,
    pub cubes: Vec<DyadicCube>,
    pub thetas: Vec<TaylorValue>,
}

impl PartitionAt {
    pub fn theta(&self, q: &DyadicCube) -> Option<&TaylorValue> {
        self.cubes.iter().position(|c| c == q).map(|i| &self.thetas[i])
    }

    /// `Σ_Q θ_Q` as an expansion (should be the constant 1).
    pub fn sum(&self) -> TaylorValue {
        let mut it = self.thetas.iter();
        let mut acc = it.next().expect("partition is never empty").clone();
        for t in it {
            acc.add_assign(t);
        }
        acc
    }
}

/// Accepted cubes `R` with `x ∈ (1.1R)°`, found via the located cubes and
/// their neighbors.
pub fn covering_cubes(w: &Whitney, x: &[f64]) -> Result<Vec<DyadicCube>> {
    let located = w.locate(x)?;
    let mut cands = located.clone();
    for q in &located {
        cands.extend(w.neighbors(q));
    }
    cands.sort();
    cands.dedup();
    cands.retain(|q| q.in_open_dilation(x, OUTER));
    Ok(cands)
}

pub fn partition_at(w: &Whitney, x: &[f64], order: usize) -> Result<PartitionAt> {
    let cubes = covering_cubes(w, x)?;
    partition_over(cubes, x, order)
}

/// Normalize the bumps of an explicit cube family at `x`.
pub fn partition_over(cubes: Vec<DyadicCube>, x: &[f64], order: usize) -> Result<PartitionAt> {
    let phis: Vec<TaylorValue> = cubes.iter().map(|q| phi(q, x, order)).collect();
    let mut denom = TaylorValue::zero(x.len(), order);
    for p in &phis {
        denom.add_assign(p);
    }
    if denom.value() < 1.0 {
        return Err(Error::NumericalInconsistency(format!(
            "bump sum {} < 1 at {x:?}: the containing cube is missing",
            denom.value()
        )));
    }
    let thetas = phis.iter().map(|p| p.div(&denom)).collect::<Result<Vec<_>>>()?;
    Ok(PartitionAt { x: x.to_vec(), cubes, thetas })
}

/// `θ_Q` at `x`; identically zero when `x ∉ (1.1Q)°`.
pub fn theta(w: &Whitney, q: &DyadicCube, x: &[f64], order: usize) -> Result<TaylorValue> {
    let pa = partition_at(w, x, order)?;
    Ok(pa.theta(q).cloned().unwrap_or_else(|| TaylorValue::zero(x.len(), order)))
}

/// Scale-normalized derivative sizes at one level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelBound {
    pub level: i32,
    pub cubes: usize,
    pub points: usize,
    /// `sup |∂^k θ_Q| · δ_Q^{|k|}` per derivative order `|k| = 0..=order`.
    pub normalized_sup: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeBoundsReport {
    pub order: usize,
    pub levels: Vec<LevelBound>,
    /// `max / min` of the normalized sup across levels, per order.
    pub spread: Vec<f64>,
    pub tolerance: f64,
    pub stable: bool,
}

/// Sample `θ_Q` on a `grid^n` lattice over `1.1Q` for cubes of the given
/// levels (at most `max_cubes` per level, evenly strided).
pub fn derivative_bounds(
    w: &Whitney,
    order: usize,
    levels: &[i32],
    grid: usize,
    max_cubes: usize,
) -> Result<DerivativeBoundsReport> {
    use rayon::prelude::*;
    let n = w.dim();
    let mut out = Vec::new();
    for &level in levels {
        let Some(slot) = w.levels().iter().find(|l| l.level == level) else {
            return Err(Error::Invalid(format!("no enumerated cubes at level {level}")));
        };
        if slot.is_empty() {
            return Err(Error::Invalid(format!("no enumerated cubes at level {level}")));
        }
        let stride = slot.len().div_ceil(max_cubes.max(1));
        let cubes: Vec<DyadicCube> = (0..slot.len()).step_by(stride).map(|i| slot.cube(i)).collect();
        let per_cube: Vec<Result<(Vec<f64>, usize)>> = cubes
            .par_iter()
            .map(|q| {
                let b = q.dilate(OUTER);
                let delta = q.diameter();
                let mut sup = vec![0.0f64; order + 1];
                let mut points = 0;
                for idx in 0..grid.pow(n as u32) {
                    let mut rem = idx;
                    let u: Vec<f64> = (0..n)
                        .map(|_| {
                            let k = rem % grid;
                            rem /= grid;
                            (k as f64 + 0.5) / grid as f64
                        })
                        .collect();
                    let x = b.affine(&u);
                    let pa = match partition_at(w, &x, order) {
                        Ok(p) => p,
                        Err(Error::OutsideDomain) => continue,
                        Err(e) => return Err(e),
                    };
                    points += 1;
                    let Some(t) = pa.theta(q) else { continue };
                    for (k, c) in t.basis().indices().iter().zip(t.coeffs()) {
                        let d = (c * k.factorial()).abs() * delta.powi(k.order() as i32);
                        sup[k.order()] = sup[k.order()].max(d);
                    }
                }
                Ok((sup, points))
            })
            .collect();
        let mut sup = vec![0.0f64; order + 1];
        let mut points = 0;
        for r in per_cube {
            let (s, p) = r?;
            points += p;
            for (a, b) in sup.iter_mut().zip(s) {
                *a = a.max(b);
            }
        }
        out.push(LevelBound { level, cubes: cubes.len(), points, normalized_sup: sup });
    }
    let spread: Vec<f64> = (0..=order)
        .map(|k| {
            let vals = out.iter().map(|l| l.normalized_sup[k]);
            let max = vals.clone().fold(0.0, f64::max);
            let min = vals.fold(f64::INFINITY, f64::min);
            if max == 0.0 {
                1.0
            } else {
                max / min
            }
        })
        .collect();
    let tolerance = 1.25;
    let stable = spread.iter().all(|s| *s <= tolerance);
    Ok(DerivativeBoundsReport { order, levels: out, spread, tolerance, stable })
}

/// Raw partial `∂^k θ_Q(x)`.
pub fn theta_partial(w: &Whitney, q: &DyadicCube, x: &[f64], k: &MultiIndex) -> Result<f64> {
    theta(w, q, x, k.order())?.partial(k)
}

/// Taylor-propagated derivatives of `θ` against finite differences.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteDifferenceReport {
    pub samples: usize,
    /// Largest `|exact − fd| / max(|exact|, δ_Q^{-|k|})` over first and
    /// second partials.
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compare `∂θ_Q` (`|k| <= 2`) with Richardson-extrapolated central
/// differences at `samples` random `(Q, x)`, `x ∈ 1.1Q`.
pub fn finite_difference_check(w: &Whitney, samples: usize, seed: u64, tolerance: f64) -> Result<FiniteDifferenceReport> {
    use rand::Rng;
    use rayon::prelude::*;
    let cubes: Vec<DyadicCube> = w.cubes().map(|(q, _)| q).collect();
    if cubes.is_empty() {
        return Err(Error::Invalid("decomposition has no enumerated cubes".into()));
    }
    let n = w.dim();
    let errs: Vec<Result<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream(seed, i);
            let (q, x) = loop {
                let q = &cubes[rng.gen_range(0..cubes.len())];
                let b = q.dilate(OUTER);
                let u: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
                let x = b.affine(&u);
                if x.iter().all(|v| v.abs() < w.domain_radius()) && w.sites().index_of(&x).is_none() {
                    break (q.clone(), x);
                }
            };
            let exact = theta(w, &q, &x, 2)?;
            let val = |y: &[f64]| -> Result<f64> { Ok(theta(w, &q, y, 0)?.value()) };
            let shifted = |dx: &[(usize, f64)]| -> Vec<f64> {
                let mut y = x.clone();
                for &(a, d) in dx {
                    y[a] += d;
                }
                y
            };
            let h0 = 4e-5 * q.side();
            let mut worst = 0.0f64;
            for k in MultiIndex::all_upto(n, 2).into_iter().filter(|k| k.order() > 0) {
                let axes: Vec<usize> = k
                    .components()
                    .iter()
                    .enumerate()
                    .flat_map(|(a, &c)| std::iter::repeat_n(a, c as usize))
                    .collect();
                let fd = |h: f64| -> Result<f64> {
                    Ok(match axes.as_slice() {
                        [a] => (val(&shifted(&[(*a, h)]))? - val(&shifted(&[(*a, -h)]))?) / (2.0 * h),
                        [a, b] if a == b => {
                            (val(&shifted(&[(*a, h)]))? - 2.0 * val(&x)? + val(&shifted(&[(*a, -h)]))?) / (h * h)
                        }
                        [a, b] => {
                            (val(&shifted(&[(*a, h), (*b, h)]))? - val(&shifted(&[(*a, h), (*b, -h)]))?
                                - val(&shifted(&[(*a, -h), (*b, h)]))?
                                + val(&shifted(&[(*a, -h), (*b, -h)]))?)
                                / (4.0 * h * h)
                        }
                        _ => unreachable!(),
                    })
                };
                let approx = (4.0 * fd(h0 / 2.0)? - fd(h0)?) / 3.0;
                let e = exact.partial(&k)?;
                let scale = e.abs().max(q.side().powi(-(k.order() as i32)));
                worst = worst.max((e - approx).abs() / scale);
            }
            Ok(worst)
        })
        .collect();
    let mut max_rel_error = 0.0f64;
    for e in errs {
        max_rel_error = max_rel_error.max(e?);
    }
    Ok(FiniteDifferenceReport { samples, max_rel_error, tolerance, pass: max_rel_error <= tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SpaceParams;
    use approx::assert_relative_eq;

    fn single_site() -> Whitney {
        Whitney::build(SpaceParams::new(1, 1.5, 4.0).unwrap(), &[vec![0.0]], 10, 6).unwrap()
    }

    #[test]
    fn finite_differences_agree() {
        let r = finite_difference_check(&single_site(), 300, 1, 1e-5).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn phi_center_and_outside() {
        let q = DyadicCube::new(0, &[0]);
        let c = phi(&q, &[0.5], 3);
        assert_eq!(c.value(), 1.0);
        assert!(c.coeffs()[1..].iter().all(|v| *v == 0.0));
        let o = phi(&q, &[1.2], 3);
        assert!(o.coeffs().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn phi_mid_transition() {
        // the transition of Q = [0,1] runs over [1, 1.05]; u = 1/2 at x = 1.025
        let q = DyadicCube::new(0, &[0]);
        assert_relative_eq!(phi(&q, &[1.025], 0).value(), 0.5, epsilon = 1e-12);
        assert_eq!(phi(&q, &[1.05], 2).value(), 0.0);
        let h = 1e-5;
        let fd = (phi(&q, &[1.025 + h], 0).value() - phi(&q, &[1.025 - h], 0).value()) / (2.0 * h);
        assert_relative_eq!(phi(&q, &[1.025], 1).coeffs()[1], fd, max_relative = 1e-6);
    }

    #[test]
    fn theta_examples() {
        let w = single_site();
        let pa = partition_at(&w, &[10.5], 2).unwrap();
        assert_eq!(pa.cubes, vec![DyadicCube::new(0, &[10])]);
        assert_eq!(pa.thetas[0].value(), 1.0);
        let pa = partition_at(&w, &[11.0], 2).unwrap();
        assert_eq!(pa.cubes, vec![DyadicCube::new(0, &[10]), DyadicCube::new(0, &[11])]);
        for t in &pa.thetas {
            assert_relative_eq!(t.value(), 0.5, epsilon = 1e-15);
        }
        assert!(matches!(partition_at(&w, &[0.0], 1), Err(Error::OnClosedSet)));
    }
}
