//! The extension operator `Tf = Σ_P θ_P · J_{x_P}` on the domain, with the
//! jet data returned verbatim on the sites.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::Whitney;
use crate::dyadic::SiteSet;
use crate::error::{Error, Result};
use crate::functions::Field;
use crate::jet::Jet;
use crate::multi_index::MultiIndex;
use crate::params::SpaceParams;
use crate::partition::partition_at;
use crate::taylor::TaylorValue;

/// One jet of order `⌊s⌋` per site, stored in site order.
#[derive(Debug, Clone, PartialEq)]
pub struct JetField {
    params: SpaceParams,
    jets: Vec<Jet>,
}

#[derive(Serialize, Deserialize)]
struct JetFile {
    params: SpaceParams,
    jets: Vec<Jet>,
}

impl JetField {
    /// Jets of `f` at every site.
    pub fn sample(params: SpaceParams, sites: &SiteSet, f: &dyn Field) -> Result<Self> {
        let jets = sites
            .points()
            .iter()
            .map(|x| Jet::of_field(f, x, params.floor_s()))
            .collect::<Result<Vec<_>>>()?;
        Ok(JetField { params, jets })
    }

    /// Match user jets to the sites by anchor.
    pub fn from_jets(params: SpaceParams, sites: &SiteSet, jets: Vec<Jet>) -> Result<Self> {
        let mut slots: Vec<Option<Jet>> = vec![None; sites.len()];
        for j in jets {
            if j.order() != params.floor_s() {
                return Err(Error::Invalid(format!(
                    "jet at {:?} has order {}, expected {}",
                    j.anchor(),
                    j.order(),
                    params.floor_s()
                )));
            }
            let i = sites
                .index_of(j.anchor())
                .ok_or_else(|| Error::Invalid(format!("jet anchor {:?} is not a site", j.anchor())))?;
            if slots[i].is_some() {
                return Err(Error::Invalid(format!("duplicate jet for site {:?}", j.anchor())));
            }
            slots[i] = Some(j);
        }
        let jets = slots
            .into_iter()
            .enumerate()
            .map(|(i, j)| j.ok_or_else(|| Error::MissingJet(sites.point(i).to_vec())))
            .collect::<Result<Vec<_>>>()?;
        Ok(JetField { params, jets })
    }

    pub fn params(&self) -> &SpaceParams {
        &self.params
    }

    pub fn jets(&self) -> &[Jet] {
        &self.jets
    }

    pub fn jet(&self, site: usize) -> &Jet {
        &self.jets[site]
    }

    /// `a·self + b·other`
    pub fn combine(&self, a: f64, other: &JetField, b: f64) -> Result<JetField> {
        let jets = self
            .jets
            .iter()
            .zip(&other.jets)
            .map(|(x, y)| x.combine(a, y, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(JetField { params: self.params, jets })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&JetFile { params: self.params, jets: self.jets.clone() })?)
    }

    pub fn from_json(s: &str, sites: &SiteSet) -> Result<Self> {
        let f: JetFile = serde_json::from_str(s)?;
        Self::from_jets(f.params, sites, f.jets)
    }
}

/// `Tf` for a decomposition and a jet field.
#[derive(Debug, Clone)]
pub struct ExtensionField {
    decomposition: Arc<Whitney>,
    jets: JetField,
}

impl ExtensionField {
    pub fn new(decomposition: Arc<Whitney>, jets: JetField) -> Result<Self> {
        if jets.jets.len() != decomposition.sites().len() {
            return Err(Error::Invalid("jet field does not match the decomposition's sites".into()));
        }
        Ok(ExtensionField { decomposition, jets })
    }

    pub fn decomposition(&self) -> &Whitney {
        &self.decomposition
    }

    pub fn decomposition_arc(&self) -> &Arc<Whitney> {
        &self.decomposition
    }

    pub fn jets(&self) -> &JetField {
        &self.jets
    }

    /// `∂^i Tf(x)` for `|i| <= ⌊s⌋`.
    pub fn eval(&self, x: &[f64], i: &MultiIndex) -> Result<f64> {
        let m = self.jets.params.floor_s();
        if i.order() > m {
            return Err(Error::OrderExceeded { requested: i.order(), available: m });
        }
        self.expansion(x, i.order())?.partial(i)
    }

    /// Expansion of `Tf` at `x` up to `order` (any order off the sites; at
    /// most `⌊s⌋` on them).
    pub fn expansion(&self, x: &[f64], order: usize) -> Result<TaylorValue> {
        let w = &self.decomposition;
        let n = w.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        let r = w.domain_radius();
        if x.iter().any(|v| !(v.abs() <= r)) {
            return Err(Error::OutsideDomain);
        }
        if let Some(site) = w.sites().index_of(x) {
            let jet = &self.jets.jets[site];
            if order > jet.order() {
                return Err(Error::OrderExceeded { requested: order, available: jet.order() });
            }
            return Ok(jet.taylor_at(x, order));
        }
        let pa = partition_at(w, x, order)?;
        // Tf = J_0 + Σ θ_Q (J_Q − J_0): equal jets cancel exactly instead of
        // through Σθ = 1 in floating point
        let sites: Vec<usize> = pa.cubes.iter().map(|q| w.anchor_index(q) as usize).collect();
        let base = self.jets.jets[sites[0]].taylor_at(x, order);
        let mut acc = base.clone();
        for (&site, theta) in sites.iter().zip(&pa.thetas) {
            if site != sites[0] {
                let local = self.jets.jets[site].taylor_at(x, order).sub(&base);
                acc.add_assign(&theta.mul(&local));
            }
        }
        Ok(acc)
    }

    /// Cubes contributing at `x`.
    pub fn support_at(&self, x: &[f64]) -> Result<Vec<crate::dyadic::DyadicCube>> {
        crate::partition::covering_cubes(&self.decomposition, x)
    }
}

impl Field for ExtensionField {
    fn dim(&self) -> usize {
        self.decomposition.dim()
    }

    fn taylor(&self, x: &[f64], order: usize) -> Result<TaylorValue> {
        self.expansion(x, order)
    }
}

/// Result of [`jet_agreement_check`].
#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub site: Vec<f64>,
    pub index: MultiIndex,
    pub radii: Vec<f64>,
    /// `max_u |∂^i Tf(x0 + r u) - ∂^i J_{x0}(x0 + r u)|`
    pub errors_vs_jet: Vec<f64>,
    /// Same against the reference field, when one is given.
    pub errors_vs_reference: Option<Vec<f64>>,
    /// Least-squares slope of `log e(r)` against `log r` (∞ when all errors vanish).
    pub fitted_order: f64,
    pub required_order: f64,
    pub pass: bool,
}

/// Probe directions: `±e_i` and the two main diagonals.
pub fn probe_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        for sgn in [1.0, -1.0] {
            let mut u = vec![0.0; n];
            u[i] = sgn;
            out.push(u);
        }
    }
    if n > 1 {
        let d = 1.0 / (n as f64).sqrt();
        out.push(vec![d; n]);
        out.push((0..n).map(|i| if i % 2 == 0 { d } else { -d }).collect());
    }
    out
}

/// Slope of the least-squares line through `(log r, log e)`; pairs with
/// `e == 0` are skipped, and an all-zero profile yields `+∞`.
pub fn fit_order(radii: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(r, e)| (r.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Convergence of `∂^i Tf` to the jet data as `x → x0`.
///
/// Passes when the fitted order of the error profile (against `reference`
/// if given, else against the jet) is at least `required_order`; an
/// identically vanishing profile passes.
pub fn jet_agreement_check(
    tf: &ExtensionField,
    site: usize,
    i: &MultiIndex,
    radii: &[f64],
    reference: Option<&dyn Field>,
    required_order: f64,
) -> Result<AgreementReport> {
    let x0 = tf.decomposition.sites().point(site).to_vec();
    let jet = tf.jets.jet(site).derivative(i)?;
    let dirs = probe_directions(x0.len());
    let rows: Vec<(f64, Option<f64>)> = radii
        .par_iter()
        .map(|&r| -> Result<(f64, Option<f64>)> {
            let mut e_jet = 0.0f64;
            let mut e_ref = reference.map(|_| 0.0f64);
            for u in &dirs {
                let x: Vec<f64> = x0.iter().zip(u).map(|(a, b)| a + r * b).collect();
                let v = tf.eval(&x, i)?;
                e_jet = e_jet.max((v - jet.eval(&x)).abs());
                if let (Some(f), Some(e)) = (reference, e_ref.as_mut()) {
                    *e = e.max((v - f.partial(&x, i)?).abs());
                }
            }
            Ok((e_jet, e_ref))
        })
        .collect::<Result<Vec<_>>>()?;
    let errors_vs_jet: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let errors_vs_reference: Option<Vec<f64>> = reference.map(|_| rows.iter().map(|r| r.1.unwrap()).collect());
    let judged = errors_vs_reference.as_ref().unwrap_or(&errors_vs_jet);
    let fitted_order = fit_order(radii, judged);
    Ok(AgreementReport {
        site: x0,
        index: i.clone(),
        radii: radii.to_vec(),
        errors_vs_jet,
        errors_vs_reference,
        fitted_order,
        required_order,
        pass: fitted_order >= required_order,
    })
}

/// Rectangular lattice for [`sample_field`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Nodes per axis (at least 1; a single node sits at `lo`).
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node `idx` in row-major order (last axis fastest).
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let n = self.counts.len();
        let mut rem = idx;
        let mut x = vec![0.0; n];
        for a in (0..n).rev() {
            let k = rem % self.counts[a];
            rem /= self.counts[a];
            x[a] = if self.counts[a] == 1 {
                self.lo[a]
            } else {
                self.lo[a] + (self.hi[a] - self.lo[a]) * k as f64 / (self.counts[a] - 1) as f64
            };
        }
        x
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampledField {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// `(row, message)` for every node whose evaluation failed (value NaN).
    pub errors: Vec<(usize, String)>,
}

impl SampledField {
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, Vec::len);
        let mut out = String::new();
        let header: Vec<String> = (0..n).map(|i| format!("x{i}")).chain(["value".to_string()]).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (x, v) in self.points.iter().zip(&self.values) {
            let row: Vec<String> = x.iter().map(|c| format!("{c:e}")).chain([format!("{v:e}")]).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Evaluate `∂^i Tf` at every node of the grid, row-major.
pub fn sample_field(tf: &ExtensionField, grid: &GridSpec, i: &MultiIndex) -> SampledField {
    sample_points(tf, (0..grid.len()).map(|k| grid.node(k)).collect(), i)
}

/// Evaluate `∂^i Tf` at explicit points; failures are recorded, not raised.
pub fn sample_points(tf: &ExtensionField, points: Vec<Vec<f64>>, i: &MultiIndex) -> SampledField {
    let results: Vec<Result<f64>> = points.par_iter().map(|x| tf.eval(x, i)).collect();
    let mut values = Vec::with_capacity(points.len());
    let mut errors = Vec::new();
    for (row, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(e) => {
                values.push(f64::NAN);
                errors.push((row, e.to_string()));
            }
        }
    }
    SampledField { points, values, errors }
}
