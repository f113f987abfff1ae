//! Truncated Taylor arithmetic.
//!
//! [`Series`] holds normalized univariate coefficients `f^(j)(t0) / j!`;
//! [`TaylorValue`] holds multivariate coefficients `∂^k f(x0) / k!` for every
//! `|k| <= order`, stored in graded lexicographic order.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::multi_index::MultiIndex;

/// Univariate truncated power series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    c: Vec<f64>,
}

impl Series {
    pub fn zero(order: usize) -> Self {
        Series { c: vec![0.0; order + 1] }
    }

    pub fn constant(v: f64, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.c[0] = v;
        s
    }

    /// `t0 + slope * dt`
    pub fn linear(v: f64, slope: f64, order: usize) -> Self {
        let mut s = Self::constant(v, order);
        if order >= 1 {
            s.c[1] = slope;
        }
        s
    }

    pub fn from_coeffs(c: Vec<f64>) -> Self {
        assert!(!c.is_empty());
        Series { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `d^j f / dt^j` at the expansion point.
    pub fn derivative(&self, j: usize) -> f64 {
        self.c[j] * crate::multi_index::factorial(j as u32)
    }

    pub fn add(&self, o: &Series) -> Series {
        Series { c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &Series) -> Series {
        Series { c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, k: f64) -> Series {
        Series { c: self.c.iter().map(|a| a * k).collect() }
    }

    pub fn mul(&self, o: &Series) -> Series {
        let k = self.order();
        let mut c = vec![0.0; k + 1];
        for (i, a) in self.c.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for j in 0..=(k - i) {
                c[i + j] += a * o.c[j];
            }
        }
        Series { c }
    }

    pub fn div(&self, o: &Series) -> Series {
        let k = self.order();
        let b0 = o.c[0];
        let mut q = vec![0.0; k + 1];
        for m in 0..=k {
            let mut acc = self.c[m];
            for i in 1..=m {
                acc -= o.c[i] * q[m - i];
            }
            q[m] = acc / b0;
        }
        Series { c: q }
    }

    pub fn exp(&self) -> Series {
        let k = self.order();
        let mut e = vec![0.0; k + 1];
        e[0] = self.c[0].exp();
        for m in 1..=k {
            let mut acc = 0.0;
            for j in 1..=m {
                acc += j as f64 * self.c[j] * e[m - j];
            }
            e[m] = acc / m as f64;
        }
        Series { c: e }
    }

    /// `self^beta`, requires a positive constant term.
    pub fn powf(&self, beta: f64) -> Series {
        let k = self.order();
        let v0 = self.c[0];
        let mut w = vec![0.0; k + 1];
        w[0] = v0.powf(beta);
        for m in 1..=k {
            let mut acc = 0.0;
            for j in 1..=m {
                acc += ((beta + 1.0) * j as f64 - m as f64) * self.c[j] * w[m - j];
            }
            w[m] = acc / (m as f64 * v0);
        }
        Series { c: w }
    }

    /// Rescale the variable: if `self` expands `f(t0 + dt)`, the result
    /// expands `f(t0 + a dx)` in `dx`.
    pub fn chain_linear(&self, a: f64) -> Series {
        let mut f = 1.0;
        Series {
            c: self
                .c
                .iter()
                .map(|c| {
                    let v = c * f;
                    f *= a;
                    v
                })
                .collect(),
        }
    }
}

/// Precomputed multiplication structure for one `(n, order)` pair.
#[derive(Debug)]
pub struct Basis {
    n: usize,
    order: usize,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
    /// For each target position, every `(left, right)` pair of positions
    /// whose indices add up to it.
    products: Vec<Vec<(u16, u16)>>,
    factorials: Vec<f64>,
}

type BasisCache = RwLock<HashMap<(usize, usize), Arc<Basis>>>;

fn cache() -> &'static BasisCache {
    static CACHE: OnceLock<BasisCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

impl Basis {
    pub fn get(n: usize, order: usize) -> Arc<Basis> {
        if let Some(b) = cache().read().unwrap().get(&(n, order)) {
            return b.clone();
        }
        let b = Arc::new(Self::build(n, order));
        cache()
            .write()
            .unwrap()
            .entry((n, order))
            .or_insert(b)
            .clone()
    }

    fn build(n: usize, order: usize) -> Basis {
        let indices = MultiIndex::all_upto(n, order);
        let lookup: HashMap<_, _> = indices.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let mut products = vec![Vec::new(); indices.len()];
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                if a.order() + b.order() <= order {
                    let c = lookup[&a.add(b)];
                    products[c].push((i as u16, j as u16));
                }
            }
        }
        let factorials = indices.iter().map(|k| k.factorial()).collect();
        Basis { n, order, indices, lookup, products, factorials }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, k: &MultiIndex) -> Option<usize> {
        self.lookup.get(k).copied()
    }
}

/// Multivariate truncated Taylor expansion at a point.
#[derive(Debug, Clone)]
pub struct TaylorValue {
    basis: Arc<Basis>,
    c: Vec<f64>,
}

impl TaylorValue {
    pub fn zero(n: usize, order: usize) -> Self {
        let basis = Basis::get(n, order);
        let c = vec![0.0; basis.len()];
        TaylorValue { basis, c }
    }

    pub fn constant(v: f64, n: usize, order: usize) -> Self {
        let mut t = Self::zero(n, order);
        t.c[0] = v;
        t
    }

    /// Build from normalized coefficients `∂^k f / k!` in basis order.
    pub fn from_coeffs(n: usize, order: usize, c: Vec<f64>) -> Self {
        let basis = Basis::get(n, order);
        assert_eq!(c.len(), basis.len());
        TaylorValue { basis, c }
    }

    /// Build from a closure returning the raw partial derivative `∂^k f`.
    pub fn from_partials(n: usize, order: usize, mut f: impl FnMut(&MultiIndex) -> f64) -> Self {
        let basis = Basis::get(n, order);
        let c = basis
            .indices
            .iter()
            .zip(&basis.factorials)
            .map(|(k, fact)| f(k) / fact)
            .collect();
        TaylorValue { basis, c }
    }

    /// Product of univariate expansions in distinct variables,
    /// `f(x) = Π_i f_i(x_i)`.
    pub fn separable(factors: &[Series], order: usize) -> Self {
        let n = factors.len();
        let basis = Basis::get(n, order);
        let c = basis
            .indices
            .iter()
            .map(|k| {
                k.components()
                    .iter()
                    .zip(factors)
                    .map(|(&ki, f)| f.c.get(ki as usize).copied().unwrap_or(0.0))
                    .product()
            })
            .collect();
        TaylorValue { basis, c }
    }

    pub fn dim(&self) -> usize {
        self.basis.n
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Normalized coefficient `∂^k f / k!`.
    pub fn coeff(&self, k: &MultiIndex) -> Result<f64> {
        self.basis
            .position(k)
            .map(|i| self.c[i])
            .ok_or(Error::OrderExceeded { requested: k.order(), available: self.order() })
    }

    /// Raw partial derivative `∂^k f`.
    pub fn partial(&self, k: &MultiIndex) -> Result<f64> {
        Ok(self.coeff(k)? * k.factorial())
    }

    /// All raw partials of exact order `m`, in graded lexicographic order.
    pub fn partials_of_order(&self, m: usize) -> Vec<f64> {
        self.basis
            .indices
            .iter()
            .zip(&self.c)
            .zip(&self.basis.factorials)
            .filter(|((k, _), _)| k.order() == m)
            .map(|((_, c), f)| c * f)
            .collect()
    }

    pub fn add(&self, o: &TaylorValue) -> TaylorValue {
        debug_assert!(Arc::ptr_eq(&self.basis, &o.basis));
        TaylorValue {
            basis: self.basis.clone(),
            c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn add_assign(&mut self, o: &TaylorValue) {
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            *a += b;
        }
    }

    pub fn sub(&self, o: &TaylorValue) -> TaylorValue {
        TaylorValue {
            basis: self.basis.clone(),
            c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> TaylorValue {
        TaylorValue { basis: self.basis.clone(), c: self.c.iter().map(|a| a * k).collect() }
    }

    pub fn mul(&self, o: &TaylorValue) -> TaylorValue {
        let c = self
            .basis
            .products
            .iter()
            .map(|pairs| {
                pairs
                    .iter()
                    .map(|&(i, j)| self.c[i as usize] * o.c[j as usize])
                    .sum()
            })
            .collect();
        TaylorValue { basis: self.basis.clone(), c }
    }

    pub fn div(&self, o: &TaylorValue) -> Result<TaylorValue> {
        let b0 = o.c[0];
        if b0 == 0.0 {
            return Err(Error::NumericalInconsistency("division by a vanishing expansion".into()));
        }
        let mut q = vec![0.0; self.c.len()];
        for (target, pairs) in self.basis.products.iter().enumerate() {
            let mut acc = self.c[target];
            for &(i, j) in pairs {
                if i != 0 {
                    acc -= o.c[i as usize] * q[j as usize];
                }
            }
            q[target] = acc / b0;
        }
        Ok(TaylorValue { basis: self.basis.clone(), c: q })
    }

    /// `f ∘ self` where `f` is expanded about `self.value()`.
    pub fn compose(&self, f: &Series) -> TaylorValue {
        let mut h = self.clone();
        h.c[0] = 0.0;
        let k = self.order().min(f.order());
        let mut r = TaylorValue::constant(f.c[k], self.dim(), self.order());
        for j in (0..k).rev() {
            r = r.mul(&h);
            r.c[0] += f.c[j];
        }
        r
    }

    /// Evaluate the truncated polynomial at displacement `h` from the expansion point.
    pub fn eval_displacement(&self, h: &[f64]) -> f64 {
        self.basis
            .indices
            .iter()
            .zip(&self.c)
            .map(|(k, c)| c * k.monomial(h))
            .sum()
    }

    /// Restrict to a lower order.
    pub fn truncate(&self, order: usize) -> TaylorValue {
        if order >= self.order() {
            return self.clone();
        }
        let basis = Basis::get(self.dim(), order);
        let c = self.c[..basis.len()].to_vec();
        TaylorValue { basis, c }
    }
}
