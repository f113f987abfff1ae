//! Analytic test functions with exact partial derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multi_index::MultiIndex;
use crate::taylor::{Series, TaylorValue};

/// A function on `R^n` that can produce its truncated Taylor expansion.
pub trait Field: Send + Sync {
    fn dim(&self) -> usize;

    /// Expansion at `x` with all partials up to `order`.
    fn taylor(&self, x: &[f64], order: usize) -> Result<TaylorValue>;

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.taylor(x, 0)?.value())
    }

    fn partial(&self, x: &[f64], k: &MultiIndex) -> Result<f64> {
        self.taylor(x, k.order())?.partial(k)
    }

    /// Raw partials `∂^k f(x)` for every `|k| = m`, in graded lexicographic order.
    fn top_partials(&self, x: &[f64], m: usize) -> Result<Vec<f64>> {
        Ok(self.taylor(x, m)?.partials_of_order(m))
    }
}

/// One monomial `coeff · x^powers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: MultiIndex,
}

/// Library of test inputs with known regularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `Σ c_k x^k`
    Polynomial { n: usize, terms: Vec<Monomial> },
    /// `amplitude · exp(-|x - center|² / width²)`
    Gaussian { center: Vec<f64>, width: f64, amplitude: f64 },
    /// `amplitude · Π_i b((x_i - center_i) / radius)` with
    /// `b(t) = exp(1 - 1/(1 - t²))` on `|t| < 1`
    BumpProduct { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// `amplitude · |x - center|^beta`
    RadialPower { center: Vec<f64>, beta: f64, amplitude: f64 },
}

impl TestFunction {
    pub fn polynomial(n: usize, terms: &[(f64, &[u32])]) -> Self {
        TestFunction::Polynomial {
            n,
            terms: terms
                .iter()
                .map(|(c, k)| Monomial { coeff: *c, powers: MultiIndex::new(k) })
                .collect(),
        }
    }

    pub fn gaussian(center: Vec<f64>, width: f64) -> Self {
        TestFunction::Gaussian { center, width, amplitude: 1.0 }
    }

    /// Degree of a polynomial input, `None` for the other kinds.
    pub fn degree(&self) -> Option<usize> {
        match self {
            TestFunction::Polynomial { terms, .. } => {
                Some(terms.iter().filter(|t| t.coeff != 0.0).map(|t| t.powers.order()).max().unwrap_or(0))
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        match self {
            TestFunction::Polynomial { n, terms } => {
                if terms.iter().any(|t| t.powers.dim() != *n) {
                    return bad("monomial dimension does not match n");
                }
            }
            TestFunction::Gaussian { width, .. } if !(*width > 0.0) => return bad("gaussian width must be positive"),
            TestFunction::BumpProduct { radius, .. } if !(*radius > 0.0) => return bad("bump radius must be positive"),
            TestFunction::RadialPower { beta, .. } if !(*beta > 0.0) => return bad("radial exponent must be positive"),
            _ => {}
        }
        Ok(())
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

/// `b(t) = exp(1 - 1/(1 - t²))` expanded at `t0`; identically zero for `|t0| >= 1`.
fn bump_series(t0: f64, scale: f64, order: usize) -> Series {
    if t0.abs() >= 1.0 {
        return Series::zero(order);
    }
    let t = Series::linear(t0, 1.0, order);
    let one = Series::constant(1.0, order);
    let q = one.sub(&t.mul(&t));
    let arg = one.sub(&one.div(&q));
    arg.exp().chain_linear(scale)
}

/// `(x0 + h)^k` expanded in `h`.
fn power_series(x0: f64, k: u32, order: usize) -> Series {
    let c = (0..=order)
        .map(|j| {
            if j as u32 > k {
                0.0
            } else {
                crate::multi_index::binomial(k, j as u32) * x0.powi((k - j as u32) as i32)
            }
        })
        .collect();
    Series::from_coeffs(c)
}

impl Field for TestFunction {
    fn dim(&self) -> usize {
        match self {
            TestFunction::Polynomial { n, .. } => *n,
            TestFunction::Gaussian { center, .. }
            | TestFunction::BumpProduct { center, .. }
            | TestFunction::RadialPower { center, .. } => center.len(),
        }
    }

    fn taylor(&self, x: &[f64], order: usize) -> Result<TaylorValue> {
        check_dim(self.dim(), x)?;
        let n = self.dim();
        match self {
            TestFunction::Polynomial { terms, .. } => {
                let mut acc = TaylorValue::zero(n, order);
                for t in terms {
                    let factors: Vec<Series> = t
                        .powers
                        .components()
                        .iter()
                        .zip(x)
                        .map(|(&k, &xi)| power_series(xi, k, order))
                        .collect();
                    acc.add_assign(&TaylorValue::separable(&factors, order).scale(t.coeff));
                }
                Ok(acc)
            }
            TestFunction::Gaussian { center, width, amplitude } => {
                // exp(-|x-c|²/w²) = Π_i exp(-(x_i-c_i)²/w²)
                let factors: Vec<Series> = x
                    .iter()
                    .zip(center)
                    .map(|(&xi, &ci)| {
                        let u = Series::linear((xi - ci) / width, 1.0 / width, order);
                        u.mul(&u).scale(-1.0).exp()
                    })
                    .collect();
                Ok(TaylorValue::separable(&factors, order).scale(*amplitude))
            }
            TestFunction::BumpProduct { center, radius, amplitude } => {
                let factors: Vec<Series> = x
                    .iter()
                    .zip(center)
                    .map(|(&xi, &ci)| bump_series((xi - ci) / radius, 1.0 / radius, order))
                    .collect();
                Ok(TaylorValue::separable(&factors, order).scale(*amplitude))
            }
            TestFunction::RadialPower { center, beta, amplitude } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                if r2 == 0.0 {
                    if (order as f64) < *beta {
                        return Ok(TaylorValue::zero(n, order));
                    }
                    return Err(Error::Invalid(format!(
                        "|x - c|^{beta} has no partials of order {order} at its center"
                    )));
                }
                let mut sq = TaylorValue::zero(n, order);
                for i in 0..n {
                    let factors: Vec<Series> = (0..n)
                        .map(|j| {
                            if j == i {
                                Series::linear(x[i] - center[i], 1.0, order)
                            } else {
                                Series::constant(1.0, order)
                            }
                        })
                        .collect();
                    let d = TaylorValue::separable(&factors, order);
                    sq.add_assign(&d.mul(&d));
                }
                let f = Series::linear(r2, 1.0, order).powf(0.5 * beta);
                Ok(sq.compose(&f).scale(*amplitude))
            }
        }
    }
}
