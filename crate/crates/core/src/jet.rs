//! Taylor jets `J^m_x F` and the mean-value remainder witness.

use std::collections::HashMap;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::functions::Field;
use crate::multi_index::MultiIndex;
use crate::taylor::TaylorValue;

/// Derivative data `∂^k F(anchor)` for every `|k| <= order`, stored in
/// graded lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    anchor: Vec<f64>,
    order: usize,
    coeffs: Vec<f64>,
}

impl Jet {
    /// `coeffs` holds raw partials aligned with [`MultiIndex::all_upto`].
    pub fn new(anchor: Vec<f64>, order: usize, coeffs: Vec<f64>) -> Result<Self> {
        let expected = MultiIndex::all_upto(anchor.len(), order).len();
        if coeffs.len() != expected {
            return Err(Error::Invalid(format!(
                "jet of order {order} in {} variables needs {expected} coefficients, got {}",
                anchor.len(),
                coeffs.len()
            )));
        }
        Ok(Jet { anchor, order, coeffs })
    }

    pub fn from_map(anchor: Vec<f64>, order: usize, map: &HashMap<MultiIndex, f64>) -> Result<Self> {
        let coeffs = MultiIndex::all_upto(anchor.len(), order)
            .iter()
            .map(|k| map.get(k).copied().ok_or_else(|| Error::Invalid(format!("jet is missing coefficient {k}"))))
            .collect::<Result<Vec<_>>>()?;
        Jet::new(anchor, order, coeffs)
    }

    /// The jet of `f` at `x`.
    pub fn of_field(f: &dyn Field, x: &[f64], order: usize) -> Result<Self> {
        let t = f.taylor(x, order)?;
        let coeffs = MultiIndex::all_upto(x.len(), order)
            .iter()
            .map(|k| t.partial(k))
            .collect::<Result<Vec<_>>>()?;
        Jet::new(x.to_vec(), order, coeffs)
    }

    pub fn constant(anchor: Vec<f64>, order: usize, c: f64) -> Self {
        let len = MultiIndex::all_upto(anchor.len(), order).len();
        let mut coeffs = vec![0.0; len];
        coeffs[0] = c;
        Jet { anchor, order, coeffs }
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Raw partials in graded lexicographic order.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: &MultiIndex) -> Result<f64> {
        let pos = crate::taylor::Basis::get(self.dim(), self.order)
            .position(k)
            .ok_or(Error::OrderExceeded { requested: k.order(), available: self.order })?;
        Ok(self.coeffs[pos])
    }

    /// `J(t) = Σ ∂^k F(x)/k! (t - x)^k`
    pub fn eval(&self, t: &[f64]) -> f64 {
        let h: Vec<f64> = t.iter().zip(&self.anchor).map(|(a, b)| a - b).collect();
        MultiIndex::all_upto(self.dim(), self.order)
            .iter()
            .zip(&self.coeffs)
            .map(|(k, c)| c / k.factorial() * k.monomial(&h))
            .sum()
    }

    /// `∂^i J^m_x F = J^{m-|i|}_x ∂^i F`
    pub fn derivative(&self, i: &MultiIndex) -> Result<Jet> {
        if i.order() > self.order {
            return Err(Error::OrderExceeded { requested: i.order(), available: self.order });
        }
        let order = self.order - i.order();
        let coeffs = MultiIndex::all_upto(self.dim(), order)
            .iter()
            .map(|k| self.coeff(&k.add(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Jet { anchor: self.anchor.clone(), order, coeffs })
    }

    /// The polynomial re-expanded about `x`, truncated at `order` (partials of
    /// order above `self.order` vanish).
    pub fn taylor_at(&self, x: &[f64], order: usize) -> TaylorValue {
        let n = self.dim();
        let h: Vec<f64> = x.iter().zip(&self.anchor).map(|(a, b)| a - b).collect();
        let src = MultiIndex::all_upto(n, self.order);
        TaylorValue::from_partials(n, order, |j| {
            if j.order() > self.order {
                return 0.0;
            }
            // ∂^j P(x) = Σ_{k >= j} c_k / (k - j)! · h^{k-j}
            src.iter()
                .zip(&self.coeffs)
                .filter_map(|(k, c)| k.checked_sub(j).map(|d| c / d.factorial() * d.monomial(&h)))
                .sum()
        })
    }

    /// Linear combination `a·self + b·other`; anchors and orders must match.
    pub fn combine(&self, a: f64, other: &Jet, b: f64) -> Result<Jet> {
        if self.anchor != other.anchor || self.order != other.order {
            return Err(Error::Invalid("jets must share anchor and order".into()));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| a * x + b * y).collect();
        Ok(Jet { anchor: self.anchor.clone(), order: self.order, coeffs })
    }
}

impl Serialize for Jet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Coeffs<'a>(&'a Jet);
        impl Serialize for Coeffs<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let idx = MultiIndex::all_upto(self.0.dim(), self.0.order);
                let mut m = s.serialize_map(Some(idx.len()))?;
                for (k, c) in idx.iter().zip(&self.0.coeffs) {
                    m.serialize_entry(&k.key(), c)?;
                }
                m.end()
            }
        }
        let mut m = s.serialize_map(Some(3))?;
        m.serialize_entry("anchor", &self.anchor)?;
        m.serialize_entry("order", &self.order)?;
        m.serialize_entry("coeffs", &Coeffs(self))?;
        m.end()
    }
}

impl<'de> Deserialize<'de> for Jet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            anchor: Vec<f64>,
            order: usize,
            coeffs: HashMap<String, f64>,
        }
        let raw = Raw::deserialize(d)?;
        let mut map = HashMap::new();
        for (key, v) in raw.coeffs {
            let k: MultiIndex = key.parse().map_err(D::Error::custom)?;
            if k.dim() != raw.anchor.len() {
                return Err(D::Error::custom(format!("coefficient key {key:?} has wrong dimension")));
            }
            map.insert(k, v);
        }
        Jet::from_map(raw.anchor, raw.order, &map).map_err(D::Error::custom)
    }
}

/// Outcome of [`taylor_remainder_witness`].
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub t: f64,
    pub residual: f64,
    pub scale: f64,
}

/// Find `t ∈ (0,1)` with
/// `F(x) - J^m_{x0}F(x) = Σ_{|k|=m} (∂^kF(x0 + t(x-x0)) - ∂^kF(x0))/k! · (x-x0)^k`.
///
/// Scans a 10^4-point grid for a sign change of the residual and bisects.
pub fn taylor_remainder_witness(f: &dyn Field, x: &[f64], x0: &[f64], m: usize) -> Result<Witness> {
    if x.len() != x0.len() || x.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x.len() });
    }
    if x == x0 {
        return Err(Error::Invalid("remainder witness needs x != x0".into()));
    }
    let n = x.len();
    let h: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
    let top = MultiIndex::all_of_order(n, m);
    let weights: Vec<f64> = top.iter().map(|k| k.monomial(&h) / k.factorial()).collect();
    let base = f.top_partials(x0, m)?;
    let lhs = f.value(x)? - Jet::of_field(f, x0, m)?.eval(x);
    let residual = |t: f64| -> Result<f64> {
        let xt: Vec<f64> = x0.iter().zip(&h).map(|(a, d)| a + t * d).collect();
        let d = f.top_partials(&xt, m)?;
        let rhs: f64 = d.iter().zip(&base).zip(&weights).map(|((a, b), w)| (a - b) * w).sum();
        Ok(lhs - rhs)
    };
    let scale = f.value(x)?.abs().max(lhs.abs()).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;

    let mid = residual(0.5)?;
    if mid.abs() <= tol {
        return Ok(Witness { t: 0.5, residual: mid, scale });
    }
    const GRID: usize = 10_000;
    let mut prev_t = 0.0;
    let mut prev = residual(0.0)?;
    let (mut lo_r, mut hi_r) = (prev, prev);
    for i in 1..=GRID {
        let t = i as f64 / GRID as f64;
        let r = residual(t)?;
        lo_r = lo_r.min(r);
        hi_r = hi_r.max(r);
        if r == 0.0 && i < GRID {
            return Ok(Witness { t, residual: 0.0, scale });
        }
        if prev.signum() != r.signum() && prev != 0.0 && r != 0.0 {
            let (mut a, mut b, mut ra) = (prev_t, t, prev);
            for _ in 0..200 {
                let c = 0.5 * (a + b);
                if c <= a || c >= b {
                    break;
                }
                let rc = residual(c)?;
                if rc == 0.0 {
                    a = c;
                    b = c;
                    break;
                }
                if rc.signum() == ra.signum() {
                    a = c;
                    ra = rc;
                } else {
                    b = c;
                }
            }
            let t = 0.5 * (a + b);
            let t = t.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
            return Ok(Witness { t, residual: residual(t)?, scale });
        }
        prev_t = t;
        prev = r;
    }
    Err(Error::WitnessNotBracketed(format!(
        "residual stays in [{lo_r:.3e}, {hi_r:.3e}] on the scan grid (tolerance {tol:.3e})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::TestFunction;
    use approx::assert_relative_eq;

    #[test]
    fn eval_square() {
        let j = Jet::new(vec![1.0], 2, vec![1.0, 2.0, 2.0]).unwrap();
        assert_relative_eq!(j.eval(&[3.0]), 9.0);
        assert_eq!(j.eval(&[1.0]), 1.0);
        let c = Jet::constant(vec![0.0, 0.0], 1, 4.0);
        assert_eq!(c.eval(&[7.0, -3.0]), 4.0);
    }

    #[test]
    fn derivative_of_square() {
        let j = Jet::new(vec![0.0], 2, vec![0.0, 0.0, 2.0]).unwrap();
        let d = j.derivative(&MultiIndex::new(&[1])).unwrap();
        assert_eq!(d.order(), 1);
        assert_eq!(d.coeffs(), &[0.0, 2.0]);
        assert_eq!(j.derivative(&MultiIndex::new(&[0])).unwrap(), j);
        let top = j.derivative(&MultiIndex::new(&[2])).unwrap();
        assert_eq!(top.coeffs(), &[2.0]);
        assert!(matches!(j.derivative(&MultiIndex::new(&[3])), Err(Error::OrderExceeded { .. })));
    }

    #[test]
    fn json_shape() {
        let j = Jet::new(vec![0.5, 0.0], 1, vec![1.0, 2.0, 3.0]).unwrap();
        let s = serde_json::to_string(&j).unwrap();
        assert_eq!(s, r#"{"anchor":[0.5,0.0],"order":1,"coeffs":{"0,0":1.0,"1,0":2.0,"0,1":3.0}}"#);
        assert_eq!(serde_json::from_str::<Jet>(&s).unwrap(), j);
        assert!(serde_json::from_str::<Jet>(r#"{"anchor":[0.0],"order":1,"coeffs":{"0":1.0}}"#).is_err());
    }

    #[test]
    fn taylor_at_reexpands() {
        // x^2 at anchor 1 re-expanded at 3: value 9, slope 6, second 2
        let j = Jet::new(vec![1.0], 2, vec![1.0, 2.0, 2.0]).unwrap();
        let t = j.taylor_at(&[3.0], 3);
        assert_relative_eq!(t.partial(&MultiIndex::new(&[0])).unwrap(), 9.0);
        assert_relative_eq!(t.partial(&MultiIndex::new(&[1])).unwrap(), 6.0);
        assert_relative_eq!(t.partial(&MultiIndex::new(&[2])).unwrap(), 2.0);
        assert_eq!(t.partial(&MultiIndex::new(&[3])).unwrap(), 0.0);
    }

    #[test]
    fn witness_cubic() {
        let f = TestFunction::polynomial(1, &[(1.0, &[3])]);
        let w = taylor_remainder_witness(&f, &[1.0], &[0.0], 2).unwrap();
        assert_relative_eq!(w.t, 1.0 / 3.0, epsilon = 1e-12);
        assert!(w.residual.abs() <= 1e-10);
    }

    #[test]
    fn witness_polynomial_is_half() {
        let f = TestFunction::polynomial(2, &[(1.0, &[1, 1]), (2.0, &[0, 0])]);
        let w = taylor_remainder_witness(&f, &[1.0, 2.0], &[0.0, 0.5], 2).unwrap();
        assert_eq!(w.t, 0.5);
        assert!(taylor_remainder_witness(&f, &[1.0, 2.0], &[1.0, 2.0], 2).is_err());
    }
}
