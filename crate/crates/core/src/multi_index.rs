//! Multi-indices `k ∈ N^n` with graded lexicographic enumeration.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(SmallVec<[u32; 4]>);

impl MultiIndex {
    pub fn new(components: &[u32]) -> Self {
        MultiIndex(SmallVec::from_slice(components))
    }

    pub fn zeros(n: usize) -> Self {
        MultiIndex(SmallVec::from_elem(0, n))
    }

    /// The unit index `e_axis`.
    pub fn unit(n: usize, axis: usize) -> Self {
        let mut k = Self::zeros(n);
        k.0[axis] = 1;
        k
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    /// `|k|`
    pub fn order(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    /// `k!`
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&c| factorial(c)).product()
    }

    /// Componentwise `j <= k`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a <= b)
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.le(self) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    /// `Π_i C(k_i, j_i)`
    pub fn binomial(&self, j: &MultiIndex) -> f64 {
        self.0
            .iter()
            .zip(j.0.iter())
            .map(|(&k, &j)| binomial(k, j))
            .product()
    }

    /// The monomial `h^k = Π h_i^{k_i}`.
    pub fn monomial(&self, h: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(h.iter())
            .map(|(&k, &x)| x.powi(k as i32))
            .product()
    }

    /// All indices with `|k| <= order`, graded, and lexicographically
    /// descending within a grade: `0, (1,0), (0,1), (2,0), (1,1), (0,2), ...`.
    pub fn all_upto(n: usize, order: usize) -> Vec<MultiIndex> {
        (0..=order).flat_map(|d| Self::all_of_order(n, d)).collect()
    }

    /// All indices with `|k| == order`, lexicographically descending.
    pub fn all_of_order(n: usize, order: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = SmallVec::<[u32; 4]>::from_elem(0, n);
        fill(&mut out, &mut cur, 0, order as u32);
        out
    }

    /// Comma-joined key used by the jet JSON format, e.g. `"1,0"`.
    pub fn key(&self) -> String {
        self.0
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn fill(out: &mut Vec<MultiIndex>, cur: &mut SmallVec<[u32; 4]>, axis: usize, remaining: u32) {
    let n = cur.len();
    if n == 0 {
        if remaining == 0 {
            out.push(MultiIndex(cur.clone()));
        }
        return;
    }
    if axis == n - 1 {
        cur[axis] = remaining;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for c in (0..=remaining).rev() {
        cur[axis] = c;
        fill(out, cur, axis + 1, remaining - c);
    }
    cur[axis] = 0;
}

impl Ord for MultiIndex {
    /// Graded lexicographic: lower total order first, then larger leading
    /// components first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.key())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for MultiIndex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: std::result::Result<SmallVec<[u32; 4]>, _> =
            s.split(',').map(|p| p.trim().parse::<u32>()).collect();
        parts
            .map(MultiIndex)
            .map_err(|_| Error::Invalid(format!("bad multi-index key {s:?}")))
    }
}

pub fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order() {
        let keys: Vec<String> = MultiIndex::all_upto(2, 2).iter().map(|k| k.key()).collect();
        assert_eq!(keys, ["0,0", "1,0", "0,1", "2,0", "1,1", "0,2"]);
        let mut sorted = MultiIndex::all_upto(3, 3);
        let original = sorted.clone();
        sorted.sort();
        assert_eq!(sorted, original);
    }

    #[test]
    fn counts_match_binomials() {
        // #{|k| <= m} in n variables = C(n + m, m)
        for n in 1..=4 {
            for m in 0..=4 {
                assert_eq!(
                    MultiIndex::all_upto(n, m).len() as f64,
                    binomial((n + m) as u32, m as u32)
                );
            }
        }
    }

    #[test]
    fn order_and_factorial() {
        let k = MultiIndex::new(&[2, 0, 3]);
        assert_eq!(k.order(), 5);
        assert_eq!(k.factorial(), 12.0);
        assert_eq!(k.monomial(&[2.0, 7.0, -1.0]), -4.0);
    }

    #[test]
    fn key_round_trip() {
        let k = MultiIndex::new(&[1, 0, 4]);
        assert_eq!(k.key().parse::<MultiIndex>().unwrap(), k);
        assert_eq!(serde_json::to_string(&k).unwrap(), "[1,0,4]");
        assert!("1,x".parse::<MultiIndex>().is_err());
    }

    #[test]
    fn subtraction() {
        let k = MultiIndex::new(&[2, 1]);
        assert_eq!(k.checked_sub(&MultiIndex::new(&[1, 1])), Some(MultiIndex::new(&[1, 0])));
        assert_eq!(k.checked_sub(&MultiIndex::new(&[0, 2])), None);
        assert_eq!(k.binomial(&MultiIndex::new(&[1, 1])), 2.0);
    }
}
