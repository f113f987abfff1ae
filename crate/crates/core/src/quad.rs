//! Cached Gauss rules mapped to `[0, 1]`.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::{FiniteAboveNegOneF64, GaussJacobi, GaussLegendre};

pub(crate) type Rule = Arc<Vec<(f64, f64)>>;

fn cache() -> &'static Mutex<HashMap<(usize, u64), Rule>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Rule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Legendre with `q` nodes on `[0, 1]`.
pub(crate) fn legendre(q: usize) -> Rule {
    jacobi(q, 0.0)
}

/// Nodes and weights for `∫_0^1 t^beta f(t) dt`, `beta > -1`.
pub(crate) fn jacobi(q: usize, beta: f64) -> Rule {
    let q = q.max(1);
    let key = (q, beta.to_bits());
    if let Some(r) = cache().lock().unwrap().get(&key) {
        return r.clone();
    }
    let deg = NonZeroUsize::new(q).unwrap();
    let pairs: Vec<(f64, f64)> = if beta == 0.0 {
        GaussLegendre::new(deg).as_node_weight_pairs().to_vec()
    } else {
        let a = FiniteAboveNegOneF64::new(0.0).unwrap();
        let b = FiniteAboveNegOneF64::new(beta).expect("jacobi exponent must exceed -1");
        GaussJacobi::new(deg, a, b).as_node_weight_pairs().to_vec()
    };
    // (1+x)^beta dx = 2^(beta+1) t^beta dt with t = (1+x)/2
    let scale = 0.5f64.powf(beta + 1.0);
    let mut mapped: Vec<(f64, f64)> = pairs.into_iter().map(|(x, w)| (0.5 * (1.0 + x), w * scale)).collect();
    mapped.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rule = Arc::new(mapped);
    cache().lock().unwrap().insert(key, rule.clone());
    rule
}

/// Composite Gauss–Legendre nodes on `[lo, hi]` with `cells` panels of `order` nodes.
pub(crate) fn composite(lo: f64, hi: f64, cells: usize, order: usize) -> Vec<(f64, f64)> {
    let rule = legendre(order);
    let h = (hi - lo) / cells as f64;
    let mut out = Vec::with_capacity(cells * order);
    for c in 0..cells {
        let a = lo + c as f64 * h;
        for &(t, w) in rule.iter() {
            out.push((a + t * h, w * h));
        }
    }
    out
}
