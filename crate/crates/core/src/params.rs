//! Regularity parameters `(n, s, p)` of the homogeneous Sobolev–Slobodeckij space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension `n`, regularity `s` (non-integer) and integrability `p >= 1`.
///
/// Construction only enforces the structural constraints. The embedding
/// hypothesis `n/p < {s}` is checked separately by [`SpaceParams::require_embedding`]
/// because some calibration integrals are meaningful without it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct SpaceParams {
    n: usize,
    s: f64,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    n: usize,
    s: f64,
    p: f64,
}

impl TryFrom<RawParams> for SpaceParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        SpaceParams::new(raw.n, raw.s, raw.p)
    }
}

impl From<SpaceParams> for RawParams {
    fn from(sp: SpaceParams) -> Self {
        RawParams { n: sp.n, s: sp.s, p: sp.p }
    }
}

impl SpaceParams {
    pub fn new(n: usize, s: f64, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParams(format!("s = {s} must be positive")));
        }
        if s.fract() == 0.0 {
            return Err(Error::InvalidParams(format!("s = {s} must not be an integer")));
        }
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidParams(format!("p = {p} must be >= 1")));
        }
        Ok(SpaceParams { n, s, p })
    }

    /// Like [`SpaceParams::new`] but also requires `n/p < {s}`.
    pub fn with_embedding(n: usize, s: f64, p: f64) -> Result<Self> {
        let sp = Self::new(n, s, p)?;
        sp.require_embedding()?;
        Ok(sp)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `⌊s⌋`, the jet order.
    pub fn floor_s(&self) -> usize {
        self.s.floor() as usize
    }

    /// `{s} = s - ⌊s⌋`.
    pub fn frac_s(&self) -> f64 {
        self.s - self.s.floor()
    }

    pub fn embedding_holds(&self) -> bool {
        (self.n as f64) / self.p < self.frac_s()
    }

    pub fn require_embedding(&self) -> Result<()> {
        if self.embedding_holds() {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "n/p = {} is not below {{s}} = {}",
                self.n as f64 / self.p,
                self.frac_s()
            )))
        }
    }

    /// Hölder exponent `{s} - n/p` of the top derivatives.
    pub fn holder_exponent(&self) -> f64 {
        self.frac_s() - self.n as f64 / self.p
    }

    /// `ε = ({s}p - n) / 2`, the slack exponent used by the chain inequality.
    pub fn chain_epsilon(&self) -> f64 {
        (self.frac_s() * self.p - self.n as f64) / 2.0
    }
}
