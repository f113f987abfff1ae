//! Scenario files (`"schema": 1`).
//!
//! A scenario fixes the space parameters, how the sites are generated, the
//! test function whose jets are extended, the computational domain
//! `[-2^L, 2^L]^n`, the enumeration depth and every estimator budget. All
//! randomness is derived from the seeds stored here.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use whitney_core::rng::stream;
use whitney_core::seminorm::{EstimatorConfig, Method};
use whitney_core::{Error, ExtensionField, JetField, Result, SpaceParams, TestFunction, Whitney};

pub const SCHEMA: u32 = 1;
/// Random and grid sites are snapped to multiples of `2^-20`.
pub const SITE_GRID_BITS: i32 = 20;

/// How the finite set `E` is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SiteSpec {
    Explicit {
        points: Vec<Vec<f64>>,
    },
    /// Uniform in `[-radius, radius]^n`, snapped to the dyadic grid.
    Random {
        count: usize,
        seed: u64,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Grid {
        lo: Vec<f64>,
        hi: Vec<f64>,
        counts: Vec<usize>,
    },
    /// Endpoints of the stage-`k` intervals of the middle-half Cantor
    /// construction on `[lo, hi]` (1-D only).
    Cantor {
        stage: u32,
        #[serde(default)]
        lo: f64,
        #[serde(default = "default_one")]
        hi: f64,
    },
}

fn default_radius() -> f64 {
    1.0
}

fn default_one() -> f64 {
    1.0
}

fn snap(v: f64) -> f64 {
    let s = (SITE_GRID_BITS as f64).exp2();
    (v * s).round() / s
}

impl SiteSpec {
    pub fn generate(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        let pts = match self {
            SiteSpec::Explicit { points } => points.clone(),
            SiteSpec::Random { count, seed, radius } => {
                let mut rng = stream(*seed, 0);
                (0..*count)
                    .map(|_| (0..n).map(|_| snap((2.0 * rng.gen::<f64>() - 1.0) * radius)).collect())
                    .collect()
            }
            SiteSpec::Grid { lo, hi, counts } => {
                if lo.len() != n || hi.len() != n || counts.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: lo.len() });
                }
                let total: usize = counts.iter().product();
                (0..total)
                    .map(|mut idx| {
                        let mut p = vec![0.0; n];
                        for i in (0..n).rev() {
                            let k = idx % counts[i];
                            idx /= counts[i];
                            let t = if counts[i] > 1 { k as f64 / (counts[i] - 1) as f64 } else { 0.0 };
                            p[i] = snap(lo[i] + t * (hi[i] - lo[i]));
                        }
                        p
                    })
                    .collect()
            }
            SiteSpec::Cantor { stage, lo, hi } => {
                if n != 1 {
                    return Err(Error::Invalid("cantor sites are one-dimensional".into()));
                }
                let mut ivs = vec![(*lo, *hi)];
                for _ in 0..*stage {
                    ivs = ivs
                        .into_iter()
                        .flat_map(|(a, b)| {
                            let q = (b - a) / 4.0;
                            [(a, a + q), (b - q, b)]
                        })
                        .collect();
                }
                let mut pts: Vec<Vec<f64>> = ivs.into_iter().flat_map(|(a, b)| [vec![a], vec![b]]).collect();
                pts.dedup();
                pts
            }
        };
        if pts.is_empty() {
            return Err(Error::EmptyReferenceSet);
        }
        if let Some(p) = pts.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: p.len() });
        }
        Ok(pts)
    }
}

/// Sample counts and node budgets of the checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub method: Method,
    /// Samples or nodes per seminorm estimate over `Ω`.
    pub seminorm: u64,
    pub singular_integrals: u64,
    /// Cubes used for the singular-integral ratios.
    pub singular_integral_cubes: usize,
    pub path_cubes: usize,
    pub paths_per_cube: usize,
    pub path_coverage_samples: usize,
    pub chain_configs: usize,
    /// Budget of each per-cube seminorm in the chain inequality.
    pub chain_budget: u64,
    pub pou_points: usize,
    pub fd_samples: usize,
    /// Cubes per level in the scale-normalized derivative sweep.
    pub derivative_cubes: usize,
    pub reproduction_points: usize,
    pub neighbor_sample: usize,
    pub overlap_samples: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            method: Method::ImportanceMc,
            seminorm: 200_000,
            singular_integrals: 20_000,
            singular_integral_cubes: 4,
            path_cubes: 20,
            paths_per_cube: 10,
            path_coverage_samples: 1000,
            chain_configs: 5,
            chain_budget: 2000,
            pou_points: 1000,
            fd_samples: 100,
            derivative_cubes: 400,
            reproduction_points: 1000,
            neighbor_sample: 20_000,
            overlap_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub params: SpaceParams,
    pub sites: SiteSpec,
    pub function: TestFunction,
    pub domain_exp: i32,
    pub max_level: i32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub output_dir: Option<String>,
}

/// Decomposition, jets and extension built from a scenario.
pub struct Instance {
    pub decomposition: Arc<Whitney>,
    pub jets: JetField,
    pub extension: ExtensionField,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Invalid(format!("unsupported scenario schema {} (expected {SCHEMA})", self.schema)));
        }
        self.function.validate()?;
        self.site_points()?;
        Ok(())
    }

    pub fn site_points(&self) -> Result<Vec<Vec<f64>>> {
        self.sites.generate(self.params.n())
    }

    pub fn decompose(&self) -> Result<Whitney> {
        Whitney::build(self.params, &self.site_points()?, self.domain_exp, self.max_level)
    }

    pub fn instance(&self) -> Result<Instance> {
        let w = Arc::new(self.decompose()?);
        let jets = JetField::sample(self.params, w.sites(), &self.function)?;
        let extension = ExtensionField::new(w.clone(), jets.clone())?;
        Ok(Instance { decomposition: w, jets, extension })
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig::new(self.budgets.method, self.budgets.seminorm, self.seed)
    }
}
