//! Whitney-type extension of jets from finite point sets.
//!
//! The pipeline is: sites ([`dyadic::SiteSet`]) → Whitney decomposition of
//! the complement ([`decomposition::Whitney`]) → smooth partition of unity
//! ([`partition`]) → extension operator ([`extension::ExtensionField`]).
//! Chains of cubes towards the sites live in [`paths`], and the fractional
//! seminorm estimators in [`seminorm`].

pub mod decomposition;
pub mod dyadic;
pub mod error;
pub mod extension;
pub mod functions;
pub mod jet;
pub mod multi_index;
pub mod params;
pub mod paths;
pub mod partition;
pub mod rng;
pub mod seminorm;
mod quad;
pub mod taylor;

pub use decomposition::Whitney;
pub use dyadic::{AxisBox, DyadicCube, SiteSet};
pub use extension::{ExtensionField, JetField};
pub use error::{Error, Result};
pub use functions::{Field, TestFunction};
pub use jet::Jet;
pub use multi_index::MultiIndex;
pub use params::SpaceParams;
pub use taylor::{Series, TaylorValue};
