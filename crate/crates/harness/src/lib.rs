//! Scenario files, on-disk formats, figures, end-to-end experiments and the
//! aggregate verification suite built on `whitney-core`.

pub mod experiments;
pub mod formats;
pub mod scenario;
pub mod suite;
pub mod svg;

pub use scenario::{Budgets, Instance, Scenario, SiteSpec};
pub use suite::{verify_all, verify_modules, Module, SuiteCheck, SuiteReport};
