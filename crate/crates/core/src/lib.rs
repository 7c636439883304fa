//! Estimation of record-linkage parameters and error rates from the
//! distribution of per-record neighbour counts.
//!
//! The number of neighbours of a record is modelled as a finite mixture of
//! `Bernoulli(p) + Poisson(lambda)` components ([`mixture`]), fitted by EM on
//! a small simple random sample of records ([`em`], [`neighbourhood`]). The
//! fitted mixture yields m/u-probabilities, linkage weights, match
//! probabilities and error rates ([`linkage`]) without clerical review and
//! without assuming conditional independence of the linkage variables.
//! [`ci_baseline`] provides the classical conditional-independence EM for
//! comparison, [`inference`] the bootstrap and the parametric-bootstrap test
//! for the number of components, and [`simgen`] a two-register simulator
//! with an independent oracle for the true parameters.

pub mod ci_baseline;
pub mod counts;
pub mod em;
pub mod error;
pub mod inference;
pub mod linkage;
pub mod mixture;
pub mod neighbourhood;
pub mod rng;
pub mod simgen;
pub mod stats;

pub use counts::{CountEntry, NeighbourCountSample};
pub use em::{fit, FitConfig, FitResult, InitConfig};
pub use error::{Error, Result};
pub use linkage::LinkageReport;
pub use mixture::{canonicalize, ComponentParams, MixtureParams};
