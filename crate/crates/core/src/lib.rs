//! Simple e-variables for exponential-family nulls.
//!
//! A null family `P` and an alternative `Q` generate a tilted family from
//! `Q`'s density and `P`'s sufficient statistic. The likelihood ratio
//! `q(U)/p_{mu*}(U)` is an e-variable exactly when a set of equivalent
//! covariance, parameter, divergence and partition-function orderings hold.
//! [`conditions::check`] tests them on a grid, [`models`] provides worked
//! pairings, [`sequential`] turns e-values into anytime-valid tests and
//! [`verify`] holds the numerical oracles.

pub mod conditions;
pub mod domain;
pub mod error;
pub mod growth;
pub mod expfam;
pub mod models;
pub mod sequential;
pub mod tilt;
pub mod verify;

pub use conditions::{check, CheckOptions, ConditionReport, GridSpec, Overall};
pub use growth::{growth_rate, growth_rate_estimate};
pub use domain::Domain;
pub use error::{Error, Result};
pub use expfam::{ExpFamily, Matrix, ParamPoint, SampleSpace, Vector};
pub use tilt::{build_tilted_family, CarrierAlternative, TiltedFamily};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/families.md")]
    mod families {}
    #[doc = include_str!("../../../book/src/tilting.md")]
    mod tilting {}
    #[doc = include_str!("../../../book/src/conditions.md")]
    mod conditions {}
    #[doc = include_str!("../../../book/src/pairings.md")]
    mod pairings {}
    #[doc = include_str!("../../../book/src/sequential.md")]
    mod sequential {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
