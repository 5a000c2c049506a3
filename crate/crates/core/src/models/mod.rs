//! Catalog of null families and their alternatives.

pub mod gaussian;
pub mod ksample;
pub mod linmodel;
pub mod nef;
pub mod pairing;

use std::sync::Arc;

use crate::error::Result;
use crate::expfam::{ExpFamily, Matrix};

pub use gaussian::{gaussian_scale_carrier, gaussian_linear_carrier, GaussianLocation, GaussianScale};
pub use ksample::{ksample_carrier, KSample, KSampleKind};
pub use linmodel::{
    linmodel_mean, linmodel_project_null, linmodel_psd_check, linmodel_simple_evalue, LinModelPsd, LinearModelDesign,
    LinearModelFamily, LinearModelParams,
};
pub use nef::{Nef, NefKind};
pub use pairing::{
    abm_vs_poisson_pairing, catalog_keys, gaussian_location_constrained, gaussian_location_pairing,
    gaussian_scale_pairing, ig_vs_exp_pairing, ksample_pairing, linmodel_pairing, negbinom_vs_poisson_pairing,
    nef_pairing, IgRegime, Pairing,
};

#[derive(Clone, Debug)]
pub enum NefDescriptor {
    Poisson,
    Gamma { r: f64 },
    NegBinom { n: f64 },
    Abm { s: f64, r: u32 },
    Tweedie { a: f64, gamma: f64 },
    InverseGaussian { lambda: f64 },
    /// Location family with the first `constrained` mean coordinates fixed at 0.
    GaussianLocation { sigma: Matrix, constrained: usize },
    GaussianScale,
    BernoulliKSample { k: usize },
    PoissonKSample { k: usize },
    GaussianKSample { k: usize, sigma2: f64 },
}

pub fn make_family(desc: &NefDescriptor) -> Result<Arc<dyn ExpFamily>> {
    Ok(match desc {
        NefDescriptor::Poisson => Arc::new(Nef::new(NefKind::Poisson)?),
        NefDescriptor::Gamma { r } => Arc::new(Nef::new(NefKind::Gamma { r: *r })?),
        NefDescriptor::NegBinom { n } => Arc::new(Nef::new(NefKind::NegBinom { n: *n })?),
        NefDescriptor::Abm { s, r } => Arc::new(Nef::new(NefKind::Abm { s: *s, r: *r })?),
        NefDescriptor::Tweedie { a, gamma } => Arc::new(Nef::new(NefKind::Tweedie { a: *a, gamma: *gamma })?),
        NefDescriptor::InverseGaussian { lambda } => Arc::new(Nef::new(NefKind::InverseGaussian { lambda: *lambda })?),
        NefDescriptor::GaussianLocation { sigma, constrained } => {
            Arc::new(GaussianLocation::constrained(sigma.clone(), *constrained)?)
        }
        NefDescriptor::GaussianScale => Arc::new(GaussianScale),
        NefDescriptor::BernoulliKSample { k } => Arc::new(KSample::new(KSampleKind::Bernoulli, *k)?),
        NefDescriptor::PoissonKSample { k } => Arc::new(KSample::new(KSampleKind::Poisson, *k)?),
        NefDescriptor::GaussianKSample { k, sigma2 } => {
            Arc::new(KSample::new(KSampleKind::Gaussian { sigma2: *sigma2 }, *k)?)
        }
    })
}
