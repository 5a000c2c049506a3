//! Ready-made null/alternative pairings, each with its tilted family and a
//! default grid.

use std::sync::Arc;

use serde::Serialize;

use super::gaussian::{gaussian_linear_carrier, gaussian_scale_carrier, GaussianLocation, GaussianScale};
use super::ksample::{ksample_carrier, KSample, KSampleKind};
use super::linmodel::{linmodel_mean, LinearModelDesign, LinearModelFamily, LinearModelParams};
use super::nef::{Nef, NefKind};
use crate::conditions::{self, Axis, CheckOptions, ConditionReport, GridSpec};
use crate::error::{Error, Result};
use crate::expfam::{ExpFamily, Matrix, Vector};
use crate::tilt::{build_tilted_family, carrier_from_member, local_evar_check, LocalCheck, TiltedFamily, PSD_TOL};

/// Keys accepted by the CLI `--model` flag.
pub fn catalog_keys() -> &'static [&'static str] {
    &[
        "ksample-bernoulli",
        "ksample-poisson",
        "ksample-gaussian",
        "gaussian-location",
        "gaussian-location-constrained",
        "gaussian-scale",
        "negbinom-vs-poisson",
        "abm-vs-poisson",
        "tweedie-pair",
        "ig-vs-exp",
        "linmodel",
    ]
}

/// A null family, the tilted family generated by an alternative, and the
/// grid on which conditions are checked by default.
#[derive(Clone)]
pub struct Pairing {
    pub key: String,
    pub description: String,
    pub null: Arc<dyn ExpFamily>,
    pub tilted: Arc<TiltedFamily>,
    pub grid: GridSpec,
    pub warnings: Vec<String>,
}

impl std::fmt::Debug for Pairing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pairing")
            .field("key", &self.key)
            .field("description", &self.description)
            .field("mu_star", &self.mu_star().as_slice())
            .finish()
    }
}

impl Pairing {
    fn assemble(
        key: &str,
        description: String,
        null: Arc<dyn ExpFamily>,
        carrier: crate::tilt::CarrierAlternative,
    ) -> Result<Self> {
        let tilted = Arc::new(build_tilted_family(null.clone(), carrier)?);
        let grid = GridSpec::default_for(&tilted.mean_domain(), tilted.mu_star());
        Ok(Pairing { key: key.into(), description, null, tilted, grid, warnings: Vec::new() })
    }

    pub fn mu_star(&self) -> &Vector {
        self.tilted.mu_star()
    }

    pub fn with_grid(mut self, grid: GridSpec) -> Self {
        self.grid = grid;
        self
    }

    pub fn check(&self, opts: &CheckOptions) -> Result<ConditionReport> {
        let mut opts = opts.clone();
        if opts.mu_star.is_none() {
            opts.mu_star = Some(self.mu_star().clone());
        }
        let mut report = conditions::check(&self.key, self.null.as_ref(), self.tilted.as_ref(), &self.grid, &opts)?;
        report.notes.extend(self.warnings.iter().cloned());
        Ok(report)
    }

    pub fn local_check(&self) -> Result<LocalCheck> {
        local_evar_check(self.null.as_ref(), self.tilted.as_ref(), self.mu_star(), PSD_TOL)
    }

    /// Simple e-value at the anchor `mu*`.
    pub fn evalue(&self, u: &[f64]) -> Result<f64> {
        conditions::simple_evalue(self.tilted.as_ref(), self.null.as_ref(), self.mu_star(), u)
    }

    pub fn log_evalue(&self, u: &[f64]) -> Result<f64> {
        conditions::log_simple_evalue(self.tilted.as_ref(), self.null.as_ref(), self.mu_star(), u)
    }
}

pub fn ksample_pairing(kind: KSampleKind, k: usize, alt_means: &[f64]) -> Result<Pairing> {
    let fam = KSample::new(kind, k)?;
    let carrier = ksample_carrier(&fam, alt_means)?;
    let key = match kind {
        KSampleKind::Bernoulli => "ksample-bernoulli",
        KSampleKind::Poisson => "ksample-poisson",
        KSampleKind::Gaussian { .. } => "ksample-gaussian",
    };
    let desc = format!("{k}-sample {kind:?} null against product alternative with means {alt_means:?}");
    Pairing::assemble(key, desc, Arc::new(fam), carrier)
}

/// Location family with covariance `sigma_p` against `N(m, sigma_q)`.
pub fn gaussian_location_pairing(sigma_p: Matrix, m: &[f64], sigma_q: Matrix) -> Result<Pairing> {
    let fam = GaussianLocation::new(sigma_p)?;
    let carrier = gaussian_linear_carrier(Vector::from_column_slice(m), sigma_q, fam.statistic_map().clone())?;
    let desc = format!("Gaussian location null (d={}) against a Gaussian with its own covariance", fam.dim());
    Pairing::assemble("gaussian-location", desc, Arc::new(fam), carrier)
}

/// Location family with the first `d0` mean coordinates fixed at zero,
/// against `N(alt_mean, sigma)`.
pub fn gaussian_location_constrained(sigma: Matrix, d0: usize, alt_mean: &[f64]) -> Result<Pairing> {
    if d0 == 0 {
        return Err(Error::InvalidParameter("the constrained pairing needs d0 >= 1".into()));
    }
    let fam = GaussianLocation::constrained(sigma.clone(), d0)?;
    let carrier = gaussian_linear_carrier(Vector::from_column_slice(alt_mean), sigma, fam.statistic_map().clone())?;
    let mut p = Pairing::assemble(
        "gaussian-location-constrained",
        format!("Gaussian location with {d0} coordinate(s) fixed at 0"),
        Arc::new(fam),
        carrier,
    )?;
    if alt_mean[..d0].iter().all(|x| *x == 0.0) {
        p.warnings.push("alternative lies in the null: e-value is identically 1".into());
    }
    Ok(p)
}

pub fn gaussian_scale_pairing(m: f64, s2: f64) -> Result<Pairing> {
    let carrier = gaussian_scale_carrier(m, s2)?;
    let mut p = Pairing::assemble(
        "gaussian-scale",
        format!("zero-mean Gaussian scale null against N({m}, {s2})"),
        Arc::new(GaussianScale),
        carrier,
    )?;
    if m == 0.0 {
        p.warnings.push("m = 0: the alternative is a null member (degenerate pairing)".into());
    }
    Ok(p)
}

/// One-dimensional NEF null against the member of another NEF with mean `mu`.
pub fn nef_pairing(null: NefKind, alt: NefKind, mu: f64) -> Result<Pairing> {
    let p = Nef::new(null)?;
    let q: Arc<dyn ExpFamily> = Arc::new(Nef::new(alt)?);
    let carrier = carrier_from_member(q.clone(), &Vector::from_vec(vec![mu]))?;
    let desc = format!("{} null against the {} member with mean {mu}", p.label(), q.name());
    Pairing::assemble("tweedie-pair", desc, Arc::new(p), carrier)
}

pub fn negbinom_vs_poisson_pairing(n: f64, mu: f64) -> Result<Pairing> {
    let mut p = nef_pairing(NefKind::Poisson, NefKind::NegBinom { n }, mu)?;
    p.key = "negbinom-vs-poisson".into();
    Ok(p)
}

pub fn abm_vs_poisson_pairing(s: f64, r: u32, mu: f64) -> Result<Pairing> {
    let mut p = nef_pairing(NefKind::Poisson, NefKind::Abm { s, r }, mu)?;
    p.key = "abm-vs-poisson".into();
    Ok(p)
}

/// Behaviour of the inverse-Gaussian against exponential simple e-variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IgRegime {
    /// `mu <= lambda/2`: every null expectation is finite.
    LocalAllFinite,
    /// `lambda/2 < mu <= lambda`: expectations diverge past a threshold.
    LocalNotGlobal,
    /// `mu > lambda`: the variance ordering already fails at the anchor.
    NotLocal,
}

impl IgRegime {
    pub fn classify(lambda: f64, mu: f64) -> Self {
        if mu <= 0.5 * lambda {
            IgRegime::LocalAllFinite
        } else if mu <= lambda {
            IgRegime::LocalNotGlobal
        } else {
            IgRegime::NotLocal
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            IgRegime::LocalAllFinite => "local-all-finite",
            IgRegime::LocalNotGlobal => "local-not-global",
            IgRegime::NotLocal => "not-local",
        }
    }

    /// Null mean past which the e-value's expectation is infinite, if any.
    pub fn divergence_threshold(lambda: f64, mu: f64) -> Option<f64> {
        let rate = 1.0 / mu - lambda / (2.0 * mu * mu);
        (rate > 0.0).then(|| 1.0 / rate)
    }
}

/// Exponential null against the inverse Gaussian with mean `mu` and shape `lambda`.
pub fn ig_vs_exp_pairing(lambda: f64, mu: f64) -> Result<(Pairing, IgRegime)> {
    let mut p = nef_pairing(NefKind::Tweedie { a: 1.0, gamma: 2.0 }, NefKind::InverseGaussian { lambda }, mu)?;
    p.key = "ig-vs-exp".into();
    let regime = IgRegime::classify(lambda, mu);
    p.warnings.push(format!("regime: {}", regime.label()));
    if let Some(t) = IgRegime::divergence_threshold(lambda, mu) {
        p.warnings.push(format!("null expectations diverge for mu' >= {t}"));
    }
    Ok((p, regime))
}

/// Linear model: null `gamma_0 = 0` against the model with `gamma_0 / sigma^2 = theta`
/// at `params`. The grid surrounds the statistic mean at `params`.
pub fn linmodel_pairing(design: Arc<LinearModelDesign>, params: &LinearModelParams) -> Result<Pairing> {
    let theta = params.theta();
    let alt: Arc<dyn ExpFamily> = Arc::new(LinearModelFamily::new(design.clone(), theta)?);
    let null: Arc<dyn ExpFamily> = Arc::new(LinearModelFamily::new(design.clone(), 0.0)?);
    let mu = linmodel_mean(&design, params)?;
    let carrier = carrier_from_member(alt, &mu)?;
    let mut p = Pairing::assemble(
        "linmodel",
        format!("linear model (n={}, d={}) testing coefficient 0, theta = {theta}", design.n(), design.d()),
        null,
        carrier,
    )?;
    let d = design.d();
    let count = if d + 1 <= 2 { 16 } else { conditions::DEFAULT_AXIS_POINTS.min(((4096f64).powf(1.0 / (d + 1) as f64)) as usize) };
    let mut axes = vec![Axis::log_spaced(mu[0] / 4.0, mu[0] * 4.0, count)?];
    for j in 1..=d {
        let w = 2.0 * (1.0 + mu[j].abs());
        axes.push(Axis::new(mu[j] - w, mu[j] + w, count)?);
    }
    p.grid = GridSpec::new(axes);
    if theta == 0.0 {
        p.warnings.push("theta = 0: the alternative is a null member".into());
    }
    Ok(p)
}
