//! One-dimensional natural exponential families given by a variance function.
//!
//! Each kind supplies its natural parameter `theta(mu)` and cumulant
//! `kappa(mu)` in closed form through the mean, so that
//! `psi(theta) = kappa(mu(theta))`, `psi' = mu`, `psi'' = V(mu)`.

use rand::RngCore;
use rand_distr::{Distribution, Gamma as GammaDist, InverseGaussian as IgDist, Poisson as PoissonDist};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::expfam::{ExpFamily, Matrix, SampleSpace, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NefKind {
    Poisson,
    /// Shape `r`; variance `mu^2 / r`.
    Gamma { r: f64 },
    /// `n` successes; variance `mu^2 / n + mu`.
    NegBinom { n: f64 },
    /// Variance `mu (1 + mu/s)^r`.
    Abm { s: f64, r: u32 },
    /// Variance `a mu^gamma`, `gamma >= 1`.
    Tweedie { a: f64, gamma: f64 },
    /// Variance `mu^3 / lambda`.
    InverseGaussian { lambda: f64 },
}

#[derive(Clone, Debug)]
pub struct Nef {
    kind: NefKind,
}

fn positive(label: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{label} must be positive and finite, got {x}")))
    }
}

impl Nef {
    pub fn new(kind: NefKind) -> Result<Self> {
        match kind {
            NefKind::Poisson => {}
            NefKind::Gamma { r } => positive("r", r)?,
            NefKind::NegBinom { n } => positive("n", n)?,
            NefKind::Abm { s, .. } => positive("s", s)?,
            NefKind::InverseGaussian { lambda } => positive("lambda", lambda)?,
            NefKind::Tweedie { a, gamma } => {
                positive("a", a)?;
                if !gamma.is_finite() {
                    return Err(Error::InvalidParameter("gamma must be finite".into()));
                }
                if gamma < 0.0 {
                    return Err(Error::Unsupported(
                        "power variance with negative exponent: the family is not regular".into(),
                    ));
                }
                if gamma > 0.0 && gamma < 1.0 {
                    return Err(Error::Unsupported(
                        "power variance with exponent in (0,1): no such families exist".into(),
                    ));
                }
                if gamma == 0.0 {
                    return Err(Error::Unsupported(
                        "exponent 0 is the Gaussian location family; use that model".into(),
                    ));
                }
            }
        }
        Ok(Nef { kind: Self::canonical_kind(kind) })
    }

    pub fn poisson() -> Self {
        Nef { kind: NefKind::Poisson }
    }

    pub fn exponential() -> Self {
        Nef { kind: NefKind::Tweedie { a: 1.0, gamma: 2.0 } }
    }

    fn canonical_kind(kind: NefKind) -> NefKind {
        match kind {
            NefKind::InverseGaussian { lambda } => NefKind::Tweedie { a: 1.0 / lambda, gamma: 3.0 },
            NefKind::Abm { r: 0, .. } => NefKind::Poisson,
            NefKind::Tweedie { a, gamma } if gamma == 1.0 && a == 1.0 => NefKind::Poisson,
            k => k,
        }
    }

    pub fn kind(&self) -> NefKind {
        self.kind
    }

    pub fn variance(&self, mu: f64) -> f64 {
        match self.kind {
            NefKind::Poisson => mu,
            NefKind::Gamma { r } => mu * mu / r,
            NefKind::NegBinom { n } => mu * mu / n + mu,
            NefKind::Abm { s, r } => mu * (1.0 + mu / s).powi(r as i32),
            NefKind::Tweedie { a, gamma } => a * mu.powf(gamma),
            NefKind::InverseGaussian { .. } => unreachable!("normalized to tweedie"),
        }
    }

    pub fn theta_bounds(&self) -> (f64, f64) {
        match self.kind {
            NefKind::Poisson => (f64::NEG_INFINITY, f64::INFINITY),
            NefKind::Gamma { .. } | NefKind::NegBinom { .. } => (f64::NEG_INFINITY, 0.0),
            NefKind::Abm { s, .. } => (f64::NEG_INFINITY, s.ln()),
            NefKind::Tweedie { gamma, .. } if gamma == 1.0 => (f64::NEG_INFINITY, f64::INFINITY),
            NefKind::Tweedie { .. } => (f64::NEG_INFINITY, 0.0),
            NefKind::InverseGaussian { .. } => unreachable!(),
        }
    }

    pub fn theta_of_mean(&self, mu: f64) -> f64 {
        match self.kind {
            NefKind::Poisson => mu.ln(),
            NefKind::Gamma { r } => -r / mu,
            NefKind::NegBinom { n } => (mu / (n + mu)).ln(),
            NefKind::Abm { s, r } => {
                let w = 1.0 + mu / s;
                let mut t = (mu / w).ln();
                for j in 1..r {
                    t += 1.0 / (j as f64 * w.powi(j as i32));
                }
                t
            }
            NefKind::Tweedie { a, gamma } => {
                if gamma == 1.0 {
                    mu.ln() / a
                } else {
                    mu.powf(1.0 - gamma) / (a * (1.0 - gamma))
                }
            }
            NefKind::InverseGaussian { .. } => unreachable!(),
        }
    }

    /// Cumulant `kappa` as a function of the mean.
    pub fn kappa_of_mean(&self, mu: f64) -> f64 {
        match self.kind {
            NefKind::Poisson => mu,
            NefKind::Gamma { r } => r * (mu / r).ln(),
            NefKind::NegBinom { n } => n * (1.0 + mu / n).ln(),
            NefKind::Abm { s, r } => {
                let w = 1.0 + mu / s;
                if r == 1 {
                    s * w.ln()
                } else {
                    s / (1.0 - r as f64) * (w.powf(1.0 - r as f64) - 1.0)
                }
            }
            NefKind::Tweedie { a, gamma } => {
                if gamma == 2.0 {
                    mu.ln() / a
                } else {
                    mu.powf(2.0 - gamma) / (a * (2.0 - gamma))
                }
            }
            NefKind::InverseGaussian { .. } => unreachable!(),
        }
    }

    /// Inverse of [`Nef::theta_of_mean`]; `None` outside the natural domain.
    pub fn mean_of_theta(&self, theta: f64) -> Option<f64> {
        let (lo, hi) = self.theta_bounds();
        if !(theta > lo && theta < hi) {
            return None;
        }
        let mu = match self.kind {
            NefKind::Poisson => theta.exp(),
            NefKind::Gamma { r } => -r / theta,
            NefKind::NegBinom { n } => {
                let e = theta.exp();
                n * e / (1.0 - e)
            }
            NefKind::Abm { s, r } => {
                if r == 1 {
                    // theta = ln(s mu / (s + mu))
                    let e = theta.exp();
                    s * e / (s - e)
                } else {
                    self.invert_monotone(theta)
                }
            }
            NefKind::Tweedie { a, gamma } => {
                if gamma == 1.0 {
                    (a * theta).exp()
                } else {
                    (a * (1.0 - gamma) * theta).powf(1.0 / (1.0 - gamma))
                }
            }
            NefKind::InverseGaussian { .. } => unreachable!(),
        };
        (mu > 0.0 && mu.is_finite()).then_some(mu)
    }

    /// Safeguarded Newton in `log mu` for `theta_of_mean(mu) = theta`.
    fn invert_monotone(&self, theta: f64) -> f64 {
        let (mut lo, mut hi) = (-745.0f64, 709.0f64);
        let mut l = 0.0f64;
        for _ in 0..200 {
            let mu = l.exp();
            let f = self.theta_of_mean(mu) - theta;
            if f == 0.0 {
                return mu;
            }
            if f > 0.0 {
                hi = l;
            } else {
                lo = l;
            }
            let slope = mu / self.variance(mu);
            let mut next = l - f / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - l).abs() <= 1e-15 * (1.0 + l.abs()) {
                return next.exp();
            }
            l = next;
        }
        l.exp()
    }

    /// `log h(x)`, where supported.
    pub fn log_base(&self, x: f64) -> Option<f64> {
        match self.kind {
            NefKind::Poisson => Some(-ln_gamma(x + 1.0)),
            NefKind::Gamma { r } => Some((r - 1.0) * x.ln() - ln_gamma(r)),
            NefKind::NegBinom { n } => Some(ln_gamma(x + n) - ln_gamma(n) - ln_gamma(x + 1.0)),
            NefKind::Abm { s, r: 1 } => Some(ln_gamma(x + s) - ln_gamma(s) - ln_gamma(x + 1.0) - x * s.ln()),
            NefKind::Abm { s, r: 2 } => {
                Some(s.ln() + (x - 1.0) * (s + x).ln() - ln_gamma(x + 1.0) - x * (s.ln() + 1.0))
            }
            NefKind::Abm { .. } => None,
            NefKind::Tweedie { a, gamma } if gamma == 2.0 => {
                let r = 1.0 / a;
                Some((r - 1.0) * x.ln() + r * r.ln() - ln_gamma(r))
            }
            NefKind::Tweedie { a, gamma } if gamma == 3.0 => {
                let lambda = 1.0 / a;
                Some(0.5 * (lambda / (2.0 * std::f64::consts::PI * x.powi(3))).ln() - lambda / (2.0 * x))
            }
            NefKind::Tweedie { .. } => None,
            NefKind::InverseGaussian { .. } => unreachable!(),
        }
    }

    fn is_discrete(&self) -> bool {
        match self.kind {
            NefKind::Poisson | NefKind::NegBinom { .. } | NefKind::Abm { .. } => true,
            NefKind::Tweedie { gamma, .. } => gamma == 1.0,
            _ => false,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            NefKind::Poisson => "poisson".into(),
            NefKind::Gamma { r } => format!("gamma(r={r})"),
            NefKind::NegBinom { n } => format!("negbinom(n={n})"),
            NefKind::Abm { s, r } => format!("abm(s={s}, r={r})"),
            NefKind::Tweedie { a, gamma } if gamma == 3.0 => format!("inverse-gaussian(lambda={})", 1.0 / a),
            NefKind::Tweedie { a, gamma } => format!("tweedie(a={a}, gamma={gamma})"),
            NefKind::InverseGaussian { lambda } => format!("inverse-gaussian(lambda={lambda})"),
        }
    }

    pub fn sample_mean(&self, mu: f64, rng: &mut dyn RngCore) -> Option<f64> {
        match self.kind {
            NefKind::Poisson => PoissonDist::new(mu).ok().map(|d| d.sample(rng)),
            NefKind::Gamma { r } => GammaDist::new(r, mu / r).ok().map(|d| d.sample(rng)),
            NefKind::NegBinom { n } | NefKind::Abm { s: n, r: 1 } => {
                let lam = GammaDist::new(n, mu / n).ok()?.sample(rng);
                if lam <= 0.0 {
                    return Some(0.0);
                }
                PoissonDist::new(lam).ok().map(|d| d.sample(rng))
            }
            NefKind::Tweedie { a, gamma } if gamma == 2.0 => GammaDist::new(1.0 / a, mu * a).ok().map(|d| d.sample(rng)),
            NefKind::Tweedie { a, gamma } if gamma == 3.0 => IgDist::new(mu, 1.0 / a).ok().map(|d| d.sample(rng)),
            _ => None,
        }
    }
}

impl ExpFamily for Nef {
    fn name(&self) -> String {
        self.label()
    }
    fn dim(&self) -> usize {
        1
    }
    fn sample_space(&self) -> SampleSpace {
        if self.is_discrete() {
            SampleSpace::Counts(1)
        } else {
            SampleSpace::PositiveReal(1)
        }
    }
    fn mean_domain(&self) -> Domain {
        Domain::positive(1)
    }
    fn natural_domain(&self) -> Domain {
        let (lo, hi) = self.theta_bounds();
        Domain::interval(lo, hi)
    }
    fn log_partition_natural(&self, theta: &Vector) -> f64 {
        match self.mean_of_theta(theta[0]) {
            Some(mu) => self.kappa_of_mean(mu),
            None => f64::INFINITY,
        }
    }
    fn mean_natural(&self, theta: &Vector) -> Option<Vector> {
        self.mean_of_theta(theta[0]).map(|m| Vector::from_vec(vec![m]))
    }
    fn covariance_natural(&self, theta: &Vector) -> Option<Matrix> {
        self.mean_of_theta(theta[0]).map(|m| Matrix::from_element(1, 1, self.variance(m)))
    }
    fn natural_from_mean(&self, mu: &Vector) -> Option<Vector> {
        Some(Vector::from_vec(vec![self.theta_of_mean(mu[0])]))
    }
    fn natural_reference(&self) -> Vector {
        Vector::from_vec(vec![self.theta_of_mean(1.0)])
    }
    fn suff_stat(&self, u: &[f64]) -> Result<Vector> {
        self.sample_space().check(u)?;
        Ok(Vector::from_vec(vec![u[0]]))
    }
    fn log_base_density(&self, u: &[f64]) -> Result<f64> {
        self.sample_space().check(u)?;
        self.log_base(u[0])
            .ok_or_else(|| Error::Unsupported(format!("{} has no density in this library", self.label())))
    }
    fn sample_natural(&self, theta: &Vector, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let mu = self.mean_of_theta(theta[0])?;
        self.sample_mean(mu, rng).map(|x| vec![x])
    }
}
