//! k-sample nulls: `k` i.i.d. observations from a one-parameter family, with
//! statistic `sum_i y_i`, against product alternatives with per-group means.

use std::f64::consts::PI;

use rand::RngCore;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::domain::Domain;
use crate::error::{ensure_finite, Error, Result};
use crate::expfam::{ExpFamily, Matrix, SampleSpace, Vector};
use crate::tilt::CarrierAlternative;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KSampleKind {
    Bernoulli,
    Poisson,
    Gaussian { sigma2: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct KSample {
    kind: KSampleKind,
    k: usize,
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl KSample {
    pub fn new(kind: KSampleKind, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if let KSampleKind::Gaussian { sigma2 } = kind {
            if !(sigma2 > 0.0 && sigma2.is_finite()) {
                return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
            }
        }
        Ok(KSample { kind, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> KSampleKind {
        self.kind
    }

    /// Per-observation mean space.
    pub fn group_mean_domain(&self) -> Domain {
        match self.kind {
            KSampleKind::Bernoulli => Domain::interval(0.0, 1.0),
            KSampleKind::Poisson => Domain::positive(1),
            KSampleKind::Gaussian { .. } => Domain::whole(1),
        }
    }

    /// Log density of one observation with mean `m`.
    pub fn group_log_density(&self, y: f64, m: f64) -> f64 {
        match self.kind {
            KSampleKind::Bernoulli => {
                if y == 1.0 {
                    m.ln()
                } else {
                    (1.0 - m).ln()
                }
            }
            KSampleKind::Poisson => y * m.ln() - m - ln_gamma(y + 1.0),
            KSampleKind::Gaussian { sigma2 } => -0.5 * ((y - m).powi(2) / sigma2 + (2.0 * PI * sigma2).ln()),
        }
    }

    fn sample_group(&self, m: f64, rng: &mut dyn RngCore) -> f64 {
        match self.kind {
            KSampleKind::Bernoulli => f64::from(u8::from(Bernoulli::new(m).expect("mean in (0,1)").sample(rng))),
            KSampleKind::Poisson => Poisson::new(m).expect("positive mean").sample(rng),
            KSampleKind::Gaussian { sigma2 } => Normal::new(m, sigma2.sqrt()).expect("variance").sample(rng),
        }
    }

    fn mean_of(&self, theta: f64) -> f64 {
        let k = self.k as f64;
        match self.kind {
            KSampleKind::Bernoulli => k * sigmoid(theta),
            KSampleKind::Poisson => k * theta.exp(),
            KSampleKind::Gaussian { sigma2 } => k * sigma2 * theta,
        }
    }
}

impl ExpFamily for KSample {
    fn name(&self) -> String {
        let base = match self.kind {
            KSampleKind::Bernoulli => "bernoulli".to_string(),
            KSampleKind::Poisson => "poisson".to_string(),
            KSampleKind::Gaussian { sigma2 } => format!("gaussian(sigma2={sigma2})"),
        };
        format!("{}-sample {base}", self.k)
    }
    fn dim(&self) -> usize {
        1
    }
    fn sample_space(&self) -> SampleSpace {
        match self.kind {
            KSampleKind::Bernoulli => SampleSpace::Binary(self.k),
            KSampleKind::Poisson => SampleSpace::Counts(self.k),
            KSampleKind::Gaussian { .. } => SampleSpace::Real(self.k),
        }
    }
    fn mean_domain(&self) -> Domain {
        match self.kind {
            KSampleKind::Bernoulli => Domain::interval(0.0, self.k as f64),
            KSampleKind::Poisson => Domain::positive(1),
            KSampleKind::Gaussian { .. } => Domain::whole(1),
        }
    }
    fn natural_domain(&self) -> Domain {
        Domain::whole(1)
    }
    fn log_partition_natural(&self, theta: &Vector) -> f64 {
        let (t, k) = (theta[0], self.k as f64);
        match self.kind {
            KSampleKind::Bernoulli => k * softplus(t),
            KSampleKind::Poisson => k * t.exp(),
            KSampleKind::Gaussian { sigma2 } => 0.5 * k * sigma2 * t * t,
        }
    }
    fn mean_natural(&self, theta: &Vector) -> Option<Vector> {
        Some(Vector::from_vec(vec![self.mean_of(theta[0])]))
    }
    fn covariance_natural(&self, theta: &Vector) -> Option<Matrix> {
        let (t, k) = (theta[0], self.k as f64);
        let v = match self.kind {
            KSampleKind::Bernoulli => {
                let p = sigmoid(t);
                k * p * (1.0 - p)
            }
            KSampleKind::Poisson => k * t.exp(),
            KSampleKind::Gaussian { sigma2 } => k * sigma2,
        };
        Some(Matrix::from_element(1, 1, v))
    }
    fn natural_from_mean(&self, mu: &Vector) -> Option<Vector> {
        let m = mu[0] / self.k as f64;
        let t = match self.kind {
            KSampleKind::Bernoulli => (m / (1.0 - m)).ln(),
            KSampleKind::Poisson => m.ln(),
            KSampleKind::Gaussian { sigma2 } => m / sigma2,
        };
        Some(Vector::from_vec(vec![t]))
    }
    fn natural_reference(&self) -> Vector {
        Vector::zeros(1)
    }
    fn suff_stat(&self, u: &[f64]) -> Result<Vector> {
        self.sample_space().check(u)?;
        Ok(Vector::from_vec(vec![u.iter().sum()]))
    }
    fn log_base_density(&self, u: &[f64]) -> Result<f64> {
        self.sample_space().check(u)?;
        Ok(match self.kind {
            KSampleKind::Bernoulli => 0.0,
            KSampleKind::Poisson => -u.iter().map(|y| ln_gamma(y + 1.0)).sum::<f64>(),
            KSampleKind::Gaussian { sigma2 } => u
                .iter()
                .map(|y| -0.5 * (y * y / sigma2 + (2.0 * PI * sigma2).ln()))
                .sum(),
        })
    }
    fn sample_natural(&self, theta: &Vector, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let m = self.mean_of(theta[0]) / self.k as f64;
        Some((0..self.k).map(|_| self.sample_group(m, rng)).collect())
    }
}

/// Product alternative with group means `alt_means`, carrying the summed
/// statistic.
pub fn ksample_carrier(fam: &KSample, alt_means: &[f64]) -> Result<CarrierAlternative> {
    if alt_means.len() != fam.k() {
        return Err(Error::Dimension { expected: fam.k(), got: alt_means.len() });
    }
    ensure_finite("alternative means", alt_means)?;
    let group = fam.group_mean_domain();
    if let Some(bad) = alt_means.iter().position(|m| !group.contains(&[*m])) {
        return Err(Error::Domain {
            what: format!("group mean space {}", group.describe()),
            detail: format!("alternative mean {} at index {bad}", alt_means[bad]),
        });
    }
    let means = alt_means.to_vec();
    let mu_star: f64 = means.iter().sum();
    let k = means.len() as f64;
    let f = *fam;
    let dens_means = means.clone();
    let density = move |u: &[f64]| -> f64 {
        if f.sample_space().check(u).is_err() {
            return f64::NEG_INFINITY;
        }
        u.iter().zip(&dens_means).map(|(y, m)| f.group_log_density(*y, *m)).sum()
    };
    let samp_means = means.clone();
    let sampler = move |rng: &mut dyn RngCore| samp_means.iter().map(|m| f.sample_group(*m, rng)).collect::<Vec<f64>>();
    let carrier = CarrierAlternative::new(format!("{} product alternative", fam.name()), Vector::from_vec(vec![mu_star]), density)
        .with_sampler(sampler);
    let carrier = match fam.kind() {
        KSampleKind::Bernoulli => {
            let (m1, m2, m3) = (means.clone(), means.clone(), means);
            carrier
                .with_mgf(
                    move |b: &Vector| m1.iter().map(|m| logaddexp((1.0 - m).ln(), m.ln() + b[0])).sum(),
                    move |b: &Vector| {
                        Vector::from_vec(vec![m2.iter().map(|m| sigmoid(b[0] + (m / (1.0 - m)).ln())).sum()])
                    },
                    move |b: &Vector| {
                        let v = m3
                            .iter()
                            .map(|m| {
                                let r = sigmoid(b[0] + (m / (1.0 - m)).ln());
                                r * (1.0 - r)
                            })
                            .sum();
                        Matrix::from_element(1, 1, v)
                    },
                )
                .with_domains(Domain::interval(0.0, k), Domain::whole(1))
        }
        KSampleKind::Poisson => carrier
            .with_mgf(
                move |b: &Vector| mu_star * b[0].exp_m1(),
                move |b: &Vector| Vector::from_vec(vec![mu_star * b[0].exp()]),
                move |b: &Vector| Matrix::from_element(1, 1, mu_star * b[0].exp()),
            )
            .with_domains(Domain::positive(1), Domain::whole(1)),
        KSampleKind::Gaussian { sigma2 } => carrier
            .with_mgf(
                move |b: &Vector| mu_star * b[0] + 0.5 * k * sigma2 * b[0] * b[0],
                move |b: &Vector| Vector::from_vec(vec![mu_star + k * sigma2 * b[0]]),
                move |_b: &Vector| Matrix::from_element(1, 1, k * sigma2),
            )
            .with_domains(Domain::whole(1), Domain::whole(1)),
    };
    Ok(carrier)
}

/// Tilted per-group means `m_i e^b / (1 - m_i + m_i e^b)` of the Bernoulli
/// product alternative.
pub fn bernoulli_tilted_means(alt_means: &[f64], beta: f64) -> Vec<f64> {
    alt_means.iter().map(|m| sigmoid(beta + (m / (1.0 - m)).ln())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_mgf_is_stable_for_large_tilts() {
        let fam = KSample::new(KSampleKind::Bernoulli, 2).unwrap();
        let c = ksample_carrier(&fam, &[0.375, 0.625]).unwrap();
        let f = c.mgf_log.unwrap();
        let big = f(&Vector::from_vec(vec![800.0]));
        assert!((big - (800.0 * 2.0 + 0.375f64.ln() + 0.625f64.ln())).abs() < 1e-9);
        assert!(f(&Vector::from_vec(vec![-800.0])).is_finite());
    }

    #[test]
    fn tilted_means_have_sigmoid_limits() {
        let m = bernoulli_tilted_means(&[0.2, 0.9], -60.0);
        assert!(m.iter().all(|x| *x < 1e-20));
        let m = bernoulli_tilted_means(&[0.2, 0.9], 60.0);
        assert!(m.iter().all(|x| (1.0 - x) < 1e-20));
    }

    #[test]
    fn invalid_means_are_rejected() {
        let fam = KSample::new(KSampleKind::Poisson, 2).unwrap();
        assert!(matches!(ksample_carrier(&fam, &[1.0, -1.0]), Err(Error::Domain { .. })));
        assert!(matches!(ksample_carrier(&fam, &[1.0]), Err(Error::Dimension { .. })));
    }
}
