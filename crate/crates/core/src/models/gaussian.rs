//! Gaussian location (optionally with constrained coordinates) and
//! zero-mean Gaussian scale families, with their Gaussian carriers.

use std::f64::consts::PI;

use nalgebra::Cholesky;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::Domain;
use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::expfam::{ExpFamily, Matrix, SampleSpace, Vector};
use crate::tilt::CarrierAlternative;

fn cholesky(sigma: &Matrix, label: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if sigma.nrows() != sigma.ncols() || sigma.nrows() == 0 {
        return Err(Error::InvalidParameter(format!("{label} must be a non-empty square matrix")));
    }
    ensure_finite(label, sigma.as_slice())?;
    let sym = crate::expfam::symmetrize(sigma);
    if (&sym - sigma).amax() > 1e-10 * (1.0 + sigma.amax()) {
        return Err(Error::InvalidParameter(format!("{label} is not symmetric")));
    }
    Cholesky::new(sym).ok_or_else(|| Error::InvalidParameter(format!("{label} is singular or not positive definite")))
}

/// Log density of `N(mean, sigma)` given the Cholesky factor of `sigma`.
pub(crate) fn mvn_log_density(u: &[f64], mean: &Vector, chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let d = mean.len();
    let r = Vector::from_column_slice(u) - mean;
    let z = chol.l().solve_lower_triangular(&r).expect("triangular solve");
    let log_det: f64 = chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>() * 2.0;
    -0.5 * (z.norm_squared() + log_det + d as f64 * (2.0 * PI).ln())
}

pub(crate) fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + (2.0 * PI * var).ln())
}

/// Location family `N(mu, Sigma)` on the free coordinates `d0..d`, with the
/// first `d0` mean coordinates fixed at zero.
///
/// The statistic is `t(u) = K (Sigma^{-1} u)_F` with `K = ((Sigma^{-1})_FF)^{-1}`,
/// whose covariance under every member is `K`.
#[derive(Clone, Debug)]
pub struct GaussianLocation {
    sigma: Matrix,
    chol: Cholesky<f64, nalgebra::Dyn>,
    d0: usize,
    /// `K (Sigma^{-1})_{F,.}`: maps a full vector to the statistic.
    stat_map: Matrix,
    /// Covariance of the statistic.
    k: Matrix,
}

impl GaussianLocation {
    pub fn new(sigma: Matrix) -> Result<Self> {
        Self::constrained(sigma, 0)
    }

    pub fn constrained(sigma: Matrix, d0: usize) -> Result<Self> {
        let chol = cholesky(&sigma, "Sigma")?;
        let d = sigma.nrows();
        if d0 >= d {
            return Err(Error::InvalidParameter(format!("need 0 <= d0 < d, got d0 = {d0}, d = {d}")));
        }
        let prec = chol.inverse();
        let free = d - d0;
        let prec_ff = prec.view((d0, d0), (free, free)).into_owned();
        let k = prec_ff
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("free precision block is singular".into()))?;
        let k = crate::expfam::symmetrize(&k);
        let stat_map = &k * prec.rows(d0, free);
        Ok(GaussianLocation { sigma, chol, d0, stat_map, k })
    }

    pub fn full_dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn constrained_count(&self) -> usize {
        self.d0
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    /// Covariance of the statistic (the conditional covariance of the free block).
    pub fn statistic_covariance(&self) -> &Matrix {
        &self.k
    }

    pub fn statistic_map(&self) -> &Matrix {
        &self.stat_map
    }

    /// Full mean vector `(0, mu_F)`.
    pub fn embed(&self, mu_free: &Vector) -> Vector {
        let mut m = Vector::zeros(self.full_dim());
        m.rows_mut(self.d0, mu_free.len()).copy_from(mu_free);
        m
    }
}

impl ExpFamily for GaussianLocation {
    fn name(&self) -> String {
        if self.d0 == 0 {
            format!("gaussian-location(d={})", self.full_dim())
        } else {
            format!("gaussian-location(d={}, constrained={})", self.full_dim(), self.d0)
        }
    }
    fn dim(&self) -> usize {
        self.full_dim() - self.d0
    }
    fn sample_space(&self) -> SampleSpace {
        SampleSpace::Real(self.full_dim())
    }
    fn mean_domain(&self) -> Domain {
        Domain::whole(self.dim())
    }
    fn natural_domain(&self) -> Domain {
        Domain::whole(self.dim())
    }
    fn log_partition_natural(&self, theta: &Vector) -> f64 {
        0.5 * theta.dot(&(&self.k * theta))
    }
    fn mean_natural(&self, theta: &Vector) -> Option<Vector> {
        Some(&self.k * theta)
    }
    fn covariance_natural(&self, _theta: &Vector) -> Option<Matrix> {
        Some(self.k.clone())
    }
    fn natural_from_mean(&self, mu: &Vector) -> Option<Vector> {
        Cholesky::new(self.k.clone()).map(|c| c.solve(mu))
    }
    fn natural_reference(&self) -> Vector {
        Vector::zeros(self.dim())
    }
    fn suff_stat(&self, u: &[f64]) -> Result<Vector> {
        self.sample_space().check(u)?;
        Ok(&self.stat_map * Vector::from_column_slice(u))
    }
    fn log_base_density(&self, u: &[f64]) -> Result<f64> {
        self.sample_space().check(u)?;
        Ok(mvn_log_density(u, &Vector::zeros(self.full_dim()), &self.chol))
    }
    fn sample_natural(&self, theta: &Vector, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let mean = self.embed(&(&self.k * theta));
        Some(sample_mvn(&mean, &self.chol, rng))
    }
}

pub(crate) fn sample_mvn(mean: &Vector, chol: &Cholesky<f64, nalgebra::Dyn>, rng: &mut dyn RngCore) -> Vec<f64> {
    let z = Vector::from_iterator(mean.len(), (0..mean.len()).map(|_| StandardNormal.sample(rng)));
    (mean + chol.l() * z).iter().copied().collect()
}

/// Carrier `N(m, Sigma_q)` for a statistic `t(u) = A u`.
pub fn gaussian_linear_carrier(m: Vector, sigma_q: Matrix, a: Matrix) -> Result<CarrierAlternative> {
    ensure_dim(sigma_q.nrows(), m.len())?;
    ensure_dim(a.ncols(), m.len())?;
    ensure_finite("alternative mean", m.as_slice())?;
    let chol = cholesky(&sigma_q, "Sigma_q")?;
    let mean_t = &a * &m;
    let cov_t = crate::expfam::symmetrize(&(&a * &sigma_q * a.transpose()));
    let dens_chol = chol.clone();
    let dens_mean = m.clone();
    let (m1, c1) = (mean_t.clone(), cov_t.clone());
    let (m2, c2) = (mean_t.clone(), cov_t.clone());
    let c3 = cov_t.clone();
    let d = mean_t.len();
    let label = format!("N(m, Sigma_q) on R^{}", m.len());
    Ok(CarrierAlternative::new(label, mean_t, move |u: &[f64]| {
        if u.len() != dens_mean.len() {
            return f64::NEG_INFINITY;
        }
        mvn_log_density(u, &dens_mean, &dens_chol)
    })
    .with_mgf(
        move |b: &Vector| b.dot(&m1) + 0.5 * b.dot(&(&c1 * b)),
        move |b: &Vector| &m2 + &c2 * b,
        move |_b: &Vector| c3.clone(),
    )
    .with_sampler(move |rng: &mut dyn RngCore| sample_mvn(&m, &chol, rng))
    .with_domains(Domain::whole(d), Domain::whole(d)))
}

/// Zero-mean Gaussian scale family with statistic `u^2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct GaussianScale;

impl ExpFamily for GaussianScale {
    fn name(&self) -> String {
        "gaussian-scale".into()
    }
    fn dim(&self) -> usize {
        1
    }
    fn sample_space(&self) -> SampleSpace {
        SampleSpace::Real(1)
    }
    fn mean_domain(&self) -> Domain {
        Domain::positive(1)
    }
    fn natural_domain(&self) -> Domain {
        Domain::interval(f64::NEG_INFINITY, 0.0)
    }
    fn log_partition_natural(&self, theta: &Vector) -> f64 {
        if theta[0] < 0.0 {
            -0.5 * (-2.0 * theta[0]).ln()
        } else {
            f64::INFINITY
        }
    }
    fn mean_natural(&self, theta: &Vector) -> Option<Vector> {
        (theta[0] < 0.0).then(|| Vector::from_vec(vec![-0.5 / theta[0]]))
    }
    fn covariance_natural(&self, theta: &Vector) -> Option<Matrix> {
        (theta[0] < 0.0).then(|| Matrix::from_element(1, 1, 0.5 / (theta[0] * theta[0])))
    }
    fn natural_from_mean(&self, mu: &Vector) -> Option<Vector> {
        Some(Vector::from_vec(vec![-0.5 / mu[0]]))
    }
    fn natural_reference(&self) -> Vector {
        Vector::from_vec(vec![-0.5])
    }
    fn suff_stat(&self, u: &[f64]) -> Result<Vector> {
        self.sample_space().check(u)?;
        Ok(Vector::from_vec(vec![u[0] * u[0]]))
    }
    fn log_base_density(&self, u: &[f64]) -> Result<f64> {
        self.sample_space().check(u)?;
        Ok(-0.5 * (2.0 * PI).ln())
    }
    fn sample_natural(&self, theta: &Vector, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        if theta[0] >= 0.0 {
            return None;
        }
        let z: f64 = StandardNormal.sample(rng);
        Some(vec![z * (-0.5 / theta[0]).sqrt()])
    }
}

/// Mean and variance of the tilted member `N(cm/(c-beta), 1/(2(c-beta)))`,
/// `c = 1/(2 s^2)`.
pub fn gaussian_scale_tilted_member(m: f64, s2: f64, beta: f64) -> Option<(f64, f64)> {
    let c = 0.5 / s2;
    (beta < c).then(|| (c * m / (c - beta), 0.5 / (c - beta)))
}

/// Carrier `N(m, s^2)` for the statistic `u^2`, with closed-form log-mgf.
pub fn gaussian_scale_carrier(m: f64, s2: f64) -> Result<CarrierAlternative> {
    ensure_finite("m", &[m])?;
    if !(s2 > 0.0 && s2.is_finite()) {
        return Err(Error::InvalidParameter(format!("s2 must be positive, got {s2}")));
    }
    let c = 0.5 / s2;
    let log_mgf = move |b: &Vector| -> f64 {
        let b = b[0];
        if b >= c {
            return f64::INFINITY;
        }
        // E exp(b U^2) for U ~ N(m, s2)
        -0.5 * (1.0 - 2.0 * b * s2).ln() + b * m * m / (1.0 - 2.0 * b * s2)
    };
    let moments = move |b: f64| -> (f64, f64) {
        let (mt, vt) = gaussian_scale_tilted_member(m, s2, b).unwrap_or((f64::NAN, f64::NAN));
        (vt + mt * mt, 2.0 * vt * vt + 4.0 * vt * mt * mt)
    };
    Ok(CarrierAlternative::new(
        format!("N({m}, {s2})"),
        Vector::from_vec(vec![s2 + m * m]),
        move |u: &[f64]| if u.len() == 1 { normal_log_density(u[0], m, s2) } else { f64::NEG_INFINITY },
    )
    .with_mgf(
        log_mgf,
        move |b: &Vector| Vector::from_vec(vec![moments(b[0]).0]),
        move |b: &Vector| Matrix::from_element(1, 1, moments(b[0]).1),
    )
    .with_sampler(move |rng: &mut dyn RngCore| {
        let z: f64 = StandardNormal.sample(rng);
        vec![m + s2.sqrt() * z]
    })
    .with_domains(Domain::positive(1), Domain::interval(f64::NEG_INFINITY, c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::{covariance_at_mean, log_density_at_mean};

    #[test]
    fn constrained_statistic_has_conditional_covariance() {
        let s = Matrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let g = GaussianLocation::constrained(s, 1).unwrap();
        // conditional variance of coordinate 1 given coordinate 0
        let expected = 1.0 - 0.36 / 2.0;
        assert!((g.statistic_covariance()[(0, 0)] - expected).abs() < 1e-12);
        let mu = Vector::from_vec(vec![0.4]);
        assert!((covariance_at_mean(&g, &mu).unwrap()[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn constrained_density_is_the_full_gaussian() {
        let s = Matrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let g = GaussianLocation::constrained(s.clone(), 1).unwrap();
        let chol = Cholesky::new(s).unwrap();
        let mu = Vector::from_vec(vec![0.7]);
        let u = [0.3, -1.1];
        let direct = mvn_log_density(&u, &Vector::from_vec(vec![0.0, 0.7]), &chol);
        assert!((log_density_at_mean(&g, &mu, &u).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn singular_sigma_is_rejected() {
        let s = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(GaussianLocation::new(s).is_err());
    }

    #[test]
    fn scale_carrier_mgf_matches_member_moments() {
        let c = gaussian_scale_carrier(-3.0, 9.0).unwrap();
        let g = c.mgf_grad.as_ref().unwrap();
        assert!((g(&Vector::from_vec(vec![0.0]))[0] - 18.0).abs() < 1e-12);
        let (m, v) = gaussian_scale_tilted_member(-3.0, 9.0, 0.0).unwrap();
        assert_eq!((m, v), (-3.0, 9.0));
    }
}
