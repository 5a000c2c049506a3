//! Gaussian linear model with fixed design, testing whether the coefficient
//! of covariate 0 vanishes.
//!
//! For a fixed value `theta = gamma_0 / sigma^2` the model is an exponential
//! family in natural coordinates `(lambda, beta) = (-1/(2 sigma^2), gamma_R / sigma^2)`
//! with statistic `(sum y_i^2, X_R^T y)`. `theta = 0` is the null.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, Dyn};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::domain::Domain;
use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::expfam::{ExpFamily, Matrix, SampleSpace, Vector};
use crate::tilt::rows;
use crate::verify::psd::{psd_test_scaled, spectral_norm};

/// Design matrix with rows `x_i`; column 0 is the tested covariate.
#[derive(Clone, Debug)]
pub struct LinearModelDesign {
    x: Matrix,
    /// Cholesky factor of `X_R^T X_R`; `None` when there are no other covariates.
    gram: Option<Cholesky<f64, Dyn>>,
    /// Component of column 0 orthogonal to the other columns.
    residual0: Vector,
    rank: usize,
}

impl LinearModelDesign {
    pub fn new(x: Matrix) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return Err(Error::InvalidParameter("design needs at least the tested column".into()));
        }
        if n < p {
            return Err(Error::InvalidParameter(format!("need n >= d+1, got n = {n}, d+1 = {p}")));
        }
        ensure_finite("design", x.as_slice())?;
        let sv = x.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let cut = smax * f64::EPSILON * n.max(p) as f64;
        let rank = sv.iter().filter(|s| **s > cut).count();
        if rank < p {
            return Err(Error::InvalidParameter(format!("design has rank {rank} < d+1 = {p}")));
        }
        let rest = x.columns(1, p - 1).into_owned();
        let gram = if p > 1 {
            Some(
                Cholesky::new(rest.transpose() * &rest)
                    .ok_or_else(|| Error::InvalidParameter("Gram matrix of the nuisance covariates is singular".into()))?,
            )
        } else {
            None
        };
        let x0 = x.column(0).into_owned();
        let residual0 = match &gram {
            Some(g) => &x0 - &rest * g.solve(&(rest.transpose() * &x0)),
            None => x0,
        };
        Ok(LinearModelDesign { x, gram, residual0, rank })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of covariates besides the tested one.
    pub fn d(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_ok(&self) -> bool {
        self.rank == self.x.ncols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn rest(&self) -> Matrix {
        self.x.columns(1, self.d()).into_owned()
    }

    pub fn gram(&self) -> Matrix {
        let r = self.rest();
        r.transpose() * r
    }

    /// `G^{-1} v` with `G = X_R^T X_R`.
    fn gram_solve(&self, v: &Vector) -> Vector {
        match &self.gram {
            Some(g) => g.solve(v),
            None => Vector::zeros(0),
        }
    }

    /// `m^T G^{-1} m`.
    pub fn gram_form(&self, m: &Vector) -> f64 {
        if self.d() == 0 {
            0.0
        } else {
            m.dot(&self.gram_solve(m))
        }
    }

    /// Linear predictor `X gamma`.
    pub fn predictor(&self, gamma: &Vector) -> Vector {
        &self.x * gamma
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearModelParams {
    pub sigma2: f64,
    pub gamma: Vec<f64>,
}

impl LinearModelParams {
    pub fn new(sigma2: f64, gamma: Vec<f64>) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        ensure_finite("gamma", &gamma)?;
        Ok(LinearModelParams { sigma2, gamma })
    }

    pub fn lambda(&self) -> f64 {
        -0.5 / self.sigma2
    }

    pub fn beta(&self) -> Vec<f64> {
        self.gamma[1..].iter().map(|g| g / self.sigma2).collect()
    }

    pub fn theta(&self) -> f64 {
        self.gamma[0] / self.sigma2
    }

    fn check(&self, design: &LinearModelDesign) -> Result<()> {
        ensure_dim(design.d() + 1, self.gamma.len())
    }
}

/// Mean of the statistic `(sum y^2, X_R^T y)` under `N(nu, sigma2 I)`.
fn stat_mean(design: &LinearModelDesign, nu: &Vector, sigma2: f64) -> Vector {
    let mut m = Vector::zeros(design.d() + 1);
    m[0] = design.n() as f64 * sigma2 + nu.norm_squared();
    if design.d() > 0 {
        m.rows_mut(1, design.d()).copy_from(&(design.rest().transpose() * nu));
    }
    m
}

/// Covariance blocks of the statistic under `N(nu, sigma2 I)`.
fn stat_covariance(design: &LinearModelDesign, nu: &Vector, sigma2: f64) -> Matrix {
    let d = design.d();
    let n = design.n() as f64;
    let mut c = Matrix::zeros(d + 1, d + 1);
    c[(0, 0)] = 2.0 * sigma2 * (2.0 * nu.norm_squared() + n * sigma2);
    if d > 0 {
        let rest = design.rest();
        let b = rest.transpose() * nu * (2.0 * sigma2);
        for j in 0..d {
            c[(0, j + 1)] = b[j];
            c[(j + 1, 0)] = b[j];
        }
        c.view_mut((1, 1), (d, d)).copy_from(&(rest.transpose() * &rest * sigma2));
    }
    c
}

/// Model `Q^(theta)`: `y ~ N(X gamma, sigma^2 I)` with `gamma_0 / sigma^2 = theta`.
#[derive(Clone, Debug)]
pub struct LinearModelFamily {
    design: Arc<LinearModelDesign>,
    theta: f64,
}

impl LinearModelFamily {
    pub fn new(design: Arc<LinearModelDesign>, theta: f64) -> Result<Self> {
        ensure_finite("theta", &[theta])?;
        Ok(LinearModelFamily { design, theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn design(&self) -> &Arc<LinearModelDesign> {
        &self.design
    }

    /// `(sigma^2, nu)` at natural parameter `(lambda, beta)`.
    fn moments_natural(&self, nat: &Vector) -> Option<(f64, Vector)> {
        let lambda = nat[0];
        if !(lambda < 0.0) {
            return None;
        }
        let sigma2 = -0.5 / lambda;
        let eta = self.design.x.column(0) * self.theta + self.design.rest() * nat.rows(1, self.design.d());
        Some((sigma2, eta * sigma2))
    }

    /// `(sigma^2, nu)` of the member with statistic mean `mu`.
    pub fn moments_at_mean(&self, mu: &Vector) -> Result<(f64, Vector)> {
        ensure_dim(self.design.d() + 1, mu.len())?;
        let d = self.design.d();
        let m = mu.rows(1, d).into_owned();
        let excess = mu[0] - self.design.gram_form(&m);
        if !(excess > 0.0) {
            return Err(Error::Domain {
                what: "linear-model mean space {s > m' G^-1 m}".into(),
                detail: format!("{:?}", mu.as_slice()),
            });
        }
        let n = self.design.n() as f64;
        let rr = self.design.residual0.norm_squared();
        let qa = self.theta * self.theta * rr;
        let sigma2 = 2.0 * excess / (n + (n * n + 4.0 * qa * excess).sqrt());
        let fitted = if d > 0 { self.design.rest() * self.design.gram_solve(&m) } else { Vector::zeros(self.design.n()) };
        let nu = fitted + &self.design.residual0 * (sigma2 * self.theta);
        Ok((sigma2, nu))
    }

    pub fn params_at_mean(&self, mu: &Vector) -> Result<LinearModelParams> {
        let (sigma2, nu) = self.moments_at_mean(mu)?;
        let d = self.design.d();
        let mut gamma = vec![self.theta * sigma2];
        if d > 0 {
            let rest = self.design.rest();
            let target = rest.transpose() * (&nu - self.design.x.column(0) * gamma[0]);
            gamma.extend(self.design.gram_solve(&target).iter());
        }
        LinearModelParams::new(sigma2, gamma)
    }
}

impl ExpFamily for LinearModelFamily {
    fn name(&self) -> String {
        format!("linear-model(n={}, d={}, theta={})", self.design.n(), self.design.d(), self.theta)
    }
    fn dim(&self) -> usize {
        self.design.d() + 1
    }
    fn sample_space(&self) -> SampleSpace {
        SampleSpace::Real(self.design.n())
    }
    fn mean_domain(&self) -> Domain {
        let design = self.design.clone();
        Domain::predicate(self.dim(), "{(s, m) : s > m' G^-1 m}", move |x: &[f64]| {
            let v = Vector::from_column_slice(x);
            x[0] > design.gram_form(&v.rows(1, design.d()).into_owned())
        })
    }
    fn natural_domain(&self) -> Domain {
        let mut upper = vec![f64::INFINITY; self.dim()];
        upper[0] = 0.0;
        Domain::open_box(vec![f64::NEG_INFINITY; self.dim()], upper).expect("bounds")
    }
    fn log_partition_natural(&self, nat: &Vector) -> f64 {
        match self.moments_natural(nat) {
            Some((sigma2, nu)) => {
                let n = self.design.n() as f64;
                0.5 * n * sigma2.ln() + nu.norm_squared() / (2.0 * sigma2)
            }
            None => f64::INFINITY,
        }
    }
    fn mean_natural(&self, nat: &Vector) -> Option<Vector> {
        self.moments_natural(nat).map(|(s, nu)| stat_mean(&self.design, &nu, s))
    }
    fn covariance_natural(&self, nat: &Vector) -> Option<Matrix> {
        self.moments_natural(nat).map(|(s, nu)| stat_covariance(&self.design, &nu, s))
    }
    fn natural_from_mean(&self, mu: &Vector) -> Option<Vector> {
        let p = self.params_at_mean(mu).ok()?;
        let mut v = vec![p.lambda()];
        v.extend(p.beta());
        Some(Vector::from_vec(v))
    }
    fn natural_reference(&self) -> Vector {
        let mut v = Vector::zeros(self.dim());
        v[0] = -0.5;
        v
    }
    fn suff_stat(&self, y: &[f64]) -> Result<Vector> {
        self.sample_space().check(y)?;
        let y = Vector::from_column_slice(y);
        let mut t = Vector::zeros(self.dim());
        t[0] = y.norm_squared();
        if self.design.d() > 0 {
            t.rows_mut(1, self.design.d()).copy_from(&(self.design.rest().transpose() * &y));
        }
        Ok(t)
    }
    fn log_base_density(&self, y: &[f64]) -> Result<f64> {
        self.sample_space().check(y)?;
        let x0 = self.design.x.column(0);
        let cross: f64 = y.iter().zip(x0.iter()).map(|(a, b)| a * b).sum();
        Ok(self.theta * cross - 0.5 * self.design.n() as f64 * (2.0 * PI).ln())
    }
    fn sample_natural(&self, nat: &Vector, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let (sigma2, nu) = self.moments_natural(nat)?;
        let sd = sigma2.sqrt();
        Some(
            nu.iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + sd * z
                })
                .collect(),
        )
    }
}

/// Statistic mean of the model with parameters `params`.
pub fn linmodel_mean(design: &LinearModelDesign, params: &LinearModelParams) -> Result<Vector> {
    params.check(design)?;
    let nu = design.predictor(&Vector::from_vec(params.gamma.clone()));
    Ok(stat_mean(design, &nu, params.sigma2))
}

/// Null member with the same statistic mean: `(sigma0^2, gamma0)` with `gamma0[0] = 0`.
pub fn linmodel_project_null(design: &LinearModelDesign, params: &LinearModelParams) -> Result<(f64, Vec<f64>)> {
    params.check(design)?;
    let nu = design.predictor(&Vector::from_vec(params.gamma.clone()));
    let d = design.d();
    let mut gamma0 = vec![0.0];
    let mut fitted = Vector::zeros(design.n());
    if d > 0 {
        let rest = design.rest();
        let coef = design.gram_solve(&(rest.transpose() * &nu));
        fitted = &rest * &coef;
        gamma0.extend(coef.iter());
    }
    let sigma0 = params.sigma2 + (&nu - fitted).norm_squared() / design.n() as f64;
    Ok((sigma0, gamma0))
}

fn gaussian_loglik(y: &[f64], nu: &Vector, sigma2: f64) -> f64 {
    y.iter()
        .zip(nu.iter())
        .map(|(a, m)| -0.5 * ((a - m).powi(2) / sigma2 + (2.0 * PI * sigma2).ln()))
        .sum()
}

/// Likelihood ratio of `(sigma, gamma)` against its null projection.
pub fn linmodel_simple_evalue(design: &LinearModelDesign, params: &LinearModelParams, y: &[f64]) -> Result<f64> {
    ensure_dim(design.n(), y.len())?;
    ensure_finite("y", y)?;
    let (sigma0, gamma0) = linmodel_project_null(design, params)?;
    if params.gamma[0] == 0.0 {
        return Ok(1.0);
    }
    let nu = design.predictor(&Vector::from_vec(params.gamma.clone()));
    let nu0 = design.predictor(&Vector::from_vec(gamma0));
    Ok((gaussian_loglik(y, &nu, params.sigma2) - gaussian_loglik(y, &nu0, sigma0)).exp())
}

#[derive(Clone, Debug, Serialize)]
pub struct LinModelPsd {
    pub psd: bool,
    pub min_eigenvalue: f64,
    pub threshold: f64,
    pub sigma_p_norm: f64,
    /// `(A_0 - A_theta) - dB^T dC^{-1} dB`.
    pub schur_margin: f64,
    /// `sigma_null^2 - sigma_theta^2`.
    pub c: f64,
    /// Max deviation of `C_0 - C_theta` from `c G`.
    pub c_block_residual: f64,
    pub difference: Vec<Vec<f64>>,
}

/// Covariance ordering between the null and `Q^(theta)` at statistic mean `mu`,
/// checked both through the block structure and by eigenvalues.
pub fn linmodel_psd_check(design: &Arc<LinearModelDesign>, theta: f64, mu: &Vector) -> Result<LinModelPsd> {
    let null = LinearModelFamily::new(design.clone(), 0.0)?;
    let alt = LinearModelFamily::new(design.clone(), theta)?;
    let (s0, nu0) = null.moments_at_mean(mu)?;
    let (s1, nu1) = alt.moments_at_mean(mu)?;
    let sp = stat_covariance(design, &nu0, s0);
    let sq = stat_covariance(design, &nu1, s1);
    let diff = &sp - &sq;
    let d = design.d();
    let c = s0 - s1;
    let norm = spectral_norm(&sp)?;
    let verdict = psd_test_scaled(&diff, 1e-9, norm)?;
    let (schur, resid) = if theta == 0.0 {
        (0.0, 0.0)
    } else if d == 0 {
        (diff[(0, 0)], 0.0)
    } else {
        let dc = diff.view((1, 1), (d, d)).into_owned();
        let db = diff.view((1, 0), (d, 1)).into_owned();
        let resid = (&dc - design.gram() * c).amax();
        let schur = match Cholesky::new(crate::expfam::symmetrize(&dc)) {
            Some(ch) => diff[(0, 0)] - (db.transpose() * ch.solve(&db))[(0, 0)],
            None => f64::NEG_INFINITY,
        };
        (schur, resid)
    };
    Ok(LinModelPsd {
        psd: verdict.psd,
        min_eigenvalue: verdict.min_eigenvalue,
        threshold: verdict.threshold,
        sigma_p_norm: norm,
        schur_margin: schur,
        c,
        c_block_residual: resid,
        difference: rows(&diff),
    })
}
