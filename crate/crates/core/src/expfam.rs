//! Regular exponential families in anchored form.
//!
//! A family implements [`ExpFamily`] in its own natural coordinates `theta`
//! with log-partition `psi(theta)` and base density `h`. Every member can
//! also be written relative to an *anchor* member with mean `mu*`:
//!
//! ```text
//! p_{beta; mu*}(u) = exp(beta . t(u)) p_{mu*}(u) / Z(beta; mu*)
//! log Z(beta; mu*) = psi(theta* + beta) - psi(theta*),   theta* = theta(mu*)
//! ```
//!
//! The free functions in this module work in the anchored coordinates, which
//! is the form used by the condition checks.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::domain::Domain;
use crate::error::{ensure_dim, ensure_finite, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub const NEWTON_MAX_ITER: usize = 200;
pub const NEWTON_MAX_HALVINGS: usize = 60;
pub const NEWTON_TOL: f64 = 1e-9;
pub const FD_STEP: f64 = 1e-6;
/// Step used when a Hessian has to come from differencing a numeric gradient.
pub const FD_STEP_NESTED: f64 = 1e-4;

/// Where samples live. The expectation oracles use this to pick a method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSpace {
    /// `{0,1}^k`
    Binary(usize),
    /// `N^k`
    Counts(usize),
    /// `R^k`
    Real(usize),
    /// `(0, inf)^k`
    PositiveReal(usize),
}

impl SampleSpace {
    pub fn len(&self) -> usize {
        match *self {
            SampleSpace::Binary(k)
            | SampleSpace::Counts(k)
            | SampleSpace::Real(k)
            | SampleSpace::PositiveReal(k) => k,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: u.len() });
        }
        let ok = match self {
            SampleSpace::Binary(_) => u.iter().all(|&y| y == 0.0 || y == 1.0),
            SampleSpace::Counts(_) => u.iter().all(|&y| y >= 0.0 && y.fract() == 0.0 && y.is_finite()),
            SampleSpace::Real(_) => u.iter().all(|y| y.is_finite()),
            SampleSpace::PositiveReal(_) => u.iter().all(|&y| y > 0.0 && y.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!("sample {u:?} is not in {self:?}")))
        }
    }
}

/// A regular exponential family described in its natural coordinates.
///
/// Closed forms are optional; missing gradients and Hessians fall back to
/// central differences of `log_partition_natural`.
pub trait ExpFamily: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn sample_space(&self) -> SampleSpace;
    /// The mean-value space M.
    fn mean_domain(&self) -> Domain;
    /// Declared convexity of M. Not verified.
    fn mean_domain_convex(&self) -> bool {
        true
    }
    fn natural_domain(&self) -> Domain;
    /// `psi(theta)`, or `+inf` outside the natural domain.
    fn log_partition_natural(&self, theta: &Vector) -> f64;
    fn mean_natural(&self, _theta: &Vector) -> Option<Vector> {
        None
    }
    fn covariance_natural(&self, _theta: &Vector) -> Option<Matrix> {
        None
    }
    /// Closed-form inverse of the mean map, if known.
    fn natural_from_mean(&self, _mu: &Vector) -> Option<Vector> {
        None
    }
    /// Starting point for numeric inversion of the mean map.
    fn natural_reference(&self) -> Vector {
        Vector::zeros(self.dim())
    }
    fn suff_stat(&self, u: &[f64]) -> Result<Vector>;
    /// `log h(u)`, so that `log p_theta(u) = theta . t(u) - psi(theta) + log h(u)`.
    fn log_base_density(&self, u: &[f64]) -> Result<f64>;
    fn sample_natural(&self, _theta: &Vector, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }
    /// True when the log-partition is a Monte Carlo estimate.
    fn is_stochastic(&self) -> bool {
        false
    }
}

fn boundary_error<F: ExpFamily + ?Sized>(fam: &F, theta: &Vector) -> Error {
    Error::Boundary { coordinate: fam.natural_domain().offending_coordinate(theta.as_slice()) }
}

fn check_natural<F: ExpFamily + ?Sized>(fam: &F, theta: &Vector) -> Result<()> {
    if fam.natural_domain().contains(theta.as_slice()) && fam.log_partition_natural(theta).is_finite() {
        Ok(())
    } else {
        Err(boundary_error(fam, theta))
    }
}

fn check_mean<F: ExpFamily + ?Sized>(fam: &F, mu: &Vector, label: &str) -> Result<()> {
    ensure_dim(fam.dim(), mu.len())?;
    ensure_finite(label, mu.as_slice())?;
    let m = fam.mean_domain();
    if m.contains(mu.as_slice()) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: format!("mean domain {} of {}", m.describe(), fam.name()),
            detail: format!("{label} = {:?}", mu.as_slice()),
        })
    }
}

/// Largest step `<= h` keeping `theta +- h e_i` inside the natural domain.
fn fd_step<F: ExpFamily + ?Sized>(fam: &F, theta: &Vector, i: usize, base: f64) -> f64 {
    let mut h = base * (1.0 + theta[i].abs());
    let dom = fam.natural_domain();
    for _ in 0..60 {
        let mut a = theta.clone();
        let mut b = theta.clone();
        a[i] += h;
        b[i] -= h;
        if dom.contains(a.as_slice())
            && dom.contains(b.as_slice())
            && fam.log_partition_natural(&a).is_finite()
            && fam.log_partition_natural(&b).is_finite()
        {
            return h;
        }
        h *= 0.5;
    }
    h
}

fn fd_gradient_psi<F: ExpFamily + ?Sized>(fam: &F, theta: &Vector, base: f64) -> Vector {
    let d = theta.len();
    Vector::from_iterator(
        d,
        (0..d).map(|i| {
            let h = fd_step(fam, theta, i, base);
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            (fam.log_partition_natural(&a) - fam.log_partition_natural(&b)) / (2.0 * h)
        }),
    )
}

/// Gradient of `psi` at natural point `theta`.
pub fn natural_mean<F: ExpFamily + ?Sized>(fam: &F, theta: &Vector) -> Result<Vector> {
    check_natural(fam, theta)?;
    Ok(fam.mean_natural(theta).unwrap_or_else(|| fd_gradient_psi(fam, theta, FD_STEP)))
}

/// Hessian of `psi` at natural point `theta`, symmetrized.
pub fn natural_covariance<F: ExpFamily + ?Sized>(fam: &F, theta: &Vector) -> Result<Matrix> {
    check_natural(fam, theta)?;
    if let Some(c) = fam.covariance_natural(theta) {
        return Ok(symmetrize(&c));
    }
    let d = theta.len();
    let closed = fam.mean_natural(theta).is_some();
    let base = if closed { FD_STEP } else { FD_STEP_NESTED };
    let grad = |t: &Vector| fam.mean_natural(t).unwrap_or_else(|| fd_gradient_psi(fam, t, FD_STEP_NESTED));
    let mut h = Matrix::zeros(d, d);
    for j in 0..d {
        let s = fd_step(fam, theta, j, base);
        let mut a = theta.clone();
        let mut b = theta.clone();
        a[j] += s;
        b[j] -= s;
        let col = (grad(&a) - grad(&b)) / (2.0 * s);
        h.set_column(j, &col);
    }
    Ok(symmetrize(&h))
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Solve `cov * x = rhs` for a covariance-like matrix.
pub(crate) fn solve_spd(cov: &Matrix, rhs: &Vector) -> Option<Vector> {
    if let Some(ch) = cov.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    cov.clone().lu().solve(rhs).filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Damped Newton solve of `grad psi(theta) = mu` starting from `start`.
///
/// Step halving enforces the natural domain and a sufficient decrease of the
/// convex objective `psi(theta) - theta . mu`. Once the residual tolerance is
/// met, up to two extra full steps are taken while they keep reducing it.
pub fn solve_natural<F: ExpFamily + ?Sized>(fam: &F, mu: &Vector, start: Vector) -> Result<Vector> {
    let tol = NEWTON_TOL * (1.0 + mu.amax());
    let dom = fam.natural_domain();
    let objective = |t: &Vector| fam.log_partition_natural(t) - t.dot(mu);
    let mut theta = start;
    let mut resid = natural_mean(fam, &theta)? - mu;
    let mut polish = 0;
    for _ in 0..NEWTON_MAX_ITER {
        let r = resid.amax();
        if r == 0.0 {
            return Ok(theta);
        }
        let cov = natural_covariance(fam, &theta)?;
        let step = match solve_spd(&cov, &(-&resid)) {
            // cap the step so flat tails cannot throw the iterate where the curvature underflows
            Some(s) => {
                let cap = 2.0 * (1.0 + theta.amax());
                if s.amax() > cap {
                    let m = s.amax();
                    s * (cap / m)
                } else {
                    s
                }
            }
            None if r <= tol => return Ok(theta),
            None => return Err(Error::Convergence { iterations: 0, residual: r }),
        };
        // a step below a few ulps of theta means the residual is at its roundoff floor
        if step.amax() <= 8.0 * f64::EPSILON * (1.0 + theta.amax()) {
            return Ok(theta);
        }
        if r <= tol {
            if polish >= 2 {
                return Ok(theta);
            }
            polish += 1;
            let trial = &theta + &step;
            if dom.contains(trial.as_slice()) && fam.log_partition_natural(&trial).is_finite() {
                if let Ok(m) = natural_mean(fam, &trial) {
                    let tr = &m - mu;
                    if tr.amax() < r {
                        theta = trial;
                        resid = tr;
                        continue;
                    }
                }
            }
            return Ok(theta);
        }
        let phi0 = objective(&theta);
        let slope = resid.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let trial = &theta + &step * t;
            if dom.contains(trial.as_slice()) {
                let phi = objective(&trial);
                if phi.is_finite() && phi <= phi0 + 1e-4 * t * slope + 1e-13 * (1.0 + phi0.abs()) {
                    accepted = Some(trial);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(Error::Convergence { iterations: 0, residual: r });
        };
        theta = next;
        resid = natural_mean(fam, &theta)? - mu;
    }
    let r = resid.amax();
    if r <= tol {
        Ok(theta)
    } else {
        Err(Error::Convergence { iterations: NEWTON_MAX_ITER, residual: r })
    }
}

/// Natural coordinates of the member with mean `mu`.
pub fn natural_at_mean<F: ExpFamily + ?Sized>(fam: &F, mu: &Vector) -> Result<Vector> {
    check_mean(fam, mu, "mean")?;
    match fam.natural_from_mean(mu) {
        Some(t) => Ok(t),
        None => solve_natural(fam, mu, fam.natural_reference()),
    }
}

/// `log Z(beta; anchor)`; `+inf` outside the canonical domain.
pub fn log_partition_at<F: ExpFamily + ?Sized>(fam: &F, beta: &Vector, anchor: &Vector) -> Result<f64> {
    ensure_dim(fam.dim(), beta.len())?;
    ensure_finite("beta", beta.as_slice())?;
    let ts = natural_at_mean(fam, anchor)?;
    Ok(log_partition_shifted(fam, beta, &ts))
}

pub(crate) fn log_partition_shifted<F: ExpFamily + ?Sized>(fam: &F, beta: &Vector, ts: &Vector) -> f64 {
    if beta.iter().all(|b| *b == 0.0) {
        return 0.0;
    }
    let theta = ts + beta;
    if !fam.natural_domain().contains(theta.as_slice()) {
        return f64::INFINITY;
    }
    let v = fam.log_partition_natural(&theta);
    if v.is_finite() {
        v - fam.log_partition_natural(ts)
    } else {
        f64::INFINITY
    }
}

/// Canonical domain `B(anchor)` as a domain in `beta`.
pub fn canonical_domain<F: ExpFamily + ?Sized>(fam: &F, anchor: &Vector) -> Result<Domain> {
    let ts = natural_at_mean(fam, anchor)?;
    Ok(fam.natural_domain().shifted(ts.as_slice()))
}

pub fn mean_from_canonical<F: ExpFamily + ?Sized>(fam: &F, beta: &Vector, anchor: &Vector) -> Result<Vector> {
    ensure_dim(fam.dim(), beta.len())?;
    ensure_finite("beta", beta.as_slice())?;
    let ts = natural_at_mean(fam, anchor)?;
    natural_mean(fam, &(ts + beta))
}

/// Inverse of [`mean_from_canonical`] by damped Newton from `beta = 0`.
pub fn canonical_from_mean<F: ExpFamily + ?Sized>(fam: &F, mu: &Vector, anchor: &Vector) -> Result<Vector> {
    check_mean(fam, mu, "mu")?;
    let ts = natural_at_mean(fam, anchor)?;
    let theta = solve_natural(fam, mu, ts.clone())?;
    Ok(theta - ts)
}

pub fn covariance_at_canonical<F: ExpFamily + ?Sized>(fam: &F, beta: &Vector, anchor: &Vector) -> Result<Matrix> {
    ensure_dim(fam.dim(), beta.len())?;
    ensure_finite("beta", beta.as_slice())?;
    let ts = natural_at_mean(fam, anchor)?;
    natural_covariance(fam, &(ts + beta))
}

/// Covariance of the sufficient statistic under the member with mean `mu`.
pub fn covariance_at_mean<F: ExpFamily + ?Sized>(fam: &F, mu: &Vector) -> Result<Matrix> {
    let t = natural_at_mean(fam, mu)?;
    natural_covariance(fam, &t)
}

/// `D(P_mu || P_mu')` in Bregman form: `beta' . mu - log Z(beta'; mu')` with
/// `beta' = canonical_from_mean(mu; mu')`.
pub fn kl_between_means<F: ExpFamily + ?Sized>(fam: &F, mu: &Vector, mu_prime: &Vector) -> Result<f64> {
    check_mean(fam, mu, "mu")?;
    let tp = natural_at_mean(fam, mu_prime)?;
    let theta = solve_natural(fam, mu, tp.clone())?;
    let beta = &theta - &tp;
    let lz = log_partition_shifted(fam, &beta, &tp);
    Ok((beta.dot(mu) - lz).max(0.0))
}

/// `beta + gamma` with `gamma = -canonical_from_mean(anchor2; anchor1)`, so that
/// the member `(beta; anchor1)` equals the member `(beta + gamma; anchor2)`.
pub fn reparameterize<F: ExpFamily + ?Sized>(
    fam: &F,
    beta: &Vector,
    anchor1: &Vector,
    anchor2: &Vector,
) -> Result<Vector> {
    ensure_dim(fam.dim(), beta.len())?;
    let gamma = -canonical_from_mean(fam, anchor2, anchor1)?;
    Ok(beta + gamma)
}

pub fn carrier_log_density<F: ExpFamily + ?Sized>(fam: &F, u: &[f64], anchor: &Vector) -> Result<f64> {
    let ts = natural_at_mean(fam, anchor)?;
    let t = fam.suff_stat(u)?;
    Ok(ts.dot(&t) - fam.log_partition_natural(&ts) + fam.log_base_density(u)?)
}

/// `beta . t(u) - log Z(beta; anchor) + log p_anchor(u)`.
pub fn log_density<F: ExpFamily + ?Sized>(fam: &F, beta: &Vector, anchor: &Vector, u: &[f64]) -> Result<f64> {
    ensure_dim(fam.dim(), beta.len())?;
    ensure_finite("beta", beta.as_slice())?;
    let ts = natural_at_mean(fam, anchor)?;
    let lz = log_partition_shifted(fam, beta, &ts);
    if !lz.is_finite() {
        return Err(boundary_error(fam, &(&ts + beta)));
    }
    let t = fam.suff_stat(u)?;
    let carrier = ts.dot(&t) - fam.log_partition_natural(&ts) + fam.log_base_density(u)?;
    Ok(beta.dot(&t) - lz + carrier)
}

/// Log-density of the member with mean `mu`.
pub fn log_density_at_mean<F: ExpFamily + ?Sized>(fam: &F, mu: &Vector, u: &[f64]) -> Result<f64> {
    carrier_log_density(fam, u, mu)
}

pub fn sample_at_mean<F: ExpFamily + ?Sized>(fam: &F, mu: &Vector, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    let t = natural_at_mean(fam, mu)?;
    fam.sample_natural(&t, rng)
        .ok_or_else(|| Error::Unsupported(format!("{} has no sampler", fam.name())))
}

/// A parameter location in anchored canonical coordinates, with the mean
/// computed on first use.
#[derive(Clone, Debug)]
pub struct ParamPoint {
    pub anchor: Vector,
    pub canonical: Vector,
    mean: OnceLock<Vector>,
}

impl ParamPoint {
    pub fn new(anchor: Vector, canonical: Vector) -> Self {
        ParamPoint { anchor, canonical, mean: OnceLock::new() }
    }

    pub fn from_mean<F: ExpFamily + ?Sized>(fam: &F, mean: Vector, anchor: Vector) -> Result<Self> {
        let canonical = canonical_from_mean(fam, &mean, &anchor)?;
        let p = ParamPoint::new(anchor, canonical);
        let _ = p.mean.set(mean);
        Ok(p)
    }

    pub fn mean<F: ExpFamily + ?Sized>(&self, fam: &F) -> Result<&Vector> {
        if let Some(m) = self.mean.get() {
            return Ok(m);
        }
        let m = mean_from_canonical(fam, &self.canonical, &self.anchor)?;
        Ok(self.mean.get_or_init(|| m))
    }

    /// The same member written relative to another anchor.
    pub fn reanchor<F: ExpFamily + ?Sized>(&self, fam: &F, anchor: Vector) -> Result<Self> {
        let canonical = reparameterize(fam, &self.canonical, &self.anchor, &anchor)?;
        let p = ParamPoint::new(anchor, canonical);
        if let Some(m) = self.mean.get() {
            let _ = p.mean.set(m.clone());
        }
        Ok(p)
    }
}

type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type StatFn = Arc<dyn Fn(&[f64]) -> Vector + Send + Sync>;
type BaseFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A family assembled from closures, for user-supplied models.
#[derive(Clone)]
pub struct CustomFamily {
    pub name: String,
    pub dim: usize,
    pub sample_space: SampleSpace,
    pub mean_domain: Domain,
    pub mean_domain_convex: bool,
    pub natural_domain: Domain,
    pub log_partition: ScalarFn,
    pub gradient: Option<VectorFn>,
    pub hessian: Option<MatrixFn>,
    pub suff_stat: StatFn,
    pub log_base_density: BaseFn,
    pub reference: Vector,
}

impl CustomFamily {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        sample_space: SampleSpace,
        mean_domain: Domain,
        natural_domain: Domain,
        log_partition: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        suff_stat: impl Fn(&[f64]) -> Vector + Send + Sync + 'static,
        log_base_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let dim = natural_domain.dim();
        CustomFamily {
            name: name.into(),
            dim,
            sample_space,
            mean_domain,
            mean_domain_convex: true,
            natural_domain,
            log_partition: Arc::new(log_partition),
            gradient: None,
            hessian: None,
            suff_stat: Arc::new(suff_stat),
            log_base_density: Arc::new(log_base_density),
            reference: Vector::zeros(dim),
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn with_reference(mut self, r: Vector) -> Self {
        self.reference = r;
        self
    }

    pub fn with_convexity(mut self, convex: bool) -> Self {
        self.mean_domain_convex = convex;
        self
    }
}

impl ExpFamily for CustomFamily {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample_space(&self) -> SampleSpace {
        self.sample_space
    }
    fn mean_domain(&self) -> Domain {
        self.mean_domain.clone()
    }
    fn mean_domain_convex(&self) -> bool {
        self.mean_domain_convex
    }
    fn natural_domain(&self) -> Domain {
        self.natural_domain.clone()
    }
    fn log_partition_natural(&self, theta: &Vector) -> f64 {
        if self.natural_domain.contains(theta.as_slice()) {
            (self.log_partition)(theta)
        } else {
            f64::INFINITY
        }
    }
    fn mean_natural(&self, theta: &Vector) -> Option<Vector> {
        self.gradient.as_ref().map(|g| g(theta))
    }
    fn covariance_natural(&self, theta: &Vector) -> Option<Matrix> {
        self.hessian.as_ref().map(|h| h(theta))
    }
    fn natural_reference(&self) -> Vector {
        self.reference.clone()
    }
    fn suff_stat(&self, u: &[f64]) -> Result<Vector> {
        self.sample_space.check(u)?;
        Ok((self.suff_stat)(u))
    }
    fn log_base_density(&self, u: &[f64]) -> Result<f64> {
        self.sample_space.check(u)?;
        Ok((self.log_base_density)(u))
    }
}
