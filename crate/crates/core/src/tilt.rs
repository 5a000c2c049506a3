//! The tilted family built from an alternative `Q` and the null's sufficient
//! statistic: `q_beta(u) = exp(beta . t(u)) q(u) / Z_q(beta)`.
//!
//! Its natural coordinates are the tilts `beta` relative to `q` itself, so
//! `psi_q(beta) = log E_Q[exp(beta . t(U))]` and `q` is the member at `0`.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::expfam::{
    self, canonical_domain, covariance_at_mean, log_partition_at, log_partition_shifted, mean_from_canonical,
    natural_at_mean, ExpFamily, Matrix, SampleSpace, Vector,
};
use crate::verify::psd::{psd_test_scaled, spectral_norm};

pub const DEFAULT_MC_SAMPLES: usize = 200_000;
pub const DOMAIN_BISECTIONS: usize = 40;
pub const PSD_TOL: f64 = 1e-9;
/// Largest radius probed when searching for a canonical-domain boundary.
pub const RAY_RADIUS_CAP: f64 = 1e4;

type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type SamplerFn = Arc<dyn Fn(&mut dyn RngCore) -> Vec<f64> + Send + Sync>;

/// An alternative distribution `Q` on the null's sample space.
#[derive(Clone)]
pub struct CarrierAlternative {
    pub name: String,
    pub log_density: DensityFn,
    /// `log E_Q[exp(beta . t(U))]`, `+inf` where it diverges.
    pub mgf_log: Option<ScalarFn>,
    pub mgf_grad: Option<VectorFn>,
    pub mgf_hess: Option<MatrixFn>,
    pub sampler: Option<SamplerFn>,
    /// `E_Q[t(U)]`.
    pub mean_of_suff_stat: Vector,
    /// Mean-value space of the tilted family, when known in closed form.
    pub mean_domain: Option<Domain>,
    /// Canonical domain of the tilted family at `mu*`, when known.
    pub canonical_domain: Option<Domain>,
    pub mean_domain_convex: bool,
}

impl CarrierAlternative {
    pub fn new(
        name: impl Into<String>,
        mean_of_suff_stat: Vector,
        log_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CarrierAlternative {
            name: name.into(),
            log_density: Arc::new(log_density),
            mgf_log: None,
            mgf_grad: None,
            mgf_hess: None,
            sampler: None,
            mean_of_suff_stat,
            mean_domain: None,
            canonical_domain: None,
            mean_domain_convex: true,
        }
    }

    pub fn with_mgf(
        mut self,
        log_mgf: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        hess: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.mgf_log = Some(Arc::new(log_mgf));
        self.mgf_grad = Some(Arc::new(grad));
        self.mgf_hess = Some(Arc::new(hess));
        self
    }

    pub fn with_log_mgf(mut self, log_mgf: impl Fn(&Vector) -> f64 + Send + Sync + 'static) -> Self {
        self.mgf_log = Some(Arc::new(log_mgf));
        self
    }

    pub fn with_sampler(mut self, s: impl Fn(&mut dyn RngCore) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.sampler = Some(Arc::new(s));
        self
    }

    pub fn with_domains(mut self, mean_domain: Domain, canonical_domain: Domain) -> Self {
        self.mean_domain = Some(mean_domain);
        self.canonical_domain = Some(canonical_domain);
        self
    }

    pub fn with_convexity(mut self, convex: bool) -> Self {
        self.mean_domain_convex = convex;
        self
    }
}

/// Use the member of `fam` with mean `mu` as a carrier.
pub fn carrier_from_member(fam: Arc<dyn ExpFamily>, mu: &Vector) -> Result<CarrierAlternative> {
    let ts = natural_at_mean(fam.as_ref(), mu)?;
    let lpsi = fam.log_partition_natural(&ts);
    let f1 = fam.clone();
    let t1 = ts.clone();
    let density = move |u: &[f64]| -> f64 {
        match (f1.suff_stat(u), f1.log_base_density(u)) {
            (Ok(t), Ok(h)) => t1.dot(&t) - lpsi + h,
            _ => f64::NEG_INFINITY,
        }
    };
    let (f2, t2) = (fam.clone(), ts.clone());
    let (f3, t3) = (fam.clone(), ts.clone());
    let (f4, t4) = (fam.clone(), ts.clone());
    let mut c = CarrierAlternative::new(format!("{} member", fam.name()), mu.clone(), density).with_mgf(
        move |b: &Vector| log_partition_shifted(f2.as_ref(), b, &t2),
        move |b: &Vector| expfam::natural_mean(f3.as_ref(), &(&t3 + b)).unwrap_or_else(|_| b * f64::NAN),
        move |b: &Vector| {
            expfam::natural_covariance(f4.as_ref(), &(&t4 + b)).unwrap_or_else(|_| Matrix::from_element(b.len(), b.len(), f64::NAN))
        },
    );
    c.mean_domain = Some(fam.mean_domain());
    c.canonical_domain = Some(fam.natural_domain().shifted(ts.as_slice()));
    c.mean_domain_convex = fam.mean_domain_convex();
    if fam.sample_natural(&ts, &mut ChaCha8Rng::seed_from_u64(0)).is_some() {
        let (f5, t5) = (fam.clone(), ts);
        c.sampler = Some(Arc::new(move |rng: &mut dyn RngCore| f5.sample_natural(&t5, rng).expect("sampler")));
    }
    Ok(c)
}

enum Partition {
    Closed,
    /// Sampled sufficient statistics from `Q`.
    MonteCarlo { stats: Vec<Vector> },
}

#[derive(Clone, Copy, Debug)]
pub struct TiltOptions {
    pub mc_samples: usize,
    pub seed: u64,
    /// Use Monte Carlo even when a closed-form mgf is present.
    pub force_monte_carlo: bool,
}

impl Default for TiltOptions {
    fn default() -> Self {
        TiltOptions { mc_samples: DEFAULT_MC_SAMPLES, seed: 0, force_monte_carlo: false }
    }
}

/// The tilted family generated by a carrier and a null.
pub struct TiltedFamily {
    null: Arc<dyn ExpFamily>,
    carrier: CarrierAlternative,
    partition: Partition,
    mean_domain: Domain,
    natural_domain: Domain,
}

impl std::fmt::Debug for TiltedFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TiltedFamily")
            .field("null", &self.null.name())
            .field("carrier", &self.carrier.name)
            .field("stochastic", &self.is_stochastic())
            .finish()
    }
}

pub fn build_tilted_family(null: Arc<dyn ExpFamily>, q: CarrierAlternative) -> Result<TiltedFamily> {
    build_tilted_family_with(null, q, TiltOptions::default())
}

pub fn build_tilted_family_with(
    null: Arc<dyn ExpFamily>,
    q: CarrierAlternative,
    opts: TiltOptions,
) -> Result<TiltedFamily> {
    let d = null.dim();
    if q.mean_of_suff_stat.len() != d {
        return Err(Error::Dimension { expected: d, got: q.mean_of_suff_stat.len() });
    }
    if !null.mean_domain().contains(q.mean_of_suff_stat.as_slice()) {
        return Err(Error::Domain {
            what: format!("null mean domain {}", null.mean_domain().describe()),
            detail: format!("carrier mean {:?}", q.mean_of_suff_stat.as_slice()),
        });
    }
    let partition = match (&q.mgf_log, &q.sampler, opts.force_monte_carlo) {
        (Some(_), _, false) => Partition::Closed,
        (_, Some(sampler), _) => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut stats = Vec::with_capacity(opts.mc_samples);
            for _ in 0..opts.mc_samples.max(1) {
                let u = sampler(&mut rng);
                stats.push(null.suff_stat(&u)?);
            }
            Partition::MonteCarlo { stats }
        }
        _ => return Err(Error::Construction("carrier needs a log-mgf or a sampler".into())),
    };
    let mut fam = TiltedFamily {
        null,
        carrier: q,
        partition,
        mean_domain: Domain::whole(d),
        natural_domain: Domain::whole(d),
    };
    fam.natural_domain = match (&fam.partition, &fam.carrier.canonical_domain) {
        (Partition::Closed, Some(dom)) => dom.clone(),
        _ => fam.discover_natural_domain(),
    };
    fam.mean_domain = match (&fam.partition, &fam.carrier.mean_domain) {
        (Partition::Closed, Some(dom)) => dom.clone(),
        _ => fam.discover_mean_domain(),
    };
    Ok(fam)
}

/// Sup of `t` in `[0, cap]` with `finite(t)` true, assuming the set where it
/// holds is an interval containing `0`.
pub fn ray_boundary(finite: impl Fn(f64) -> bool, start: f64, cap: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = start;
    while finite(hi) {
        lo = hi;
        if hi >= cap {
            return f64::INFINITY;
        }
        hi = (hi * 2.0).min(cap);
    }
    for _ in 0..DOMAIN_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if finite(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

impl TiltedFamily {
    pub fn null(&self) -> &Arc<dyn ExpFamily> {
        &self.null
    }

    pub fn carrier(&self) -> &CarrierAlternative {
        &self.carrier
    }

    pub fn mu_star(&self) -> &Vector {
        &self.carrier.mean_of_suff_stat
    }

    fn raw_log_partition(&self, beta: &Vector) -> f64 {
        match &self.partition {
            Partition::Closed => {
                let v = (self.carrier.mgf_log.as_ref().expect("closed partition"))(beta);
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            }
            Partition::MonteCarlo { stats } => log_mean_exp(stats, beta).0,
        }
    }

    fn mc_weights(stats: &[Vector], beta: &Vector) -> (Vec<f64>, f64) {
        let logs: Vec<f64> = stats.iter().map(|t| t.dot(beta)).collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        let w: Vec<f64> = w.into_iter().map(|x| x / s).collect();
        let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
        (w, ess)
    }

    fn finite_at(&self, beta: &Vector) -> bool {
        match &self.partition {
            Partition::Closed => self.raw_log_partition(beta).is_finite(),
            Partition::MonteCarlo { stats } => {
                let (_, ess) = Self::mc_weights(stats, beta);
                ess.is_finite() && ess >= (1e-3 * stats.len() as f64).max(10.0)
            }
        }
    }

    fn discover_natural_domain(&self) -> Domain {
        let d = self.dim();
        if d == 1 {
            let up = ray_boundary(|t| self.finite_at(&Vector::from_vec(vec![t])), 1e-3, RAY_RADIUS_CAP);
            let down = ray_boundary(|t| self.finite_at(&Vector::from_vec(vec![-t])), 1e-3, RAY_RADIUS_CAP);
            let lo = if down.is_finite() { -down } else { f64::NEG_INFINITY };
            if lo < up {
                return Domain::interval(lo, up);
            }
        }
        match &self.partition {
            Partition::Closed => {
                let f = self.carrier.mgf_log.clone().expect("closed partition");
                Domain::predicate(d, "log-mgf finite", move |b: &[f64]| f(&Vector::from_column_slice(b)).is_finite())
            }
            Partition::MonteCarlo { stats } => {
                let stats = stats.clone();
                Domain::predicate(d, "Monte Carlo effective sample size", move |b: &[f64]| {
                    let (_, ess) = Self::mc_weights(&stats, &Vector::from_column_slice(b));
                    ess >= (1e-3 * stats.len() as f64).max(10.0)
                })
            }
        }
    }

    /// Inner approximation of the mean space. In one dimension it is the
    /// range of the mean map along the canonical domain; otherwise
    /// membership means the mean map can be inverted.
    fn discover_mean_domain(&self) -> Domain {
        let d = self.dim();
        if d == 1 {
            let (lo, hi) = match self.natural_domain.bounds() {
                Some((l, u)) => (l[0], u[0]),
                None => (f64::NEG_INFINITY, f64::INFINITY),
            };
            let probe = |edge: f64, sign: f64| -> f64 {
                let mut best = f64::NAN;
                for j in 1..=12 {
                    let b = if edge.is_finite() {
                        edge - sign * edge.abs().max(1.0) * 10f64.powi(-j)
                    } else {
                        sign * 2f64.powi(j)
                    };
                    if let Some(m) = self.mean_natural(&Vector::from_vec(vec![b])) {
                        if m[0].is_finite() {
                            best = m[0];
                        }
                    }
                }
                best
            };
            let a = probe(lo, -1.0);
            let b = probe(hi, 1.0);
            if a.is_finite() && b.is_finite() && a < b {
                return Domain::interval(a, b);
            }
        }
        let me = TiltedFamilyView { partition_stats: self.mc_stats(), carrier: self.carrier.clone(), nat: self.natural_domain.clone(), null: self.null.clone() };
        Domain::predicate(d, "mean map invertible", move |m: &[f64]| {
            let mu = Vector::from_column_slice(m);
            expfam::solve_natural(&me, &mu, Vector::zeros(mu.len())).is_ok()
        })
    }

    fn mc_stats(&self) -> Option<Arc<Vec<Vector>>> {
        match &self.partition {
            Partition::MonteCarlo { stats } => Some(Arc::new(stats.clone())),
            Partition::Closed => None,
        }
    }
}

/// Minimal stand-in used by the mean-domain predicate so the predicate does
/// not hold a reference to the family it belongs to.
struct TiltedFamilyView {
    partition_stats: Option<Arc<Vec<Vector>>>,
    carrier: CarrierAlternative,
    nat: Domain,
    null: Arc<dyn ExpFamily>,
}

impl ExpFamily for TiltedFamilyView {
    fn name(&self) -> String {
        self.carrier.name.clone()
    }
    fn dim(&self) -> usize {
        self.null.dim()
    }
    fn sample_space(&self) -> SampleSpace {
        self.null.sample_space()
    }
    fn mean_domain(&self) -> Domain {
        Domain::whole(self.dim())
    }
    fn natural_domain(&self) -> Domain {
        self.nat.clone()
    }
    fn log_partition_natural(&self, theta: &Vector) -> f64 {
        if !self.nat.contains(theta.as_slice()) {
            return f64::INFINITY;
        }
        match &self.partition_stats {
            Some(s) => log_mean_exp(s, theta).0,
            None => (self.carrier.mgf_log.as_ref().expect("mgf"))(theta),
        }
    }
    fn mean_natural(&self, theta: &Vector) -> Option<Vector> {
        match &self.partition_stats {
            Some(s) => Some(mc_moments(s, theta).0),
            None => self.carrier.mgf_grad.as_ref().map(|g| g(theta)),
        }
    }
    fn covariance_natural(&self, theta: &Vector) -> Option<Matrix> {
        match &self.partition_stats {
            Some(s) => Some(mc_moments(s, theta).1),
            None => self.carrier.mgf_hess.as_ref().map(|h| h(theta)),
        }
    }
    fn suff_stat(&self, u: &[f64]) -> Result<Vector> {
        self.null.suff_stat(u)
    }
    fn log_base_density(&self, u: &[f64]) -> Result<f64> {
        Ok((self.carrier.log_density)(u))
    }
}

fn log_mean_exp(stats: &[Vector], beta: &Vector) -> (f64, f64) {
    let logs: Vec<f64> = stats.iter().map(|t| t.dot(beta)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
    (m + (s / stats.len() as f64).ln(), m)
}

fn mc_moments(stats: &[Vector], beta: &Vector) -> (Vector, Matrix) {
    let (w, _) = TiltedFamily::mc_weights(stats, beta);
    let d = beta.len();
    let mut mean = Vector::zeros(d);
    for (wi, t) in w.iter().zip(stats) {
        mean += t * *wi;
    }
    let mut cov = Matrix::zeros(d, d);
    for (wi, t) in w.iter().zip(stats) {
        let c = t - &mean;
        cov += &c * c.transpose() * *wi;
    }
    (mean, cov)
}

impl ExpFamily for TiltedFamily {
    fn name(&self) -> String {
        format!("tilt of {} by {}", self.carrier.name, self.null.name())
    }
    fn dim(&self) -> usize {
        self.null.dim()
    }
    fn sample_space(&self) -> SampleSpace {
        self.null.sample_space()
    }
    fn mean_domain(&self) -> Domain {
        self.mean_domain.clone()
    }
    fn mean_domain_convex(&self) -> bool {
        self.carrier.mean_domain_convex
    }
    fn natural_domain(&self) -> Domain {
        self.natural_domain.clone()
    }
    fn log_partition_natural(&self, theta: &Vector) -> f64 {
        if theta.iter().all(|x| *x == 0.0) {
            return 0.0;
        }
        if !self.natural_domain.contains(theta.as_slice()) {
            return f64::INFINITY;
        }
        self.raw_log_partition(theta)
    }
    fn mean_natural(&self, theta: &Vector) -> Option<Vector> {
        match &self.partition {
            Partition::Closed => self.carrier.mgf_grad.as_ref().map(|g| g(theta)),
            Partition::MonteCarlo { stats } => Some(mc_moments(stats, theta).0),
        }
    }
    fn covariance_natural(&self, theta: &Vector) -> Option<Matrix> {
        match &self.partition {
            Partition::Closed => self.carrier.mgf_hess.as_ref().map(|h| h(theta)),
            Partition::MonteCarlo { stats } => Some(mc_moments(stats, theta).1),
        }
    }
    fn natural_from_mean(&self, mu: &Vector) -> Option<Vector> {
        (mu == &self.carrier.mean_of_suff_stat).then(|| Vector::zeros(mu.len()))
    }
    fn suff_stat(&self, u: &[f64]) -> Result<Vector> {
        self.null.suff_stat(u)
    }
    fn log_base_density(&self, u: &[f64]) -> Result<f64> {
        self.null.sample_space().check(u)?;
        Ok((self.carrier.log_density)(u))
    }
    fn sample_natural(&self, theta: &Vector, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        if theta.iter().all(|x| *x == 0.0) {
            self.carrier.sampler.as_ref().map(|s| s(rng))
        } else {
            None
        }
    }
    fn is_stochastic(&self) -> bool {
        matches!(self.partition, Partition::MonteCarlo { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Null,
    Alternative,
    Both,
}

/// Value of the gap `f(beta; anchor) = log Z_q - log Z_p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Gap {
    pub value: f64,
    /// Which canonical domain `beta` falls outside of, if any.
    pub outside: Option<Side>,
}

fn check_anchor(null: &dyn ExpFamily, tilted: &dyn ExpFamily, anchor: &Vector) -> Result<()> {
    for fam in [null, tilted] {
        if !fam.mean_domain().contains(anchor.as_slice()) {
            return Err(Error::Domain {
                what: format!("mean domain of {}", fam.name()),
                detail: format!("anchor {:?}", anchor.as_slice()),
            });
        }
    }
    Ok(())
}

pub fn f_gap(null: &dyn ExpFamily, tilted: &dyn ExpFamily, beta: &Vector, anchor: &Vector) -> Result<Gap> {
    check_anchor(null, tilted, anchor)?;
    let lp = log_partition_at(null, beta, anchor)?;
    let lq = log_partition_at(tilted, beta, anchor)?;
    let outside = match (lp.is_finite(), lq.is_finite()) {
        (true, true) => None,
        (false, true) => Some(Side::Null),
        (true, false) => Some(Side::Alternative),
        (false, false) => Some(Side::Both),
    };
    Ok(match outside {
        None => Gap { value: lq - lp, outside },
        Some(_) => Gap { value: f64::INFINITY, outside },
    })
}

/// `grad f = E_{Q_beta} t - E_{P_beta} t`.
pub fn f_gradient(null: &dyn ExpFamily, tilted: &dyn ExpFamily, beta: &Vector, anchor: &Vector) -> Result<Vector> {
    check_anchor(null, tilted, anchor)?;
    Ok(mean_from_canonical(tilted, beta, anchor)? - mean_from_canonical(null, beta, anchor)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalCheck {
    pub psd: bool,
    pub sigma_p: Vec<Vec<f64>>,
    pub sigma_q: Vec<Vec<f64>>,
    pub difference_spectrum: Vec<f64>,
    pub min_eigenvalue: f64,
    pub threshold: f64,
    pub stochastic: bool,
}

pub(crate) fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Local e-variable check: `Sigma_p(mu*) - Sigma_q(mu*)` PSD with tolerance
/// `tol * ||Sigma_p||`.
pub fn local_evar_check(null: &dyn ExpFamily, tilted: &dyn ExpFamily, mu_star: &Vector, tol: f64) -> Result<LocalCheck> {
    check_anchor(null, tilted, mu_star)?;
    let sp = covariance_at_mean(null, mu_star)?;
    let sq = covariance_at_mean(tilted, mu_star)?;
    let diff = &sp - &sq;
    let v = psd_test_scaled(&diff, tol, spectral_norm(&sp)?)?;
    Ok(LocalCheck {
        psd: v.psd,
        sigma_p: rows(&sp),
        sigma_q: rows(&sq),
        difference_spectrum: v.eigenvalues,
        min_eigenvalue: v.min_eigenvalue,
        threshold: v.threshold,
        stochastic: tilted.is_stochastic() || null.is_stochastic(),
    })
}

/// Canonical domain of `fam` at `anchor`, re-exported for convenience.
pub fn canonical_domain_at(fam: &dyn ExpFamily, anchor: &Vector) -> Result<Domain> {
    canonical_domain(fam, anchor)
}
