//! Growth rate `E_{Q_mu}[log S]` of the simple e-variable, which equals
//! `D(Q_mu || P_mu)`.

use crate::error::{Error, Result};
use crate::expfam::{canonical_from_mean, log_density_at_mean, log_partition_at, ExpFamily, SampleSpace, Vector};
use crate::tilt::TiltedFamily;
use crate::verify::exact::{chernoff_tail, expect_exact_sum, DiscreteSupport};
use crate::verify::mc::expect_monte_carlo;
use crate::verify::quadrature::{integrate, Scheme};
use crate::verify::ExpectationEstimate;

/// Monte Carlo draws when no deterministic rule applies.
pub const GROWTH_MC_SAMPLES: usize = 200_000;

fn log_ratio(tilted: &dyn ExpFamily, null: &dyn ExpFamily, mu: &Vector, u: &[f64]) -> (f64, f64) {
    let lq = log_density_at_mean(tilted, mu, u).unwrap_or(f64::NEG_INFINITY);
    let lp = log_density_at_mean(null, mu, u).unwrap_or(f64::NEG_INFINITY);
    (lq, lp)
}

/// `q log(q/p)` with the convention `0 log 0 = 0`.
fn kl_term(lq: f64, lp: f64) -> f64 {
    if lq == f64::NEG_INFINITY {
        0.0
    } else {
        lq.exp() * (lq - lp)
    }
}

/// Exact for binary data, truncated summation for counts, quadrature for
/// one-dimensional continuous data, and importance-weighted Monte Carlo
/// from the carrier's sampler otherwise.
pub fn growth_rate_estimate(tilted: &TiltedFamily, null: &dyn ExpFamily, mu: &Vector) -> Result<ExpectationEstimate> {
    let space = null.sample_space();
    let tq: &dyn ExpFamily = tilted;
    match space {
        SampleSpace::Binary(k) => {
            let pts = (0..1u64 << k)
                .map(|mask| ((0..k).map(|i| ((mask >> i) & 1) as f64).collect::<Vec<_>>(), 1.0))
                .collect::<Vec<_>>();
            let mut value = 0.0;
            for (u, _) in &pts {
                let (lq, lp) = log_ratio(tq, null, mu, u);
                value += kl_term(lq, lp);
            }
            Ok(ExpectationEstimate {
                value,
                method: crate::verify::Method::ExactSum,
                error_bound: 0.0,
                diverged: !value.is_finite(),
                evaluations: pts.len(),
            })
        }
        SampleSpace::Counts(k) if null.dim() == 1 && statistic_dominates(null, k) => {
            // Chernoff bound for the statistic, which dominates each coordinate
            let log_mgf = |s: f64| log_partition_at(tq, &Vector::from_vec(vec![s]), mu).unwrap_or(f64::INFINITY);
            let bounds: Vec<f64> = (0..=4096u64).map(|n| chernoff_tail(log_mgf, f64::INFINITY, n as f64)).collect();
            if bounds[4096] >= 1e-13 {
                return Err(Error::Inconclusive("statistic tail too heavy for truncated summation".into()));
            }
            let support = DiscreteSupport::countable(
                k,
                |_| 0.0,
                Some(std::sync::Arc::new(move |_i: usize, n: u64| bounds[(n as usize).min(4096)])),
            );
            // counting measure: fold the pmf of Q_mu into the integrand
            expect_exact_sum(&support, &|u: &[f64]| {
                let (lq, lp) = log_ratio(tq, null, mu, u);
                kl_term(lq, lp)
            })
        }
        SampleSpace::Real(1) | SampleSpace::PositiveReal(1) => {
            let positive = matches!(space, SampleSpace::PositiveReal(_));
            let (center, scale) = bulk(&|x| log_ratio(tq, null, mu, &[x]).0, positive)?;
            let f = |x: f64| {
                if positive && x <= 0.0 {
                    return 0.0;
                }
                let (lq, lp) = log_ratio(tq, null, mu, &[x]);
                kl_term(lq, lp)
            };
            let scheme = if positive { Scheme::HalfLine { scale: center.max(scale) } } else { Scheme::RealLine { center, scale } };
            integrate(&f, scheme)
        }
        _ => {
            let sampler = tilted
                .carrier()
                .sampler
                .clone()
                .ok_or_else(|| Error::Unsupported("growth rate needs a sampler for this sample space".into()))?;
            let beta = canonical_from_mean(tq, mu, tilted.mu_star())?;
            let log_z = log_partition_at(tq, &beta, tilted.mu_star())?;
            let integrand = |u: &[f64]| {
                let t = match null.suff_stat(u) {
                    Ok(t) => t,
                    Err(_) => return f64::NAN,
                };
                let (lq, lp) = log_ratio(tq, null, mu, u);
                (beta.dot(&t) - log_z).exp() * (lq - lp)
            };
            expect_monte_carlo(&|r| sampler(r), &integrand, GROWTH_MC_SAMPLES, 0)
        }
    }
}

/// `D(Q_mu || P_mu)`; small negative numerical noise is clipped to zero.
pub fn growth_rate(tilted: &TiltedFamily, null: &dyn ExpFamily, mu: &Vector) -> Result<f64> {
    let e = growth_rate_estimate(tilted, null, mu)?;
    if e.diverged || !e.value.is_finite() {
        return Err(Error::NonFinite(format!("growth rate at {:?}", mu.as_slice())));
    }
    if e.value < -(3.0 * e.error_bound + 1e-10) {
        return Err(Error::Contract(format!("negative divergence {} at {:?}", e.value, mu.as_slice())));
    }
    Ok(e.value.max(0.0))
}

fn statistic_dominates(null: &dyn ExpFamily, k: usize) -> bool {
    (0..k).all(|i| {
        let mut u = vec![0.0; k];
        u[i] = 5.0;
        null.suff_stat(&u).map(|t| t[0] >= 5.0).unwrap_or(false)
    })
}

/// Location of the density's peak and a width covering where it is within
/// `e^-20` of the peak, from a log-spaced scan.
fn bulk(log_q: &dyn Fn(f64) -> f64, positive: bool) -> Result<(f64, f64)> {
    let mut xs: Vec<f64> = (0..=480).map(|i| 10f64.powf(-8.0 + 16.0 * i as f64 / 480.0)).collect();
    if !positive {
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        xs.extend(neg);
        xs.push(0.0);
    }
    let vals: Vec<(f64, f64)> = xs.iter().map(|&x| (x, log_q(x))).filter(|(_, v)| v.is_finite()).collect();
    let (mode, peak) = vals
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, (x, v)| if v > acc.1 { (x, v) } else { acc });
    if !peak.is_finite() {
        return Err(Error::NonFinite("density vanishes on the scan".into()));
    }
    let inside: Vec<f64> = vals.iter().filter(|(_, v)| *v > peak - 20.0).map(|(x, _)| *x).collect();
    let lo = inside.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = inside.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((mode, ((hi - lo) / 8.0).max(1e-8)))
}
