//! Expectations over finite or countable discrete supports.

use std::sync::Arc;

use statrs::function::gamma::ln_gamma;

use super::{ExpectationEstimate, Method};
use crate::error::{Error, Result};

/// Truncation target for countable supports.
pub const TAIL_TARGET: f64 = 1e-12;
const MAX_TRUNCATION: u64 = 10_000_000;
const MAX_BOX: u64 = 50_000_000;

type LogPmf = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `tail(i, n)` bounds `P(Y_i >= n)`.
type TailBound = Arc<dyn Fn(usize, u64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DiscreteSupport {
    /// Points with their probabilities.
    Finite(Vec<(Vec<f64>, f64)>),
    /// Support `N^dims` with a per-coordinate tail bound.
    Countable { dims: usize, log_pmf: LogPmf, tail: Option<TailBound> },
}

impl std::fmt::Debug for DiscreteSupport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DiscreteSupport::Finite(p) => write!(f, "Finite({} points)", p.len()),
            DiscreteSupport::Countable { dims, tail, .. } => {
                write!(f, "Countable(dims={dims}, tail bound: {})", tail.is_some())
            }
        }
    }
}

impl DiscreteSupport {
    pub fn finite(points: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if points.iter().any(|(_, p)| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = points.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscreteSupport::Finite(points))
    }

    /// All of `{0,1}^k` under independent Bernoulli coordinates.
    pub fn binary_product(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("Bernoulli probabilities must lie in [0,1]".into()));
        }
        let k = probs.len();
        if k > 24 {
            return Err(Error::Unsupported(format!("enumerating 2^{k} outcomes")));
        }
        let pts = (0..1u64 << k)
            .map(|mask| {
                let u: Vec<f64> = (0..k).map(|i| ((mask >> i) & 1) as f64).collect();
                let p = u.iter().zip(probs).map(|(y, p)| if *y == 1.0 { *p } else { 1.0 - p }).product();
                (u, p)
            })
            .collect();
        Ok(DiscreteSupport::Finite(pts))
    }

    pub fn countable(
        dims: usize,
        log_pmf: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        tail: Option<TailBound>,
    ) -> Self {
        DiscreteSupport::Countable { dims, log_pmf: Arc::new(log_pmf), tail }
    }

    /// Independent Poisson coordinates with the Chernoff bound
    /// `P(Y >= n) <= exp(-r) (e r / n)^n` for `n > r`.
    pub fn poisson_product(rates: &[f64]) -> Result<Self> {
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter("Poisson rates must be positive".into()));
        }
        let r1 = rates.to_vec();
        let r2 = rates.to_vec();
        Ok(DiscreteSupport::Countable {
            dims: rates.len(),
            log_pmf: Arc::new(move |u: &[f64]| {
                u.iter().zip(&r1).map(|(y, r)| y * r.ln() - r - ln_gamma(y + 1.0)).sum()
            }),
            tail: Some(Arc::new(move |i: usize, n: u64| poisson_tail_bound(r2[i], n))),
        })
    }
}

pub fn poisson_tail_bound(rate: f64, n: u64) -> f64 {
    let n = n as f64;
    if n <= rate {
        return 1.0;
    }
    (-rate + n * (std::f64::consts::E * rate / n).ln()).exp().min(1.0)
}

/// `inf_t exp(log_mgf(t) - t n)` over `t` in `(0, t_max)`: a geometric scan
/// refined by golden-section search around the best grid point.
pub fn chernoff_tail(log_mgf: impl Fn(f64) -> f64, t_max: f64, n: f64) -> f64 {
    let grid = |j: i32| {
        if t_max.is_finite() {
            t_max * (1.0 - 0.9f64.powi(j + 1))
        } else {
            1e-4 * 1.1f64.powi(j)
        }
    };
    let exponent = |t: f64| {
        let v = log_mgf(t);
        if v.is_finite() { v - t * n } else { f64::INFINITY }
    };
    let mut best_j = 0;
    let mut best = f64::INFINITY;
    for j in 0..200 {
        let e = exponent(grid(j));
        if e < best {
            best = e;
            best_j = j;
        }
    }
    if best.is_finite() {
        let (mut a, mut b) = (if best_j == 0 { 0.0 } else { grid(best_j - 1) }, grid(best_j + 1));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if exponent(c) < exponent(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best = best.min(exponent(0.5 * (a + b)));
    }
    best.exp().min(1.0)
}

#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

fn for_each_in_box(limits: &[u64], mut f: impl FnMut(&[f64])) {
    let mut idx = vec![0u64; limits.len()];
    let mut point = vec![0.0; limits.len()];
    loop {
        for (p, i) in point.iter_mut().zip(&idx) {
            *p = *i as f64;
        }
        f(&point);
        let mut j = 0;
        loop {
            if j == idx.len() {
                return;
            }
            idx[j] += 1;
            if idx[j] < limits[j] {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// `E[integrand(U)]`. Countable supports start from a box where each
/// coordinate's tail bound drops below `1e-12` and grow by 25% until the
/// integrand-weighted shell contributions, extrapolated geometrically, fall
/// below `1e-12` relative. The error bound adds that estimate to the dropped
/// probability mass.
pub fn expect_exact_sum(support: &DiscreteSupport, integrand: &dyn Fn(&[f64]) -> f64) -> Result<ExpectationEstimate> {
    match support {
        DiscreteSupport::Finite(points) => {
            let mut value = 0.0;
            for (u, p) in points {
                if *p > 0.0 {
                    value += p * integrand(u);
                }
            }
            Ok(ExpectationEstimate {
                value,
                method: Method::ExactSum,
                error_bound: 0.0,
                diverged: !value.is_finite(),
                evaluations: points.len(),
            })
        }
        DiscreteSupport::Countable { dims, log_pmf, tail } => {
            let tail = tail
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("countable support needs a tail bound".into()))?;
            let target = TAIL_TARGET / *dims as f64;
            let mut limits = Vec::with_capacity(*dims);
            for i in 0..*dims {
                let mut n = 1u64;
                while tail(i, n) >= target {
                    n = if n < 64 { n + 1 } else { n + n / 8 };
                    if n > MAX_TRUNCATION {
                        return Err(Error::Inconclusive(format!("tail bound for coordinate {i} does not fall below {target:e}")));
                    }
                }
                limits.push(n);
            }
            let sums = |limits: &[u64]| {
                let inner: Vec<u64> = limits.iter().map(|n| ((*n as f64) * 0.8).ceil() as u64).collect();
                let inner2: Vec<u64> = inner.iter().map(|n| ((*n as f64) * 0.8).ceil() as u64).collect();
                let mut acc = [Kahan::default(); 3];
                for_each_in_box(limits, |u| {
                    let lp = log_pmf(u);
                    if lp == f64::NEG_INFINITY {
                        return;
                    }
                    let term = lp.exp() * integrand(u);
                    acc[0].add(term);
                    if u.iter().zip(&inner).all(|(x, n)| (*x as u64) < *n) {
                        acc[1].add(term);
                        if u.iter().zip(&inner2).all(|(x, n)| (*x as u64) < *n) {
                            acc[2].add(term);
                        }
                    }
                });
                (acc[0].sum, acc[1].sum, acc[2].sum)
            };
            let (full, tail_estimate, volume) = loop {
                let volume: u64 = limits.iter().product();
                if volume > MAX_BOX {
                    return Err(Error::Unsupported(format!("truncated support has {volume} points")));
                }
                let (full, part, part2) = sums(&limits);
                // contributions of successive 20% shells, extrapolated geometrically
                let (s1, s2) = ((full - part).abs(), (part - part2).abs());
                let ratio = if s1 == 0.0 { 0.0 } else if s2 > 0.0 { s1 / s2 } else { 1.0 };
                let estimate = if ratio < 1.0 { s1 * ratio / (1.0 - ratio) } else { f64::INFINITY };
                if !full.is_finite() || estimate <= TAIL_TARGET * (1.0 + full.abs()) {
                    break (full, estimate, volume);
                }
                for n in limits.iter_mut() {
                    *n = ((*n as f64) * 1.25).ceil() as u64;
                }
                if limits.iter().product::<u64>() > MAX_BOX {
                    break (full, estimate, volume);
                }
            };
            let dropped: f64 = (0..*dims).map(|i| tail(i, limits[i])).sum();
            Ok(ExpectationEstimate {
                value: full,
                method: Method::ExactSum,
                error_bound: dropped + tail_estimate,
                diverged: !full.is_finite(),
                evaluations: volume as usize,
            })
        }
    }
}
