//! Adaptive Gauss-Kronrod quadrature on intervals, the half-line and the
//! real line, with a truncation-doubling divergence detector, plus
//! Gauss-Hermite rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::SymmetricEigen;
use serde::Serialize;

use super::{ExpectationEstimate, Method};
use crate::error::{Error, Result};
use crate::expfam::Matrix;

pub const MAX_DEPTH: u32 = 24;
pub const REL_TOL: f64 = 1e-10;
pub const ABS_TOL: f64 = 1e-15;
/// Truncation doublings scanned for divergence.
pub const MAX_DOUBLINGS: i32 = 48;
/// Consecutive >1% growths that declare divergence.
pub const DIVERGENCE_STREAK: usize = 4;
const MAX_INTERVALS: usize = 200_000;
/// Interval budget of one divergence-scan window; the scan only needs the
/// window sizes to a few digits.
const SCAN_INTERVALS: usize = 2_000;
/// Accepted error of the fallback when the transformed rule cannot reach `REL_TOL`.
const FALLBACK_REL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Scheme {
    Interval { a: f64, b: f64 },
    /// `[0, inf)`; `scale` is a characteristic length of the integrand's bulk.
    HalfLine { scale: f64 },
    RealLine { center: f64, scale: f64 },
    /// Gauss-Hermite with `order` nodes, compared against `2 * order`.
    GaussHermite { center: f64, scale: f64, order: usize },
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    depth: u32,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err.total_cmp(&o.err) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

struct Adaptive {
    value: f64,
    err: f64,
    evaluations: usize,
    converged: bool,
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Adaptive {
    adaptive_capped(f, a, b, rel_tol, MAX_INTERVALS)
}

fn adaptive_capped(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, max_intervals: usize) -> Adaptive {
    let (v, e) = gk15(f, a, b);
    let mut evals = 15;
    if !v.is_finite() {
        return Adaptive { value: v, err: f64::INFINITY, evaluations: evals, converged: false };
    }
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, err: e, depth: 0 });
    let (mut total, mut err) = (v, e);
    let (mut frozen_value, mut frozen_err) = (0.0, 0.0);
    let mut steps = 0usize;
    let mut next_refresh = 64usize;
    loop {
        steps += 1;
        if steps == next_refresh {
            next_refresh += heap.len().max(64);
            // refresh the running sums against drift
            total = heap.iter().map(|p| p.value).sum::<f64>() + frozen_value;
            err = heap.iter().map(|p| p.err).sum::<f64>() + frozen_err;
        }
        let tol = ABS_TOL.max(rel_tol * total.abs());
        if !total.is_finite() {
            return Adaptive { value: total, err: f64::INFINITY, evaluations: evals, converged: false };
        }
        if err <= tol {
            return Adaptive { value: total, err, evaluations: evals, converged: true };
        }
        if frozen_err > tol || heap.len() > max_intervals {
            return Adaptive { value: total, err, evaluations: evals, converged: false };
        }
        let Some(p) = heap.pop() else {
            return Adaptive { value: total, err, evaluations: evals, converged: false };
        };
        if p.depth >= MAX_DEPTH {
            frozen_value += p.value;
            frozen_err += p.err;
            continue;
        }
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(f, p.a, m);
        let (v2, e2) = gk15(f, m, p.b);
        evals += 30;
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, value: v1, err: e1, depth: p.depth + 1 });
        heap.push(Piece { a: m, b: p.b, value: v2, err: e2, depth: p.depth + 1 });
    }
}

/// Integral over `[lo, hi]` of a finite-interval integrand.
fn interval_estimate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<ExpectationEstimate> {
    let r = adaptive(f, a, b, REL_TOL);
    if !r.value.is_finite() {
        return Ok(diverged(r.value, r.evaluations));
    }
    if !r.converged {
        return Err(Error::Inconclusive(format!(
            "quadrature on [{a}, {b}] did not converge within depth {MAX_DEPTH} (error estimate {:e})",
            r.err
        )));
    }
    Ok(ExpectationEstimate { value: r.value, method: Method::Quadrature, error_bound: r.err, diverged: false, evaluations: r.evaluations })
}

fn diverged(lower: f64, evaluations: usize) -> ExpectationEstimate {
    ExpectationEstimate {
        value: if lower.is_nan() { f64::INFINITY } else { lower },
        method: Method::Quadrature,
        error_bound: f64::INFINITY,
        diverged: true,
        evaluations,
    }
}

struct Scan {
    total: f64,
    err: f64,
    diverged: bool,
    evaluations: usize,
    /// Ratio of the last two increments, used to extrapolate the tail.
    last_piece: f64,
    ratio: f64,
}

/// Integrate over growing windows `[0, s 2^j]`; `window(t0, t1)` returns the
/// contribution of the shell between the two radii.
fn doubling_scan(window: &dyn Fn(f64, f64) -> Adaptive, scale: f64) -> Scan {
    let first = window(0.0, scale);
    let mut total = first.value;
    let mut err = first.err;
    let mut evaluations = first.evaluations;
    let mut prev = total.abs();
    let mut streak = 0;
    let mut ratio = 0.0;
    let mut last_piece = total;
    if !total.is_finite() {
        return Scan { total, err, diverged: true, evaluations, last_piece, ratio };
    }
    for j in 1..=MAX_DOUBLINGS {
        let r = window(scale * 2f64.powi(j - 1), scale * 2f64.powi(j));
        evaluations += r.evaluations;
        let piece = r.value;
        if !piece.is_finite() {
            return Scan { total, err, diverged: true, evaluations, last_piece, ratio };
        }
        let growth = if total.abs() > 0.0 { piece.abs() / total.abs() } else if piece != 0.0 { f64::INFINITY } else { 0.0 };
        if growth > 0.01 && piece.abs() >= prev * (1.0 - 1e-12) {
            streak += 1;
        } else {
            streak = 0;
        }
        ratio = if prev > 0.0 { piece.abs() / prev } else { 0.0 };
        prev = piece.abs();
        last_piece = piece;
        total += piece;
        err += r.err;
        if streak >= DIVERGENCE_STREAK {
            return Scan { total, err, diverged: true, evaluations, last_piece, ratio };
        }
    }
    Scan { total, err, diverged: false, evaluations, last_piece, ratio }
}

fn unbounded_estimate(
    transformed: &dyn Fn(f64) -> f64,
    t_range: (f64, f64),
    window: &dyn Fn(f64, f64) -> Adaptive,
    scale: f64,
) -> Result<ExpectationEstimate> {
    let scan = doubling_scan(window, scale);
    if scan.diverged {
        return Ok(diverged(scan.total, scan.evaluations));
    }
    let r = adaptive(transformed, t_range.0, t_range.1, REL_TOL);
    let evaluations = scan.evaluations + r.evaluations;
    if r.converged && r.value.is_finite() {
        return Ok(ExpectationEstimate {
            value: r.value,
            method: Method::Quadrature,
            error_bound: r.err,
            diverged: false,
            evaluations,
        });
    }
    // geometric extrapolation of the remaining shells
    let tail = if scan.ratio < 1.0 { scan.last_piece.abs() * scan.ratio / (1.0 - scan.ratio) } else { f64::INFINITY };
    let value = scan.total + tail.copysign(scan.last_piece);
    let bound = tail + scan.err;
    if bound <= FALLBACK_REL_TOL * value.abs().max(ABS_TOL) {
        return Ok(ExpectationEstimate { value, method: Method::Quadrature, error_bound: bound, diverged: false, evaluations });
    }
    Err(Error::Inconclusive(format!(
        "quadrature neither converged within depth {MAX_DEPTH} nor showed divergence (scan total {}, tail bound {:e})",
        scan.total, bound
    )))
}

/// Gauss-Hermite nodes and weights for weight `exp(-z^2)` (Golub-Welsch).
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 || order > 400 {
        return Err(Error::InvalidParameter(format!("Gauss-Hermite order {order} out of range")));
    }
    let mut j = Matrix::zeros(order, order);
    for k in 1..order {
        let b = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

fn hermite_sum(f: &dyn Fn(f64) -> f64, center: f64, scale: f64, order: usize) -> Result<f64> {
    let (z, w) = gauss_hermite(order)?;
    let s = std::f64::consts::SQRT_2 * scale;
    Ok(z.iter().zip(&w).map(|(zi, wi)| wi * (zi * zi).exp() * f(center + s * zi)).sum::<f64>() * s)
}

/// `integral f(x) dx` under `scheme`.
pub fn integrate(f: &dyn Fn(f64) -> f64, scheme: Scheme) -> Result<ExpectationEstimate> {
    match scheme {
        Scheme::Interval { a, b } => {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidParameter(format!("bad interval [{a}, {b}]")));
            }
            interval_estimate(f, a, b)
        }
        Scheme::HalfLine { scale } => {
            check_scale(scale)?;
            // x = s (t/(1-t))^2 keeps tails down to x^(-3/2) bounded at t = 1
            let transformed = |t: f64| {
                let one = 1.0 - t;
                let r = t / one;
                let v = f(scale * r * r);
                if v == 0.0 {
                    0.0
                } else {
                    v * 2.0 * scale * r / (one * one)
                }
            };
            let window = |a: f64, b: f64| adaptive_capped(f, a, b, REL_TOL, SCAN_INTERVALS);
            unbounded_estimate(&transformed, (0.0, 1.0), &window, scale)
        }
        Scheme::RealLine { center, scale } => {
            check_scale(scale)?;
            let transformed = |t: f64| {
                let one = 1.0 - t * t;
                let x = center + scale * t / one;
                let v = f(x);
                if v == 0.0 {
                    0.0
                } else {
                    v * scale * (1.0 + t * t) / (one * one)
                }
            };
            let window = |a: f64, b: f64| {
                let up = adaptive_capped(f, center + a, center + b, REL_TOL, SCAN_INTERVALS);
                let down = adaptive_capped(f, center - b, center - a, REL_TOL, SCAN_INTERVALS);
                Adaptive {
                    value: up.value + down.value,
                    err: up.err + down.err,
                    evaluations: up.evaluations + down.evaluations,
                    converged: up.converged && down.converged,
                }
            };
            unbounded_estimate(&transformed, (-1.0, 1.0), &window, scale)
        }
        Scheme::GaussHermite { center, scale, order } => {
            check_scale(scale)?;
            let coarse = hermite_sum(f, center, scale, order)?;
            let fine = hermite_sum(f, center, scale, 2 * order)?;
            Ok(ExpectationEstimate {
                value: fine,
                method: Method::Quadrature,
                error_bound: (fine - coarse).abs(),
                diverged: !fine.is_finite(),
                evaluations: 3 * order,
            })
        }
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("quadrature scale must be positive, got {scale}")))
    }
}

/// `E[integrand(X)]` for `X` with `density`; points of zero density
/// contribute nothing regardless of the integrand.
pub fn expect_quadrature(
    density: &dyn Fn(f64) -> f64,
    integrand: &dyn Fn(f64) -> f64,
    scheme: Scheme,
) -> Result<ExpectationEstimate> {
    let f = |x: f64| {
        let d = density(x);
        if d == 0.0 {
            0.0
        } else {
            d * integrand(x)
        }
    };
    integrate(&f, scheme)
}
