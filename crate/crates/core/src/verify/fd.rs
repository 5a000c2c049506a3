//! Central finite-difference checks of analytic derivatives.

use serde::Serialize;

use crate::error::Result;
use crate::expfam::{Matrix, Vector, FD_STEP, FD_STEP_NESTED};

#[derive(Clone, Debug, Serialize)]
pub struct FdReport {
    pub pass: bool,
    pub max_rel_error: f64,
    /// `(output, input)` index of the worst entry.
    pub worst_coordinate: Option<(usize, usize)>,
    pub numeric: Vec<Vec<f64>>,
    pub probe_failures: Vec<String>,
}

fn step(x: f64, base: f64) -> f64 {
    base * (1.0 + x.abs())
}

fn compare(numeric: &Matrix, analytic: &Matrix, rel_tol: f64, abs_floor: f64, failures: Vec<String>) -> FdReport {
    let mut worst = None;
    let mut max_rel: f64 = 0.0;
    let mut shape_ok = numeric.shape() == analytic.shape();
    if shape_ok {
        for i in 0..numeric.nrows() {
            for j in 0..numeric.ncols() {
                let (n, a) = (numeric[(i, j)], analytic[(i, j)]);
                let rel = (n - a).abs() / a.abs().max(abs_floor);
                let rel = if rel.is_nan() { f64::INFINITY } else { rel };
                if rel > max_rel || worst.is_none() {
                    max_rel = max_rel.max(rel);
                    worst = Some((i, j));
                }
            }
        }
    } else {
        shape_ok = false;
        max_rel = f64::INFINITY;
    }
    let numeric_rows = (0..numeric.nrows()).map(|i| numeric.row(i).iter().copied().collect()).collect();
    FdReport {
        pass: shape_ok && failures.is_empty() && max_rel <= rel_tol,
        max_rel_error: max_rel,
        worst_coordinate: worst,
        numeric: numeric_rows,
        probe_failures: failures,
    }
}

/// Jacobian check of a vector function: `analytic[(i, j)] = d f_i / d x_j`.
/// Relative errors use `max(|analytic|, abs_floor)` as denominator.
pub fn finite_diff_check(
    f: &dyn Fn(&Vector) -> Result<Vector>,
    point: &Vector,
    analytic: &Matrix,
    rel_tol: f64,
    abs_floor: f64,
) -> FdReport {
    let n = point.len();
    let mut failures = Vec::new();
    let mut cols: Vec<Vector> = Vec::with_capacity(n);
    for j in 0..n {
        let h = step(point[j], FD_STEP);
        let mut up = point.clone();
        let mut down = point.clone();
        up[j] += h;
        down[j] -= h;
        match (f(&up), f(&down)) {
            (Ok(a), Ok(b)) if a.iter().chain(b.iter()).all(|v| v.is_finite()) => cols.push((a - b) / (2.0 * h)),
            (Ok(_), Ok(_)) => {
                failures.push(format!("non-finite value near coordinate {j}"));
                cols.push(Vector::from_element(analytic.nrows(), f64::NAN));
            }
            (Err(e), _) | (_, Err(e)) => {
                failures.push(format!("coordinate {j}: {e}"));
                cols.push(Vector::from_element(analytic.nrows(), f64::NAN));
            }
        }
    }
    let m = if cols.is_empty() { Matrix::zeros(analytic.nrows(), 0) } else { Matrix::from_columns(&cols) };
    compare(&m, analytic, rel_tol, abs_floor, failures)
}

/// Gradient check of a scalar function.
pub fn gradient_check(
    f: &dyn Fn(&Vector) -> Result<f64>,
    point: &Vector,
    analytic: &Vector,
    rel_tol: f64,
    abs_floor: f64,
) -> FdReport {
    let g = |x: &Vector| f(x).map(|v| Vector::from_vec(vec![v]));
    let row = Matrix::from_row_slice(1, analytic.len(), analytic.as_slice());
    finite_diff_check(&g, point, &row, rel_tol, abs_floor)
}

/// Hessian check of a scalar function by second central differences with
/// the nested step.
pub fn hessian_check(
    f: &dyn Fn(&Vector) -> Result<f64>,
    point: &Vector,
    analytic: &Matrix,
    rel_tol: f64,
    abs_floor: f64,
) -> FdReport {
    let n = point.len();
    let mut failures = Vec::new();
    let mut h = Matrix::zeros(n, n);
    let eval = |x: &Vector, failures: &mut Vec<String>| -> f64 {
        match f(x) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                failures.push(format!("non-finite value {v} at {:?}", x.as_slice()));
                f64::NAN
            }
            Err(e) => {
                failures.push(e.to_string());
                f64::NAN
            }
        }
    };
    let f0 = eval(point, &mut failures);
    for i in 0..n {
        let hi = step(point[i], FD_STEP_NESTED);
        for j in i..n {
            let hj = step(point[j], FD_STEP_NESTED);
            let shifted = |si: f64, sj: f64, failures: &mut Vec<String>| {
                let mut x = point.clone();
                x[i] += si * hi;
                x[j] += sj * hj;
                eval(&x, failures)
            };
            let v = if i == j {
                (shifted(1.0, 0.0, &mut failures) - 2.0 * f0 + shifted(-1.0, 0.0, &mut failures)) / (hi * hi)
            } else {
                (shifted(1.0, 1.0, &mut failures) - shifted(1.0, -1.0, &mut failures) - shifted(-1.0, 1.0, &mut failures)
                    + shifted(-1.0, -1.0, &mut failures))
                    / (4.0 * hi * hj)
            };
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    compare(&h, analytic, rel_tol, abs_floor, failures)
}
