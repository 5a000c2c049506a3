//! Data behind the three illustration figures: Gaussian-scale tilt
//! trajectories, Bernoulli 2-sample mean curves, and inverse-Gaussian ratio
//! expectations under exponential nulls.

use std::f64::consts::PI;

use serde::Serialize;

use super::quadrature::{integrate, Scheme};
use super::ExpectationEstimate;
use crate::error::{Error, Result};
use crate::models::gaussian::gaussian_scale_tilted_member;
use crate::models::ksample::bernoulli_tilted_means;
use crate::models::IgRegime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

impl std::str::FromStr for Figure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            other => Err(Error::InvalidParameter(format!("unknown figure id '{other}' (expected fig1, fig2 or fig3)"))),
        }
    }
}

/// Grids for every figure; defaults are what the CLI prints in its metadata.
#[derive(Clone, Debug, Serialize)]
pub struct FigureParams {
    /// `(m, s^2)` carriers for the Gaussian-scale trajectories.
    pub scale_pairs: Vec<(f64, f64)>,
    /// Points of the log-spaced offset `c - beta` (times `c`) from `1e-2` to `1e3`.
    pub trajectory_points: usize,
    /// Range of the second Bernoulli mean; the first is `1 - m2`.
    pub anchor_range: (f64, f64),
    pub anchor_count: usize,
    pub beta_range: (f64, f64),
    pub beta_count: usize,
    pub lambda: f64,
    pub mus: Vec<f64>,
    pub mu_prime_step: f64,
    pub mu_prime_count: usize,
}

impl Default for FigureParams {
    fn default() -> Self {
        FigureParams {
            scale_pairs: vec![(-3.0, 9.0), (2.0, 4.0), (1.0, 1.0)],
            trajectory_points: 60,
            anchor_range: (0.5, 0.9),
            anchor_count: 5,
            beta_range: (-12.0, 12.0),
            beta_count: 97,
            lambda: 2.0,
            mus: vec![0.8, 1.5, 2.5],
            mu_prime_step: 0.125,
            mu_prime_count: 64,
        }
    }
}

impl FigureParams {
    pub fn mu_primes(&self) -> Vec<f64> {
        (1..=self.mu_prime_count).map(|i| self.mu_prime_step * i as f64).collect()
    }

    pub fn anchors(&self) -> Vec<(f64, f64)> {
        linspace(self.anchor_range.0, self.anchor_range.1, self.anchor_count).into_iter().map(|m2| (1.0 - m2, m2)).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        linspace(self.beta_range.0, self.beta_range.1, self.beta_count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FigureRow {
    pub figure: String,
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub flag: String,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn row(figure: &str, series: &str, x: f64, y: f64, flag: &str) -> FigureRow {
    FigureRow { figure: figure.into(), series: series.into(), x, y, flag: flag.into() }
}

pub fn figure_data(which: Figure, params: &FigureParams) -> Result<Vec<FigureRow>> {
    match which {
        Figure::Fig1 => fig1(params),
        Figure::Fig2 => fig2(params),
        Figure::Fig3 => fig3(params),
    }
}

fn fig1(p: &FigureParams) -> Result<Vec<FigureRow>> {
    let mut rows = Vec::new();
    for &(m, s2) in &p.scale_pairs {
        if !(s2 > 0.0) || !m.is_finite() {
            return Err(Error::InvalidParameter(format!("bad (m, s2) = ({m}, {s2})")));
        }
        let series = format!("m={m} s2={s2}");
        let c = 0.5 / s2;
        let n = p.trajectory_points.max(2);
        let mut betas: Vec<f64> = (0..n).map(|i| {
            let e = -2.0 + 5.0 * i as f64 / (n - 1) as f64;
            c - c * 10f64.powf(e)
        }).collect();
        betas.push(0.0);
        betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for b in betas {
            let (mt, vt) = gaussian_scale_tilted_member(m, s2, b).expect("beta below c");
            rows.push(row("fig1", &series, mt, vt, if b == 0.0 { "anchor" } else { "trajectory" }));
        }
        rows.push(row("fig1", &series, 0.0, s2 + m * m, "projection"));
    }
    Ok(rows)
}

fn fig2(p: &FigureParams) -> Result<Vec<FigureRow>> {
    let mut rows = Vec::new();
    for (m1, m2) in p.anchors() {
        if !(m1 > 0.0 && m1 < 1.0 && m2 > 0.0 && m2 < 1.0) {
            return Err(Error::InvalidParameter(format!("anchor ({m1}, {m2}) outside (0,1)^2")));
        }
        for (j, name) in ["m1", "m2"].iter().enumerate() {
            let series = format!("anchor=({m1:.3},{m2:.3}) {name}");
            for b in p.betas() {
                let means = bernoulli_tilted_means(&[m1, m2], b);
                rows.push(row("fig2", &series, b, means[j], if b == 0.0 { "anchor" } else { "curve" }));
            }
        }
    }
    Ok(rows)
}

fn ig_log_density(x: f64, mu: f64, lambda: f64) -> f64 {
    0.5 * (lambda / (2.0 * PI * x.powi(3))).ln() - lambda * (x - mu).powi(2) / (2.0 * mu * mu * x)
}

fn exp_log_density(x: f64, mean: f64) -> f64 {
    -mean.ln() - x / mean
}

/// `E[q(U)/p(U)]` for `U` exponential with mean `mu_prime`, where `q` is the
/// inverse Gaussian with mean `mu` and shape `lambda`, and `p` the
/// exponential with mean `mu`. Computed directly from the two densities.
pub fn ig_ratio_expectation(lambda: f64, mu: f64, mu_prime: f64) -> Result<ExpectationEstimate> {
    if !(lambda > 0.0 && mu > 0.0 && mu_prime > 0.0) {
        return Err(Error::InvalidParameter("lambda, mu and mu' must be positive".into()));
    }
    let f = move |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        (exp_log_density(x, mu_prime) + ig_log_density(x, mu, lambda) - exp_log_density(x, mu)).exp()
    };
    integrate(&f, Scheme::HalfLine { scale: mu })
}

fn fig3(p: &FigureParams) -> Result<Vec<FigureRow>> {
    let mut rows = Vec::new();
    for &mu in &p.mus {
        let regime = IgRegime::classify(p.lambda, mu);
        let series = format!("mu={mu} {}", regime.label());
        for mp in p.mu_primes() {
            let (y, flag) = match ig_ratio_expectation(p.lambda, mu, mp) {
                Ok(e) if e.diverged => (e.value, "diverged"),
                Ok(e) => (e.value, "finite"),
                Err(Error::Inconclusive(_)) => (f64::NAN, "inconclusive"),
                Err(e) => return Err(e),
            };
            rows.push(row("fig3", &series, mp, y, flag));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ig_ratio_is_one_at_the_anchor() {
        let e = ig_ratio_expectation(2.0, 1.5, 1.5).unwrap();
        assert!((e.value - 1.0).abs() < 1e-8, "{e:?}");
    }

    #[test]
    fn figure_ids_parse() {
        assert_eq!("fig2".parse::<Figure>().unwrap(), Figure::Fig2);
        assert!("fig9".parse::<Figure>().is_err());
    }

    #[test]
    fn fig1_has_anchor_and_projection() {
        let rows = figure_data(Figure::Fig1, &FigureParams::default()).unwrap();
        let a = rows.iter().find(|r| r.series == "m=-3 s2=9" && r.flag == "anchor").unwrap();
        assert_eq!((a.x, a.y), (-3.0, 9.0));
        let pr = rows.iter().find(|r| r.series == "m=-3 s2=9" && r.flag == "projection").unwrap();
        assert_eq!((pr.x, pr.y), (0.0, 18.0));
    }
}
