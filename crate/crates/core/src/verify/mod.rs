//! Independent numerical oracles: expectations by exact summation,
//! quadrature and Monte Carlo, finite-difference derivative checks, PSD
//! tests, and figure data.

pub mod exact;
pub mod fd;
pub mod figures;
pub mod mc;
pub mod psd;
pub mod quadrature;

use serde::Serialize;

pub use exact::{expect_exact_sum, DiscreteSupport};
pub use fd::{finite_diff_check, gradient_check, hessian_check, FdReport};
pub use figures::{figure_data, Figure, FigureParams, FigureRow};
pub use mc::expect_monte_carlo;
pub use psd::{psd_test, psd_test_scaled, PsdVerdict};
pub use quadrature::{expect_quadrature, integrate, Scheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactSum,
    Quadrature,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpectationEstimate {
    pub value: f64,
    pub method: Method,
    /// Truncation bound, quadrature error estimate, or 3-sigma half-width.
    pub error_bound: f64,
    /// When set, `value` is only a lower bound.
    pub diverged: bool,
    pub evaluations: usize,
}

impl ExpectationEstimate {
    /// `value <= bound + k * error_bound`, never true for a diverged estimate.
    pub fn at_most(&self, bound: f64, k: f64) -> bool {
        !self.diverged && self.value <= bound + k * self.error_bound
    }
}
