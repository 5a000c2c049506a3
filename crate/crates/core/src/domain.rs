//! Parameter domains: open boxes, intersections of open half-spaces, and
//! opaque membership predicates.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type MembershipFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Box,
    HalfSpaceProduct,
    CustomPredicate,
}

#[derive(Clone)]
pub enum Domain {
    /// Product of intervals; infinite bounds allowed.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        open: bool,
    },
    /// `{x : normals[i] . x < offsets[i]}` for every i.
    HalfSpaces {
        dim: usize,
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
    },
    Predicate {
        dim: usize,
        label: String,
        test: MembershipFn,
    },
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

impl Domain {
    pub fn open_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidParameter(
                "box bounds must be non-empty and of equal length".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l >= u) {
            return Err(Error::InvalidParameter(format!(
                "box requires lower < upper, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Domain::Box { lower, upper, open: true })
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::open_box(vec![lo], vec![hi]).expect("interval bounds")
    }

    pub fn whole(dim: usize) -> Self {
        Domain::Box {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            open: true,
        }
    }

    pub fn positive(dim: usize) -> Self {
        Domain::Box {
            lower: vec![0.0; dim],
            upper: vec![f64::INFINITY; dim],
            open: true,
        }
    }

    pub fn half_spaces(normals: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        let dim = normals.first().map(|n| n.len()).unwrap_or(0);
        if dim == 0 || normals.len() != offsets.len() || normals.iter().any(|n| n.len() != dim) {
            return Err(Error::InvalidParameter("malformed half-space description".into()));
        }
        Ok(Domain::HalfSpaces { dim, normals, offsets })
    }

    pub fn predicate(
        dim: usize,
        label: impl Into<String>,
        test: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        Domain::Predicate { dim, label: label.into(), test: Arc::new(test) }
    }

    pub fn kind(&self) -> DomainKind {
        match self {
            Domain::Box { .. } => DomainKind::Box,
            Domain::HalfSpaces { .. } => DomainKind::HalfSpaceProduct,
            Domain::Predicate { .. } => DomainKind::CustomPredicate,
        }
    }

    pub fn is_open(&self) -> bool {
        match self {
            Domain::Box { open, .. } => *open,
            _ => true,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lower, .. } => lower.len(),
            Domain::HalfSpaces { dim, .. } | Domain::Predicate { dim, .. } => *dim,
        }
    }

    pub fn bounds(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Domain::Box { lower, upper, .. } => Some((lower, upper)),
            _ => None,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().all(|v| v.is_finite()) && self.offending_coordinate(x).is_none()
            && match self {
                Domain::Box { .. } => true,
                Domain::HalfSpaces { normals, offsets, .. } => normals
                    .iter()
                    .zip(offsets)
                    .all(|(n, b)| dot(n, x) < *b),
                Domain::Predicate { test, .. } => test(x),
            }
    }

    /// First coordinate that violates a box bound; `None` for non-box domains.
    pub fn offending_coordinate(&self, x: &[f64]) -> Option<usize> {
        match self {
            Domain::Box { lower, upper, open } => x.iter().enumerate().position(|(i, &v)| {
                if *open {
                    !(v > lower[i] && v < upper[i])
                } else {
                    !(v >= lower[i] && v <= upper[i])
                }
            }),
            _ => None,
        }
    }

    /// Largest `t` with `x + s*dir` inside for all `0 <= s < t`, when it can be
    /// read off the description. `None` for predicate domains.
    pub fn ray_exit(&self, x: &[f64], dir: &[f64]) -> Option<f64> {
        match self {
            Domain::Box { lower, upper, .. } => {
                let mut t = f64::INFINITY;
                for i in 0..x.len() {
                    if dir[i] > 0.0 {
                        t = t.min((upper[i] - x[i]) / dir[i]);
                    } else if dir[i] < 0.0 {
                        t = t.min((lower[i] - x[i]) / dir[i]);
                    }
                }
                Some(t.max(0.0))
            }
            Domain::HalfSpaces { normals, offsets, .. } => {
                let mut t = f64::INFINITY;
                for (n, b) in normals.iter().zip(offsets) {
                    let rate = dot(n, dir);
                    if rate > 0.0 {
                        t = t.min((b - dot(n, x)) / rate);
                    }
                }
                Some(t.max(0.0))
            }
            Domain::Predicate { .. } => None,
        }
    }

    /// `{y : y + shift in self}`.
    pub fn shifted(&self, shift: &[f64]) -> Domain {
        match self {
            Domain::Box { lower, upper, open } => Domain::Box {
                lower: lower.iter().zip(shift).map(|(l, s)| l - s).collect(),
                upper: upper.iter().zip(shift).map(|(u, s)| u - s).collect(),
                open: *open,
            },
            Domain::HalfSpaces { dim, normals, offsets } => Domain::HalfSpaces {
                dim: *dim,
                normals: normals.clone(),
                offsets: normals
                    .iter()
                    .zip(offsets)
                    .map(|(n, b)| b - dot(n, shift))
                    .collect(),
            },
            Domain::Predicate { dim, label, test } => {
                let test = test.clone();
                let shift = shift.to_vec();
                Domain::Predicate {
                    dim: *dim,
                    label: format!("{label} (shifted)"),
                    test: Arc::new(move |y: &[f64]| {
                        let z: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
                        test(&z)
                    }),
                }
            }
        }
    }

    /// Structural equality of two box domains up to `tol`; `None` when either
    /// is not a box.
    pub fn box_equal(&self, other: &Domain, tol: f64) -> Option<bool> {
        let (l1, u1) = self.bounds()?;
        let (l2, u2) = other.bounds()?;
        let close = |a: f64, b: f64| a == b || (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()));
        Some(
            l1.len() == l2.len()
                && l1.iter().zip(l2).all(|(a, b)| close(*a, *b))
                && u1.iter().zip(u2).all(|(a, b)| close(*a, *b)),
        )
    }

    pub fn describe(&self) -> String {
        match self {
            Domain::Box { lower, upper, open } => {
                let (l, r) = if *open { ('(', ')') } else { ('[', ']') };
                let parts: Vec<String> = lower
                    .iter()
                    .zip(upper)
                    .map(|(a, b)| format!("{l}{a}, {b}{r}"))
                    .collect();
                parts.join(" x ")
            }
            Domain::HalfSpaces { normals, .. } => format!("intersection of {} open half-spaces", normals.len()),
            Domain::Predicate { label, .. } => label.clone(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
