//! Model selection flags shared by the subcommands.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::Args;
use evfam::models::{
    abm_vs_poisson_pairing, catalog_keys, gaussian_location_constrained, gaussian_location_pairing,
    gaussian_scale_pairing, ig_vs_exp_pairing, ksample_pairing, linmodel_pairing, negbinom_vs_poisson_pairing,
    nef_pairing, KSampleKind, LinearModelDesign, LinearModelParams, NefKind, Pairing,
};
use evfam::Matrix;
use serde::Serialize;

use crate::UsageError;

#[derive(Args, Clone, Debug, Default, Serialize)]
pub struct ModelArgs {
    /// Catalog key (see `evfam catalog`).
    #[arg(long)]
    pub model: Option<String>,
    /// Number of groups for the k-sample models.
    #[arg(long)]
    pub k: Option<usize>,
    /// Alternative means, comma separated.
    #[arg(long, value_name = "LIST")]
    pub alt_means: Option<String>,
    /// Known variance (k-sample Gaussian, linear model).
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Alternative mean of the Gaussian-scale carrier.
    #[arg(long, allow_hyphen_values = true)]
    pub m: Option<f64>,
    /// Alternative variance of the Gaussian-scale carrier.
    #[arg(long)]
    pub s2: Option<f64>,
    /// Anchor mean for the one-dimensional NEF pairings.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Negative binomial size.
    #[arg(long)]
    pub size: Option<f64>,
    /// ABM scale `s`.
    #[arg(long)]
    pub s: Option<f64>,
    /// ABM exponent `r`.
    #[arg(long)]
    pub r: Option<u32>,
    /// Null Tweedie `a,gamma`.
    #[arg(long, value_name = "A,GAMMA")]
    pub p: Option<String>,
    /// Alternative Tweedie `a,gamma`.
    #[arg(long, value_name = "A,GAMMA")]
    pub q: Option<String>,
    /// Inverse-Gaussian shape.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Null covariance, rows separated by `;`.
    #[arg(long, value_name = "MATRIX", allow_hyphen_values = true)]
    pub sigma_p: Option<String>,
    /// Alternative covariance, rows separated by `;`.
    #[arg(long, value_name = "MATRIX", allow_hyphen_values = true)]
    pub sigma_q: Option<String>,
    /// Alternative mean vector for the Gaussian location models.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    pub mean: Option<String>,
    /// Number of leading mean coordinates fixed at zero.
    #[arg(long)]
    pub d0: Option<usize>,
    /// Design matrix CSV (header row, one covariate row per line, tested column first).
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Linear-model coefficients, tested coordinate first.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    pub gamma: Option<String>,
}

pub fn parse_list(s: &str, what: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| UsageError::new(format!("--{what}: '{x}' is not a number")).into()))
        .collect()
}

pub fn parse_matrix(s: &str, what: &str) -> anyhow::Result<Matrix> {
    let rows: Vec<Vec<f64>> = s.split(';').map(|r| parse_list(r, what)).collect::<anyhow::Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        bail!(UsageError::new(format!("--{what}: rows have different lengths")));
    }
    let flat: Vec<f64> = rows.concat();
    Ok(Matrix::from_row_slice(n, flat.len() / n, &flat))
}

fn need<T: Clone>(v: &Option<T>, flag: &str, model: &str) -> anyhow::Result<T> {
    v.clone().ok_or_else(|| UsageError::new(format!("model {model} needs --{flag}")).into())
}

fn tweedie(s: &str, flag: &str) -> anyhow::Result<NefKind> {
    let v = parse_list(s, flag)?;
    if v.len() != 2 {
        bail!(UsageError::new(format!("--{flag} expects a,gamma")));
    }
    Ok(NefKind::Tweedie { a: v[0], gamma: v[1] })
}

pub fn load_design(path: &PathBuf) -> anyhow::Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading design {}", path.display()))
        .map_err(|e| UsageError::new(format!("{e:#}")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| UsageError::new(format!("design line {}: {e}", i + 2)))?;
        let row = rec
            .iter()
            .map(|x| x.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| UsageError::new(format!("design line {}: non-numeric entry", i + 2)))?;
        rows.push(row);
    }
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        bail!(UsageError::new("design rows are empty or ragged"));
    }
    let flat = rows.concat();
    Ok(Matrix::from_row_slice(rows.len(), rows[0].len(), &flat))
}

/// Build the pairing named by `--model`; unknown keys fail before any computation.
pub fn build_pairing(a: &ModelArgs) -> anyhow::Result<Pairing> {
    let key = a.model.as_deref().ok_or_else(|| UsageError::new("--model is required"))?;
    if !catalog_keys().contains(&key) {
        bail!(UsageError::new(format!("unknown model '{key}'; known: {}", catalog_keys().join(", "))));
    }
    let lib = |r: evfam::Result<Pairing>| r.map_err(|e| anyhow!(UsageError::new(format!("{key}: {e}"))));
    match key {
        "ksample-bernoulli" | "ksample-poisson" | "ksample-gaussian" => {
            let means = parse_list(&need(&a.alt_means, "alt-means", key)?, "alt-means")?;
            let k = a.k.unwrap_or(means.len());
            let kind = match key {
                "ksample-bernoulli" => KSampleKind::Bernoulli,
                "ksample-poisson" => KSampleKind::Poisson,
                _ => KSampleKind::Gaussian { sigma2: a.sigma2.unwrap_or(1.0) },
            };
            lib(ksample_pairing(kind, k, &means))
        }
        "gaussian-location" => {
            let sp = parse_matrix(&need(&a.sigma_p, "sigma-p", key)?, "sigma-p")?;
            let sq = a.sigma_q.as_deref().map(|s| parse_matrix(s, "sigma-q")).transpose()?.unwrap_or_else(|| sp.clone());
            let m = match &a.mean {
                Some(s) => parse_list(s, "mean")?,
                None => vec![0.0; sp.nrows()],
            };
            lib(gaussian_location_pairing(sp, &m, sq))
        }
        "gaussian-location-constrained" => {
            let sp = parse_matrix(&need(&a.sigma_p, "sigma-p", key)?, "sigma-p")?;
            let m = parse_list(&need(&a.mean, "mean", key)?, "mean")?;
            lib(gaussian_location_constrained(sp, a.d0.unwrap_or(1), &m))
        }
        "gaussian-scale" => lib(gaussian_scale_pairing(need(&a.m, "m", key)?, need(&a.s2, "s2", key)?)),
        "negbinom-vs-poisson" => lib(negbinom_vs_poisson_pairing(need(&a.size, "size", key)?, a.mu.unwrap_or(1.0))),
        "abm-vs-poisson" => lib(abm_vs_poisson_pairing(need(&a.s, "s", key)?, a.r.unwrap_or(1), a.mu.unwrap_or(1.0))),
        "tweedie-pair" => {
            let p = tweedie(&need(&a.p, "p", key)?, "p")?;
            let q = tweedie(&need(&a.q, "q", key)?, "q")?;
            lib(nef_pairing(p, q, a.mu.unwrap_or(1.0)))
        }
        "ig-vs-exp" => lib(ig_vs_exp_pairing(need(&a.lambda, "lambda", key)?, need(&a.mu, "mu", key)?).map(|(p, _)| p)),
        "linmodel" => {
            let x = load_design(&need(&a.design, "design", key)?)?;
            let design = Arc::new(lib_design(LinearModelDesign::new(x), key)?);
            let gamma = parse_list(&need(&a.gamma, "gamma", key)?, "gamma")?;
            let params = LinearModelParams::new(a.sigma2.unwrap_or(1.0), gamma)
                .map_err(|e| UsageError::new(format!("{key}: {e}")))?;
            lib(linmodel_pairing(design, &params))
        }
        _ => unreachable!("checked against the catalog"),
    }
}

fn lib_design(r: evfam::Result<LinearModelDesign>, key: &str) -> anyhow::Result<LinearModelDesign> {
    r.map_err(|e| UsageError::new(format!("{key}: {e}")).into())
}

/// Catalog listing: key, flags, description.
pub fn catalog_entries() -> Vec<(&'static str, &'static str, &'static str)> {
    vec![
        ("ksample-bernoulli", "--alt-means m1,..,mk [--k]", "i.i.d. Bernoulli groups against a product of Bernoullis"),
        ("ksample-poisson", "--alt-means m1,..,mk [--k]", "i.i.d. Poisson groups against a product of Poissons"),
        ("ksample-gaussian", "--alt-means m1,..,mk [--k] [--sigma2]", "i.i.d. Gaussian groups with known variance"),
        ("gaussian-location", "--sigma-p M [--sigma-q M] [--mean LIST]", "Gaussian location family against a Gaussian"),
        ("gaussian-location-constrained", "--sigma-p M --mean LIST [--d0]", "location family with leading means fixed at 0"),
        ("gaussian-scale", "--m X --s2 X", "zero-mean Gaussian scale family against N(m, s2)"),
        ("negbinom-vs-poisson", "--size X [--mu X]", "Poisson null against a negative binomial"),
        ("abm-vs-poisson", "--s X [--r 1|2] [--mu X]", "Poisson null against an ABM member"),
        ("tweedie-pair", "--p a,gamma --q a,gamma [--mu X]", "two power-variance families"),
        ("ig-vs-exp", "--lambda X --mu X", "exponential null against an inverse Gaussian"),
        ("linmodel", "--design CSV --gamma LIST [--sigma2]", "linear model testing the first coefficient"),
    ]
}
