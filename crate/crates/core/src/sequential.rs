//! Anytime-valid sequential tests from simple e-variables: e-process
//! accumulation, mixtures over alternatives, the beta plug-in two-sample
//! Bernoulli test, and Ville monitoring.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::{CheckOptions, Overall};
use crate::error::{Error, Result};
use crate::models::Pairing;

/// Lowest log-value kept; a zero e-value lands here instead of `-inf`.
pub const LOG_FLOOR: f64 = -745.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EProcessState {
    pub log_value: f64,
    pub n: u64,
    pub alpha: f64,
    pub rejected: bool,
    pub first_crossing: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<VecDeque<f64>>,
    #[serde(skip)]
    history_cap: usize,
}

impl EProcessState {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")));
        }
        Ok(EProcessState { log_value: 0.0, n: 0, alpha, rejected: false, first_crossing: None, history: None, history_cap: 0 })
    }

    /// Keep the last `cap` log-values.
    pub fn with_history(mut self, cap: usize) -> Self {
        self.history = Some(VecDeque::with_capacity(cap));
        self.history_cap = cap;
        self
    }

    /// `log(1/alpha)`.
    pub fn threshold(&self) -> f64 {
        -self.alpha.ln()
    }

    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    pub fn update(&mut self, e_value: f64) -> Result<()> {
        if !(e_value >= 0.0) || !e_value.is_finite() {
            return Err(Error::Contract(format!("e-values must be finite and non-negative, got {e_value}")));
        }
        self.update_log(if e_value == 0.0 { f64::NEG_INFINITY } else { e_value.ln() })
    }

    /// Update with `log e`; `-inf` is allowed.
    pub fn update_log(&mut self, log_e: f64) -> Result<()> {
        if log_e.is_nan() || log_e == f64::INFINITY {
            return Err(Error::Contract(format!("log e-value {log_e} is not allowed")));
        }
        self.log_value = (self.log_value + log_e).max(LOG_FLOOR);
        self.n += 1;
        if !self.rejected && self.log_value >= self.threshold() {
            self.rejected = true;
            self.first_crossing = Some(self.n);
        }
        if let Some(h) = self.history.as_mut() {
            if h.len() == self.history_cap && self.history_cap > 0 {
                h.pop_front();
            }
            if self.history_cap > 0 {
                h.push_back(self.log_value);
            }
        }
        Ok(())
    }
}

pub fn eprocess_update(mut state: EProcessState, e_value: f64) -> Result<EProcessState> {
    state.update(e_value)?;
    Ok(state)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VilleDecision {
    pub reject: bool,
    pub first_crossing: Option<u64>,
    pub log_value: f64,
    pub threshold: f64,
    pub n: u64,
    pub alpha: f64,
}

pub fn ville_monitor(state: &EProcessState) -> VilleDecision {
    VilleDecision {
        reject: state.rejected,
        first_crossing: state.first_crossing,
        log_value: state.log_value,
        threshold: state.threshold(),
        n: state.n,
        alpha: state.alpha,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorSpec {
    /// Alternatives with weights summing to one.
    DiscreteGrid { points: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Independent `Beta(a1, b1)` and `Beta(a2, b2)` for the two arms.
    BetaProduct { a1: f64, b1: f64, a2: f64, b2: f64 },
}

impl PriorSpec {
    pub fn uniform_beta() -> Self {
        PriorSpec::BetaProduct { a1: 1.0, b1: 1.0, a2: 1.0, b2: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::DiscreteGrid { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return Err(Error::InvalidParameter("grid prior needs one weight per point".into()));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::InvalidParameter("prior weights must be non-negative".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!("prior weights sum to {total}")));
                }
                Ok(())
            }
            PriorSpec::BetaProduct { a1, b1, a2, b2 } => {
                if [a1, b1, a2, b2].iter().all(|x| **x > 0.0 && x.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("beta shapes must be positive".into()))
                }
            }
        }
    }
}

/// Weighted average of simple e-values over a grid of alternatives, each
/// certified once at construction.
pub struct Mixture {
    weights: Vec<f64>,
    pairings: Vec<Pairing>,
}

impl Mixture {
    /// `make` builds the pairing for one support point. Every pairing must
    /// be certified on its own grid.
    pub fn new(prior: &PriorSpec, make: &dyn Fn(&[f64]) -> Result<Pairing>, opts: &CheckOptions) -> Result<Self> {
        prior.validate()?;
        let PriorSpec::DiscreteGrid { points, weights } = prior else {
            return Err(Error::Misuse("mixtures need a discrete-grid prior".into()));
        };
        let mut pairings = Vec::with_capacity(points.len());
        for p in points {
            let pairing = make(p)?;
            let report = pairing.check(opts)?;
            if report.overall != Overall::SimpleEvariableCertified {
                return Err(Error::Uncertified { point: p.clone() });
            }
            pairings.push(pairing);
        }
        Ok(Mixture { weights: weights.clone(), pairings })
    }

    pub fn evaluate(&self, u: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (w, p) in self.weights.iter().zip(&self.pairings) {
            if *w > 0.0 {
                total += w * p.evalue(u)?;
            }
        }
        Ok(total)
    }
}

pub fn mixture_evalue(prior: &PriorSpec, make: &dyn Fn(&[f64]) -> Result<Pairing>, u: &[f64]) -> Result<f64> {
    Mixture::new(prior, make, &CheckOptions::default())?.evaluate(u)
}

/// Log of the two-sample Bernoulli simple e-value with alternative means
/// `(m1, m2)`, tested against the pooled mean `(m1 + m2)/2`.
pub fn bernoulli_two_sample_log_evalue(m1: f64, m2: f64, y1: f64, y2: f64) -> f64 {
    let bern = |m: f64, y: f64| if y == 1.0 { m.ln() } else { (1.0 - m).ln() };
    let mbar = 0.5 * (m1 + m2);
    bern(m1, y1) + bern(m2, y2) - bern(mbar, y1) - bern(mbar, y2)
}

/// `D(Q || P_{mu*})` for the two-sample Bernoulli pair, summed over the four outcomes.
pub fn bernoulli_two_sample_growth(m1: f64, m2: f64) -> f64 {
    let mut g = 0.0;
    for y1 in [0.0, 1.0] {
        for y2 in [0.0, 1.0] {
            let q = (if y1 == 1.0 { m1 } else { 1.0 - m1 }) * (if y2 == 1.0 { m2 } else { 1.0 - m2 });
            if q > 0.0 {
                g += q * bernoulli_two_sample_log_evalue(m1, m2, y1, y2);
            }
        }
    }
    g
}

/// Posterior-mean plug-in state for the two arms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaPlugin {
    a: [f64; 2],
    b: [f64; 2],
}

impl BetaPlugin {
    pub fn new(prior: &PriorSpec) -> Result<Self> {
        prior.validate()?;
        match *prior {
            PriorSpec::BetaProduct { a1, b1, a2, b2 } => Ok(BetaPlugin { a: [a1, a2], b: [b1, b2] }),
            _ => Err(Error::Misuse("the plug-in process needs a beta-product prior".into())),
        }
    }

    pub fn means(&self) -> (f64, f64) {
        (self.a[0] / (self.a[0] + self.b[0]), self.a[1] / (self.a[1] + self.b[1]))
    }

    /// Log e-value for this round, then fold the pair into the posterior.
    pub fn step(&mut self, y1: f64, y2: f64) -> Result<f64> {
        for y in [y1, y2] {
            if y != 0.0 && y != 1.0 {
                return Err(Error::Data(format!("observation {y} is not binary")));
            }
        }
        let (m1, m2) = self.means();
        let le = bernoulli_two_sample_log_evalue(m1, m2, y1, y2);
        self.a[0] += y1;
        self.b[0] += 1.0 - y1;
        self.a[1] += y2;
        self.b[1] += 1.0 - y2;
        Ok(le)
    }
}

/// Per-round e-values of the plug-in process over `data`, and the final state.
pub fn beta_plugin_eprocess(prior: &PriorSpec, data: &[(f64, f64)], alpha: f64) -> Result<(Vec<f64>, EProcessState)> {
    let mut plug = BetaPlugin::new(prior)?;
    let mut state = EProcessState::new(alpha)?;
    let mut evalues = Vec::with_capacity(data.len());
    for (i, &(y1, y2)) in data.iter().enumerate() {
        let le = plug.step(y1, y2).map_err(|e| Error::Data(format!("round {}: {e}", i + 1)))?;
        evalues.push(le.exp());
        state.update_log(le)?;
    }
    Ok((evalues, state))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathResult {
    pub path: usize,
    pub first_crossing: Option<u64>,
    pub final_log_value: f64,
    /// Log-value of the process using the true arm means.
    pub oracle_log_value: f64,
    /// Log-value at the start of the trailing window.
    pub window_start_log_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub arm_means: (f64, f64),
    pub rounds: usize,
    pub paths: usize,
    pub alpha: f64,
    pub seed: u64,
    pub prior: PriorSpec,
    pub ever_crossing_fraction: f64,
    /// Binomial standard error of the crossing fraction under `alpha`.
    pub crossing_standard_error: f64,
    pub median_first_crossing: Option<f64>,
    pub mean_final_log_value: f64,
    /// Mean final log-value divided by the number of rounds.
    pub mean_log_growth: f64,
    /// Rounds `(start, end]` of the trailing window.
    pub trailing_window: (usize, usize),
    /// Mean per-round increment over the trailing window.
    pub trailing_log_growth: f64,
    /// `D(Q || P_{mu*})` at the true arm means.
    pub oracle_growth_rate: f64,
    /// Mean of oracle minus plug-in final log-values.
    pub mean_regret: f64,
    #[serde(skip)]
    pub path_results: Vec<PathResult>,
}

impl SimulationSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// `path,first_crossing,final_log_value` rows, header first.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,first_crossing,final_log_value\n");
        for p in &self.path_results {
            let fc = p.first_crossing.map(|r| r.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", p.path, fc, p.final_log_value));
        }
        s
    }
}

/// Simulate `paths` independent streams of the plug-in two-sample test.
/// Path `i` draws from stream `i` of a ChaCha8 generator seeded by `seed`.
pub fn simulate_two_sample(
    arm_means: (f64, f64),
    rounds: usize,
    prior: &PriorSpec,
    alpha: f64,
    seed: u64,
    paths: usize,
) -> Result<SimulationSummary> {
    let (p1, p2) = arm_means;
    if !(p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0) {
        return Err(Error::InvalidParameter(format!("arm means must lie in (0,1), got ({p1}, {p2})")));
    }
    BetaPlugin::new(prior)?;
    EProcessState::new(alpha)?;
    let window = rounds / 5;
    let window_start = rounds - window;
    let run = |path: usize| -> PathResult {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        let mut plug = BetaPlugin::new(prior).expect("validated prior");
        let mut state = EProcessState::new(alpha).expect("validated alpha");
        let mut oracle = 0.0;
        let mut at_window = 0.0;
        for r in 0..rounds {
            if r == window_start {
                at_window = state.log_value;
            }
            let y1 = if rng.random::<f64>() < p1 { 1.0 } else { 0.0 };
            let y2 = if rng.random::<f64>() < p2 { 1.0 } else { 0.0 };
            let le = plug.step(y1, y2).expect("binary draws");
            state.update_log(le).expect("finite log e-value");
            oracle += bernoulli_two_sample_log_evalue(p1, p2, y1, y2);
        }
        if rounds == window_start {
            at_window = state.log_value;
        }
        PathResult {
            path,
            first_crossing: state.first_crossing,
            final_log_value: state.log_value,
            oracle_log_value: oracle,
            window_start_log_value: at_window,
        }
    };
    let results: Vec<PathResult> = (0..paths).into_par_iter().map(run).collect();
    let np = paths.max(1) as f64;
    let crossed: Vec<f64> = results.iter().filter_map(|r| r.first_crossing.map(|c| c as f64)).collect();
    let mean_final = results.iter().map(|r| r.final_log_value).sum::<f64>() / np;
    let mean_window = results.iter().map(|r| r.final_log_value - r.window_start_log_value).sum::<f64>() / np;
    let regret = results.iter().map(|r| r.oracle_log_value - r.final_log_value).sum::<f64>() / np;
    let median = median(crossed.clone());
    Ok(SimulationSummary {
        arm_means,
        rounds,
        paths,
        alpha,
        seed,
        prior: prior.clone(),
        ever_crossing_fraction: if paths == 0 { 0.0 } else { crossed.len() as f64 / np },
        crossing_standard_error: (alpha * (1.0 - alpha) / np).sqrt(),
        median_first_crossing: median,
        mean_final_log_value: mean_final,
        mean_log_growth: if rounds == 0 { 0.0 } else { mean_final / rounds as f64 },
        trailing_window: (window_start, rounds),
        trailing_log_growth: if window == 0 { 0.0 } else { mean_window / window as f64 },
        oracle_growth_rate: bernoulli_two_sample_growth(p1, p2),
        mean_regret: regret,
        path_results: results,
    })
}

/// Which side generates the data in [`simulate_pairing`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truth {
    /// The null member at the anchor `mu*`.
    Null,
    /// The alternative the pairing was built from.
    Alternative,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairingSimulation {
    pub model: String,
    pub truth: Truth,
    pub rounds: usize,
    pub paths: usize,
    pub alpha: f64,
    pub seed: u64,
    pub ever_crossing_fraction: f64,
    pub crossing_standard_error: f64,
    pub median_first_crossing: Option<f64>,
    pub mean_final_log_value: f64,
    pub mean_log_growth: f64,
    #[serde(skip)]
    pub path_results: Vec<(usize, Option<u64>, f64)>,
}

impl PairingSimulation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,first_crossing,final_log_value\n");
        for (p, fc, v) in &self.path_results {
            s.push_str(&format!("{p},{},{v}\n", fc.map(|r| r.to_string()).unwrap_or_default()));
        }
        s
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = xs.len();
    Some(if m % 2 == 1 { xs[m / 2] } else { 0.5 * (xs[m / 2 - 1] + xs[m / 2]) })
}

/// E-process of a pairing's simple e-value on i.i.d. data from either side.
pub fn simulate_pairing(
    pairing: &Pairing,
    truth: Truth,
    rounds: usize,
    alpha: f64,
    seed: u64,
    paths: usize,
) -> Result<PairingSimulation> {
    EProcessState::new(alpha)?;
    let sampler: Box<dyn Fn(&mut dyn rand::RngCore) -> Result<Vec<f64>> + Sync> = match truth {
        Truth::Alternative => {
            let s = pairing
                .tilted
                .carrier()
                .sampler
                .clone()
                .ok_or_else(|| Error::Unsupported(format!("{} has no alternative sampler", pairing.key)))?;
            Box::new(move |rng| Ok(s(rng)))
        }
        Truth::Null => {
            let null = pairing.null.clone();
            let mu = pairing.mu_star().clone();
            crate::expfam::sample_at_mean(null.as_ref(), &mu, &mut ChaCha8Rng::seed_from_u64(0))?;
            Box::new(move |rng| crate::expfam::sample_at_mean(null.as_ref(), &mu, rng))
        }
    };
    let results: Vec<Result<(usize, Option<u64>, f64)>> = (0..paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            let mut state = EProcessState::new(alpha)?;
            for _ in 0..rounds {
                let u = sampler(&mut rng)?;
                state.update_log(pairing.log_evalue(&u)?)?;
            }
            Ok((path, state.first_crossing, state.log_value))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let np = paths.max(1) as f64;
    let crossed: Vec<f64> = results.iter().filter_map(|r| r.1.map(|c| c as f64)).collect();
    let mean_final = results.iter().map(|r| r.2).sum::<f64>() / np;
    Ok(PairingSimulation {
        model: pairing.key.clone(),
        truth,
        rounds,
        paths,
        alpha,
        seed,
        ever_crossing_fraction: if paths == 0 { 0.0 } else { crossed.len() as f64 / np },
        crossing_standard_error: (alpha * (1.0 - alpha) / np).sqrt(),
        median_first_crossing: median(crossed),
        mean_final_log_value: mean_final,
        mean_log_growth: if rounds == 0 { 0.0 } else { mean_final / rounds as f64 },
        path_results: results,
    })
}
