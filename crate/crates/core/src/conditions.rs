//! Grid-based certificates for the existence of a simple e-variable: the
//! domain preconditions and the four equivalent conditions (covariance
//! ordering, canonical-parameter pairing, KL ordering, log-partition
//! ordering), plus the one-dimensional shortcut and partitioned alternatives.
//!
//! Every verdict is relative to the grid recorded in the report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::expfam::{
    canonical_domain, canonical_from_mean, covariance_at_mean, kl_between_means, log_density_at_mean,
    log_partition_shifted, natural_at_mean, ExpFamily, Vector,
};
use crate::tilt::{local_evar_check, ray_boundary, LocalCheck, PSD_TOL, RAY_RADIUS_CAP};
use crate::verify::psd::{psd_test_scaled, spectral_norm};

pub const REPORT_VERSION: u32 = 1;
/// Tolerance for scalar inequalities, applied as `tol * (1 + magnitude)`.
pub const CONDITION_TOL: f64 = 1e-9;
pub const DEFAULT_1D_POINTS: usize = 64;
pub const DEFAULT_AXIS_POINTS: usize = 8;
pub const MAX_GRID_POINTS: usize = 4096;
pub const DEFAULT_PAIRS: usize = 512;
pub const DEFAULT_RANDOM_RAYS: usize = 4;
const POSITIVE_CLIP: (f64, f64) = (1e-4, 1e4);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub log: bool,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) || count == 0 {
            return Err(Error::InvalidParameter(format!("bad axis [{lo}, {hi}] x {count}")));
        }
        Ok(Axis { lo, hi, count, log: false })
    }

    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0) {
            return Err(Error::InvalidParameter("log-spaced axis needs lo > 0".into()));
        }
        Ok(Axis { log: true, ..Axis::new(lo, hi, count)? })
    }

    /// Map `u in [0, 1]` onto the axis.
    pub fn at(&self, u: f64) -> f64 {
        if self.log {
            (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp()
        } else {
            self.lo + u * (self.hi - self.lo)
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.at(0.5)];
        }
        (0..self.count).map(|i| self.at(i as f64 / (self.count - 1) as f64)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    /// Quasi-random pairs for the two-point conditions.
    pub pairs: usize,
    pub seed: u64,
    /// Random directions probed in addition to the coordinate axes (d > 1).
    pub random_rays: usize,
}

fn default_axis(lo: f64, hi: f64, center: f64, count: usize) -> Axis {
    let (a, b) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let pad = 1e-4 * (hi - lo).max(1.0);
            (lo + pad, hi - pad)
        }
        (true, false) => (lo + 1e-4 * lo.abs().max(1.0), if lo >= 0.0 { POSITIVE_CLIP.1 } else { lo + POSITIVE_CLIP.1 }),
        (false, true) => (hi - POSITIVE_CLIP.1, hi - 1e-4 * hi.abs().max(1.0)),
        (false, false) => {
            let w = 10.0 * (1.0 + center.abs());
            (center - w, center + w)
        }
    };
    let (a, b) = if lo >= 0.0 { (a.max(POSITIVE_CLIP.0), b.min(POSITIVE_CLIP.1)) } else { (a, b) };
    Axis { lo: a, hi: b, count, log: a > 0.0 }
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Self {
        GridSpec { axes, pairs: DEFAULT_PAIRS, seed: 0, random_rays: DEFAULT_RANDOM_RAYS }
    }

    /// Default grid over a box domain; unbounded two-sided axes are centred on `center`.
    pub fn default_for(domain: &Domain, center: &Vector) -> Self {
        let d = domain.dim();
        let count = if d == 1 {
            DEFAULT_1D_POINTS
        } else {
            let mut c = DEFAULT_AXIS_POINTS;
            while c > 1 && c.pow(d as u32) > MAX_GRID_POINTS {
                c -= 1;
            }
            c
        };
        let axes = (0..d)
            .map(|i| match domain.bounds() {
                Some((l, u)) => default_axis(l[i], u[i], center[i], count),
                None => default_axis(f64::NEG_INFINITY, f64::INFINITY, center[i], count),
            })
            .collect();
        GridSpec::new(axes)
    }

    pub fn with_pairs(mut self, pairs: usize) -> Self {
        self.pairs = pairs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Tensor-product points.
    pub fn points(&self) -> Vec<Vector> {
        let per: Vec<Vec<f64>> = self.axes.iter().map(|a| a.points()).collect();
        let mut out = vec![Vec::new()];
        for axis in &per {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |x| {
                        let mut q = p.clone();
                        q.push(*x);
                        q
                    })
                })
                .collect();
        }
        out.into_iter().map(Vector::from_vec).collect()
    }

    /// Points lying in every domain.
    pub fn interior_points(&self, domains: &[Domain]) -> Vec<Vector> {
        self.points()
            .into_iter()
            .filter(|p| domains.iter().all(|d| d.contains(p.as_slice())))
            .collect()
    }

    /// Halton pairs `(mu, mu')` over the grid box, both in every domain. The
    /// seed is used as the sequence offset.
    pub fn pair_samples(&self, domains: &[Domain]) -> Vec<(Vector, Vector)> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.pairs);
        let mut i = self.seed.wrapping_add(1);
        let mut tries = 0usize;
        while out.len() < self.pairs && tries < self.pairs * 64 {
            let a: Vec<f64> = (0..d).map(|j| self.axes[j].at(halton(i, PRIMES[j % PRIMES.len()]))).collect();
            let b: Vec<f64> = (0..d).map(|j| self.axes[j].at(halton(i, PRIMES[(d + j) % PRIMES.len()]))).collect();
            i = i.wrapping_add(1);
            tries += 1;
            if domains.iter().all(|dom| dom.contains(&a) && dom.contains(&b)) {
                out.push((Vector::from_vec(a), Vector::from_vec(b)));
            }
        }
        out
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn within(value: f64, scale: f64, tol: f64) -> bool {
    value <= tol * (1.0 + scale)
}

#[derive(Clone, Debug, Serialize)]
pub struct Preconditions {
    pub mean_domain_convex: bool,
    #[serde(rename = "Mq_subset_Mp")]
    pub mq_subset_mp: bool,
    #[serde(rename = "Bp_subset_Bq")]
    pub bp_subset_bq: bool,
    /// A canonical point in `B_p` outside `B_q`, with its anchor.
    pub bp_witness: Option<(Vec<f64>, Vec<f64>)>,
    pub notes: Vec<String>,
}

impl Preconditions {
    pub fn all(&self) -> bool {
        self.mean_domain_convex && self.mq_subset_mp && self.bp_subset_bq
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ItemVerdict {
    pub item: u8,
    pub name: String,
    pub passed: bool,
    /// Grid points (items 1, 4) or pairs (items 2, 3) evaluated.
    pub evaluated: usize,
    pub violations: usize,
    pub errors: usize,
    /// Most negative margin found; `>= 0` means satisfied at that point.
    pub worst_margin: f64,
    pub worst_location: Vec<f64>,
    pub first_error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Overall {
    SimpleEvariableCertified,
    Refuted,
    InconclusiveStochastic,
    /// Not certified and not refuted; typically a failed precondition
    /// without a witnessed violation.
    Inconclusive,
}

impl Overall {
    pub fn exit_code(self) -> i32 {
        match self {
            Overall::SimpleEvariableCertified => 0,
            Overall::Refuted => 2,
            Overall::InconclusiveStochastic | Overall::Inconclusive => 3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ShortcutReport {
    pub variance_ordering: bool,
    pub mean_spaces_equal: bool,
    pub canonical_domains_equal_on_grid: bool,
    /// Conclusion of part 1: `B_p ⊆ B_q` at every anchor.
    pub asserts_bp_subset_bq: bool,
    /// Conclusion of part 2: `M_q ⊆ M_p`.
    pub asserts_mq_subset_mp: bool,
    pub applicable: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub report_version: u32,
    pub model: String,
    pub null: String,
    pub alternative: String,
    pub dim: usize,
    pub mu_star: Option<Vec<f64>>,
    pub grid: GridSpec,
    pub grid_points: usize,
    pub pair_count: usize,
    pub preconditions: Preconditions,
    pub items: Vec<ItemVerdict>,
    pub local: Option<LocalCheck>,
    pub shortcut: Option<ShortcutReport>,
    pub stochastic: bool,
    pub overall: Overall,
    /// For stochastic inputs: the verdict the estimates point to.
    pub leaning: Option<Overall>,
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn item(&self, k: u8) -> Option<&ItemVerdict> {
        self.items.iter().find(|i| i.item == k)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub tol: f64,
    pub psd_tol: f64,
    /// Which of items 1-4 to run.
    pub items: [bool; 4],
    /// Anchor for the local check, when it lies in both mean spaces.
    pub mu_star: Option<Vector>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { tol: CONDITION_TOL, psd_tol: PSD_TOL, items: [true; 4], mu_star: None }
    }
}

impl CheckOptions {
    pub fn only_item1() -> Self {
        CheckOptions { items: [true, false, false, false], ..Default::default() }
    }
}

fn directions(d: usize, extra: usize, seed: u64) -> Vec<Vector> {
    let mut dirs = Vec::new();
    for j in 0..d {
        for s in [1.0, -1.0] {
            let mut v = Vector::zeros(d);
            v[j] = s;
            dirs.push(v);
        }
    }
    if d > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        for _ in 0..extra {
            let v = Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            dirs.push(&v / v.norm());
        }
    }
    dirs
}

const INTERIOR_FRACTIONS: [f64; 7] = [1e-3, 1e-2, 0.1, 0.25, 0.5, 0.75, 0.9];
const UNBOUNDED_RADII: [f64; 11] = [1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1e3, 1e4];

struct Probe {
    beta: Vector,
    lp: f64,
    lq: f64,
}

/// Log-partitions of both families along rays from `mu`, restricted to
/// `B_{p;mu}` and including boundary-approaching points.
fn probe_rays(null: &dyn ExpFamily, tilted: &dyn ExpFamily, mu: &Vector, dirs: &[Vector]) -> Result<Vec<Probe>> {
    let tp = natural_at_mean(null, mu)?;
    let tq = natural_at_mean(tilted, mu)?;
    let bp = canonical_domain(null, mu)?;
    let d = mu.len();
    let zero = Vector::zeros(d);
    let mut out = Vec::new();
    for v in dirs {
        let lp_at = |t: f64| log_partition_shifted(null, &(v * t), &tp);
        let tb = match bp.ray_exit(zero.as_slice(), v.as_slice()) {
            Some(t) => t,
            None => ray_boundary(|t| lp_at(t).is_finite(), 1e-3, RAY_RADIUS_CAP),
        };
        let radii: Vec<f64> = if tb.is_finite() {
            INTERIOR_FRACTIONS
                .iter()
                .copied()
                .chain((1..=8).map(|j| 1.0 - 10f64.powi(-j)))
                .map(|f| f * tb)
                .collect()
        } else {
            UNBOUNDED_RADII.to_vec()
        };
        for t in radii {
            let beta = v * t;
            let lp = lp_at(t);
            if !lp.is_finite() {
                continue;
            }
            let lq = log_partition_shifted(tilted, &beta, &tq);
            out.push(Probe { beta, lp, lq });
        }
    }
    Ok(out)
}

struct PointResult {
    mu: Vector,
    item1: Option<Result<(f64, f64)>>,
    probes: Result<Vec<Probe>>,
}

#[derive(Default)]
struct Acc {
    evaluated: usize,
    violations: usize,
    errors: usize,
    worst_norm: f64,
    worst_raw: f64,
    worst_loc: Vec<f64>,
    first_error: Option<String>,
}

impl Acc {
    fn new() -> Self {
        Acc { worst_norm: f64::INFINITY, worst_raw: f64::INFINITY, ..Default::default() }
    }

    fn record(&mut self, raw: f64, norm: f64, ok: bool, loc: Vec<f64>) {
        self.evaluated += 1;
        if !ok {
            self.violations += 1;
        }
        if norm < self.worst_norm || (norm.is_nan() && self.worst_loc.is_empty()) {
            self.worst_norm = norm;
            self.worst_raw = raw;
            self.worst_loc = loc;
        }
    }

    fn error(&mut self, e: &Error) {
        self.evaluated += 1;
        self.errors += 1;
        if self.first_error.is_none() {
            self.first_error = Some(e.to_string());
        }
    }

    fn finish(self, item: u8, name: &str) -> ItemVerdict {
        ItemVerdict {
            item,
            name: name.into(),
            passed: self.evaluated > 0 && self.violations == 0 && self.errors == 0,
            evaluated: self.evaluated,
            violations: self.violations,
            errors: self.errors,
            worst_margin: if self.worst_raw.is_infinite() && self.evaluated == self.errors { f64::NAN } else { self.worst_raw },
            worst_location: self.worst_loc,
            first_error: self.first_error,
        }
    }
}

fn item1_at(null: &dyn ExpFamily, tilted: &dyn ExpFamily, mu: &Vector, psd_tol: f64) -> Result<(f64, f64)> {
    let sp = covariance_at_mean(null, mu)?;
    let sq = covariance_at_mean(tilted, mu)?;
    let scale = spectral_norm(&sp)?;
    let v = psd_test_scaled(&(&sp - &sq), psd_tol, scale)?;
    let norm = if v.psd { v.min_eigenvalue.max(0.0) / scale.max(f64::MIN_POSITIVE) } else { v.min_eigenvalue / scale.max(f64::MIN_POSITIVE) };
    Ok((v.min_eigenvalue, if v.psd { norm.max(0.0) } else { norm.min(-psd_tol) }))
}

fn mean_space_containment(null: &dyn ExpFamily, tilted: &dyn ExpFamily, points: &[Vector], notes: &mut Vec<String>) -> bool {
    let (mq, mp) = (tilted.mean_domain(), null.mean_domain());
    let structural = match (mq.bounds(), mp.bounds()) {
        (Some((lq, uq)), Some((lp, up))) => Some(
            lq.iter().zip(lp).all(|(a, b)| a >= b) && uq.iter().zip(up).all(|(a, b)| a <= b),
        ),
        _ => None,
    };
    let on_grid = points.iter().all(|p| mp.contains(p.as_slice()));
    if structural.is_none() {
        notes.push("M_q ⊆ M_p checked on grid points only".into());
    }
    structural.unwrap_or(true) && on_grid
}

/// Domain preconditions on the default set of rays.
pub fn check_preconditions(null: &dyn ExpFamily, tilted: &dyn ExpFamily, grid: &GridSpec) -> Preconditions {
    let mq = tilted.mean_domain();
    let points = grid.interior_points(std::slice::from_ref(&mq));
    let mut notes = Vec::new();
    let mq_subset_mp = mean_space_containment(null, tilted, &points, &mut notes);
    let mp = null.mean_domain();
    let both: Vec<Vector> = points.into_iter().filter(|p| mp.contains(p.as_slice())).collect();
    let dirs = directions(null.dim(), grid.random_rays, grid.seed);
    let results: Vec<(Vector, Result<Vec<Probe>>)> =
        both.par_iter().map(|mu| (mu.clone(), probe_rays(null, tilted, mu, &dirs))).collect();
    let (bp, witness) = bp_from_probes(&results, &mut notes);
    Preconditions {
        mean_domain_convex: tilted.mean_domain_convex(),
        mq_subset_mp,
        bp_subset_bq: bp,
        bp_witness: witness,
        notes,
    }
}

fn bp_from_probes(results: &[(Vector, Result<Vec<Probe>>)], notes: &mut Vec<String>) -> (bool, Option<(Vec<f64>, Vec<f64>)>) {
    let mut ok = !results.is_empty();
    let mut witness = None;
    let mut errors = 0;
    for (mu, r) in results {
        match r {
            Ok(probes) => {
                if let Some(p) = probes.iter().find(|p| !p.lq.is_finite()) {
                    ok = false;
                    if witness.is_none() {
                        witness = Some((mu.iter().copied().collect(), p.beta.iter().copied().collect()));
                    }
                }
            }
            Err(_) => {
                ok = false;
                errors += 1;
            }
        }
    }
    if errors > 0 {
        notes.push(format!("B_p ⊆ B_q: {errors} anchors could not be evaluated"));
    }
    if results.is_empty() {
        notes.push("no grid points inside both mean spaces".into());
    }
    (ok, witness)
}

fn concat(a: &Vector, b: &Vector) -> Vec<f64> {
    a.iter().chain(b.iter()).copied().collect()
}

/// Run the preconditions and the selected items on `grid`.
pub fn check(
    model: &str,
    null: &dyn ExpFamily,
    tilted: &dyn ExpFamily,
    grid: &GridSpec,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    let d = null.dim();
    if tilted.dim() != d || grid.dim() != d {
        return Err(Error::Dimension { expected: d, got: if tilted.dim() != d { tilted.dim() } else { grid.dim() } });
    }
    let mq = tilted.mean_domain();
    let mp = null.mean_domain();
    let mut notes = Vec::new();
    let q_points = grid.interior_points(std::slice::from_ref(&mq));
    let mq_subset_mp = mean_space_containment(null, tilted, &q_points, &mut notes);
    let points: Vec<Vector> = q_points.into_iter().filter(|p| mp.contains(p.as_slice())).collect();
    let dirs = directions(d, grid.random_rays, grid.seed);

    let need_probes = true;
    let results: Vec<PointResult> = points
        .par_iter()
        .map(|mu| PointResult {
            mu: mu.clone(),
            item1: opts.items[0].then(|| item1_at(null, tilted, mu, opts.psd_tol)),
            probes: if need_probes { probe_rays(null, tilted, mu, &dirs) } else { Ok(Vec::new()) },
        })
        .collect();

    let mut items = Vec::new();
    if opts.items[0] {
        let mut acc = Acc::new();
        for r in &results {
            match r.item1.as_ref().expect("item 1 requested") {
                Ok((raw, norm)) => acc.record(*raw, *norm, *norm >= 0.0, r.mu.iter().copied().collect()),
                Err(e) => acc.error(e),
            }
        }
        items.push(acc.finish(1, "covariance ordering Sigma_p - Sigma_q PSD"));
    }

    let pairs = if opts.items[1] || opts.items[2] {
        grid.pair_samples(&[mq.clone(), mp.clone()])
    } else {
        Vec::new()
    };
    if opts.items[1] {
        let evals: Vec<Result<(f64, f64)>> = pairs
            .par_iter()
            .map(|(a, b)| {
                let bp = canonical_from_mean(null, a, b)?;
                let bq = canonical_from_mean(tilted, a, b)?;
                let diff = a - b;
                let value = (&bp - &bq).dot(&diff);
                let scale = (bp.norm() + bq.norm()) * diff.norm();
                Ok((value, scale))
            })
            .collect();
        let mut acc = Acc::new();
        for ((a, b), r) in pairs.iter().zip(evals) {
            match r {
                Ok((v, s)) => acc.record(-v, -v / (1.0 + s), within(v, s, opts.tol), concat(a, b)),
                Err(e) => acc.error(&e),
            }
        }
        items.push(acc.finish(2, "canonical pairing (beta_p - beta_q).(mu - mu') <= 0"));
    }
    if opts.items[2] {
        let evals: Vec<Result<(f64, f64)>> = pairs
            .par_iter()
            .map(|(a, b)| {
                let kp = kl_between_means(null, a, b)?;
                let kq = kl_between_means(tilted, a, b)?;
                Ok((kp - kq, kp.abs() + kq.abs()))
            })
            .collect();
        let mut acc = Acc::new();
        for ((a, b), r) in pairs.iter().zip(evals) {
            match r {
                Ok((g, s)) => acc.record(-g, -g / (1.0 + s), within(g, s, opts.tol), concat(a, b)),
                Err(e) => acc.error(&e),
            }
        }
        items.push(acc.finish(3, "KL ordering D(P_mu||P_mu') <= D(Q_mu||Q_mu')"));
    }
    if opts.items[3] {
        let mut acc = Acc::new();
        for r in &results {
            match &r.probes {
                Ok(probes) => {
                    let mut worst: Option<(f64, f64, bool, Vec<f64>)> = None;
                    let mut any_bad = false;
                    for p in probes {
                        let f = p.lq - p.lp;
                        let scale = p.lp.abs() + if p.lq.is_finite() { p.lq.abs() } else { 0.0 };
                        let ok = within(f, scale, opts.tol);
                        any_bad |= !ok;
                        let norm = if f.is_finite() { -f / (1.0 + scale) } else { f64::NEG_INFINITY };
                        if worst.as_ref().map_or(true, |w| norm < w.1) {
                            worst = Some((-f, norm, ok, concat(&r.mu, &p.beta)));
                        }
                    }
                    match worst {
                        Some((raw, norm, _, loc)) => acc.record(raw, norm, !any_bad, loc),
                        None => acc.record(0.0, 0.0, true, r.mu.iter().copied().collect()),
                    }
                }
                Err(e) => acc.error(e),
            }
        }
        items.push(acc.finish(4, "log-partition ordering log Z_p >= log Z_q on B_p"));
    }

    let probe_pairs: Vec<(Vector, Result<Vec<Probe>>)> = results.into_iter().map(|r| (r.mu, r.probes)).collect();
    let (bp_subset_bq, bp_witness) = bp_from_probes(&probe_pairs, &mut notes);
    let pre = Preconditions {
        mean_domain_convex: tilted.mean_domain_convex(),
        mq_subset_mp,
        bp_subset_bq,
        bp_witness,
        notes: Vec::new(),
    };

    let mu_star = opts.mu_star.clone();
    let local = mu_star
        .as_ref()
        .filter(|m| mq.contains(m.as_slice()) && mp.contains(m.as_slice()))
        .and_then(|m| local_evar_check(null, tilted, m, opts.psd_tol).ok());
    let shortcut = if d == 1 && opts.items[0] {
        shortcut_from(null, tilted, grid, &items[0], &points).ok()
    } else {
        None
    };

    let stochastic = null.is_stochastic() || tilted.is_stochastic();
    let violated = |k: u8| items.iter().any(|i| i.item == k && i.violations > 0);
    let any_violation = items.iter().any(|i| i.violations > 0);
    let any_pass = items.iter().any(|i| i.passed);
    let local_fails = local.as_ref().is_some_and(|l| !l.psd);
    let deterministic_verdict = if violated(1) || violated(4) || local_fails || (pre.all() && any_violation) {
        Overall::Refuted
    } else if pre.all() && any_pass {
        Overall::SimpleEvariableCertified
    } else {
        Overall::Inconclusive
    };
    let (overall, leaning) = if stochastic {
        notes.push("Monte Carlo estimates involved: never certified or refuted from sampling alone".into());
        (Overall::InconclusiveStochastic, Some(deterministic_verdict))
    } else {
        (deterministic_verdict, None)
    };
    if points.is_empty() {
        notes.push("grid has no points inside both mean spaces".into());
    }
    Ok(ConditionReport {
        report_version: REPORT_VERSION,
        model: model.into(),
        null: null.name(),
        alternative: tilted.name(),
        dim: d,
        mu_star: mu_star.map(|m| m.iter().copied().collect()),
        grid: grid.clone(),
        grid_points: points.len(),
        pair_count: pairs.len(),
        preconditions: pre,
        items,
        local,
        shortcut,
        stochastic,
        overall,
        leaning,
        notes,
    })
}

/// Covariance-ordering item alone.
pub fn check_sigma_ordering(null: &dyn ExpFamily, tilted: &dyn ExpFamily, grid: &GridSpec) -> Result<ItemVerdict> {
    let r = check("sigma-ordering", null, tilted, grid, &CheckOptions::only_item1())?;
    Ok(r.items.into_iter().next().expect("item 1"))
}

fn item_only(null: &dyn ExpFamily, tilted: &dyn ExpFamily, grid: &GridSpec, k: usize) -> Result<ItemVerdict> {
    let mut items = [false; 4];
    items[k - 1] = true;
    let opts = CheckOptions { items, ..Default::default() };
    let r = check("single-item", null, tilted, grid, &opts)?;
    Ok(r.items.into_iter().next().expect("requested item"))
}

pub fn check_beta_pairing(null: &dyn ExpFamily, tilted: &dyn ExpFamily, grid: &GridSpec) -> Result<ItemVerdict> {
    item_only(null, tilted, grid, 2)
}

pub fn check_kl_ordering(null: &dyn ExpFamily, tilted: &dyn ExpFamily, grid: &GridSpec) -> Result<ItemVerdict> {
    item_only(null, tilted, grid, 3)
}

pub fn check_log_z_ordering(null: &dyn ExpFamily, tilted: &dyn ExpFamily, grid: &GridSpec) -> Result<ItemVerdict> {
    item_only(null, tilted, grid, 4)
}

fn boundaries_1d(fam: &dyn ExpFamily, mu: &Vector) -> Result<(f64, f64)> {
    let ts = natural_at_mean(fam, mu)?;
    let dom = canonical_domain(fam, mu)?;
    let f = |t: f64| log_partition_shifted(fam, &Vector::from_vec(vec![t]), &ts).is_finite();
    let up = dom.ray_exit(&[0.0], &[1.0]).unwrap_or_else(|| ray_boundary(f, 1e-3, RAY_RADIUS_CAP));
    let down = dom.ray_exit(&[0.0], &[-1.0]).unwrap_or_else(|| ray_boundary(|t| f(-t), 1e-3, RAY_RADIUS_CAP));
    Ok((down, up))
}

fn shortcut_from(
    null: &dyn ExpFamily,
    tilted: &dyn ExpFamily,
    grid: &GridSpec,
    item1: &ItemVerdict,
    points: &[Vector],
) -> Result<ShortcutReport> {
    let (mq, mp) = (tilted.mean_domain(), null.mean_domain());
    let mean_spaces_equal = match mq.box_equal(&mp, 1e-12) {
        Some(b) => b,
        None => grid.points().iter().all(|p| mq.contains(p.as_slice()) == mp.contains(p.as_slice())),
    };
    let close = |a: f64, b: f64| (a.is_infinite() && b.is_infinite()) || (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()));
    let mut b_equal = !points.is_empty();
    for mu in points {
        match (boundaries_1d(null, mu), boundaries_1d(tilted, mu)) {
            (Ok((dp, up)), Ok((dq, uq))) => b_equal &= close(dp, dq) && close(up, uq),
            _ => b_equal = false,
        }
        if !b_equal {
            break;
        }
    }
    let var = item1.passed;
    Ok(ShortcutReport {
        variance_ordering: var,
        mean_spaces_equal,
        canonical_domains_equal_on_grid: b_equal,
        asserts_bp_subset_bq: var && mean_spaces_equal,
        asserts_mq_subset_mp: var && b_equal,
        applicable: var && (mean_spaces_equal || b_equal),
    })
}

/// One-dimensional shortcut: a variance ordering on the grid plus either
/// equal mean spaces or equal canonical domains gives both preconditions.
pub fn onedim_shortcut(null: &dyn ExpFamily, tilted: &dyn ExpFamily, grid: &GridSpec) -> Result<ShortcutReport> {
    if null.dim() != 1 {
        return Err(Error::Misuse(format!("shortcut applies to d = 1 only, got d = {}", null.dim())));
    }
    let item1 = check_sigma_ordering(null, tilted, grid)?;
    let points = grid.interior_points(&[tilted.mean_domain(), null.mean_domain()]);
    shortcut_from(null, tilted, grid, &item1, &points)
}

/// Log of the simple e-value `q_mu(u) / p_mu(u)`.
pub fn log_simple_evalue(tilted: &dyn ExpFamily, null: &dyn ExpFamily, mu: &Vector, u: &[f64]) -> Result<f64> {
    let lq = log_density_at_mean(tilted, mu, u)?;
    let lp = log_density_at_mean(null, mu, u)?;
    if lp == f64::NEG_INFINITY {
        return Err(Error::Domain { what: "support of the null member".into(), detail: format!("{u:?}") });
    }
    Ok(lq - lp)
}

pub fn simple_evalue(tilted: &dyn ExpFamily, null: &dyn ExpFamily, mu: &Vector, u: &[f64]) -> Result<f64> {
    log_simple_evalue(tilted, null, mu, u).map(f64::exp)
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionMember {
    pub label: String,
    pub report: Option<ConditionReport>,
    pub error: Option<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionReport {
    pub report_version: u32,
    pub members: Vec<PartitionMember>,
    pub certified: bool,
}

/// Preconditions and covariance ordering for every member of a partitioned
/// alternative; certified when every member passes.
pub fn corollary_partition_check(
    null: &dyn ExpFamily,
    members: &[(String, &dyn ExpFamily, GridSpec)],
) -> PartitionReport {
    let out: Vec<PartitionMember> = members
        .iter()
        .map(|(label, fam, grid)| match check(label, null, *fam, grid, &CheckOptions::only_item1()) {
            Ok(r) => {
                let passed = r.overall == Overall::SimpleEvariableCertified;
                PartitionMember { label: label.clone(), report: Some(r), error: None, passed }
            }
            Err(e) => PartitionMember { label: label.clone(), report: None, error: Some(e.to_string()), passed: false },
        })
        .collect();
    let certified = !out.is_empty() && out.iter().all(|m| m.passed);
    PartitionReport { report_version: REPORT_VERSION, members: out, certified }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_positive_axis_is_clipped_and_log_spaced() {
        let g = GridSpec::default_for(&Domain::positive(1), &Vector::from_vec(vec![1.0]));
        let a = &g.axes[0];
        assert!(a.log && a.count == 64);
        assert!((a.lo - 1e-4).abs() < 1e-18 && (a.hi - 1e4).abs() < 1e-9);
    }

    #[test]
    fn default_grid_caps_total_points() {
        let g = GridSpec::default_for(&Domain::whole(5), &Vector::zeros(5));
        assert!(g.size() <= MAX_GRID_POINTS);
        let g = GridSpec::default_for(&Domain::whole(2), &Vector::zeros(2));
        assert_eq!(g.size(), 64);
    }

    #[test]
    fn pairs_are_deterministic_and_inside() {
        let dom = Domain::interval(0.0, 2.0);
        let g = GridSpec::default_for(&dom, &Vector::from_vec(vec![1.0]));
        let a = g.pair_samples(std::slice::from_ref(&dom));
        let b = g.pair_samples(std::slice::from_ref(&dom));
        assert_eq!(a.len(), DEFAULT_PAIRS);
        assert_eq!(a, b);
        assert!(a.iter().all(|(x, y)| dom.contains(x.as_slice()) && dom.contains(y.as_slice())));
    }

    #[test]
    fn halton_first_terms() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert!((halton(1, 3) - 1.0 / 3.0).abs() < 1e-15);
    }
}
