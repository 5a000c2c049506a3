//! Shared fixtures: the catalog families with interior-mean and sample
//! generators, and the pairings used by several suites.

#![allow(dead_code)]

use std::sync::Arc;

use evfam::expfam::{ExpFamily, Matrix, SampleSpace, Vector};
use evfam::models::{
    abm_vs_poisson_pairing, gaussian_location_pairing, gaussian_scale_pairing, ig_vs_exp_pairing, ksample_pairing,
    linmodel_mean, linmodel_pairing, make_family, negbinom_vs_poisson_pairing, nef_pairing, KSampleKind,
    LinearModelDesign, LinearModelFamily, LinearModelParams, NefDescriptor, NefKind, Pairing,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type MeanGen = Box<dyn Fn(&mut ChaCha8Rng) -> Vector>;

pub struct Case {
    pub name: String,
    pub fam: Arc<dyn ExpFamily>,
    /// Draws a mean well inside the mean domain.
    pub mean: MeanGen,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

pub fn v(x: &[f64]) -> Vector {
    Vector::from_vec(x.to_vec())
}

fn positive_mean(lo: f64, hi: f64) -> MeanGen {
    Box::new(move |r| v(&[(r.random_range(lo.ln()..hi.ln())).exp()]))
}

fn box_mean(lo: f64, hi: f64, d: usize) -> MeanGen {
    Box::new(move |r| Vector::from_iterator(d, (0..d).map(|_| r.random_range(lo..hi))))
}

/// Sample point of the family's sample space.
pub fn sample_point(space: SampleSpace, r: &mut ChaCha8Rng) -> Vec<f64> {
    match space {
        SampleSpace::Binary(k) => (0..k).map(|_| f64::from(u8::from(r.random_bool(0.5)))).collect(),
        SampleSpace::Counts(k) => (0..k).map(|_| r.random_range(0..12) as f64).collect(),
        SampleSpace::Real(k) => (0..k).map(|_| 2.0 * normal(r)).collect(),
        SampleSpace::PositiveReal(k) => (0..k).map(|_| (normal(r)).exp()).collect(),
    }
}

pub fn random_design(n: usize, d: usize, seed: u64) -> LinearModelDesign {
    let mut r = rng(seed);
    loop {
        let entries: Vec<f64> = (0..n * (d + 1)).map(|_| normal(&mut r)).collect();
        if let Ok(design) = LinearModelDesign::new(Matrix::from_row_slice(n, d + 1, &entries)) {
            return design;
        }
    }
}

fn linmodel_case(name: &str, design: Arc<LinearModelDesign>, theta: f64) -> Case {
    let fam = Arc::new(LinearModelFamily::new(design.clone(), theta).unwrap());
    let d = design.d();
    Case {
        name: name.into(),
        fam,
        mean: Box::new(move |r| {
            let sigma2 = r.random_range(0.3..3.0);
            let gamma: Vec<f64> = (0..=d).map(|_| normal(r)).collect();
            linmodel_mean(&design, &LinearModelParams::new(sigma2, gamma).unwrap()).unwrap()
        }),
    }
}

/// Null families of the catalog, plus the linear model away from its null.
pub fn catalog_families() -> Vec<Case> {
    let sigma = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let mk = |d: NefDescriptor| make_family(&d).unwrap();
    let design = Arc::new(random_design(10, 2, 11));
    vec![
        Case { name: "poisson".into(), fam: mk(NefDescriptor::Poisson), mean: positive_mean(0.2, 12.0) },
        Case { name: "gamma".into(), fam: mk(NefDescriptor::Gamma { r: 2.5 }), mean: positive_mean(0.2, 12.0) },
        Case { name: "negbinom".into(), fam: mk(NefDescriptor::NegBinom { n: 3.0 }), mean: positive_mean(0.2, 12.0) },
        Case { name: "abm-r1".into(), fam: mk(NefDescriptor::Abm { s: 2.0, r: 1 }), mean: positive_mean(0.2, 12.0) },
        Case { name: "abm-r2".into(), fam: mk(NefDescriptor::Abm { s: 2.0, r: 2 }), mean: positive_mean(0.2, 12.0) },
        Case {
            name: "tweedie-3".into(),
            fam: mk(NefDescriptor::Tweedie { a: 0.5, gamma: 3.0 }),
            mean: positive_mean(0.2, 6.0),
        },
        Case {
            name: "inverse-gaussian".into(),
            fam: mk(NefDescriptor::InverseGaussian { lambda: 2.0 }),
            mean: positive_mean(0.2, 6.0),
        },
        Case {
            name: "gaussian-location".into(),
            fam: mk(NefDescriptor::GaussianLocation { sigma: sigma.clone(), constrained: 0 }),
            mean: box_mean(-4.0, 4.0, 2),
        },
        Case {
            name: "gaussian-location-constrained".into(),
            fam: mk(NefDescriptor::GaussianLocation { sigma: Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]), constrained: 1 }),
            mean: box_mean(-4.0, 4.0, 2),
        },
        Case { name: "gaussian-scale".into(), fam: mk(NefDescriptor::GaussianScale), mean: positive_mean(0.2, 40.0) },
        Case {
            name: "bernoulli-k2".into(),
            fam: mk(NefDescriptor::BernoulliKSample { k: 2 }),
            mean: box_mean(0.1, 1.9, 1),
        },
        Case {
            name: "bernoulli-k3".into(),
            fam: mk(NefDescriptor::BernoulliKSample { k: 3 }),
            mean: box_mean(0.15, 2.85, 1),
        },
        Case { name: "poisson-k2".into(), fam: mk(NefDescriptor::PoissonKSample { k: 2 }), mean: positive_mean(0.2, 20.0) },
        Case {
            name: "gaussian-k3".into(),
            fam: mk(NefDescriptor::GaussianKSample { k: 3, sigma2: 2.0 }),
            mean: box_mean(-5.0, 5.0, 1),
        },
        linmodel_case("linmodel-null", design.clone(), 0.0),
        linmodel_case("linmodel-theta", design, 0.7),
    ]
}

/// The pairings of the catalog with a representative parameter choice each.
pub fn catalog_pairings() -> Vec<Pairing> {
    let sp = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let sq = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    let design = Arc::new(random_design(10, 2, 5));
    vec![
        ksample_pairing(KSampleKind::Bernoulli, 2, &[0.375, 0.625]).unwrap(),
        ksample_pairing(KSampleKind::Bernoulli, 3, &[0.2, 0.5, 0.9]).unwrap(),
        ksample_pairing(KSampleKind::Poisson, 2, &[1.0, 3.0]).unwrap(),
        ksample_pairing(KSampleKind::Gaussian { sigma2: 2.0 }, 3, &[0.0, 1.0, -2.0]).unwrap(),
        gaussian_location_pairing(sp.clone(), &[1.0, -1.0], sq.clone()).unwrap(),
        gaussian_location_pairing(sq, &[1.0, -1.0], sp).unwrap(),
        gaussian_scale_pairing(-3.0, 9.0).unwrap(),
        gaussian_scale_pairing(2.0, 4.0).unwrap(),
        negbinom_vs_poisson_pairing(2.0, 3.0).unwrap(),
        abm_vs_poisson_pairing(2.0, 1, 3.0).unwrap(),
        abm_vs_poisson_pairing(2.0, 2, 3.0).unwrap(),
        nef_pairing(NefKind::Tweedie { a: 1.0, gamma: 2.0 }, NefKind::Tweedie { a: 0.5, gamma: 3.0 }, 1.0).unwrap(),
        ig_vs_exp_pairing(2.0, 1.5).unwrap().0,
        linmodel_pairing(design, &LinearModelParams::new(1.0, vec![0.8, 0.5, -0.3]).unwrap()).unwrap(),
    ]
}
