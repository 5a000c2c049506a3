//! Invariants over randomly drawn parameters.

mod common;

use std::sync::Arc;

use common::{catalog_families, catalog_pairings, rng, v};
use evfam::expfam::{canonical_from_mean, log_density_at_mean, mean_from_canonical, ParamPoint};
use evfam::models::{ig_vs_exp_pairing, ksample_pairing, linmodel_mean, linmodel_psd_check, KSampleKind, LinearModelParams};
use evfam::sequential::{beta_plugin_eprocess, EProcessState, Mixture, PriorSpec};
use evfam::tilt::{f_gap, f_gradient};
use evfam::verify::exact::{expect_exact_sum, DiscreteSupport};
use evfam::verify::figures::ig_ratio_expectation;
use evfam::verify::{expect_quadrature, psd_test, Scheme};
use evfam::{CheckOptions, Matrix, SampleSpace};
use proptest::prelude::*;
use rand::Rng;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn gap_and_gradient_vanish_at_zero(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pairings = catalog_pairings();
        let p = &pairings[r.random_range(0..pairings.len())];
        let zero = evfam::Vector::zeros(p.null.dim());
        let g = f_gap(p.null.as_ref(), p.tilted.as_ref(), &zero, p.mu_star()).unwrap();
        prop_assert!(g.outside.is_none() && g.value.abs() < 1e-9, "{}: {}", p.key, g.value);
        let grad = f_gradient(p.null.as_ref(), p.tilted.as_ref(), &zero, p.mu_star()).unwrap();
        prop_assert!(grad.amax() < 1e-7 * (1.0 + p.mu_star().amax()), "{}: {}", p.key, grad.amax());
    }

    #[test]
    fn reanchoring_preserves_the_member(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cases = catalog_families();
        let case = &cases[r.random_range(0..cases.len())];
        let fam = case.fam.as_ref();
        let (m, a1, a2) = ((case.mean)(&mut r), (case.mean)(&mut r), (case.mean)(&mut r));
        let p = ParamPoint::from_mean(fam, m.clone(), a1).unwrap();
        let q = p.reanchor(fam, a2.clone()).unwrap();
        // recompute the mean from the new canonical coordinates
        let back = mean_from_canonical(fam, &q.canonical, &a2).unwrap();
        prop_assert!((&back - &m).amax() < 1e-7 * (1.0 + m.amax()), "{}: {:?} vs {:?}", case.name, back, m);
        let direct = canonical_from_mean(fam, &m, &a2).unwrap();
        prop_assert!((&direct - &q.canonical).amax() < 1e-6 * (1.0 + direct.amax()));
    }

    #[test]
    fn psd_verdict_is_congruence_invariant(
        eig in proptest::collection::vec((0.1f64..3.0, any::<bool>()), 3),
        rot in proptest::collection::vec(-1.0f64..1.0, 9),
        pert in proptest::collection::vec(-0.3f64..0.3, 9),
    ) {
        let q = Matrix::from_row_slice(3, 3, &rot).qr().q();
        let d = Matrix::from_diagonal(&v(&eig.iter().map(|(x, neg)| if *neg { -x } else { *x }).collect::<Vec<_>>()));
        let m = &q * d * q.transpose();
        let a = Matrix::identity(3, 3) + Matrix::from_row_slice(3, 3, &pert);
        let expected = eig.iter().all(|(_, neg)| !neg);
        prop_assert_eq!(psd_test(&m, 1e-9).unwrap().psd, expected);
        prop_assert_eq!(psd_test(&(&a * &m * a.transpose()), 1e-9).unwrap().psd, expected);
    }

    #[test]
    fn eprocess_is_a_running_product_and_rejection_sticks(
        evalues in proptest::collection::vec(0.05f64..4.0, 0..80),
    ) {
        let mut s = EProcessState::new(0.05).unwrap();
        let mut sum = 0.0;
        let mut first = None;
        for (i, e) in evalues.iter().enumerate() {
            let was = s.rejected;
            s.update(*e).unwrap();
            sum += e.ln();
            prop_assert!((s.log_value - sum).abs() < 1e-9);
            prop_assert!(!was || s.rejected);
            if first.is_none() && sum >= 20f64.ln() {
                first = Some(i as u64 + 1);
            }
        }
        prop_assert_eq!(s.first_crossing, first);
        prop_assert_eq!(s.n, evalues.len() as u64);
        let before = s.log_value;
        s.update(2.5).unwrap();
        s.update(0.4).unwrap();
        prop_assert!((s.log_value - before).abs() < 1e-12);
    }

    #[test]
    fn plugin_evalues_only_see_the_past(
        data in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40),
        cut in any::<prop::sample::Index>(),
        alt in proptest::collection::vec((any::<bool>(), any::<bool>()), 40),
    ) {
        let to = |x: &[(bool, bool)]| x.iter().map(|(a, b)| (f64::from(u8::from(*a)), f64::from(u8::from(*b)))).collect::<Vec<_>>();
        let k = cut.index(data.len());
        let mut other = data.clone();
        other[k..].copy_from_slice(&alt[..data.len() - k]);
        let prior = PriorSpec::BetaProduct { a1: 1.0, b1: 2.0, a2: 0.5, b2: 0.5 };
        let (e1, _) = beta_plugin_eprocess(&prior, &to(&data), 0.05).unwrap();
        let (e2, _) = beta_plugin_eprocess(&prior, &to(&other), 0.05).unwrap();
        prop_assert_eq!(&e1[..k], &e2[..k]);
        // each round is a simple e-variable for its predictable means
        for (i, (y1, y2)) in to(&data).iter().enumerate() {
            prop_assert!(e1[i] > 0.0 && e1[i].is_finite(), "round {i} {y1} {y2}");
        }
    }
}

proptest! {
    #![proptest_config(cfg(12))]

    #[test]
    fn mixtures_stay_below_one_under_every_null(
        pts in proptest::collection::vec((0.05f64..0.95, 0.05f64..0.95), 1..4),
        raw in proptest::collection::vec(0.1f64..1.0, 4),
        null_p in 0.02f64..0.98,
    ) {
        let total: f64 = raw[..pts.len()].iter().sum();
        let weights: Vec<f64> = raw[..pts.len()].iter().map(|w| w / total).collect();
        let fixed: f64 = weights[..pts.len() - 1].iter().sum();
        let mut weights = weights;
        *weights.last_mut().unwrap() = 1.0 - fixed;
        let prior = PriorSpec::DiscreteGrid { points: pts.iter().map(|(a, b)| vec![*a, *b]).collect(), weights };
        let make = |p: &[f64]| ksample_pairing(KSampleKind::Bernoulli, 2, p);
        let mix = Mixture::new(&prior, &make, &CheckOptions::only_item1()).unwrap();
        let support = DiscreteSupport::binary_product(&[null_p, null_p]).unwrap();
        let e = expect_exact_sum(&support, &|u| mix.evaluate(u).unwrap()).unwrap();
        prop_assert!(e.value <= 1.0 + 1e-12, "{}", e.value);
    }

    #[test]
    fn linmodel_block_and_eigen_verdicts_agree(seed in any::<u64>(), theta in -2.0f64..2.0) {
        let mut r = rng(seed);
        let n = r.random_range(4..12);
        let d = r.random_range(0..3usize);
        let design = Arc::new(common::random_design(n, d, seed));
        let sigma2 = r.random_range(0.3..3.0);
        let mut gamma: Vec<f64> = (0..=d).map(|_| common::normal(&mut r)).collect();
        gamma[0] = theta * sigma2;
        let mu = linmodel_mean(&design, &LinearModelParams::new(sigma2, gamma).unwrap()).unwrap();
        let check = linmodel_psd_check(&design, theta, &mu).unwrap();
        prop_assert!(check.psd, "min eigenvalue {}", check.min_eigenvalue);
        prop_assert!(check.c >= -1e-12 && check.c_block_residual <= 1e-9 * (1.0 + check.sigma_p_norm));
        prop_assert!(check.schur_margin >= -1e-9 * check.sigma_p_norm);
    }

    #[test]
    fn catalog_densities_integrate_to_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cases: Vec<_> = catalog_families()
            .into_iter()
            .filter(|c| c.fam.dim() == 1 && c.fam.sample_space().len() == 1)
            .collect();
        let case = &cases[r.random_range(0..cases.len())];
        let fam = case.fam.as_ref();
        let mu = (case.mean)(&mut r);
        let total = match fam.sample_space() {
            SampleSpace::Counts(_) => {
                let mut s = 0.0;
                for y in 0..100_000 {
                    let term = log_density_at_mean(fam, &mu, &[y as f64]).unwrap().exp();
                    s += term;
                    if y as f64 > 10.0 * mu[0] && term < 1e-18 {
                        break;
                    }
                }
                s
            }
            SampleSpace::Real(_) => {
                let dens = |x: f64| log_density_at_mean(fam, &mu, &[x]).unwrap().exp();
                expect_quadrature(&dens, &|_| 1.0, Scheme::RealLine { center: 0.0, scale: mu[0].sqrt() }).unwrap().value
            }
            _ => {
                let dens = |x: f64| if x > 0.0 { log_density_at_mean(fam, &mu, &[x]).unwrap().exp() } else { 0.0 };
                expect_quadrature(&dens, &|_| 1.0, Scheme::HalfLine { scale: mu[0] }).unwrap().value
            }
        };
        prop_assert!((total - 1.0).abs() < 1e-7, "{} at {}: {total}", case.name, mu[0]);
    }

    #[test]
    fn ig_expectation_flips_at_the_threshold(pick in 0usize..3, delta in 0.01f64..1.0) {
        let mu = [1.2, 1.5, 1.8][pick];
        let lambda = 2.0;
        let t = 1.0 / (1.0 / mu - lambda / (2.0 * mu * mu));
        let below = ig_ratio_expectation(lambda, mu, t * (1.0 - 0.2 * delta)).unwrap();
        let above = ig_ratio_expectation(lambda, mu, t * (1.0 + delta)).unwrap();
        prop_assert!(!below.diverged && below.value.is_finite());
        prop_assert!(above.diverged);
        let pairing = ig_vs_exp_pairing(lambda, mu).unwrap().0;
        prop_assert!(pairing.local_check().unwrap().psd);
    }
}
