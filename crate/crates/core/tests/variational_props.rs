mod common;

use std::f64::consts::FRAC_1_SQRT_2;

use common::*;
use proptest::prelude::*;
use tanlap_core::linalg::RankPolicy;
use tanlap_core::maps::BoxDomain;
use tanlap_core::operators::Exponent;
use tanlap_core::variational::*;

const NORMAL: [f64; 3] = [0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2];

fn harmonic_sub() -> (tanlap_core::maps::MapSource, Subdomain) {
    let src = gallery("embed3:harmonic");
    let sub = Subdomain::new(&src, BoxDomain::rect((0.7, 1.3), (-0.3, 0.3), 21).unwrap()).unwrap();
    (src, sub)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn plane_normal_perturbation_adds_in_quadrature(f1 in 1u32..=3, f2 in 1u32..=3, eps in -0.3f64..0.3) {
        let (src, sub) = harmonic_sub();
        let field = make_normal_field(&src, &sub, Bump::sine(vec![f1, f2]), &NORMAL, &RankPolicy::default(), true).unwrap();
        let base = energy(&src, None, 0.0, Exponent::Finite(2.0), &sub).unwrap();
        let e = energy(&src, Some(&field), eps, Exponent::Finite(2.0), &sub).unwrap();
        let dnu: f64 = field
            .grads
            .iter()
            .zip(&sub.weights)
            .map(|(g, w)| w * g.frobenius().powi(2))
            .sum();
        let lhs = e * e - base * base;
        let rhs = eps * eps * dnu;
        prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.max(f64::MIN_POSITIVE) + 1e-14, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn energy_grows_with_amplitude(f1 in 1u32..=3, f2 in 1u32..=3, seed in 0u64..100) {
        let (src, sub) = harmonic_sub();
        let (w, _) = trial_shape(seed, 2, 3);
        let field = match make_normal_field(&src, &sub, Bump::sine(vec![f1, f2]), &w, &RankPolicy::default(), true) {
            Ok(f) => f,
            Err(tanlap_core::Error::DegenerateDirection { .. }) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        for p in [Exponent::Finite(2.0), Exponent::Finite(4.0), Exponent::Infinity] {
            let es: Vec<f64> = [0.0, 0.05, 0.1, 0.2]
                .iter()
                .map(|&e| energy(&src, Some(&field), e, p, &sub).unwrap())
                .collect();
            for w in es.windows(2) {
                prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn normal_fields_are_normal(seed in 0u64..1000) {
        let src = gallery("nu_of_f:linear");
        let sub = Subdomain::new(&src, BoxDomain::cube(2, -0.5, 0.5, 15).unwrap()).unwrap();
        let (w, freqs) = trial_shape(seed, 2, 3);
        if let Ok(f) = make_normal_field(&src, &sub, Bump::sine(freqs), &w, &RankPolicy::default(), true) {
            prop_assert!(f.normality_defect <= 1e-10);
            prop_assert!(f.boundary_max <= 1e-12);
            let peak = f.values.iter().map(|v| nrm(v)).fold(0.0, f64::max);
            prop_assert!((peak - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn non_solution_is_labelled() {
    let src = gallery("paraboloid");
    let sub = Subdomain::new(&src, BoxDomain::cube(2, 0.2, 0.6, 9).unwrap()).unwrap();
    let rep = minimality_check(&src, &sub, Exponent::Finite(2.0), 3, &[0.1, -0.1], &RankPolicy::default(), 0).unwrap();
    assert_eq!(rep.verdict, VariationalVerdict::NonSolutionInput);
}

#[test]
fn lp_energies_approach_the_sup_from_below() {
    let (src, sub) = harmonic_sub();
    let field = make_normal_field(&src, &sub, Bump::sine(vec![1, 1]), &NORMAL, &RankPolicy::default(), true).unwrap();
    let ps = [8.0, 16.0, 32.0, 64.0];
    let d = p_limit_diagnostic(&src, &sub, Some(&field), 0.1, &ps).unwrap();
    let vol: f64 = sub.weights.iter().sum();
    for (e, p) in d.energies.iter().zip(ps) {
        assert!(*e <= d.sup_energy * vol.powf(1.0 / p) * (1.0 + 1e-12));
    }
    for w in d.relative_gaps.windows(2) {
        assert!(w[1] < w[0], "{:?}", d.relative_gaps);
    }
}

#[test]
fn reports_are_reproducible() {
    let (src, sub) = harmonic_sub();
    let run = || minimality_check(&src, &sub, Exponent::Infinity, 4, &[0.1, -0.1], &RankPolicy::default(), 11).unwrap();
    assert_eq!(run(), run());
}
