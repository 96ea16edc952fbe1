use proptest::prelude::*;

use pathloop::bounds::{check_bound, compute_constants, fit_rate};
use pathloop::estimators::{normal_mode_energy, std_energy};
use pathloop::potentials::{PotentialKind, PotentialSpec};
use pathloop::spectral::{
    covariance, discrete_frequency, grid_to_modes, mode_frequency, modes_to_grid, CovarianceMethod, RingPolymer,
};

fn potential() -> impl Strategy<Value = PotentialSpec> {
    prop_oneof![
        (0.5f64..2.0).prop_map(|w| PotentialSpec::harmonic(w, 1, 0.5, 1.0).unwrap()),
        (0.5f64..2.0, -0.5f64..0.5, 0.5f64..3.0)
            .prop_map(|(w, c, k)| PotentialSpec::soft_bumped(w, c, k, 1, 0.5, 1.0).unwrap()),
        Just(PotentialSpec::quartic(1, 1.0, 1.0).unwrap()),
    ]
}

proptest! {
    #[test]
    fn grid_mode_round_trip(d in 1usize..40, beta in 0.1f64..5.0, seed in any::<u64>()) {
        let mut s = seed;
        let x: Vec<f64> = (0..d)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let rp = RingPolymer::new(beta, 1, x.clone()).unwrap();
        let back = modes_to_grid(&grid_to_modes(&rp, d).unwrap(), d).unwrap();
        for (a, b) in x.iter().zip(&back.x) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_identity(p in potential(), d in 1usize..24, beta in 0.2f64..4.0,
                       x in prop::collection::vec(-2.0f64..2.0, 24)) {
        let rp = RingPolymer::new(beta, 1, x[..d].to_vec()).unwrap();
        let lp = grid_to_modes(&rp, d).unwrap();
        let e = std_energy(&rp, &p).unwrap();
        let m = normal_mode_energy(&lp, d, &p).unwrap();
        prop_assert!((e - m).abs() <= 1e-10 * e.abs().max(1.0), "{} vs {}", e, m);
    }

    #[test]
    fn va_recovers_v(p in potential(), q in -5.0f64..5.0) {
        let va = p.va_eval(&[q]).unwrap();
        let v = p.value(&[q]);
        prop_assert!((va + 0.5 * p.a * p.a * q * q - v).abs() <= 1e-12 * v.abs().max(1.0));
    }

    #[test]
    fn va_gradient_matches_differences(p in potential(), q in -3.0f64..3.0) {
        let h = 1e-5;
        let fd = (p.va_eval(&[q + h]).unwrap() - p.va_eval(&[q - h]).unwrap()) / (2.0 * h);
        let g = p.va_grad(&[q]).unwrap()[0];
        prop_assert!((fd - g).abs() < 1e-6 * g.abs().max(1.0) + 1e-7);
    }

    #[test]
    fn discrete_frequency_below_continuum(beta in 0.1f64..5.0, d in 2usize..200, k in 0usize..200) {
        prop_assume!(k < d);
        let wd = discrete_frequency(beta, d, k);
        let w = mode_frequency(beta, k);
        prop_assert!(wd >= 0.0 && wd <= w * (1.0 + 1e-12));
    }

    #[test]
    fn covariance_methods_agree(beta in 0.2f64..4.0, a in 0.2f64..3.0, f in 0.02f64..0.98) {
        let tau = f * beta;
        let c = covariance(beta, a, tau, CovarianceMethod::Closed).unwrap().value;
        let m = covariance(beta, a, tau, CovarianceMethod::Mehler).unwrap().value;
        let s = covariance(beta, a, tau, CovarianceMethod::Spectral { k_max: 20_000 }).unwrap();
        prop_assert!((c - m).abs() <= 1e-10 * c.abs().max(1.0));
        prop_assert!((c - s.value).abs() <= s.tail_bound + 1e-12);
    }

    #[test]
    fn l_over_k(m1 in 0.01f64..2.0, m2 in 0.01f64..10.0, beta in 0.05f64..4.0, d in 1usize..5, a in 0.1f64..4.0) {
        let c = compute_constants(m1, m2, beta, d, a).unwrap();
        // exp(2·C0·M1) overflows for small a; the identity is only testable
        // where K is representable.
        prop_assume!(c.l.is_finite());
        prop_assert!((c.l / c.k - 2.0 * (2.0 * beta + 1.0).sqrt()).abs() < 1e-12 * c.l / c.k);
        for v in [c.c0, c.k1, c.k2, c.k, c.l1, c.l2, c.l] {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn check_bound_margin_sign(err in 0.0f64..10.0, sigma in 0.0f64..1.0, k in 0.1f64..100.0, n in 1.0f64..1e4) {
        let v = check_bound(err, sigma, k, n).unwrap();
        prop_assert_eq!(v.pass, v.margin >= 0.0);
        prop_assert_eq!(v.pass, err - 3.0 * sigma <= k / n.sqrt());
    }

    #[test]
    fn power_laws_fit_exactly(c in 0.01f64..100.0, slope in -2.0f64..0.0) {
        let pts: Vec<(f64, f64)> = (1..=6).map(|i| {
            let n = 2f64.powi(i);
            (n, c * n.powf(slope))
        }).collect();
        prop_assert!((fit_rate(&pts).unwrap().slope - slope).abs() < 1e-10);
    }
}

#[test]
fn quartic_is_its_own_kind() {
    assert_eq!(PotentialSpec::quartic(1, 1.0, 1.0).unwrap().kind, PotentialKind::Quartic);
}
