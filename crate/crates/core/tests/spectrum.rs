mod common;

use hill_kg::*;
use proptest::prelude::*;

fn cosine_table(n: usize) -> BandTable {
    find_n_bands(&PeriodicPotential::cosine(1.0), n, &BandConfig::default()).unwrap()
}

fn raw_edges(t: &BandTable) -> Vec<f64> {
    let mut s = vec![t.bands[0].a_plus + t.shift];
    for g in &t.gaps {
        s.push(g.lower + t.shift);
        s.push(g.upper + t.shift);
    }
    s
}

#[test]
fn cosine_edges_match_fourier_matrix() {
    let t = cosine_table(12);
    let ours = raw_edges(&t);
    let oracle = common::hill_matrix_edges(&PeriodicPotential::cosine(1.0), 32);
    assert!(ours.len() >= 24);
    for i in 0..24 {
        let err = (ours[i] - oracle[i]).abs();
        assert!(err < 1e-7 * oracle[i].abs().max(1.0), "edge {i}: {} vs {}", ours[i], oracle[i]);
    }
}

#[test]
fn two_harmonic_edges_match_fourier_matrix() {
    let pot = PeriodicPotential::new(2.0, 0.3, vec![1.5, -0.7], vec![0.4, 0.9]).unwrap();
    let t = find_n_bands(&pot, 8, &BandConfig::default()).unwrap();
    let ours = raw_edges(&t);
    let oracle = common::hill_matrix_edges(&pot, 32);
    for i in 0..16 {
        assert!((ours[i] - oracle[i]).abs() < 1e-7 * oracle[i].abs().max(1.0), "edge {i}");
    }
}

#[test]
fn free_gaps_are_closed() {
    let t = find_n_bands(&PeriodicPotential::free(1.0), 10, &BandConfig::default()).unwrap();
    for ell in 1..10 {
        assert_eq!(t.gap_w(ell), 0.0);
    }
}

#[test]
fn lame_edges_follow_modulus() {
    // finite-gap potential: edges kappa^2, 1, 1 + kappa^2 and nothing else open
    let kappa: f64 = 0.9;
    let t = find_n_bands(&PeriodicPotential::lame(kappa).unwrap(), 4, &BandConfig::default()).unwrap();
    let s = raw_edges(&t);
    let k2 = kappa * kappa;
    assert!((s[0] - k2).abs() < 1e-7);
    assert!((s[1] - 1.0).abs() < 1e-7);
    assert!((s[2] - (1.0 + k2)).abs() < 1e-7);
    for ell in 2..4 {
        assert_eq!(t.gap_w(ell), 0.0, "gap {ell} should be closed");
    }
}

#[test]
fn edges_shift_with_mean() {
    let a = cosine_table(6);
    let b = find_n_bands(&PeriodicPotential::cosine(1.0).shifted(2.5), 6, &BandConfig::default()).unwrap();
    for (x, y) in raw_edges(&a).iter().zip(raw_edges(&b)) {
        assert!((x + 2.5 - y).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn free_discriminant_is_two_cos(lambda in 0.1f64..400.0) {
        let m = monodromy(&PeriodicPotential::free(1.0), lambda, 0).unwrap();
        prop_assert!((m.delta().value() - 2.0 * lambda.sqrt().cos()).abs() < 1e-9);
    }

    #[test]
    fn monodromy_is_unimodular(
        lambda in -5.0f64..600.0,
        c1 in -3.0f64..3.0,
        c2 in -2.0f64..2.0,
        s1 in -2.0f64..2.0,
    ) {
        let pot = PeriodicPotential::new(1.0, 0.0, vec![c1, c2], vec![s1]).unwrap();
        let m = monodromy(&pot, lambda, 0).unwrap();
        prop_assert!((m.det() - 1.0).abs() < 1e-10, "det {}", m.det());
    }

    #[test]
    fn discriminant_derivative_matches_difference(lambda in 1.0f64..200.0) {
        let pot = PeriodicPotential::cosine(0.7);
        let h = 1e-5;
        let d = monodromy(&pot, lambda, 1).unwrap().delta().derivative(1);
        let p = monodromy(&pot, lambda + h, 0).unwrap().delta().value();
        let q = monodromy(&pot, lambda - h, 0).unwrap().delta().value();
        prop_assert!((d - (p - q) / (2.0 * h)).abs() < 1e-5 * (1.0 + d.abs()));
    }

    #[test]
    fn edges_bracket_band_interiors(n in 0usize..8) {
        let t = cosine_table(8);
        let b = t.bands[n];
        let mid = 0.5 * (b.a_plus + b.a_minus_next) + t.shift;
        let m = monodromy(&PeriodicPotential::cosine(1.0), mid, 0).unwrap();
        prop_assert!(m.delta().value().abs() < 2.0);
    }
}
