use hill_kg::fit::linear_fit;
use hill_kg::*;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn cosine_map() -> &'static QuasimomentumMap {
    static M: OnceLock<QuasimomentumMap> = OnceLock::new();
    M.get_or_init(|| {
        let t = find_n_bands(&PeriodicPotential::cosine(1.0), 21, &BandConfig::default()).unwrap();
        build_kmap(&t, &KmapConfig::default()).unwrap()
    })
}

fn free_map() -> QuasimomentumMap {
    let t = find_n_bands(&PeriodicPotential::free(1.0), 6, &BandConfig::default()).unwrap();
    build_kmap(&t, &KmapConfig::default()).unwrap()
}

/// Twelve open gaps of comparable size.
fn multi_map() -> QuasimomentumMap {
    let pot = PeriodicPotential::new(1.0, 0.0, (1..=12).map(|j| 2.0 / j as f64).collect(), vec![]).unwrap();
    let t = find_n_bands(&pot, 11, &BandConfig::default()).unwrap();
    build_kmap(&t, &KmapConfig::default()).unwrap()
}

#[test]
fn free_band_function_is_parabola() {
    let km = free_map();
    let d = km.energy_derivs(3.0).unwrap();
    assert!((d.e - 9.0).abs() < 1e-9 && (d.e1 - 6.0).abs() < 1e-8);
    assert!((d.e2 - 2.0).abs() < 1e-6 && d.e3.abs() < 1e-4);
    for n in 0..6 {
        let (lams, ks) = km.nodes(n);
        for (l, k) in lams.iter().zip(ks) {
            assert!((l.sqrt() - k).abs() < 1e-9);
        }
    }
    let c = km.kprime_bounds_check(4.0).unwrap();
    assert!((c.kprime - 1.0).abs() < 1e-8 && c.a_w == 0.0);
    assert!(km.k_second_deriv_in_w(4.0).unwrap().abs() < 1e-6);
    assert_eq!(km.kpp_sign_change(2).unwrap(), None);
}

#[test]
fn edges_map_to_integer_multiples() {
    let km = cosine_map();
    for n in 0..8 {
        let (_, ks) = km.nodes(n);
        let ell = km.table().bands[n].ell as f64;
        assert!((ks[0] - ell * PI).abs() < 1e-9);
        assert!((ks[ks.len() - 1] - (ell + 1.0) * PI).abs() < 1e-9);
        assert!(ks.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn high_energy_asymptotics() {
    let km = cosine_map();
    let k = 20.0 * PI + 0.5 * PI;
    let d = km.energy_derivs(k).unwrap();
    // mean of the normalized potential is -shift
    let mean = km.table().potential.mean;
    assert!((d.e - k * k - mean).abs() < 0.1, "{}", d.e - k * k - mean);
    assert!((d.e1 - 2.0 * k).abs() < 0.1);
}

#[test]
fn too_close_to_edge_is_refused() {
    let km = cosine_map();
    let k = PI + 1e-12;
    assert!(matches!(km.energy_derivs(k), Err(Error::TooCloseToEdge { .. })));
    assert!(km.energy_derivs_unchecked(k).is_ok());
}

#[test]
fn edge_velocity_vanishes_like_square_root() {
    let km = multi_map();
    for n in 0..10 {
        let coarse = km.band_shape(n, 1e-8).unwrap();
        let fine = km.band_shape(n, 1e-10).unwrap();
        assert!(coarse.edot_positive);
        for (a, b) in [(coarse.edot_lo_ratio, fine.edot_lo_ratio), (coarse.edot_hi_ratio, fine.edot_hi_ratio)] {
            assert!(b < 1e-3, "band {n}: {b}");
            assert!((b / a - 0.1).abs() < 0.02, "band {n}: ratio {}", b / a);
        }
    }
}

#[test]
fn one_inflection_per_band() {
    let km = multi_map();
    for n in 0..10 {
        assert_eq!(km.band_shape(n, 1e-8).unwrap().e2_sign_changes, 1, "band {n}");
    }
    let km = cosine_map();
    for n in 0..4 {
        assert_eq!(km.band_shape(n, 1e-8).unwrap().e2_sign_changes, 1, "band {n}");
    }
}

#[test]
fn kpp_has_unique_zero_on_upper_bands() {
    let km = multi_map();
    assert_eq!(km.kpp_sign_change(0).unwrap(), None);
    for n in 1..10 {
        let w1 = km.kpp_sign_change(n).unwrap().expect("sign change");
        let (a, b) = km.table().band_w(n);
        assert!(w1 > a && w1 < b);
        assert!(km.k_second_deriv_in_w(a + 0.5 * (w1 - a)).unwrap() < 0.0);
        assert!(km.k_second_deriv_in_w(w1 + 0.5 * (b - w1)).unwrap() > 0.0);
    }
}

#[test]
fn kprime_blows_up_with_half_power() {
    let km = cosine_map();
    let (a, _) = km.table().band_w(1);
    let ds: Vec<f64> = (0..6).map(|i| 1e-9 * 4f64.powi(i)).collect();
    let ys: Vec<f64> = ds.iter().map(|&d| km.kprime_bounds_check(a + d).unwrap().kprime.ln()).collect();
    let xs: Vec<f64> = ds.iter().map(|d| d.ln()).collect();
    let (slope, _, _) = linear_fit(&xs, &ys);
    assert!((slope + 0.5).abs() < 0.05, "{slope}");
}

#[test]
fn kpp_blows_up_with_three_halves_power_at_upper_edge() {
    let km = cosine_map();
    let (_, b) = km.table().band_w(1);
    let ds: Vec<f64> = (0..6).map(|i| 1e-9 * 4f64.powi(i)).collect();
    let v: Vec<f64> = ds.iter().map(|&d| km.k_second_deriv_in_w(b - d).unwrap()).collect();
    assert!(v.iter().all(|&x| x > 0.0));
    let xs: Vec<f64> = ds.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let (slope, _, _) = linear_fit(&xs, &ys);
    assert!((slope + 1.5).abs() < 0.1, "{slope}");
}

#[test]
fn kprime_bracketed_by_edge_profile() {
    let km = cosine_map();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for n in 1..4 {
        let (a, b) = km.table().band_w(n);
        for i in 1..50 {
            let w = a + (b - a) * i as f64 / 50.0;
            let c = km.kprime_bounds_check(w).unwrap();
            assert!(c.kprime >= 1.0 - 1e-9);
            if c.a_w > 0.0 {
                lo = lo.min((c.kprime - 1.0) / c.a_w);
                hi = hi.max((c.kprime - 1.0) / (c.a_w + 1.0 / (1.0 + w * w)));
            }
        }
    }
    assert!(lo > 0.0 && hi.is_finite() && lo <= hi * 1e3, "{lo} {hi}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quasimomentum_solves_discriminant(n in 0usize..12, s in 0.001f64..0.999) {
        let km = cosine_map();
        let b = km.table().bands[n];
        let lam = b.a_plus + s * (b.a_minus_next - b.a_plus);
        let (k, d) = km.at_lambda(n, lam).unwrap();
        let delta = km.solver().monodromy(lam, 0).unwrap().delta().value();
        prop_assert!(((k * km.period()).cos() - 0.5 * delta).abs() < 1e-8);
        prop_assert!((d.e - lam).abs() < 1e-12 * lam.abs().max(1.0));
        let back = km.energy_derivs_unchecked(k).unwrap();
        prop_assert!((back.e - lam).abs() < 1e-8 * lam.abs().max(1.0));
    }

    #[test]
    fn band_function_is_even(k in 0.05f64..30.0) {
        let km = cosine_map();
        let p = km.energy_derivs_unchecked(k).unwrap();
        let m = km.energy_derivs_unchecked(-k).unwrap();
        prop_assert_eq!(m, p.reflected());
    }

    #[test]
    fn velocity_matches_difference(n in 0usize..6, s in 0.05f64..0.95) {
        let km = cosine_map();
        let (k0, k1) = km.table().k_interval(n);
        let k = k0 + s * (k1 - k0);
        let h = 1e-5;
        let d = km.energy_derivs_unchecked(k).unwrap();
        let fd = (km.energy(k + h).unwrap() - km.energy(k - h).unwrap()) / (2.0 * h);
        prop_assert!((d.e1 - fd).abs() < 1e-5 * (1.0 + d.e1.abs()));
        let fd2 = (km.energy_derivs_unchecked(k + h).unwrap().e2 - km.energy_derivs_unchecked(k - h).unwrap().e2) / (2.0 * h);
        prop_assert!((d.e3 - fd2).abs() < 1e-3 * (1.0 + d.e3.abs()));
    }
}
