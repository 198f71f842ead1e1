use hill_kg::fit::linear_fit;
use hill_kg::phase::{eta_from_energy, free_tail_energy, nondegeneracy_floor};
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
    let t = find_n_bands(&PeriodicPotential::free(1.0), 8, &BandConfig::default()).unwrap();
    build_kmap(&t, &KmapConfig::default()).unwrap()
}

#[test]
fn free_phase_closed_forms() {
    let km = free_map();
    let pm = PhaseModel::new(&km, 1.0).unwrap();
    let z = pm.eta_derivs_extended(0.0);
    assert!((z.eta - 1.0).abs() < 1e-12 && z.d1.abs() < 1e-12 && (z.d2 - 1.0).abs() < 1e-8);
    let d = pm.eta_derivs(1.0).unwrap();
    assert!((d.d1 - 0.5f64.sqrt()).abs() < 1e-10);
    assert!((d.d2 - 2f64.powf(-1.5)).abs() < 1e-8);
    for i in 1..40 {
        let e = pm.eta_derivs(0.2 * i as f64).unwrap();
        assert!(e.d1 > 0.0 && e.d1 < 1.0);
    }
}

#[test]
fn third_derivative_chain_rule_matches_closed_form() {
    // eta = sqrt(k^2 + mu): eta''' = -3 mu k / (k^2 + mu)^{5/2}
    for &(k, mu) in &[(0.3, 1.0), (2.0, 0.5), (7.0, 3.0)] {
        let e = eta_from_energy(&free_tail_energy(k, 0.0), mu);
        let exact = -3.0 * mu * k / (k * k + mu).powf(2.5);
        assert!((e.d3 - exact).abs() < 1e-14 * (1.0 + exact.abs()));
    }
}

#[test]
fn free_stationary_points() {
    let km = free_map();
    let pm = PhaseModel::new(&km, 1.0).unwrap();
    let k0 = pm.stationary_point(4.0, 4.0 * 0.5f64.sqrt()).unwrap().unwrap();
    assert!((k0 - 1.0).abs() < 1e-10);
    assert_eq!(pm.stationary_point(4.0, 0.0).unwrap(), Some(0.0));
    assert_eq!(pm.stationary_point(4.0, 4.0).unwrap(), None);
}

#[test]
fn cosine_stationary_point_stable_under_refinement() {
    let km = cosine_map();
    let pm = PhaseModel::new(km, 1.0).unwrap();
    let k0 = pm.stationary_point(1.0, 0.9).unwrap().unwrap();
    let fine = build_kmap(km.table(), &KmapConfig { nodes_per_band: 128, ..KmapConfig::default() }).unwrap();
    let k1 = PhaseModel::new(&fine, 1.0).unwrap().stationary_point(1.0, 0.9).unwrap().unwrap();
    assert!((k0 - k1).abs() < 1e-10, "{k0} {k1}");
    let d = pm.eta_derivs_extended(k0);
    assert!((d.d1 - 0.9).abs() < 1e-10);
}

#[test]
fn free_has_no_degenerate_mass() {
    let km = free_map();
    let d = find_degenerate_set(&km, km.k_max(), &DsetConfig::default());
    assert!(d.candidates.is_empty());
}

#[test]
fn cosine_candidates_have_small_residuals() {
    let km = cosine_map();
    let d = find_degenerate_set(km, 6.0 * PI, &DsetConfig::default());
    for c in &d.candidates {
        assert!(c.residual < 1e-8 && c.mu > 0.0);
    }
}

#[test]
fn curvature_decays_like_inverse_cube() {
    let km = cosine_map();
    let pm = PhaseModel::new(km, 1.0).unwrap();
    let (mut xs, mut ys) = (vec![], vec![]);
    for n in 4..20 {
        let k = (n as f64 + 0.5) * PI;
        let d = pm.eta_derivs(k).unwrap();
        assert!(d.d2 > 0.0);
        xs.push(k.ln());
        ys.push(d.d2.ln());
    }
    let (slope, _, _) = linear_fit(&xs, &ys);
    assert!((slope + 3.0).abs() < 0.3, "{slope}");
}

#[test]
fn nondegeneracy_floor_is_positive() {
    let km = cosine_map();
    let pm = PhaseModel::new(km, 1.0).unwrap();
    assert!(nondegeneracy_floor(&pm, 64) > 1e-3);
}

#[test]
fn curvature_negative_below_open_upper_edges() {
    let km = cosine_map();
    for n in 0..3 {
        let (_, b) = km.table().band_w(n);
        let g = km.table().gap_w(n + 1);
        for f in [1e-4, 1e-3, 1e-2] {
            let w = b - f * g;
            let (_, d) = km.at_lambda(n, w * w).unwrap();
            assert!(d.e2 < 0.0, "band {n} at {f}");
        }
    }
}

#[test]
fn curvature_large_at_lower_edges() {
    let km = cosine_map();
    // |E''| g / ell bounded below on the collar |w - a| <= 8 g
    let mut c = f64::INFINITY;
    for n in 1..4 {
        let (a, _) = km.table().band_w(n);
        let g = km.table().gap_w(n);
        let ell = km.table().bands[n].ell as f64;
        for i in 1..=16 {
            let w = a + 8.0 * g * i as f64 / 16.0;
            let (_, d) = km.at_lambda(n, w * w).unwrap();
            c = c.min(d.e2.abs() * g / ell);
        }
    }
    assert!(c > 0.0 && c.is_finite(), "{c}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curvature_matches_difference(n in 0usize..8, s in 0.1f64..0.9) {
        let km = cosine_map();
        let pm = PhaseModel::new(km, 1.0).unwrap();
        let (k0, k1) = km.table().k_interval(n);
        let k = k0 + s * (k1 - k0);
        let d = pm.eta_derivs(k).unwrap();
        let mut errs = vec![];
        for h in [1e-3, 1e-4] {
            let fd = (pm.eta_derivs(k + h).unwrap().d1 - pm.eta_derivs(k - h).unwrap().d1) / (2.0 * h);
            errs.push((fd - d.d2).abs());
        }
        prop_assert!(errs[1] < 1e-6 * (1.0 + d.d2.abs()));
        if errs[0] > 1e-9 {
            prop_assert!((errs[0] / errs[1]).log10() >= 1.9 || errs[1] < 1e-10);
        }
    }

    #[test]
    fn phase_is_even_and_above_mass(k in 0.05f64..60.0, mu in 0.1f64..5.0) {
        let km = cosine_map();
        let pm = PhaseModel::new(km, mu).unwrap();
        let p = pm.eta_derivs_extended(k);
        let m = pm.eta_derivs_extended(-k);
        prop_assert!(p.eta >= mu.sqrt() - 1e-12);
        prop_assert_eq!(p.eta, m.eta);
        prop_assert_eq!(p.d1, -m.d1);
    }
}
