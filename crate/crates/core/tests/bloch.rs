mod common;

use hill_kg::bloch::*;
use hill_kg::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn cosine() -> &'static (QuasimomentumMap, BlochTable) {
    static T: OnceLock<(QuasimomentumMap, BlochTable)> = OnceLock::new();
    T.get_or_init(|| {
        let t = find_n_bands(&PeriodicPotential::cosine(1.0), 8, &BandConfig::default()).unwrap();
        let km = build_kmap(&t, &KmapConfig::default()).unwrap();
        let blt = build_bloch_table(&km, 8, &BlochConfig::default()).unwrap();
        (km, blt)
    })
}

fn bump() -> Sampled {
    Sampled::from_fn(-3.5, 4.1, 1521, |y| {
        let v = (-2.0 * (y - 0.3) * (y - 0.3)).exp();
        if v < 1e-14 { 0.0 } else { v }
    })
}

#[test]
fn normalization_matches_rk4_quadrature() {
    let (km, _) = cosine();
    let pot = &km.table().potential;
    for (band, k) in [(0usize, 0.5 * PI), (1, 1.5 * PI), (2, 2.3 * PI)] {
        let row = floquet_solutions(km, band, k, &BlochConfig::default()).unwrap();
        let n = 1024;
        let g = common::rk4_fundamental(pot, row.derivs.e, n, 8);
        let end = g[n];
        // Floquet eigenvector of the oracle monodromy for e^{ikL}
        let rho = C64::from_polar(1.0, k);
        let theta = (rho - end[0]) / end[2];
        let direct: f64 = g[..n].iter().map(|v| (C64::new(v[0], 0.0) + theta * v[2]).norm_sqr()).sum::<f64>() / n as f64;
        assert!((direct - row.n2.re).abs() < 1e-8 * direct, "band {band}: {direct} vs {}", row.n2.re);
        assert!((theta - row.theta_plus).norm() < 1e-7 * (1.0 + theta.norm()));
    }
}

#[test]
fn rows_satisfy_floquet_invariants() {
    let (_, blt) = cosine();
    for (_, _, row) in blt.nodes() {
        assert!(row.floquet_defect < 1e-8, "k = {}", row.k);
        assert!(row.n2.re > 0.0 && row.n2.im.abs() < 1e-9);
        assert!((row.xi_plus_at(0.0, 1.0) - 1.0).norm() < 1e-9);
        assert!((row.xi_minus_at(0.0, 1.0) - 1.0).norm() < 1e-9);
    }
}

#[test]
fn product_approaches_one_at_high_energy() {
    // |m0_- m0_+ - 1| <= C / <k> in mid-band
    let t = find_n_bands(&PeriodicPotential::cosine(1.0), 24, &BandConfig::default()).unwrap();
    let km = build_kmap(&t, &KmapConfig::default()).unwrap();
    let mut scaled = vec![];
    for n in [3usize, 6, 12, 23] {
        let k = (n as f64 + 0.5) * PI;
        let row = floquet_solutions(&km, n, k, &BlochConfig::default()).unwrap();
        let mut dev: f64 = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                dev = dev.max((m0_product(&row, i as f64 / 16.0, j as f64 / 16.0, 1.0) - 1.0).norm());
            }
        }
        scaled.push(dev * (1.0 + k * k).sqrt());
    }
    let max = scaled.iter().cloned().fold(0.0, f64::max);
    assert!(scaled[3] <= scaled[0].max(1.0) && max < 10.0, "{scaled:?}");
}

#[test]
fn product_bounded_and_stable_under_refinement() {
    let (km, blt) = cosine();
    let fine = BlochConfig { nx_min: 256, ..BlochConfig::default() };
    let mut sup: f64 = 0.0;
    for (i, (k, _, row)) in blt.nodes().enumerate() {
        if i % 7 != 0 {
            continue;
        }
        let other = floquet_solutions(km, row.band, k, &fine).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.3, 0.8), (0.55, 0.1)] {
            let a = m0_product(row, x, y, 1.0);
            let b = m0_product(&other, x, y, 1.0);
            assert!((a - b).norm() < 1e-7 * (1.0 + a.norm()), "k = {k}: {}", (a - b).norm());
            sup = sup.max(a.norm());
        }
    }
    assert!(sup.is_finite() && sup < 50.0, "{sup}");
}

#[test]
fn product_derivative_bounded_near_edge() {
    // |d/dk (m0_- m0_+)| <= C / (k |k - ell pi|) on the window next to the edge
    let (km, _) = cosine();
    let h = 1e-6;
    let mut c: f64 = 0.0;
    for i in 1..=20 {
        let k = PI + 0.2 * i as f64 / 20.0;
        let p = floquet_solutions(km, 1, k + h, &BlochConfig::default()).unwrap();
        let m = floquet_solutions(km, 1, k - h, &BlochConfig::default()).unwrap();
        let d = (m0_product(&p, 0.2, 0.7, 1.0) - m0_product(&m, 0.2, 0.7, 1.0)).norm() / (2.0 * h);
        c = c.max(d * k * (k - PI));
    }
    assert!(c.is_finite() && c < 100.0, "{c}");
}

#[test]
fn parseval_and_eigenrelation_for_bump() {
    let (km, blt) = cosine();
    let f = bump();
    assert!(parseval_error(blt, &f) < 1e-6);
    assert!(eigenrelation_check(blt, &km.table().potential, &f) < 1e-5);
}

#[test]
fn inversion_recovers_bump() {
    let (_, blt) = cosine();
    let f = bump();
    let fhat = forward_transform(blt, &f);
    let xs: Vec<f64> = (0..61).map(|i| -1.5 + 0.06 * i as f64).collect();
    let back = inverse_transform(blt, &fhat, &xs);
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, v) in xs.iter().zip(&back) {
        let exact = (-2.0 * (x - 0.3) * (x - 0.3)).exp();
        num += (v - exact).norm_sqr();
        den += exact * exact;
    }
    assert!((num / den).sqrt() < 1e-5);
}

#[test]
fn zero_transforms_to_zero() {
    let (km, blt) = cosine();
    let f = Sampled::from_fn(-1.0, 1.0, 64, |_| 0.0);
    assert!(forward_transform(blt, &f).iter().all(|n| n.value.norm() == 0.0));
    assert_eq!(eigenrelation_check(blt, &km.table().potential, &f), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn product_is_periodic(x in 0.0f64..1.0, y in 0.0f64..1.0, idx in 0usize..500) {
        let (_, blt) = cosine();
        let nodes: Vec<_> = blt.nodes().collect();
        let row = nodes[idx % nodes.len()].2;
        let a = m0_product(row, x, y, 1.0);
        prop_assert!((m0_product(row, x + 1.0, y, 1.0) - a).norm() < 1e-10 * (1.0 + a.norm()));
        prop_assert!((m0_product(row, x, y - 1.0, 1.0) - a).norm() < 1e-10 * (1.0 + a.norm()));
    }

    #[test]
    fn floquet_product_is_periodic(x in 0.0f64..1.0, idx in 0usize..500) {
        // phi_+ phi_- = xi_+ xi_- is L-periodic
        let (_, blt) = cosine();
        let nodes: Vec<_> = blt.nodes().collect();
        let row = nodes[idx % nodes.len()].2;
        let a = row.xi_plus_at(x, 1.0) * row.xi_minus_at(x, 1.0);
        let b = row.xi_plus_at(x + 1.0, 1.0) * row.xi_minus_at(x + 1.0, 1.0);
        prop_assert!((a - b).norm() < 1e-8 * (1.0 + a.norm()));
    }
}
