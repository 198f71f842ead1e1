//! Phase-aware adaptive quadrature of int e^{i h(k)} g(k) dk and the
//! van der Corput bounds with explicit constants.

use crate::error::{Error, Result};
use crate::quadrature::{GAUSS10_WEIGHTS, KRONROD21_NODES, KRONROD21_WEIGHTS};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscConfig {
    /// Largest number of panels, initial partition included.
    pub max_panels: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for OscConfig {
    fn default() -> Self {
        Self {
            max_panels: 200_000,
            abs_tol: 1e-14,
            rel_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscResult {
    pub value: C64,
    pub err_est: f64,
    pub panels: usize,
    /// False when refinement stopped at the budget before reaching tolerance.
    pub converged: bool,
}

/// Kronrod-21 value and |K21 - G10| on [a, b].
pub fn gauss_kronrod21(f: &mut impl FnMut(f64) -> C64, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut k = C64::new(0.0, 0.0);
    let mut g = C64::new(0.0, 0.0);
    for i in 0..10 {
        let x = r * KRONROD21_NODES[i];
        let s = f(c - x) + f(c + x);
        k += s * KRONROD21_WEIGHTS[i];
        if i % 2 == 1 {
            g += s * GAUSS10_WEIGHTS[i / 2];
        }
    }
    k += f(c) * KRONROD21_WEIGHTS[10];
    ((k * r), ((k - g) * r).norm())
}

/// Width of the stationary collar at k0: Fresnel scale from h'', Airy scale
/// from h''' when h'' is nearly degenerate.
pub fn collar_width(h2: f64, h3: f64) -> f64 {
    if h2.abs() < 1e-6 * h3.abs().powf(2.0 / 3.0) {
        4.0 * (6.0 / h3.abs()).cbrt()
    } else {
        4.0 * (2.0 / h2.abs()).sqrt()
    }
}

/// int_a^b e^{i h(k)} g(k) dk.
///
/// `phase(k)` returns (h, h', h'', h'''). The interval is first cut at the
/// supplied stationary points and their collars, then every piece is split
/// until it holds at most one oscillation of h, judged from |h'| at both ends
/// and the midpoint. Panels are then refined worst-first until the summed
/// Kronrod-Gauss differences meet the tolerance or the budget runs out.
/// Fails with `BudgetExceeded` only when the oscillation-resolving partition
/// alone needs more panels than allowed.
pub fn oscillatory_quad(
    a: f64,
    b: f64,
    phase: impl Fn(f64) -> [f64; 4],
    amp: impl Fn(f64) -> C64,
    stationary: &[f64],
    cfg: &OscConfig,
) -> Result<OscResult> {
    if !(b > a) {
        return Ok(OscResult {
            value: C64::new(0.0, 0.0),
            err_est: 0.0,
            panels: 0,
            converged: true,
        });
    }
    let mut cuts = vec![a, b];
    for &k0 in stationary {
        if k0 > a && k0 < b {
            let d = phase(k0);
            let w = collar_width(d[2], d[3]);
            cuts.extend([k0, (k0 - w).max(a), (k0 + w).min(b)]);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let slope = |k: f64| phase(k)[1].abs();
    let mut panels: Vec<(f64, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let mut stack = vec![(w[0], w[1])];
        while let Some((p, q)) = stack.pop() {
            let m = 0.5 * (p + q);
            let hp = slope(p).max(slope(q)).max(slope(m));
            if (q - p) * hp <= 2.0 * PI || q - p <= 1e-15 * q.abs().max(1.0) {
                panels.push((p, q));
                if panels.len() > cfg.max_panels {
                    return Err(Error::BudgetExceeded { budget: cfg.max_panels });
                }
            } else {
                stack.push((m, q));
                stack.push((p, m));
            }
        }
    }
    panels.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut f = |k: f64| {
        let h = phase(k)[0];
        amp(k) * C64::from_polar(1.0, h)
    };
    let mut est: Vec<(f64, f64, C64, f64)> = panels
        .iter()
        .map(|&(p, q)| {
            let (v, e) = gauss_kronrod21(&mut f, p, q);
            (p, q, v, e)
        })
        .collect();
    // Refinement keeps running sums; the reported totals are re-summed left
    // to right at the end so the result does not depend on heap order.
    let mut heap: BinaryHeap<(OrdF64, usize)> = est.iter().enumerate().map(|(i, x)| (OrdF64(x.3), i)).collect();
    let mut value: C64 = est.iter().map(|x| x.2).sum();
    let mut err: f64 = est.iter().map(|x| x.3).sum();
    while err > cfg.abs_tol.max(cfg.rel_tol * value.norm()) && est.len() < cfg.max_panels {
        let Some((_, worst)) = heap.pop() else { break };
        let (p, q, v, e) = est[worst];
        let m = 0.5 * (p + q);
        if q - p <= 1e-14 * q.abs().max(1.0) || e == 0.0 {
            break;
        }
        let (v1, e1) = gauss_kronrod21(&mut f, p, m);
        let (v2, e2) = gauss_kronrod21(&mut f, m, q);
        est[worst] = (p, m, v1, e1);
        est.push((m, q, v2, e2));
        heap.push((OrdF64(e1), worst));
        heap.push((OrdF64(e2), est.len() - 1));
        value += v1 + v2 - v;
        err += e1 + e2 - e;
    }
    est.sort_by(|x, y| x.0.total_cmp(&y.0));
    let value: C64 = est.iter().fold(C64::new(0.0, 0.0), |a, x| a + x.2);
    let err: f64 = est.iter().fold(0.0, |a, x| a + x.3);
    let converged = err <= cfg.abs_tol.max(cfg.rel_tol * value.norm());
    Ok(OscResult {
        value,
        err_est: err,
        panels: est.len(),
        converged,
    })
}

struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// C_m = 5 2^{m-1} - 2.
pub fn vdc_constant(m: u32) -> f64 {
    5.0 * 2f64.powi(m as i32 - 1) - 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VdcBound {
    pub m: u32,
    pub c_m: f64,
    pub mu_scale: f64,
    /// min(|psi(a)|, |psi(b)|).
    pub psi_end_min: f64,
    /// int_a^b |psi'|.
    pub psi_variation: f64,
    pub bound: f64,
}

/// Upper bound for |int_a^b e^{i mu phi} psi| given |phi^(m)| >= c_m on (a, b);
/// for m = 1, phi' must also be monotone.
pub fn vdc_bound(m: u32, c_m: f64, mu_scale: f64, psi_end_min: f64, psi_variation: f64, monotone: bool) -> Result<VdcBound> {
    if m == 0 {
        return Err(Error::InvalidInput("derivative order must be at least 1".into()));
    }
    if !(c_m > 0.0) || !(mu_scale > 0.0) {
        return Err(Error::HypothesisViolated(format!("need c_m > 0 and mu > 0, got {c_m}, {mu_scale}")));
    }
    if m == 1 && !monotone {
        return Err(Error::HypothesisViolated("first-derivative bound needs a monotone phase derivative".into()));
    }
    let bound = vdc_constant(m) * (c_m * mu_scale).powf(-1.0 / m as f64) * (psi_end_min + psi_variation);
    Ok(VdcBound {
        m,
        c_m,
        mu_scale,
        psi_end_min,
        psi_variation,
        bound,
    })
}
