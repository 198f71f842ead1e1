//! Batched evaluation of K(t, x, x - R) over many (R, x) pairs and the
//! sup-norm decay table.
//!
//! For fixed t all pairs share one set of k-nodes, fine enough for the
//! fastest phase t eta' + R_max. Writing m0_-(x) = sum_n d_n e^{2 pi i n x/L}
//! and m0_+(y) = sum_m c_m e^{2 pi i m y/L}, the band sum becomes
//! K = Re sum_{n,m} e^{2 pi i (n+m) x/L} e^{-2 pi i m R/L} T_{nm}(R) with
//! T_{nm}(R) = (1/pi) sum_i w_i sin(t eta_i) eta_i^{-3/2} d_{i,n} c_{i,m} e^{-iRk_i},
//! so the cost per R is independent of the number of x offsets.

use crate::bloch::BlochTable;
use crate::error::{Error, Result};
use crate::kernel::{cutoff_partition, model_tail};
use crate::kmap::QuasimomentumMap;
use crate::par;
use crate::phase::eta_from_energy;
use crate::quadrature::GaussLegendre;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    /// x offsets sampled uniformly in [0, L).
    pub offsets: usize,
    /// Fourier modes of m0 below this fraction of the largest are dropped.
    pub mode_tol: f64,
    pub cone_spacing: f64,
    pub cutoff_c: f64,
    pub tail: bool,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            offsets: 16,
            mode_tol: 1e-10,
            cone_spacing: 0.1,
            cutoff_c: 8.0,
            tail: true,
        }
    }
}

/// Which part of the band sum to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// None selects every band below n_max.
    pub bands: Option<Vec<usize>>,
    pub pieces: [bool; 5],
    pub include_tail: bool,
}

impl Selection {
    pub fn all() -> Self {
        Self {
            bands: None,
            pieces: [true; 5],
            include_tail: true,
        }
    }

    fn whole(&self) -> bool {
        self.pieces.iter().all(|&p| p)
    }
}

struct Node {
    k: f64,
    weight: f64,
    eta: f64,
    eta_dot: f64,
    eta_ddd: f64,
    e: f64,
    d: Vec<C64>,
    c: Vec<C64>,
}

fn trimmed(coef: &[C64], tol: f64) -> usize {
    let h = coef.len() / 2;
    let amax = coef.iter().fold(0.0_f64, |a, c| a.max(c.norm()));
    (0..=h).rev().find(|&j| coef[h + j].norm() > tol * amax || coef[h - j].norm() > tol * amax).unwrap_or(0)
}

/// Fixed k-nodes on band n for phase rates up to `rate`.
fn band_nodes(blt: &BlochTable, n: usize, mu: f64, rate: f64, gl: &GaussLegendre, tol: f64) -> (Vec<Node>, usize) {
    let mut modes = 0;
    for p in &blt.panels[blt.band_start[n]..blt.band_start[n + 1]] {
        for r in &p.rows {
            modes = modes.max(trimmed(&r.m0_plus, tol)).max(trimmed(&r.m0_minus, tol));
        }
    }
    let width = 4.0 * PI / rate.max(1.0);
    let mut out = Vec::new();
    let mut bary = vec![0.0; blt.gl.len()];
    for p in &blt.panels[blt.band_start[n]..blt.band_start[n + 1]] {
        let pieces = ((p.k_hi - p.k_lo) / width).ceil().max(1.0) as usize;
        for s in 0..pieces {
            let a = p.k_lo + (p.k_hi - p.k_lo) * s as f64 / pieces as f64;
            let b = p.k_lo + (p.k_hi - p.k_lo) * (s + 1) as f64 / pieces as f64;
            for (k, w) in gl.mapped(a, b) {
                let u = (2.0 * k - p.k_lo - p.k_hi) / (p.k_hi - p.k_lo);
                blt.gl.bary_coeffs(u, &mut bary);
                let mut e = [0.0; 4];
                let mut d = vec![C64::new(0.0, 0.0); 2 * modes + 1];
                let mut c = vec![C64::new(0.0, 0.0); 2 * modes + 1];
                for (j, r) in p.rows.iter().enumerate() {
                    let b = bary[j];
                    e[0] += b * r.derivs.e;
                    e[1] += b * r.derivs.e1;
                    e[2] += b * r.derivs.e2;
                    e[3] += b * r.derivs.e3;
                    for (src, dst) in [(&r.m0_minus, &mut d), (&r.m0_plus, &mut c)] {
                        let h = src.len() / 2;
                        let m = h.min(modes);
                        for q in 0..=2 * m {
                            dst[modes - m + q] += src[h - m + q] * b;
                        }
                    }
                }
                let ed = eta_from_energy(
                    &crate::kmap::EnergyDerivs {
                        e: e[0],
                        e1: e[1],
                        e2: e[2],
                        e3: e[3],
                    },
                    mu,
                );
                out.push(Node {
                    k,
                    weight: w,
                    eta: ed.eta,
                    eta_dot: ed.d1,
                    eta_ddd: ed.d3,
                    e: e[0],
                    d,
                    c,
                });
            }
        }
    }
    (out, modes)
}

/// Real kernel values K(t, x_j, x_j - R) for each R (rows) and offset x_j (columns).
pub struct ScanValues {
    pub rs: Vec<f64>,
    pub offsets: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Evaluates the selected part of the kernel at time t on the (R, offset) grid.
#[allow(clippy::too_many_arguments)]
pub fn scan_values(
    km: &QuasimomentumMap,
    blt: &BlochTable,
    mu: f64,
    n_max: usize,
    t: f64,
    rs: &[f64],
    sel: &Selection,
    cfg: &DecayConfig,
) -> Result<ScanValues> {
    if n_max == 0 || n_max > blt.n_bands() {
        return Err(Error::InvalidInput(format!("n_max = {n_max} outside 1..={}", blt.n_bands())));
    }
    let l = blt.period;
    let r_max = rs.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
    let gl = GaussLegendre::new(16);
    let bands: Vec<usize> = match &sel.bands {
        Some(b) => b.iter().copied().filter(|&n| n < n_max).collect(),
        None => (0..n_max).collect(),
    };
    let table = km.table();
    let partials: Vec<(usize, Vec<Vec<C64>>)> = par::map(&bands, |&n| {
        let (nodes, modes) = band_nodes(blt, n, mu, t + r_max, &gl, cfg.mode_tol);
        let width = 2 * modes + 1;
        // Per-node coefficients s_i d_{i,n} c_{i,m}, pairs laid out row-major.
        let coef: Vec<Vec<C64>> = nodes
            .iter()
            .map(|nd| {
                let mut s = nd.weight * (t * nd.eta).sin() / (nd.eta * nd.eta.sqrt() * PI);
                if !sel.whole() {
                    let w = cutoff_partition(table, n, nd.e.max(0.0).sqrt(), cfg.cutoff_c);
                    s *= (0..5).filter(|&j| sel.pieces[j]).map(|j| w[j]).sum::<f64>();
                }
                let mut v = Vec::with_capacity(width * width);
                for dn in &nd.d {
                    for cm in &nd.c {
                        v.push(dn * cm * s);
                    }
                }
                v
            })
            .collect();
        let mut per_r = Vec::with_capacity(rs.len());
        for &r in rs {
            let mut acc = vec![C64::new(0.0, 0.0); width * width];
            for (nd, cf) in nodes.iter().zip(&coef) {
                let e = C64::from_polar(1.0, -r * nd.k);
                for (a, b) in acc.iter_mut().zip(cf) {
                    *a += b * e;
                }
            }
            per_r.push(acc);
        }
        (modes, per_r)
    });
    let offsets: Vec<f64> = (0..cfg.offsets).map(|j| l * j as f64 / cfg.offsets as f64).collect();
    let mut values = vec![vec![0.0; offsets.len()]; rs.len()];
    for (modes, per_r) in &partials {
        let m = *modes as i64;
        let width = (2 * m + 1) as usize;
        for (ri, &r) in rs.iter().enumerate() {
            let acc = &per_r[ri];
            for (xi, &x0) in offsets.iter().enumerate() {
                let mut sum = C64::new(0.0, 0.0);
                for a in -m..=m {
                    for b in -m..=m {
                        let ph = 2.0 * PI * ((a + b) as f64 * x0 - b as f64 * r) / l;
                        sum += acc[(a + m) as usize * width + (b + m) as usize] * C64::from_polar(1.0, ph);
                    }
                }
                values[ri][xi] += sum.re;
            }
        }
    }
    if cfg.tail && sel.include_tail {
        let k0 = table.k_interval(n_max - 1).1;
        let mean = table.potential.mean;
        let tails = par::map(rs, |&r| model_tail(t, r, k0, mean, mu));
        for (row, tv) in values.iter_mut().zip(tails) {
            row.iter_mut().for_each(|v| *v += tv);
        }
    }
    Ok(ScanValues {
        rs: rs.to_vec(),
        offsets,
        values,
    })
}

/// Default R grid at time t: a coarse sweep of [0, 1.05 t + 5], a fine
/// window around the light cone R = t, and Airy-scaled windows around the
/// caustics R = t max eta' of each band with an interior maximum.
pub fn auto_r_grid(blt: &BlochTable, mu: f64, n_max: usize, t: f64, cfg: &DecayConfig) -> Vec<f64> {
    let r_max = 1.05 * t + 5.0;
    let mut rs = Vec::new();
    let coarse = (t / 64.0).max(0.1);
    let mut r = 0.0;
    while r <= r_max {
        rs.push(r);
        r += coarse;
    }
    let half = 1.0 + t.cbrt();
    let cone = (2.0 * half / cfg.cone_spacing).ceil() as usize;
    for i in 0..=cone {
        rs.push(t - half + cfg.cone_spacing * i as f64);
    }
    let gl = GaussLegendre::new(16);
    for n in 0..n_max.min(blt.n_bands()) {
        let (nodes, _) = band_nodes(blt, n, mu, t + r_max, &gl, 1.0);
        let Some((i, nd)) = nodes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.eta_dot.total_cmp(&b.1.eta_dot))
        else {
            continue;
        };
        if i == 0 || i + 1 == nodes.len() {
            continue;
        }
        let scale = t.cbrt() * (0.5 * nd.eta_ddd.abs()).cbrt().max(1e-3);
        let spacing = (scale / 10.0).min(cfg.cone_spacing);
        let centre = t * nd.eta_dot;
        let count = ((8.0 * scale / spacing).ceil() as usize).min(200);
        for j in 0..=count {
            rs.push(centre - 4.0 * scale + 8.0 * scale * j as f64 / count as f64);
        }
    }
    rs.retain(|&r| (0.0..=r_max).contains(&r));
    rs.sort_by(f64::total_cmp);
    rs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    rs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    pub sup: f64,
    /// sup |K| t^{1/3}.
    pub normalized: f64,
    pub r_at: f64,
    pub x_at: f64,
    pub grid_size: usize,
}

/// sup over the R grid and x offsets of |K(t, x, x - R)| for each t.
pub fn decay_scan(
    km: &QuasimomentumMap,
    blt: &BlochTable,
    mu: f64,
    n_max: usize,
    t_list: &[f64],
    r_grid: Option<&[f64]>,
    cfg: &DecayConfig,
) -> Result<Vec<DecayRow>> {
    if t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("t_list must be increasing".into()));
    }
    let mut out = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let rs = match r_grid {
            Some(g) => g.to_vec(),
            None => auto_r_grid(blt, mu, n_max, t, cfg),
        };
        let sv = scan_values(km, blt, mu, n_max, t, &rs, &Selection::all(), cfg)?;
        let mut best = (0.0_f64, 0.0, 0.0);
        for (ri, row) in sv.values.iter().enumerate() {
            for (xi, v) in row.iter().enumerate() {
                if v.abs() > best.0 {
                    best = (v.abs(), sv.rs[ri], sv.offsets[xi]);
                }
            }
        }
        out.push(DecayRow {
            t,
            sup: best.0,
            normalized: best.0 * t.cbrt(),
            r_at: best.1,
            x_at: best.2,
            grid_size: rs.len() * sv.offsets.len(),
        });
    }
    Ok(out)
}
