//! Floquet solutions, the normalization N^2 and the distorted Fourier transform.
//!
//! For k inside band n, phi_+ = c + theta_+ s is the solution with
//! phi_+(x + L) = e^{ikL} phi_+(x) and phi_+(0) = 1; phi_- uses e^{-ikL}.
//! The periodic factors xi_+- = e^{-+ikx} phi_+- are stored through the
//! Fourier coefficients of m0_+- = xi_+- (L / N^2)^{1/2}, so that
//! m0_-(x) m0_+(y) = xi_-(x) xi_+(y) L / N^2 can be evaluated anywhere.

use crate::error::{Error, Result};
use crate::kmap::{energy_derivs_from, EnergyDerivs, QuasimomentumMap};
use crate::par;
use crate::potential::PeriodicPotential;
use crate::quadrature::GaussLegendre;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochConfig {
    /// Initial x-grid size for the periodic factors; doubled until the
    /// Fourier tail is negligible.
    pub nx_min: usize,
    pub nx_max: usize,
    /// Gauss-Legendre nodes per k-panel.
    pub panel_nodes: usize,
    /// Largest panel width, as a fraction of pi / L.
    pub max_panel: f64,
    /// Innermost graded panel near an open edge, as a fraction of the gap.
    pub edge_panel: f64,
    /// Grading stops at this fraction of pi / L; closer to an edge the
    /// Floquet eigenvectors lose digits like 1 / sin(kL).
    pub edge_floor: f64,
    /// Relative cutoff for stored Fourier coefficients.
    pub coef_tol: f64,
}

impl Default for BlochConfig {
    fn default() -> Self {
        Self {
            nx_min: 64,
            nx_max: 4096,
            panel_nodes: 16,
            max_panel: 0.5,
            edge_panel: 0.25,
            edge_floor: 1e-5,
            coef_tol: 1e-14,
        }
    }
}

/// Floquet data at one quasimomentum k > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochRow {
    pub band: usize,
    pub k: f64,
    pub derivs: EnergyDerivs,
    pub theta_plus: C64,
    pub theta_minus: C64,
    /// N^2 = int_0^L phi_+ phi_- dx.
    pub n2: C64,
    /// |phi_+(L) - e^{ikL}| + |phi_+'(L) - e^{ikL} phi_+'(0)|.
    pub floquet_defect: f64,
    /// Coefficients of m0_+ for modes -M..=M.
    pub m0_plus: Vec<C64>,
    pub m0_minus: Vec<C64>,
}

fn eval_series(coef: &[C64], x: f64, period: f64) -> C64 {
    let m = (coef.len() / 2) as i32;
    if m == 0 {
        return coef[0];
    }
    let z = C64::from_polar(1.0, 2.0 * PI * x / period);
    let zi = z.conj();
    // Pair modes +j and -j.
    let mut acc = coef[m as usize];
    let mut p = C64::new(1.0, 0.0);
    let mut q = C64::new(1.0, 0.0);
    for j in 1..=m as usize {
        p *= z;
        q *= zi;
        acc += coef[m as usize + j] * p + coef[m as usize - j] * q;
    }
    acc
}

impl BlochRow {
    /// Highest stored Fourier mode.
    pub fn modes(&self) -> usize {
        self.m0_plus.len() / 2
    }

    pub fn m0_plus_at(&self, x: f64, period: f64) -> C64 {
        eval_series(&self.m0_plus, x, period)
    }

    pub fn m0_minus_at(&self, x: f64, period: f64) -> C64 {
        eval_series(&self.m0_minus, x, period)
    }

    /// xi_+(x), the periodic factor normalized by phi_+(0) = 1.
    pub fn xi_plus_at(&self, x: f64, period: f64) -> C64 {
        self.m0_plus_at(x, period) / (period / self.n2).sqrt()
    }

    pub fn xi_minus_at(&self, x: f64, period: f64) -> C64 {
        self.m0_minus_at(x, period) / (period / self.n2).sqrt()
    }
}

/// Kernel factor m0_-(x, k) m0_+(y, k).
pub fn m0_product(row: &BlochRow, x: f64, y: f64, period: f64) -> C64 {
    row.m0_minus_at(x, period) * row.m0_plus_at(y, period)
}

fn floquet_theta(m: [[f64; 2]; 2], rho: C64, band: usize, k: f64) -> Result<C64> {
    // Eigenvectors (a, b) of M for eigenvalue rho from either row.
    let v1 = (C64::new(m[0][1], 0.0), rho - m[0][0]);
    let v2 = (rho - m[1][1], C64::new(m[1][0], 0.0));
    let n1 = v1.0.norm_sqr() + v1.1.norm_sqr();
    let n2 = v2.0.norm_sqr() + v2.1.norm_sqr();
    let scale = 1.0 + m.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
    let (a, b) = if n1 >= n2 { v1 } else { v2 };
    if n1.max(n2).sqrt() < 1e-13 * scale || a.norm() < 1e-300 {
        return Err(Error::DegenerateFloquet { band, k });
    }
    Ok(b / a)
}

fn dft(values: &[C64]) -> Vec<C64> {
    // Coefficients for modes -(n/2 - 1) ..= n/2 - 1 of the sampled periodic function.
    let n = values.len();
    let half = n / 2 - 1;
    let mut buf = values.to_vec();
    rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (-(half as i64)..=half as i64)
        .map(|mode| buf[mode.rem_euclid(n as i64) as usize] / n as f64)
        .collect()
}

fn truncate_modes(coef: &[C64], keep: usize) -> Vec<C64> {
    let half = coef.len() / 2;
    coef[half - keep..=half + keep].to_vec()
}

/// Floquet row at k > 0 inside band n.
pub fn floquet_solutions(km: &QuasimomentumMap, band: usize, k: f64, cfg: &BlochConfig) -> Result<BlochRow> {
    let l = km.period();
    let (k_lo, k_hi) = km.table().k_interval(band);
    if !(k > k_lo && k < k_hi) {
        return Err(Error::InvalidInput(format!("k = {k} not strictly inside band {band}")));
    }
    let steps = km.band_steps(band);
    let mono = km.solve_band(band, k, steps);
    let derivs = energy_derivs_from(&mono, k, l);
    let lambda = mono.lambda;
    let solver = km.solver();
    let mut nx = cfg.nx_min.max(8).next_power_of_two();
    loop {
        let sub = steps.div_ceil(nx);
        let grid = solver.fundamental_on_grid_fixed(lambda, nx, sub);
        let end = grid[nx];
        let m = [[end[0], end[2]], [end[1], end[3]]];
        let rho = C64::from_polar(1.0, k * l);
        let th_p = floquet_theta(m, rho, band, k)?;
        let th_m = floquet_theta(m, rho.conj(), band, k)?;
        let defect = (C64::new(end[0], 0.0) + th_p * end[2] - rho).norm()
            + (C64::new(end[1], 0.0) + th_p * end[3] - rho * th_p).norm();
        let h = l / nx as f64;
        let mut xi_p = Vec::with_capacity(nx);
        let mut xi_m = Vec::with_capacity(nx);
        let mut n2 = C64::new(0.0, 0.0);
        for (j, g) in grid.iter().take(nx).enumerate() {
            let x = j as f64 * h;
            let e = C64::from_polar(1.0, -k * x);
            let p = (C64::new(g[0], 0.0) + th_p * g[2]) * e;
            let q = (C64::new(g[0], 0.0) + th_m * g[2]) * e.conj();
            n2 += p * q;
            xi_p.push(p);
            xi_m.push(q);
        }
        n2 *= h;
        let scale = (C64::new(l, 0.0) / n2).sqrt();
        let cp: Vec<C64> = dft(&xi_p).into_iter().map(|c| c * scale).collect();
        let cm: Vec<C64> = dft(&xi_m).into_iter().map(|c| c * scale).collect();
        let amax = cp.iter().chain(&cm).fold(0.0_f64, |a, c| a.max(c.norm()));
        let half = cp.len() / 2;
        let tail = (0..cp.len())
            .filter(|&i| (i as i64 - half as i64).unsigned_abs() as usize > nx / 4)
            .map(|i| cp[i].norm().max(cm[i].norm()))
            .fold(0.0, f64::max);
        if tail > 1e-13 * amax && nx < cfg.nx_max {
            nx *= 2;
            continue;
        }
        let keep = (0..=half)
            .rev()
            .find(|&j| {
                [half + j, half - j]
                    .iter()
                    .any(|&i| cp[i].norm() > cfg.coef_tol * amax || cm[i].norm() > cfg.coef_tol * amax)
            })
            .unwrap_or(0);
        return Ok(BlochRow {
            band,
            k,
            derivs,
            theta_plus: th_p,
            theta_minus: th_m,
            n2,
            floquet_defect: defect,
            m0_plus: truncate_modes(&cp, keep),
            m0_minus: truncate_modes(&cm, keep),
        });
    }
}

#[derive(Debug, Clone)]
pub struct BlochPanel {
    pub band: usize,
    pub k_lo: f64,
    pub k_hi: f64,
    pub rows: Vec<BlochRow>,
}

/// Floquet rows on Gauss-Legendre panels covering bands 0..n_bands (k > 0).
#[derive(Debug, Clone)]
pub struct BlochTable {
    pub period: f64,
    pub gl: GaussLegendre,
    pub panels: Vec<BlochPanel>,
    /// panels[band_start[n]..band_start[n + 1]] cover band n.
    pub band_start: Vec<usize>,
    pub cfg: BlochConfig,
}

/// Panel breakpoints on band n: uniform in the bulk, halving towards open edges.
pub fn band_breakpoints(km: &QuasimomentumMap, n: usize, cfg: &BlochConfig) -> Vec<f64> {
    let table = km.table();
    let l = km.period();
    let (k_lo, k_hi) = table.k_interval(n);
    let width = k_hi - k_lo;
    let pieces = (width / (cfg.max_panel * PI / l)).ceil().max(1.0) as usize;
    let u = width / pieces as f64;
    let g_lo = if n == 0 { 0.0 } else { table.gap_w(n) };
    let g_hi = table.gap_w(n + 1);
    let mut pts: Vec<f64> = (0..=pieces).map(|i| k_lo + width * i as f64 / pieces as f64).collect();
    let mut extra = Vec::new();
    for (edge, g, dir) in [(k_lo, g_lo, 1.0), (k_hi, g_hi, -1.0)] {
        if g > 0.0 {
            let mut d = 0.5 * u;
            while d > (cfg.edge_panel * g).max(cfg.edge_floor * PI / l) {
                extra.push(edge + dir * d);
                d *= 0.5;
            }
        }
    }
    pts.extend(extra);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

pub fn build_bloch_table(km: &QuasimomentumMap, n_bands: usize, cfg: &BlochConfig) -> Result<BlochTable> {
    let n_bands = n_bands.min(km.n_bands());
    if n_bands == 0 {
        return Err(Error::InvalidInput("need at least one band".into()));
    }
    let gl = GaussLegendre::new(cfg.panel_nodes);
    let mut layout = Vec::new();
    let mut band_start = vec![0];
    for n in 0..n_bands {
        let pts = band_breakpoints(km, n, cfg);
        for w in pts.windows(2) {
            layout.push((n, w[0], w[1]));
        }
        band_start.push(layout.len());
    }
    let jobs: Vec<(usize, f64)> = layout
        .iter()
        .flat_map(|&(n, a, b)| gl.mapped(a, b).map(move |(k, _)| (n, k)).collect::<Vec<_>>())
        .collect();
    let rows: Vec<Result<BlochRow>> = par::map(&jobs, |&(n, k)| floquet_solutions(km, n, k, cfg));
    let mut rows = rows.into_iter();
    let mut panels = Vec::with_capacity(layout.len());
    for &(band, k_lo, k_hi) in &layout {
        let mut pr = Vec::with_capacity(gl.len());
        for _ in 0..gl.len() {
            pr.push(rows.next().expect("row count matches layout")?);
        }
        panels.push(BlochPanel {
            band,
            k_lo,
            k_hi,
            rows: pr,
        });
    }
    Ok(BlochTable {
        period: km.period(),
        gl,
        panels,
        band_start,
        cfg: *cfg,
    })
}

impl BlochTable {
    pub fn n_bands(&self) -> usize {
        self.band_start.len() - 1
    }

    pub fn k_max(&self) -> f64 {
        self.panels.last().map(|p| p.k_hi).unwrap_or(0.0)
    }

    /// Panel containing k >= 0.
    pub fn locate(&self, k: f64) -> Option<usize> {
        let i = self.panels.partition_point(|p| p.k_hi < k);
        (i < self.panels.len() && k >= self.panels[i].k_lo).then_some(i)
    }

    /// Barycentric weights of k within panel p.
    pub fn interp_weights(&self, p: usize, k: f64, out: &mut [f64]) {
        let pan = &self.panels[p];
        let s = (2.0 * k - pan.k_lo - pan.k_hi) / (pan.k_hi - pan.k_lo);
        self.gl.bary_coeffs(s, out);
    }

    /// Quadrature nodes (k, weight, row) over k > 0.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, &BlochRow)> + '_ {
        self.panels.iter().flat_map(move |p| {
            self.gl
                .mapped(p.k_lo, p.k_hi)
                .zip(&p.rows)
                .map(|((k, w), r)| (k, w, r))
        })
    }
}

/// Real function sampled on y_j = y0 + j h, assumed to vanish outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub y0: f64,
    pub h: f64,
    pub values: Vec<f64>,
}

impl Sampled {
    pub fn from_fn(y0: f64, y1: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let h = (y1 - y0) / (n - 1) as f64;
        Self {
            y0,
            h,
            values: (0..n).map(|j| f(y0 + j as f64 * h)).collect(),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().enumerate().map(move |(j, &v)| (self.y0 + j as f64 * self.h, v))
    }

    pub fn l2_norm_sqr(&self) -> f64 {
        self.h * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    /// -f'' + P f by eighth-order central differences (zero outside the grid).
    pub fn apply_hill(&self, pot: &PeriodicPotential) -> Sampled {
        const C: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
        let n = self.values.len();
        let get = |j: i64| if j < 0 || j >= n as i64 { 0.0 } else { self.values[j as usize] };
        let h2 = self.h * self.h;
        let values = (0..n as i64)
            .map(|j| {
                let mut d2 = C[0] * get(j);
                for (m, c) in C.iter().enumerate().skip(1) {
                    d2 += c * (get(j - m as i64) + get(j + m as i64));
                }
                let y = self.y0 + j as f64 * self.h;
                -d2 / h2 + pot.eval(y) * get(j)
            })
            .collect();
        Sampled {
            y0: self.y0,
            h: self.h,
            values,
        }
    }
}

/// f^(k) at one quadrature node; k < 0 entries use m0_+(., -k) = m0_-(., k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformNode {
    pub k: f64,
    pub weight: f64,
    pub energy: f64,
    pub value: C64,
}

/// Fourier powers e^{2 pi i m y / L}, m = -m_max..=m_max, at the sample points.
fn mode_table(f: &Sampled, period: f64, m_max: usize) -> Vec<Vec<C64>> {
    f.points()
        .map(|(y, _)| {
            let z = C64::from_polar(1.0, 2.0 * PI * y / period);
            let mut row = vec![C64::new(0.0, 0.0); 2 * m_max + 1];
            row[m_max] = C64::new(1.0, 0.0);
            let (mut p, mut q) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0));
            for j in 1..=m_max {
                p *= z;
                q *= z.conj();
                row[m_max + j] = p;
                row[m_max - j] = q;
            }
            row
        })
        .collect()
}

fn series_with(table_row: &[C64], coef: &[C64]) -> C64 {
    let m_max = table_row.len() / 2;
    let m = coef.len() / 2;
    coef.iter()
        .zip(&table_row[m_max - m..=m_max + m])
        .fold(C64::new(0.0, 0.0), |a, (c, z)| a + c * z)
}

/// f^(k) = (2 pi)^{-1/2} int e^{iky} m0_+(y, k) f(y) dy at every table node,
/// for both signs of k. The y-integral uses the trapezoid rule, which is of
/// arbitrarily high order for smooth compactly supported f.
pub fn forward_transform(blt: &BlochTable, f: &Sampled) -> Vec<TransformNode> {
    let l = blt.period;
    let m_max = blt.nodes().map(|(_, _, r)| r.modes()).max().unwrap_or(0);
    let modes = mode_table(f, l, m_max);
    let nodes: Vec<(f64, f64, &BlochRow)> = blt.nodes().collect();
    let norm = f.h / (2.0 * PI).sqrt();
    let per_node: Vec<[TransformNode; 2]> = par::map(&nodes, |&(k, w, row)| {
        let mut acc_pos = C64::new(0.0, 0.0);
        let mut acc_neg = C64::new(0.0, 0.0);
        for ((y, v), zrow) in f.points().zip(&modes) {
            if v == 0.0 {
                continue;
            }
            let e = C64::from_polar(v, k * y);
            acc_pos += e * series_with(zrow, &row.m0_plus);
            acc_neg += e.conj() * series_with(zrow, &row.m0_minus);
        }
        [
            TransformNode {
                k,
                weight: w,
                energy: row.derivs.e,
                value: acc_pos * norm,
            },
            TransformNode {
                k: -k,
                weight: w,
                energy: row.derivs.e,
                value: acc_neg * norm,
            },
        ]
    });
    per_node.into_iter().flatten().collect()
}

/// f(x) = (2 pi)^{-1/2} sum over nodes of e^{-ikx} m0_-(x, k) f^(k) w.
pub fn inverse_transform(blt: &BlochTable, coeffs: &[TransformNode], xs: &[f64]) -> Vec<C64> {
    let l = blt.period;
    let rows: Vec<&BlochRow> = blt.nodes().map(|(_, _, r)| r).collect();
    let norm = 1.0 / (2.0 * PI).sqrt();
    par::map(xs, |&x| {
        let mut acc = C64::new(0.0, 0.0);
        for (i, c) in coeffs.iter().enumerate() {
            let row = rows[i / 2];
            let m0 = if c.k >= 0.0 { row.m0_minus_at(x, l) } else { row.m0_plus_at(x, l) };
            acc += C64::from_polar(c.weight, -c.k * x) * m0 * c.value;
        }
        acc * norm
    })
}

/// Relative Parseval defect |int |f|^2 - int |f^|^2 dk| / int |f|^2.
pub fn parseval_error(blt: &BlochTable, f: &Sampled) -> f64 {
    let fhat = forward_transform(blt, f);
    let lhs = f.l2_norm_sqr();
    let rhs: f64 = fhat.iter().map(|n| n.weight * n.value.norm_sqr()).sum();
    (lhs - rhs).abs() / lhs
}

/// max over nodes of |(Hf)^(k) - E(k) f^(k)|, with H built from `pot`
/// (the normalized potential the table was computed for).
pub fn eigenrelation_check(blt: &BlochTable, pot: &PeriodicPotential, f: &Sampled) -> f64 {
    let hf = f.apply_hill(pot);
    let a = forward_transform(blt, f);
    let b = forward_transform(blt, &hf);
    a.iter()
        .zip(&b)
        .map(|(fa, fb)| (fb.value - fa.value * fa.energy).norm())
        .fold(0.0, f64::max)
}
