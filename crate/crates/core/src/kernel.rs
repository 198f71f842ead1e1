//! The dispersive kernel K(t, x, y) of sin(t sqrt(H + mu)) (H + mu)^{-3/4}
//! as a band sum over Floquet data, with a five-piece cutoff partition per
//! band and an asymptotic tail beyond the last tabulated band.
//!
//! K = (1/2pi) int_R e^{-iRk} sin(t eta) eta^{-3/2} m0_-(x,k) m0_+(y,k) dk,
//! R = x - y. The k < 0 half uses m0_-(x,-k) m0_+(y,-k) = m0_+(x,k) m0_-(y,k).

use crate::bands::BandTable;
use crate::bloch::{BlochPanel, BlochTable};
use crate::error::{Error, Result};
use crate::kmap::QuasimomentumMap;
use crate::oscillatory::{oscillatory_quad, OscConfig};
use crate::par;
use crate::phase::DegenerateSet;
use crate::quadrature::GaussLegendre;
use crate::roots::brent;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Smooth even bump: 1 on |s| <= 1/2, 0 on |s| >= 1.
pub fn chi0(s: f64) -> f64 {
    let a = s.abs();
    if a <= 0.5 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        let psi = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
        let p = psi(1.0 - a);
        p / (p + psi(a - 0.5))
    }
}

fn chi0_window(d: f64, width: f64) -> f64 {
    if width > 0.0 {
        chi0(d / width)
    } else {
        0.0
    }
}

/// Weights of the five pieces at w in band n: lower collar c|g_n|, lower
/// window |g_n|^{1/4}, interior, upper window |g_{n+1}|^{3/5}, upper collar
/// c|g_{n+1}|. Closed gaps give zero-width windows.
pub fn cutoff_partition(table: &BandTable, n: usize, w: f64, c: f64) -> [f64; 5] {
    let (a, b) = table.band_w(n);
    let g_lo = if n == 0 { 0.0 } else { table.gap_w(n) };
    let g_hi = table.gap_w(n + 1);
    let lo = (w - a).max(0.0);
    let hi = (b - w).max(0.0);
    let l1 = chi0_window(lo, c * g_lo);
    let l2 = (1.0 - l1) * chi0_window(lo, g_lo.powf(0.25));
    let l3 = 1.0 - l1 - l2;
    let u1 = chi0_window(hi, c * g_hi);
    let u2 = (1.0 - u1) * chi0_window(hi, g_hi.powf(0.6));
    let u3 = 1.0 - u1 - u2;
    [l1 * u3, l2 * u3, l3 * u3, u2, u1]
}

/// Points in w where some piece weight starts or stops varying.
fn partition_breaks_w(table: &BandTable, n: usize, c: f64) -> Vec<f64> {
    let (a, b) = table.band_w(n);
    let g_lo = if n == 0 { 0.0 } else { table.gap_w(n) };
    let g_hi = table.gap_w(n + 1);
    let mut out = Vec::new();
    for width in [c * g_lo, g_lo.powf(0.25)] {
        if width > 0.0 {
            out.extend([a + 0.5 * width, a + width]);
        }
    }
    for width in [c * g_hi, g_hi.powf(0.6)] {
        if width > 0.0 {
            out.extend([b - 0.5 * width, b - width]);
        }
    }
    out.retain(|&w| w > a && w < b);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Exponential split for t > 1, sine form otherwise.
    Auto,
    Sine,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelRequest {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub n_max: usize,
    pub mu: f64,
    pub pieces: [bool; 5],
    pub split: SplitMode,
    /// Integrate piece by piece; when false each band is integrated whole.
    pub partition: bool,
}

impl KernelRequest {
    pub fn new(t: f64, x: f64, y: f64, n_max: usize, mu: f64) -> Self {
        Self {
            t,
            x,
            y,
            n_max,
            mu,
            pieces: [true; 5],
            split: SplitMode::Auto,
            partition: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// c in the collar windows c|g|.
    pub cutoff_c: f64,
    pub osc: OscConfig,
    /// Absolute error allowance per unit of k for each integral.
    pub abs_tol_density: f64,
    /// Add the asymptotic tail beyond the last band.
    pub tail: bool,
    /// Distance to a degenerate candidate that raises the flag.
    pub degenerate_margin: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            cutoff_c: 8.0,
            osc: OscConfig {
                max_panels: 20_000,
                abs_tol: 0.0,
                rel_tol: 1e-8,
            },
            abs_tol_density: 1e-10,
            tail: true,
            degenerate_margin: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandContribution {
    pub band: usize,
    pub pieces: [C64; 5],
    pub total: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelResult {
    pub value: C64,
    pub per_band: Vec<BandContribution>,
    /// Asymptotic-model contribution from |k| beyond band n_max.
    pub tail: f64,
    /// Bound on the difference between the true tail and the model.
    pub tail_bound: f64,
    pub quad_err: f64,
    pub degenerate_mass: bool,
}

/// Interpolation on one Bloch panel with the kernel factors at fixed (x, y).
struct PanelEval<'a> {
    panel: &'a BlochPanel,
    gl: &'a GaussLegendre,
    p1: Vec<C64>,
    p2: Vec<C64>,
}

struct Point {
    e: [f64; 4],
    p1: C64,
    p2: C64,
}

impl<'a> PanelEval<'a> {
    fn new(panel: &'a BlochPanel, gl: &'a GaussLegendre, x: f64, y: f64, period: f64) -> Self {
        let p1 = panel.rows.iter().map(|r| r.m0_minus_at(x, period) * r.m0_plus_at(y, period)).collect();
        let p2 = panel.rows.iter().map(|r| r.m0_plus_at(x, period) * r.m0_minus_at(y, period)).collect();
        Self { panel, gl, p1, p2 }
    }

    fn at(&self, k: f64) -> Point {
        let mut c = [0.0; 64];
        let c = &mut c[..self.gl.len()];
        let s = (2.0 * k - self.panel.k_lo - self.panel.k_hi) / (self.panel.k_hi - self.panel.k_lo);
        self.gl.bary_coeffs(s, c);
        let mut e = [0.0; 4];
        let mut p1 = C64::new(0.0, 0.0);
        let mut p2 = C64::new(0.0, 0.0);
        for (j, r) in self.panel.rows.iter().enumerate() {
            let d = &r.derivs;
            e[0] += c[j] * d.e;
            e[1] += c[j] * d.e1;
            e[2] += c[j] * d.e2;
            e[3] += c[j] * d.e3;
            p1 += self.p1[j] * c[j];
            p2 += self.p2[j] * c[j];
        }
        Point { e, p1, p2 }
    }
}

fn eta_of(e: &[f64; 4], mu: f64) -> [f64; 4] {
    let d = crate::phase::eta_from_energy(
        &crate::kmap::EnergyDerivs {
            e: e[0],
            e1: e[1],
            e2: e[2],
            e3: e[3],
        },
        mu,
    );
    [d.eta, d.d1, d.d2, d.d3]
}

/// Zeros of t eta'(k) - v on [a, b] from a scan of the interpolant.
fn stationary_on(pe: &PanelEval, mu: f64, t: f64, v: f64, a: f64, b: f64) -> Vec<f64> {
    let f = |k: f64| t * eta_of(&pe.at(k).e, mu)[1] - v;
    let m = 32;
    let xs: Vec<f64> = (0..=m).map(|i| a + (b - a) * i as f64 / m as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&k| f(k)).collect();
    let mut out = Vec::new();
    for i in 0..m {
        if fs[i] * fs[i + 1] < 0.0 {
            out.push(brent(f, xs[i], xs[i + 1], fs[i], fs[i + 1], 1e-14 * b.max(1.0), 200));
        }
    }
    out
}

/// Contributions of [a, b] (inside one panel) for the weight `weight(w)`.
#[allow(clippy::too_many_arguments)]
fn integrate_piece(
    pe: &PanelEval,
    a: f64,
    b: f64,
    weight: &dyn Fn(f64) -> f64,
    req: &KernelRequest,
    exponential: bool,
    cfg: &KernelConfig,
) -> Result<(C64, f64)> {
    let (t, r, mu) = (req.t, req.x - req.y, req.mu);
    let osc = OscConfig {
        abs_tol: cfg.abs_tol_density * (b - a),
        ..cfg.osc
    };
    let base = |k: f64| {
        let p = pe.at(k);
        let eta = eta_of(&p.e, mu);
        let amp = weight(p.e[0].max(0.0).sqrt()) / (eta[0] * eta[0].sqrt() * 2.0 * PI);
        (p, eta, amp)
    };
    let mut value = C64::new(0.0, 0.0);
    let mut err = 0.0;
    if exponential {
        let two_i = C64::new(0.0, 2.0);
        // Phases s1 t eta + s2 R k with the factor each term carries.
        for (s1, s2, use_p1) in [(1.0, -1.0, true), (-1.0, -1.0, true), (1.0, 1.0, false), (-1.0, 1.0, false)] {
            let stat = if s1 * s2 < 0.0 {
                stationary_on(pe, mu, t, r, a, b)
            } else {
                stationary_on(pe, mu, t, -r, a, b)
            };
            let res = oscillatory_quad(
                a,
                b,
                |k| {
                    let (_, eta, _) = base(k);
                    [
                        s1 * t * eta[0] + s2 * r * k,
                        s1 * t * eta[1] + s2 * r,
                        s1 * t * eta[2],
                        s1 * t * eta[3],
                    ]
                },
                |k| {
                    let (p, _, amp) = base(k);
                    let f = if use_p1 { p.p1 } else { p.p2 };
                    f * amp * s1 / two_i
                },
                &stat,
                &osc,
            )?;
            value += res.value;
            err += res.err_est;
        }
    } else {
        for (s2, use_p1) in [(-1.0, true), (1.0, false)] {
            let res = oscillatory_quad(
                a,
                b,
                // Only the linear phase is factored out; the reported slope also
                // counts sin(t eta) so panels resolve both oscillations.
                |k| {
                    let (_, eta, _) = base(k);
                    [s2 * r * k, r.abs() + t * eta[1].abs(), 0.0, 0.0]
                },
                |k| {
                    let (p, eta, amp) = base(k);
                    let f = if use_p1 { p.p1 } else { p.p2 };
                    f * amp * (t * eta[0]).sin()
                },
                &[],
                &osc,
            )?;
            value += res.value;
            err += res.err_est;
        }
    }
    Ok((value, err))
}

/// Free asymptotic model of the kernel from |k| > k0:
/// (1/2pi) Im[J(R) + J(-R)], J(c) = int_{k0}^inf e^{i(t eta + c k)} eta^{-3/2} dk,
/// eta = sqrt(k^2 + mean + mu), evaluated on the ray k = k0 + i sigma y that
/// makes the linear part of the phase decay.
pub fn model_tail(t: f64, r: f64, k0: f64, mean: f64, mu: f64) -> f64 {
    let m = mean + mu;
    let gl = GaussLegendre::new(16);
    let j = |c: f64| -> C64 {
        let s = t + c;
        let sigma = if s > 0.0 {
            1.0
        } else if s < 0.0 {
            -1.0
        } else {
            0.0
        };
        let dir = if sigma == 0.0 { C64::new(1.0, 0.0) } else { C64::new(0.0, sigma) };
        let f = |y: f64| {
            let k = C64::new(k0, 0.0) + dir * y;
            let eta = (k * k + m).sqrt();
            let ph = C64::new(0.0, 1.0) * (eta * t + k * c);
            ph.exp() / (eta * eta.sqrt())
        };
        let mut y0 = 0.0;
        let mut width = (0.25 / s.abs().max(1e-300)).min(0.125 * k0.max(1.0)).min(1.0);
        let mut acc = C64::new(0.0, 0.0);
        while y0 < 1e30 {
            for (y, w) in gl.mapped(y0, y0 + width) {
                acc += f(y) * w;
            }
            y0 += width;
            if y0 >= 4.0 * width {
                width *= 2.0;
            }
        }
        acc * dir
    };
    (j(r) + j(-r)).im / (2.0 * PI)
}

/// Bound on |true tail - model| from the deviation of the last tabulated
/// band from the model: |m0_- m0_+ - 1| <= c1 / k and |E - k^2 - mean| <= c2 / k^2.
pub fn tail_deviation_bound(blt: &BlochTable, n_last: usize, mean: f64, t: f64, k0: f64) -> f64 {
    let dev = |c: &[C64]| {
        let h = c.len() / 2;
        c.iter()
            .enumerate()
            .map(|(i, v)| if i == h { (v - 1.0).norm() } else { v.norm() })
            .sum::<f64>()
    };
    let (mut c1, mut c2) = (0.0_f64, 0.0_f64);
    for p in &blt.panels[blt.band_start[n_last]..blt.band_start[n_last + 1]] {
        for r in &p.rows {
            let (a, b) = (dev(&r.m0_minus), dev(&r.m0_plus));
            c1 = c1.max(r.k * (a + b + a * b));
            c2 = c2.max(r.k * r.k * (r.derivs.e - r.k * r.k - mean).abs());
        }
    }
    (2.0 / 3.0 * c1 * k0.powf(-1.5) + t * c2 * k0.powf(-3.5) / 7.0 + c2 * k0.powf(-4.5) / 6.0) / PI
}

/// K(t, x, y) summed over bands 0..n_max plus the asymptotic tail.
pub fn eval_kernel(
    req: &KernelRequest,
    km: &QuasimomentumMap,
    blt: &BlochTable,
    dset: Option<&DegenerateSet>,
    cfg: &KernelConfig,
) -> Result<KernelResult> {
    if !(req.t >= 0.0) || !req.t.is_finite() {
        return Err(Error::InvalidInput(format!("t must be finite and >= 0, got {}", req.t)));
    }
    if !(req.mu > 0.0) {
        return Err(Error::InvalidInput(format!("mass must be positive, got {}", req.mu)));
    }
    if req.n_max == 0 || req.n_max > blt.n_bands() {
        return Err(Error::InvalidInput(format!(
            "n_max = {} outside 1..={}",
            req.n_max,
            blt.n_bands()
        )));
    }
    let table = km.table();
    let l = blt.period;
    let exponential = match req.split {
        SplitMode::Auto => req.t > 1.0,
        SplitMode::Sine => false,
        SplitMode::Exponential => true,
    };
    let bands: Vec<usize> = (0..req.n_max).collect();
    let per_band: Vec<Result<(BandContribution, f64)>> = par::map(&bands, |&n| {
        let mut breaks: Vec<f64> = Vec::new();
        if req.partition {
            for w in partition_breaks_w(table, n, cfg.cutoff_c) {
                breaks.push(km.at_lambda(n, w * w)?.0);
            }
        }
        let mut pieces = [C64::new(0.0, 0.0); 5];
        let mut total = C64::new(0.0, 0.0);
        let mut err = 0.0;
        for panel in &blt.panels[blt.band_start[n]..blt.band_start[n + 1]] {
            let pe = PanelEval::new(panel, &blt.gl, req.x, req.y, l);
            let mut pts = vec![panel.k_lo, panel.k_hi];
            pts.extend(breaks.iter().filter(|&&k| k > panel.k_lo && k < panel.k_hi));
            pts.sort_by(f64::total_cmp);
            for seg in pts.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                if req.partition {
                    let wm = pe.at(0.5 * (a + b)).e[0].max(0.0).sqrt();
                    let wts = cutoff_partition(table, n, wm, cfg.cutoff_c);
                    for j in 0..5 {
                        if !req.pieces[j] || wts[j] == 0.0 {
                            continue;
                        }
                        let wf = |w: f64| cutoff_partition(table, n, w, cfg.cutoff_c)[j];
                        let (v, e) = integrate_piece(&pe, a, b, &wf, req, exponential, cfg)?;
                        pieces[j] += v;
                        total += v;
                        err += e;
                    }
                } else {
                    let (v, e) = integrate_piece(&pe, a, b, &|_| 1.0, req, exponential, cfg)?;
                    total += v;
                    err += e;
                }
            }
        }
        Ok((BandContribution { band: n, pieces, total }, err))
    });
    let mut value = C64::new(0.0, 0.0);
    let mut quad_err = 0.0;
    let mut contributions = Vec::with_capacity(req.n_max);
    for r in per_band {
        let (c, e) = r?;
        value += c.total;
        quad_err += e;
        contributions.push(c);
    }
    let k0 = table.k_interval(req.n_max - 1).1;
    let mean = table.potential.mean;
    let (tail, tail_bound) = if cfg.tail {
        (
            model_tail(req.t, req.x - req.y, k0, mean, req.mu),
            tail_deviation_bound(blt, req.n_max - 1, mean, req.t, k0),
        )
    } else {
        (0.0, f64::INFINITY)
    };
    value += tail;
    let degenerate_mass = dset.is_some_and(|d| d.near(req.mu, cfg.degenerate_margin).is_some());
    Ok(KernelResult {
        value,
        per_band: contributions,
        tail,
        tail_bound,
        quad_err,
        degenerate_mass,
    })
}
