//! The Klein-Gordon phase eta(k) = sqrt(E(k) + mu), the candidate set of
//! degenerate masses, and stationary points of t eta(k) - R k.

use crate::error::{Error, Result};
use crate::kmap::{EnergyDerivs, QuasimomentumMap};
use crate::par;
use crate::roots::brent;
use serde::{Deserialize, Serialize};

/// eta and its first three k-derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaDerivs {
    pub eta: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Chain rule from (E, E', E'', E''') to eta = sqrt(E + mu).
pub fn eta_from_energy(d: &EnergyDerivs, mu: f64) -> EtaDerivs {
    let eta = (d.e + mu).sqrt();
    let e3 = eta * eta * eta;
    let e5 = e3 * eta * eta;
    EtaDerivs {
        eta,
        d1: d.e1 / (2.0 * eta),
        d2: d.e2 / (2.0 * eta) - d.e1 * d.e1 / (4.0 * e3),
        d3: d.e3 / (2.0 * eta) - 3.0 * d.e1 * d.e2 / (4.0 * e3) + 3.0 * d.e1.powi(3) / (8.0 * e5),
    }
}

/// Free asymptotic band function E = k^2 + mean(P), used beyond the table.
pub fn free_tail_energy(k: f64, mean: f64) -> EnergyDerivs {
    EnergyDerivs {
        e: k * k + mean,
        e1: 2.0 * k,
        e2: 2.0,
        e3: 0.0,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PhaseModel<'a> {
    pub mu: f64,
    pub km: &'a QuasimomentumMap,
}

impl<'a> PhaseModel<'a> {
    pub fn new(km: &'a QuasimomentumMap, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidInput(format!("mass must be positive, got {mu}")));
        }
        Ok(Self { mu, km })
    }

    /// Derivatives of eta, refusing the edge exclusion zones.
    pub fn eta_derivs(&self, k: f64) -> Result<EtaDerivs> {
        Ok(eta_from_energy(&self.km.energy_derivs(k)?, self.mu))
    }

    /// Derivatives of eta at any k: tabulated bands without the exclusion
    /// check, the free asymptotic model beyond them.
    pub fn eta_derivs_extended(&self, k: f64) -> EtaDerivs {
        if k.abs() < self.km.k_max() {
            if let Ok(d) = self.km.energy_derivs_unchecked(k) {
                return eta_from_energy(&d, self.mu);
            }
        }
        eta_from_energy(&free_tail_energy(k, self.km.table().potential.mean), self.mu)
    }

    /// eta' at k >= 0 on band n at fixed resolution.
    fn eta_dot_on(&self, n: usize, k: f64) -> f64 {
        let st = self.km.band_steps(n);
        let d = crate::kmap::energy_derivs_from(&self.km.solve_band(n, k, st), k, self.km.period());
        eta_from_energy(&d, self.mu).d1
    }

    /// eta' at k >= 0 kept a hair inside its band, where the implicit
    /// derivative of a closed-gap edge is 0/0.
    fn eta_dot_inside(&self, k: f64) -> f64 {
        let n = self.km.band_of_k(k).unwrap_or(self.km.n_bands() - 1);
        let (lo, hi) = self.km.table().k_interval(n);
        let d = 1e-6 * (hi - lo);
        self.eta_dot_on(n, k.clamp(lo + d, hi - d))
    }

    /// Smallest k0 >= 0 with eta'(k0) = R/t reached while eta' increases.
    ///
    /// eta' vanishes at every open band edge, so it is monotone only between
    /// such edges; the bisection runs inside the first node bracket where the
    /// scan crosses R/t upwards and fails if eta' is seen to decrease there.
    /// Returns None when R/t is never reached on the tabulated range.
    pub fn stationary_point(&self, t: f64, r: f64) -> Result<Option<f64>> {
        if !(t > 0.0) {
            return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
        }
        if r == 0.0 {
            return Ok(Some(0.0));
        }
        if r < 0.0 {
            return Ok(None);
        }
        let v = r / t;
        let mut prev: Option<(f64, f64)> = None;
        for n in 0..self.km.n_bands() {
            for &k in self.km.nodes(n).1 {
                if prev.is_some_and(|(pk, _)| pk >= k) {
                    continue;
                }
                let fk = self.eta_dot_inside(k);
                if let Some((pk, pf)) = prev {
                    if pf < v && fk >= v {
                        let (mut a, mut b, mut fa, mut fb) = (pk, k, pf, fk);
                        while b - a > 1e-13 * b.max(1.0) {
                            let m = 0.5 * (a + b);
                            let fm = self.eta_dot_inside(m);
                            if !(fm >= fa && fm <= fb) {
                                return Err(Error::NonMonotonePhase { k_lo: a, k_hi: b });
                            }
                            if fm < v {
                                a = m;
                                fa = fm;
                            } else {
                                b = m;
                                fb = fm;
                            }
                        }
                        return Ok(Some(0.5 * (a + b)));
                    }
                }
                prev = Some((k, fk));
            }
        }
        Ok(None)
    }

    /// Every k in (k_lo, k_hi) inside band n where eta' = v, by a scan of
    /// `scan` points and Brent refinement.
    pub fn stationary_points_in(&self, n: usize, v: f64, k_lo: f64, k_hi: f64, scan: usize) -> Vec<f64> {
        let f = |k: f64| self.eta_dot_on(n, k) - v;
        let xs: Vec<f64> = (0..=scan).map(|i| k_lo + (k_hi - k_lo) * i as f64 / scan as f64).collect();
        let fs: Vec<f64> = xs.iter().map(|&k| f(k)).collect();
        let mut out = Vec::new();
        for i in 0..scan {
            if fs[i] == 0.0 {
                out.push(xs[i]);
            } else if fs[i] * fs[i + 1] < 0.0 {
                out.push(brent(f, xs[i], xs[i + 1], fs[i], fs[i + 1], 1e-13, 200));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsetConfig {
    pub nodes_per_band: usize,
    /// Multiplies both the node count and the ODE step count.
    pub resolution: usize,
    /// Lower collar c |g_n| in w.
    pub lower_collar: f64,
    /// Upper collar |g_{n+1}|^exponent in w.
    pub upper_collar_exponent: f64,
    /// A node counts only if its E''' at doubled resolution agrees to this
    /// relative tolerance.
    pub noise_rel: f64,
    pub mu_min: f64,
    pub residual_tol: f64,
}

impl Default for DsetConfig {
    fn default() -> Self {
        Self {
            nodes_per_band: 256,
            resolution: 1,
            lower_collar: 1.0,
            upper_collar_exponent: 0.6,
            noise_rel: 0.1,
            mu_min: 1e-6,
            residual_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateCandidate {
    pub mu: f64,
    pub k_witness: f64,
    pub band: usize,
    /// |E'''(k*)| + |E'' - E'^2 / (2 (E + mu))| at the witness.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerateSet {
    pub candidates: Vec<DegenerateCandidate>,
    /// Roots of E''' that gave mu* <= mu_min or E'' <= 0.
    pub rejected_roots: usize,
    /// Sign changes skipped because the enclosing nodes were noise dominated.
    pub unresolved_nodes: usize,
    pub k_max: f64,
}

impl DegenerateSet {
    pub fn mus(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.mu).collect()
    }

    /// Candidate closest to mu within `margin`, if any.
    pub fn near(&self, mu: f64, margin: f64) -> Option<&DegenerateCandidate> {
        self.candidates
            .iter()
            .filter(|c| (c.mu - mu).abs() <= margin)
            .min_by(|a, b| (a.mu - mu).abs().total_cmp(&(b.mu - mu).abs()))
    }
}

struct BandScan {
    cands: Vec<DegenerateCandidate>,
    rejected: usize,
    unresolved: usize,
}

/// Scan window in k for band n after removing the edge collars.
fn scan_window(km: &QuasimomentumMap, n: usize, cfg: &DsetConfig) -> Option<(f64, f64)> {
    let t = km.table();
    let (a_lo, a_hi) = t.band_w(n);
    let g_lo = if n == 0 { 0.0 } else { t.gap_w(n) };
    let g_hi = t.gap_w(n + 1);
    let (x_lo, x_hi) = km.edge_exclusion(n);
    let w_lo = a_lo + (cfg.lower_collar * g_lo).max(x_lo);
    let w_hi = a_hi - g_hi.powf(cfg.upper_collar_exponent).max(x_hi);
    if w_hi <= w_lo {
        return None;
    }
    let k_lo = km.at_lambda(n, w_lo * w_lo).ok()?.0;
    let k_hi = km.at_lambda(n, w_hi * w_hi).ok()?.0;
    Some((k_lo, k_hi))
}

fn scan_band(km: &QuasimomentumMap, n: usize, k_cap: f64, cfg: &DsetConfig) -> BandScan {
    let mut out = BandScan {
        cands: Vec::new(),
        rejected: 0,
        unresolved: 0,
    };
    let Some((k_lo, k_hi)) = scan_window(km, n, cfg) else {
        return out;
    };
    let k_hi = k_hi.min(k_cap);
    if k_hi <= k_lo {
        return out;
    }
    let l = km.period();
    let st = km.band_steps(n) * cfg.resolution;
    let derivs = |k: f64, steps: usize| crate::kmap::energy_derivs_from(&km.solve_band(n, k, steps), k, l);
    let m = cfg.nodes_per_band * cfg.resolution;
    // Cell-centred nodes keep k = 0 (where E''' vanishes by symmetry) off the grid.
    let ks: Vec<f64> = (0..m).map(|i| k_lo + (k_hi - k_lo) * (i as f64 + 0.5) / m as f64).collect();
    let mut reliable: Vec<(f64, f64)> = Vec::with_capacity(m);
    for &k in &ks {
        let a = derivs(k, st).e3;
        let b = derivs(k, 2 * st).e3;
        if (a - b).abs() <= cfg.noise_rel * a.abs() {
            reliable.push((k, a));
        } else {
            out.unresolved += 1;
        }
    }
    for w in reliable.windows(2) {
        let ((ka, fa), (kb, fb)) = (w[0], w[1]);
        if (fa < 0.0) == (fb < 0.0) {
            continue;
        }
        let ks = brent(|k| derivs(k, st).e3, ka, kb, fa, fb, 1e-14 * kb.max(1.0), 200);
        let d = derivs(ks, st);
        if !(d.e2 > 0.0) {
            out.rejected += 1;
            continue;
        }
        let mu = d.e1 * d.e1 / (2.0 * d.e2) - d.e;
        if !(mu > cfg.mu_min) {
            out.rejected += 1;
            continue;
        }
        let residual = d.e3.abs() + (d.e2 - d.e1 * d.e1 / (2.0 * (d.e + mu))).abs();
        if residual < cfg.residual_tol {
            out.cands.push(DegenerateCandidate {
                mu,
                k_witness: ks,
                band: n,
                residual,
            });
        } else {
            out.rejected += 1;
        }
    }
    out
}

/// Candidate degenerate masses from the roots of E''' on (0, k_max).
///
/// The witnesses do not depend on mu: for each root k* of E''' with E'' > 0,
/// mu* = E'^2 / (2 E'') - E is the only mass solving the system there.
pub fn find_degenerate_set(km: &QuasimomentumMap, k_max: f64, cfg: &DsetConfig) -> DegenerateSet {
    let bands: Vec<usize> = (0..km.n_bands())
        .filter(|&n| km.table().k_interval(n).0 < k_max)
        .collect();
    let scans = par::map(&bands, |&n| scan_band(km, n, k_max, cfg));
    let mut set = DegenerateSet {
        candidates: Vec::new(),
        rejected_roots: 0,
        unresolved_nodes: 0,
        k_max,
    };
    for s in scans {
        set.candidates.extend(s.cands);
        set.rejected_roots += s.rejected;
        set.unresolved_nodes += s.unresolved;
    }
    set.candidates.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    set
}

/// Smallest value over interior reliable nodes of
/// max(|eta''| <k>^3, |eta'''| <k>^4); positive away from degenerate masses.
pub fn nondegeneracy_floor(pm: &PhaseModel, nodes_per_band: usize) -> f64 {
    let km = pm.km;
    let bands: Vec<usize> = (0..km.n_bands()).collect();
    let per_band = par::map(&bands, |&n| {
        let (k_lo, k_hi) = km.table().k_interval(n);
        let (x_lo, x_hi) = km.edge_exclusion(n);
        let mut best = f64::INFINITY;
        for i in 0..nodes_per_band {
            let k = k_lo + (k_hi - k_lo) * (i as f64 + 0.5) / nodes_per_band as f64;
            let (a, b) = km.energy_derivs_pair(n, k);
            let w = a.e.max(0.0).sqrt();
            let (w_lo, w_hi) = km.table().band_w(n);
            if w - w_lo < x_lo || w_hi - w < x_hi {
                continue;
            }
            let ea = eta_from_energy(&a, pm.mu);
            let eb = eta_from_energy(&b, pm.mu);
            if (ea.d3 - eb.d3).abs() > 0.1 * ea.d3.abs() && (ea.d2 - eb.d2).abs() > 0.1 * ea.d2.abs() {
                continue;
            }
            let jk = (1.0 + k * k).sqrt();
            best = best.min((ea.d2.abs() * jk.powi(3)).max(ea.d3.abs() * jk.powi(4)));
        }
        best
    });
    per_band.into_iter().fold(f64::INFINITY, f64::min)
}
